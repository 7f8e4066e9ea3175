#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tokenbinder/parameters.hpp"
#include "tokenbinder/tape.hpp"

namespace tokenbinder {

// Records a scalar loss on a fresh tape bound to the parameter set.
using LossBuilder = std::function<Var(Tape&)>;

struct ParameterCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  double max_abs_gradient = 0.0;
};

struct GradientCheckReport {
  std::vector<ParameterCheck> parameters;
  double max_rel_error = 0.0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Compares tape gradients with central differences
/// (f(x+eps) − f(x−eps)) / 2eps for every coordinate of every parameter.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
/// Parameters are restored bit-exactly afterwards. UsageError when eps is
/// outside [1e-7, 1e-4] or the loss is not a scalar.
GradientCheckReport check_gradients(const LossBuilder& loss, ParameterSet& params, double eps);

}  // namespace tokenbinder
