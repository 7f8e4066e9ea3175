#include "tokenbinder/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {
namespace {

double evaluate(const LossBuilder& loss, const ParameterSet& params) {
  Tape tape(params, Tape::Mode::inference);
  Var out = loss(tape);
  if (out.value().size() != 1) {
    throw UsageError("check_gradients: loss has shape " + shape_string(out.value().shape()) +
                     ", expected a scalar");
  }
  return out.value()[0];
}

}  // namespace

GradientCheckReport check_gradients(const LossBuilder& loss, ParameterSet& params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw UsageError("check_gradients: eps must lie in [1e-7, 1e-4]");
  }
  GradientMap analytic;
  {
    Tape tape(params);
    Var out = loss(tape);
    if (out.value().size() != 1) {
      throw UsageError("check_gradients: loss has shape " + shape_string(out.value().shape()) +
                       ", expected a scalar");
    }
    tape.backward(out);
    analytic = tape.parameter_gradients();
  }
  GradientCheckReport report;
  for (auto& [name, param] : params) {
    ParameterCheck check;
    check.name = name;
    const DenseArray& grad = analytic.at(name);
    auto values = param.value.data();
    check.coordinates = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double plus = evaluate(loss, params);
      values[i] = saved - eps;
      const double minus = evaluate(loss, params);
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = grad[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      check.max_rel_error = std::max(check.max_rel_error, std::abs(a - numeric) / denom);
      check.max_abs_gradient = std::max(check.max_abs_gradient, std::abs(a));
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.parameters.push_back(std::move(check));
  }
  return report;
}

}  // namespace tokenbinder
