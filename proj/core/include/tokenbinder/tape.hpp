#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/parameters.hpp"

namespace tokenbinder {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
class Var {
 public:
  Var() = default;

  const DenseArray& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) noexcept : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradientMap = std::map<std::string, DenseArray, std::less<>>;

/// Reverse-mode gradient recorder.
///
/// Operations append nodes in execution order; backward() replays them in
/// reverse and accumulates gradients. Each parameter is materialised at most
/// once per tape, so repeated uses of a parameter accumulate into one leaf.
/// In inference mode no backward closures are kept.
class Tape {
 public:
  enum class Mode { record, inference };

  using Backward = std::function<void(const DenseArray& upstream, Tape& tape)>;

  explicit Tape(Mode mode = Mode::record);
  explicit Tape(const ParameterSet& params, Mode mode = Mode::record);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::record; }

  Var constant(DenseArray value);
  // Leaf bound to a named entry in the parameter set (ConfigError if absent).
  Var parameter(std::string_view name);
  bool has_parameter(std::string_view name) const;

  // Appends an op result. `backward` is dropped when no parent needs a
  // gradient or the tape is in inference mode.
  Var emit(DenseArray value, std::initializer_list<Var> parents, Backward backward);
  Var emit(DenseArray value, const std::vector<Var>& parents, Backward backward);

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  // Zero-initialised on first access.
  DenseArray& grad_buffer(Var v);

  // Seeds d(loss)/d(loss) = 1 and propagates. Loss must be 1×1.
  void backward(Var loss);

  // Gradient of the last backward() w.r.t. v, or nullptr when none reached it.
  const DenseArray* gradient(Var v) const;

  // One entry per parameter in the bound set; parameters the computation never
  // touched get exact zeros.
  GradientMap parameter_gradients() const;

  const DenseArray& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  const ParameterSet* parameters() const noexcept { return params_; }

 private:
  struct Node {
    DenseArray value;
    DenseArray grad;
    Backward backward;
    bool requires_grad = false;
  };

  const ParameterSet* params_ = nullptr;
  Mode mode_;
  std::deque<Node> nodes_;
  std::map<std::string, std::size_t, std::less<>> param_nodes_;
};

inline const DenseArray& Var::value() const { return tape_->value(id_); }

}  // namespace tokenbinder
