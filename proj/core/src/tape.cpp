#include "tokenbinder/tape.hpp"

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

Tape::Tape(Mode mode) : mode_(mode) {}

Tape::Tape(const ParameterSet& params, Mode mode) : params_(&params), mode_(mode) {}

Var Tape::constant(DenseArray value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string_view name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) {
    return Var(this, it->second);
  }
  if (params_ == nullptr) {
    throw ConfigError("tape has no parameter set; cannot bind '" + std::string(name) + "'");
  }
  const Parameter& p = params_->at(name);
  nodes_.push_back(Node{p.value, {}, {}, recording()});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(std::string(name), id);
  return Var(this, id);
}

bool Tape::has_parameter(std::string_view name) const {
  return params_ != nullptr && params_->contains(name);
}

Var Tape::emit(DenseArray value, std::initializer_list<Var> parents, Backward backward) {
  bool needs = false;
  if (recording()) {
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
  return Var(this, nodes_.size() - 1);
}

Var Tape::emit(DenseArray value, const std::vector<Var>& parents, Backward backward) {
  bool needs = false;
  if (recording()) {
    for (const Var& p : parents) needs = needs || nodes_[p.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
  return Var(this, nodes_.size() - 1);
}

DenseArray& Tape::grad_buffer(Var v) {
  Node& node = nodes_[v.id()];
  if (node.grad.shape() != node.value.shape()) node.grad = DenseArray::zeros(node.value.shape());
  return node.grad;
}

void Tape::backward(Var loss) {
  if (!recording()) throw UsageError("backward() on an inference tape");
  if (loss.value().size() != 1) {
    throw UsageError("backward() needs a scalar loss, got shape " +
                     shape_string(loss.value().shape()));
  }
  for (auto& node : nodes_) node.grad = DenseArray();
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(node.grad, *this);
  }
}

const DenseArray* Tape::gradient(Var v) const {
  const Node& node = nodes_[v.id()];
  return node.grad.empty() ? nullptr : &node.grad;
}

GradientMap Tape::parameter_gradients() const {
  GradientMap out;
  if (params_ == nullptr) return out;
  for (const auto& [name, p] : *params_) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end() && !nodes_[it->second].grad.empty()) {
      out.emplace(name, nodes_[it->second].grad);
    } else {
      out.emplace(name, DenseArray::zeros(p.value.shape()));
    }
  }
  return out;
}

}  // namespace tokenbinder
