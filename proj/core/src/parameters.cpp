#include "tokenbinder/parameters.hpp"

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

std::string_view to_string(ParamGroup group) {
  return group == ParamGroup::fusion ? "fusion" : "base";
}

void ParameterSet::add(std::string name, DenseArray value, ParamGroup group) {
  if (params_.contains(name)) throw ConfigError("duplicate parameter '" + name + "'");
  params_.emplace(std::move(name), Parameter{std::move(value), group});
}

bool ParameterSet::contains(std::string_view name) const {
  return params_.find(name) != params_.end();
}

const Parameter& ParameterSet::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) {
    throw ConfigError("missing parameter '" + std::string(name) + "'");
  }
  return it->second;
}

std::size_t ParameterSet::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  if (a.params_.size() != b.params_.size()) return false;
  auto ib = b.params_.begin();
  for (const auto& [name, p] : a.params_) {
    if (name != ib->first || p.group != ib->second.group || !(p.value == ib->second.value)) {
      return false;
    }
    ++ib;
  }
  return true;
}

}  // namespace tokenbinder
