#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tokenbinder/dense_array.hpp"

namespace tokenbinder {

// Learning-rate group. The fusion network trains at its own rate.
enum class ParamGroup : std::uint8_t { base = 0, fusion = 1 };

std::string_view to_string(ParamGroup group);

struct Parameter {
  DenseArray value;
  ParamGroup group = ParamGroup::base;
};

/// Named trainable arrays. Iteration is in lexicographic name order.
class ParameterSet {
 public:
  using Map = std::map<std::string, Parameter, std::less<>>;

  // Throws ConfigError on a duplicate name.
  void add(std::string name, DenseArray value, ParamGroup group = ParamGroup::base);

  bool contains(std::string_view name) const;
  // Throws ConfigError when the name is missing.
  const Parameter& at(std::string_view name) const;
  Parameter& at(std::string_view name);
  const DenseArray& value(std::string_view name) const { return at(name).value; }
  DenseArray& value(std::string_view name) { return at(name).value; }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t element_count() const noexcept;
  std::vector<std::string> names() const;

  Map::const_iterator begin() const noexcept { return params_.begin(); }
  Map::const_iterator end() const noexcept { return params_.end(); }
  Map::iterator begin() noexcept { return params_.begin(); }
  Map::iterator end() noexcept { return params_.end(); }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);

 private:
  Map params_;
};

}  // namespace tokenbinder
