#include "tokenbinder/dense_array.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

DenseArray::DenseArray(Shape shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

DenseArray::DenseArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " elements, got " +
                         std::to_string(data_.size()));
  }
}

DenseArray DenseArray::filled(Shape shape, double value) {
  DenseArray out(std::move(shape));
  std::fill(out.data_.begin(), out.data_.end(), value);
  return out;
}

DenseArray DenseArray::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return DenseArray({n}, std::move(values));
}

DenseArray DenseArray::matrix(std::size_t rows, std::size_t cols,
                              std::vector<double> values) {
  return DenseArray({rows, cols}, std::move(values));
}

DenseArray DenseArray::matrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return DenseArray({r, c}, std::move(values));
}

DenseArray DenseArray::scalar(double value) { return DenseArray({1, 1}, {value}); }

std::size_t DenseArray::rows() const noexcept {
  if (shape_.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

std::size_t DenseArray::cols() const noexcept {
  return shape_.empty() ? 1 : shape_.back();
}

std::span<const double> DenseArray::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> DenseArray::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<double>(data_).subspan(r * c, c);
}

DenseArray DenseArray::reshaped(Shape shape) const {
  return DenseArray(std::move(shape), data_);
}

bool DenseArray::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace tokenbinder
