#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tokenbinder {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Row-major n-dimensional array of doubles.
///
/// The element count always equals the product of the shape. Rank-1 arrays
/// are treated as a single row wherever a matrix is expected.
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape);
  DenseArray(Shape shape, std::vector<double> data);

  static DenseArray zeros(Shape shape) { return DenseArray(std::move(shape)); }
  static DenseArray filled(Shape shape, double value);
  static DenseArray vector(std::vector<double> values);
  static DenseArray matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> values);
  static DenseArray matrix(std::initializer_list<std::initializer_list<double>> rows);
  static DenseArray scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix view: rank-1 arrays are 1×n, rank-0 is 1×1, rank ≥ 3 collapses
  // leading axes into rows.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  // Same data under a new shape of equal element count.
  DenseArray reshaped(Shape shape) const;

  bool all_finite() const noexcept;

  friend bool operator==(const DenseArray&, const DenseArray&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace tokenbinder
