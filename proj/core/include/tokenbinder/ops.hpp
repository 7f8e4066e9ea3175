#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tokenbinder/tape.hpp"

// Differentiable matrix operations on Tape values. Every value is viewed as a
// matrix (see DenseArray::rows/cols); results are rank-2.
namespace tokenbinder {

Var matmul(Var a, Var b);     // a[m×k] · b[k×n]
Var matmul_nt(Var a, Var b);  // a[m×k] · b[n×k]ᵀ
Var transpose(Var a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_row(Var a, Var row);  // broadcasts a 1×n row over every row of a
Var mul_row(Var a, Var row);  // elementwise scale of each row by a 1×n row
Var scale(Var a, double factor);
Var mul_scalar(Var a, Var s);  // s is 1×1
Var exp(Var a);

// Row-wise softmax. `key_count` < cols masks the trailing columns: they get
// exactly zero weight and receive no gradient.
Var softmax_rows(Var a, std::size_t key_count = static_cast<std::size_t>(-1));
Var log_softmax_rows(Var a);

// x·Φ(x) with the exact normal CDF.
Var gelu(Var a);
Var layer_norm_rows(Var a, Var gain, Var bias, double eps = 1e-5);
Var l2_normalize_rows(Var a);

Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var reshape(Var a, std::size_t rows, std::size_t cols);

// Rows are grouped as [group][slot]; returns slot-wise means over groups.
// Input is (groups·slots)×C, output slots×C.
Var mean_over_groups(Var a, std::size_t groups);

Var sum(Var a);
Var mean(Var a);
Var pick(Var a, std::size_t row, std::size_t col);
Var add_n(const std::vector<Var>& terms);

double gelu_value(double x);

}  // namespace tokenbinder
