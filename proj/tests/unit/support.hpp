#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/nn.hpp"
#include "tokenbinder/ops.hpp"
#include "tokenbinder/random.hpp"

namespace tbtest {

using namespace tokenbinder;

inline DenseArray random_matrix(std::size_t r, std::size_t c, RandomStream rng, double std = 1.0) {
  return normal_array({r, c}, std, rng);
}

inline std::vector<double> random_vector(std::size_t n, RandomStream rng, double std = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = std * rng.normal();
  return v;
}

inline double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Plain row softmax, written out independently of the library.
inline std::vector<double> oracle_softmax(const std::vector<double>& z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - mx);
  for (double& x : e) x /= s;
  return e;
}

// softmax(Q Kᵀ / √d) V, element by element.
inline DenseArray oracle_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v) {
  const std::size_t d = q.cols();
  DenseArray out = DenseArray::zeros({q.rows(), v.cols()});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    std::vector<double> logits(k.rows());
    for (std::size_t j = 0; j < k.rows(); ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += q(i, c) * k(j, c);
      logits[j] = dot / std::sqrt(static_cast<double>(d));
    }
    const auto w = oracle_softmax(logits);
    for (std::size_t j = 0; j < k.rows(); ++j) {
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += w[j] * v(j, c);
    }
  }
  return out;
}

inline DenseArray oracle_matmul(const DenseArray& a, const DenseArray& b) {
  DenseArray out = DenseArray::zeros({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t t = 0; t < a.cols(); ++t) out(i, j) += a(i, t) * b(t, j);
  return out;
}

// Small model/data shapes that keep unit tests fast.
inline RunConfig tiny_config() {
  RunConfig c;
  const char* settings[][2] = {
      {"embed_dim", "8"},  {"ffn_dim", "16"},      {"mlp_hidden", "16"},    {"k", "3"},
      {"layers", "1"},     {"batch_size", "4"},    {"vocab_size", "40"},    {"patch_dim", "8"},
      {"patches", "4"},    {"frames", "2"},        {"max_frames", "4"},     {"text_length", "4"},
      {"max_text_length", "6"}, {"coarse_tokens", "2"}, {"fine_pool", "4"}, {"pairs", "8"},
      {"group_size", "2"}, {"detail_patches", "1"}, {"tau", "0.5"},         {"epochs", "1"}};
  for (const auto& s : settings) apply_setting(c, s[0], s[1]);
  c.validate();
  return c;
}

}  // namespace tbtest
