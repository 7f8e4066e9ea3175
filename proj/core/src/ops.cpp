#include "tokenbinder/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {
namespace {

DenseArray mat(std::size_t r, std::size_t c) { return DenseArray::zeros({r, c}); }

void require(bool ok, const char* op, const DenseArray& a, const DenseArray& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": incompatible shapes " +
                         shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * n + j] += acc;
    }
  }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m,
             std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      double* orow = out + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Var matmul(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  require(k == bv.rows(), "matmul", av, bv);
  DenseArray out = mat(m, n);
  gemm_nn(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape().emit(std::move(out), {a, b}, [a, b, m, k, n](const DenseArray& g, Tape& t) {
    if (t.requires_grad(a)) {
      gemm_nt(g.data().data(), b.value().data().data(), t.grad_buffer(a).data().data(), m, n, k);
    }
    if (t.requires_grad(b)) {
      gemm_tn(a.value().data().data(), g.data().data(), t.grad_buffer(b).data().data(), m, k, n);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  require(k == bv.cols(), "matmul_nt", av, bv);
  DenseArray out = mat(m, n);
  gemm_nt(av.data().data(), bv.data().data(), out.data().data(), m, k, n);
  return a.tape().emit(std::move(out), {a, b}, [a, b, m, k, n](const DenseArray& g, Tape& t) {
    if (t.requires_grad(a)) {
      gemm_nn(g.data().data(), b.value().data().data(), t.grad_buffer(a).data().data(), m, n, k);
    }
    if (t.requires_grad(b)) {
      gemm_tn(g.data().data(), a.value().data().data(), t.grad_buffer(b).data().data(), m, n, k);
    }
  });
}

Var transpose(Var a) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  DenseArray out = mat(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = av(i, j);
  return a.tape().emit(std::move(out), {a}, [a, m, n](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g(j, i);
  });
}

Var add(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "add", av, bv);
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().emit(std::move(out), {a, b}, [a, b](const DenseArray& g, Tape& t) {
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      DenseArray& gv = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  const DenseArray& av = a.value();
  const DenseArray& bv = b.value();
  require(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub", av, bv);
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().emit(std::move(out), {a, b}, [a, b](const DenseArray& g, Tape& t) {
    if (t.requires_grad(a)) {
      DenseArray& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      DenseArray& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var add_row(Var a, Var row) {
  const DenseArray& av = a.value();
  const DenseArray& rv = row.value();
  const std::size_t m = av.rows(), n = av.cols();
  require(rv.size() == n, "add_row", av, rv);
  DenseArray out = mat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, j) + rv[j];
  return a.tape().emit(std::move(out), {a, row}, [a, row, m, n](const DenseArray& g, Tape& t) {
    if (t.requires_grad(a)) {
      DenseArray& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(row)) {
      DenseArray& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g(i, j);
    }
  });
}

Var mul_row(Var a, Var row) {
  const DenseArray& av = a.value();
  const DenseArray& rv = row.value();
  const std::size_t m = av.rows(), n = av.cols();
  require(rv.size() == n, "mul_row", av, rv);
  DenseArray out = mat(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, j) * rv[j];
  return a.tape().emit(std::move(out), {a, row}, [a, row, m, n](const DenseArray& g, Tape& t) {
    const DenseArray& av = a.value();
    const DenseArray& rv = row.value();
    if (t.requires_grad(a)) {
      DenseArray& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g(i, j) * rv[j];
    }
    if (t.requires_grad(row)) {
      DenseArray& gr = t.grad_buffer(row);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g(i, j) * av(i, j);
    }
  });
}

Var scale(Var a, double factor) {
  const DenseArray& av = a.value();
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return a.tape().emit(std::move(out), {a}, [a, factor](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var mul_scalar(Var a, Var s) {
  const DenseArray& av = a.value();
  const DenseArray& sv = s.value();
  if (sv.size() != 1) require(false, "mul_scalar", av, sv);
  const double c = sv[0];
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return a.tape().emit(std::move(out), {a, s}, [a, s](const DenseArray& g, Tape& t) {
    const DenseArray& av = a.value();
    if (t.requires_grad(a)) {
      const double c = s.value()[0];
      DenseArray& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    }
    if (t.requires_grad(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      t.grad_buffer(s)[0] += acc;
    }
  });
}

Var exp(Var a) {
  const DenseArray& av = a.value();
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(av[i]);
  const std::size_t self = a.tape().size();
  return a.tape().emit(std::move(out), {a}, [a, self](const DenseArray& g, Tape& t) {
    const DenseArray& y = t.value(self);
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Var softmax_rows(Var a, std::size_t key_count) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  const std::size_t live = std::min(key_count, n);
  if (live == 0) throw DimensionError("softmax_rows: no unmasked columns");
  DenseArray out = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = av.row(i);
    auto y = out.row(i);
    double mx = x[0];
    for (std::size_t j = 1; j < live; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < live; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (std::size_t j = 0; j < live; ++j) y[j] /= z;
  }
  const std::size_t self = a.tape().size();
  return a.tape().emit(std::move(out), {a}, [a, self, m, n](const DenseArray& g, Tape& t) {
    const DenseArray& y = t.value(self);
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  DenseArray out = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = av.row(i);
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x[j] - lse;
  }
  const std::size_t self = a.tape().size();
  return a.tape().emit(std::move(out), {a}, [a, self, m, n](const DenseArray& g, Tape& t) {
    const DenseArray& y = t.value(self);
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g(i, j);
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g(i, j) - std::exp(y(i, j)) * gsum;
    }
  });
}

double gelu_value(double x) { return x * normal_cdf(x); }

Var gelu(Var a) {
  const DenseArray& av = a.value();
  DenseArray out = mat(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gelu_value(av[i]);
  return a.tape().emit(std::move(out), {a}, [a](const DenseArray& g, Tape& t) {
    const DenseArray& x = a.value();
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
    }
  });
}

Var layer_norm_rows(Var a, Var gain, Var bias, double eps) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  require(gain.value().size() == n && bias.value().size() == n, "layer_norm_rows", av,
          gain.value());
  // xhat and 1/σ per row are kept for the backward pass.
  auto xhat = std::make_shared<DenseArray>(mat(m, n));
  auto inv_std = std::make_shared<std::vector<double>>(m);
  DenseArray out = mat(m, n);
  const DenseArray& gv = gain.value();
  const DenseArray& bv = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    const auto x = av.row(i);
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x[j] - mu) * is;
      (*xhat)(i, j) = h;
      out(i, j) = h * gv[j] + bv[j];
    }
  }
  return a.tape().emit(
      std::move(out), {a, gain, bias},
      [a, gain, bias, xhat, inv_std, m, n](const DenseArray& g, Tape& t) {
        const DenseArray& gv = gain.value();
        if (t.requires_grad(gain)) {
          DenseArray& gg = t.grad_buffer(gain);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g(i, j) * (*xhat)(i, j);
        }
        if (t.requires_grad(bias)) {
          DenseArray& gb = t.grad_buffer(bias);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g(i, j);
        }
        if (t.requires_grad(a)) {
          DenseArray& ga = t.grad_buffer(a);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g(i, j) * gv[j];
              s1 += dh;
              s2 += dh * (*xhat)(i, j);
            }
            for (std::size_t j = 0; j < n; ++j) {
              const double dh = g(i, j) * gv[j];
              ga[i * n + j] += (*inv_std)[i] * (dh - inv_n * s1 - (*xhat)(i, j) * inv_n * s2);
            }
          }
        }
      });
}

Var l2_normalize_rows(Var a) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  auto norms = std::make_shared<std::vector<double>>(m);
  DenseArray out = mat(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (double v : av.row(i)) ss += v * v;
    const double nrm = std::sqrt(ss);
    if (!(nrm > 0.0)) throw NumericError("l2_normalize_rows: zero-norm row");
    (*norms)[i] = nrm;
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, j) / nrm;
  }
  const std::size_t self = a.tape().size();
  return a.tape().emit(std::move(out), {a}, [a, self, norms, m, n](const DenseArray& g, Tape& t) {
    const DenseArray& y = t.value(self);
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += y(i, j) * g(i, j);
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += (g(i, j) - y(i, j) * dot) / (*norms)[i];
      }
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const Var& p : parts) {
    require(p.cols() == n, "concat_rows", parts.front().value(), p.value());
    m += p.rows();
  }
  DenseArray out = mat(m, n);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  return parts.front().tape().emit(std::move(out), parts, [parts](const DenseArray& g, Tape& t) {
    std::size_t offset = 0;
    for (const Var& p : parts) {
      const std::size_t len = p.value().size();
      if (t.requires_grad(p)) {
        DenseArray& gp = t.grad_buffer(p);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  const DenseArray& av = a.value();
  const std::size_t n = av.cols();
  if (begin + count > av.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " +
                         shape_string(av.shape()));
  }
  const auto src = av.data().subspan(begin * n, count * n);
  DenseArray out({count, n}, std::vector<double>(src.begin(), src.end()));
  return a.tape().emit(std::move(out), {a}, [a, begin, n](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  const DenseArray& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  if (begin + count > n) {
    throw DimensionError("slice_cols: columns out of range for " + shape_string(av.shape()));
  }
  DenseArray out = mat(m, count);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = av(i, begin + j);
  return a.tape().emit(std::move(out), {a}, [a, begin, m, n, count](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += g(i, j);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> indices) {
  const DenseArray& av = a.value();
  const std::size_t n = av.cols();
  DenseArray out = mat(indices.size(), n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= av.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[r]) +
                           " out of range for " + shape_string(av.shape()));
    }
    const auto src = av.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape().emit(std::move(out), {a}, [a, idx = std::move(idx), n](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += g(r, j);
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const DenseArray& av = a.value();
  if (rows * cols != av.size()) {
    throw DimensionError("reshape: " + shape_string(av.shape()) + " to " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  return a.tape().emit(av.reshaped({rows, cols}), {a}, [a](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var mean_over_groups(Var a, std::size_t groups) {
  const DenseArray& av = a.value();
  if (groups == 0 || av.rows() % groups != 0) {
    throw DimensionError("mean_over_groups: " + std::to_string(av.rows()) +
                         " rows do not split into " + std::to_string(groups) + " groups");
  }
  const std::size_t slots = av.rows() / groups, n = av.cols();
  const double inv = 1.0 / static_cast<double>(groups);
  DenseArray out = mat(slots, n);
  for (std::size_t gi = 0; gi < groups; ++gi)
    for (std::size_t s = 0; s < slots; ++s)
      for (std::size_t j = 0; j < n; ++j) out(s, j) += av((gi * slots) + s, j);
  for (double& v : out.data()) v *= inv;
  return a.tape().emit(std::move(out), {a}, [a, groups, slots, n, inv](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (std::size_t gi = 0; gi < groups; ++gi)
      for (std::size_t s = 0; s < slots; ++s)
        for (std::size_t j = 0; j < n; ++j) ga[((gi * slots) + s) * n + j] += g(s, j) * inv;
  });
}

Var sum(Var a) {
  double acc = 0.0;
  for (double v : a.value().data()) acc += v;
  return a.tape().emit(DenseArray::scalar(acc), {a}, [a](const DenseArray& g, Tape& t) {
    DenseArray& ga = t.grad_buffer(a);
    for (double& v : ga.data()) v += g[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var pick(Var a, std::size_t row, std::size_t col) {
  const DenseArray& av = a.value();
  if (row >= av.rows() || col >= av.cols()) {
    throw UsageError("pick: (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") out of range for " + shape_string(av.shape()));
  }
  const std::size_t flat = row * av.cols() + col;
  return a.tape().emit(DenseArray::scalar(av[flat]), {a}, [a, flat](const DenseArray& g, Tape& t) {
    t.grad_buffer(a)[flat] += g[0];
  });
}

Var add_n(const std::vector<Var>& terms) {
  if (terms.empty()) throw DimensionError("add_n: no inputs");
  const DenseArray& first = terms.front().value();
  DenseArray out = mat(first.rows(), first.cols());
  for (const Var& v : terms) {
    require(v.value().size() == out.size(), "add_n", first, v.value());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += v.value()[i];
  }
  return terms.front().tape().emit(std::move(out), terms, [terms](const DenseArray& g, Tape& t) {
    for (const Var& v : terms) {
      if (!t.requires_grad(v)) continue;
      DenseArray& gv = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
    }
  });
}

}  // namespace tokenbinder
