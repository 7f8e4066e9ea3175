#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <string_view>

#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/ops.hpp"
#include "tokenbinder/parameters.hpp"
#include "tokenbinder/random.hpp"

namespace tokenbinder {

inline constexpr std::size_t kAllKeys = std::numeric_limits<std::size_t>::max();

struct AttentionOptions {
  bool use_gumbel = false;
  double gumbel_temp = 1.0;
  // Keys at positions >= key_count are masked out.
  std::size_t key_count = kAllKeys;
};

/// softmax(Q·Kᵀ/√d)·V, with i.i.d. Gumbel(0,1) noise added to every logit and
/// the sum divided by gumbel_temp when options.use_gumbel is set.
///
/// rng is only consulted when use_gumbel is set and may be null otherwise.
Var scaled_dot_attention(Var q, Var k, Var v, const AttentionOptions& options,
                         RandomStream* rng);
DenseArray scaled_dot_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                                bool use_gumbel, double gumbel_temp, RandomStream& rng);

// softmax((logits + g) / temp); g = 0 when deterministic. Row-wise.
Var gumbel_softmax(Var logits, double temp, RandomStream& rng, bool deterministic);
DenseArray gumbel_softmax(const DenseArray& logits, double temp, RandomStream& rng,
                          bool deterministic);
DenseArray softmax(const DenseArray& logits);

// Two affine layers with GELU between: fc2(gelu(fc1(x))). Parameters are
// `<prefix>.fc1.weight` [in×hidden], `<prefix>.fc1.bias` [hidden] and the same
// for fc2. Rows of x are independent inputs.
Var mlp_forward(Var x, std::string_view prefix);
DenseArray mlp_forward(const DenseArray& x, const ParameterSet& params, std::string_view prefix);

struct MlpInit {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;
  double output_std = -1.0;  // negative: Kaiming for fc2 as well
};
void add_mlp_parameters(ParameterSet& params, const std::string& prefix, const MlpInit& init,
                        ParamGroup group, RandomStream rng);

DenseArray normal_array(Shape shape, double stddev, RandomStream rng);
// N(0, 2/fan_in).
DenseArray kaiming_normal(Shape shape, std::size_t fan_in, RandomStream rng);

// Pre-norm transformer block over a token sequence:
//   x += attn(ln1(x)) · wo;  x += ffn(ln2(x))
// Parameters under `<prefix>.`: ln1/ln2 {gain,bias}, attn.{wq,wk,wv,wo}, ffn.*.
Var transformer_block(Var x, std::string_view prefix, std::size_t key_count);
void add_transformer_block_parameters(ParameterSet& params, const std::string& prefix,
                                      std::size_t width, std::size_t ffn_width,
                                      ParamGroup group, RandomStream rng);
void add_layer_norm_parameters(ParameterSet& params, const std::string& prefix,
                               std::size_t width, ParamGroup group);
Var layer_norm(Var x, std::string_view prefix);

std::string join_name(std::string_view prefix, std::string_view leaf);

}  // namespace tokenbinder
