#include "tokenbinder/nn.hpp"

#include <cmath>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

std::string join_name(std::string_view prefix, std::string_view leaf) {
  std::string out(prefix);
  out += '.';
  out += leaf;
  return out;
}

Var scaled_dot_attention(Var q, Var k, Var v, const AttentionOptions& options,
                         RandomStream* rng) {
  const std::size_t d = q.cols();
  if (d == 0) throw DimensionError("attention: zero width");
  if (k.cols() != d || v.rows() != k.rows()) {
    throw DimensionError("attention: Q " + shape_string(q.value().shape()) + ", K " +
                         shape_string(k.value().shape()) + ", V " +
                         shape_string(v.value().shape()));
  }
  if (k.rows() == 0) throw DimensionError("attention: no keys");
  Var logits = scale(matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  if (options.use_gumbel) {
    if (!(options.gumbel_temp > 0.0)) throw ConfigError("gumbel_temp must be positive");
    if (rng == nullptr) throw UsageError("attention: Gumbel noise requested without a stream");
    DenseArray noise = DenseArray::zeros({logits.rows(), logits.cols()});
    const std::size_t live = std::min(options.key_count, logits.cols());
    for (std::size_t i = 0; i < noise.rows(); ++i)
      for (std::size_t j = 0; j < live; ++j) noise(i, j) = rng->gumbel();
    logits = scale(add(logits, q.tape().constant(std::move(noise))), 1.0 / options.gumbel_temp);
  }
  return matmul(softmax_rows(logits, options.key_count), v);
}

DenseArray scaled_dot_attention(const DenseArray& q, const DenseArray& k, const DenseArray& v,
                                bool use_gumbel, double gumbel_temp, RandomStream& rng) {
  Tape tape(Tape::Mode::inference);
  AttentionOptions options;
  options.use_gumbel = use_gumbel;
  options.gumbel_temp = gumbel_temp;
  return scaled_dot_attention(tape.constant(q), tape.constant(k), tape.constant(v), options, &rng)
      .value();
}

Var gumbel_softmax(Var logits, double temp, RandomStream& rng, bool deterministic) {
  if (!(temp > 0.0)) throw ConfigError("gumbel_softmax: temperature must be positive");
  Var x = logits;
  if (!deterministic) {
    DenseArray noise = DenseArray::zeros({logits.rows(), logits.cols()});
    for (double& g : noise.data()) g = rng.gumbel();
    x = add(x, logits.tape().constant(std::move(noise)));
  }
  if (temp != 1.0) x = scale(x, 1.0 / temp);
  return softmax_rows(x);
}

DenseArray gumbel_softmax(const DenseArray& logits, double temp, RandomStream& rng,
                          bool deterministic) {
  Tape tape(Tape::Mode::inference);
  return gumbel_softmax(tape.constant(logits), temp, rng, deterministic).value().reshaped(logits.shape());
}

DenseArray softmax(const DenseArray& logits) {
  Tape tape(Tape::Mode::inference);
  return softmax_rows(tape.constant(logits)).value().reshaped(logits.shape());
}

Var mlp_forward(Var x, std::string_view prefix) {
  Tape& tape = x.tape();
  Var h = add_row(matmul(x, tape.parameter(join_name(prefix, "fc1.weight"))),
                  tape.parameter(join_name(prefix, "fc1.bias")));
  h = gelu(h);
  return add_row(matmul(h, tape.parameter(join_name(prefix, "fc2.weight"))),
                 tape.parameter(join_name(prefix, "fc2.bias")));
}

DenseArray mlp_forward(const DenseArray& x, const ParameterSet& params, std::string_view prefix) {
  Tape tape(params, Tape::Mode::inference);
  return mlp_forward(tape.constant(x), prefix).value();
}

DenseArray normal_array(Shape shape, double stddev, RandomStream rng) {
  DenseArray out(std::move(shape));
  for (double& v : out.data()) v = stddev * rng.normal();
  return out;
}

DenseArray kaiming_normal(Shape shape, std::size_t fan_in, RandomStream rng) {
  return normal_array(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

void add_mlp_parameters(ParameterSet& params, const std::string& prefix, const MlpInit& init,
                        ParamGroup group, RandomStream rng) {
  params.add(join_name(prefix, "fc1.weight"),
             kaiming_normal({init.in, init.hidden}, init.in, rng.split("fc1")), group);
  params.add(join_name(prefix, "fc1.bias"), DenseArray::zeros({init.hidden}), group);
  DenseArray fc2 = init.output_std < 0.0
                       ? kaiming_normal({init.hidden, init.out}, init.hidden, rng.split("fc2"))
                       : normal_array({init.hidden, init.out}, init.output_std, rng.split("fc2"));
  params.add(join_name(prefix, "fc2.weight"), std::move(fc2), group);
  params.add(join_name(prefix, "fc2.bias"), DenseArray::zeros({init.out}), group);
}

void add_layer_norm_parameters(ParameterSet& params, const std::string& prefix,
                               std::size_t width, ParamGroup group) {
  params.add(join_name(prefix, "gain"), DenseArray::filled({width}, 1.0), group);
  params.add(join_name(prefix, "bias"), DenseArray::zeros({width}), group);
}

Var layer_norm(Var x, std::string_view prefix) {
  Tape& tape = x.tape();
  return layer_norm_rows(x, tape.parameter(join_name(prefix, "gain")),
                         tape.parameter(join_name(prefix, "bias")));
}

Var transformer_block(Var x, std::string_view prefix, std::size_t key_count) {
  Tape& tape = x.tape();
  const std::string p(prefix);
  Var h = layer_norm(x, p + ".ln1");
  Var q = matmul(h, tape.parameter(p + ".attn.wq"));
  Var k = matmul(h, tape.parameter(p + ".attn.wk"));
  Var v = matmul(h, tape.parameter(p + ".attn.wv"));
  AttentionOptions options;
  options.key_count = key_count;
  Var attended = scaled_dot_attention(q, k, v, options, nullptr);
  x = add(x, matmul(attended, tape.parameter(p + ".attn.wo")));
  return add(x, mlp_forward(layer_norm(x, p + ".ln2"), p + ".ffn"));
}

void add_transformer_block_parameters(ParameterSet& params, const std::string& prefix,
                                      std::size_t width, std::size_t ffn_width,
                                      ParamGroup group, RandomStream rng) {
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(width));
  add_layer_norm_parameters(params, prefix + ".ln1", width, group);
  add_layer_norm_parameters(params, prefix + ".ln2", width, group);
  for (const char* name : {"wq", "wk", "wv", "wo"}) {
    params.add(prefix + ".attn." + name,
               normal_array({width, width}, proj_std, rng.split(name)), group);
  }
  MlpInit ffn{width, ffn_width, width, 0.5 / std::sqrt(static_cast<double>(ffn_width))};
  add_mlp_parameters(params, prefix + ".ffn", ffn, group, rng.split("ffn"));
}

}  // namespace tokenbinder
