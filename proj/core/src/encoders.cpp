#include "tokenbinder/encoders.hpp"

#include <cmath>
#include <string>

#include "tokenbinder/errors.hpp"
#include "tokenbinder/nn.hpp"
#include "tokenbinder/ops.hpp"

namespace tokenbinder {
namespace {

std::string layer_prefix(std::string_view tower, std::size_t layer) {
  return std::string(tower) + ".layer" + std::to_string(layer);
}

}  // namespace

Var bind_query_indicators(Var indicators, Var tokens, std::string_view prefix,
                          std::size_t key_count) {
  if (indicators.cols() != tokens.cols()) {
    throw DimensionError("bind_query_indicators: indicator width " +
                         std::to_string(indicators.cols()) + " != token width " +
                         std::to_string(tokens.cols()));
  }
  Tape& tape = indicators.tape();
  const std::string p(prefix);
  Var q = matmul(indicators, tape.parameter(p + ".wq"));
  Var k = matmul(tokens, tape.parameter(p + ".wk"));
  Var v = matmul(tokens, tape.parameter(p + ".wv"));
  AttentionOptions options;
  options.key_count = key_count;
  Var attended = scaled_dot_attention(q, k, v, options, nullptr);
  return add(indicators, matmul(attended, tape.parameter(p + ".wo")));
}

DenseArray bind_query_indicators(const DenseArray& indicators, const DenseArray& tokens,
                                 const ParameterSet& params, std::string_view prefix) {
  Tape tape(params, Tape::Mode::inference);
  return bind_query_indicators(tape.constant(indicators), tape.constant(tokens), prefix, kAllKeys)
      .value();
}

void add_binding_parameters(ParameterSet& params, const std::string& prefix, std::size_t width,
                            ParamGroup group, RandomStream rng) {
  const double std_proj = 1.0 / std::sqrt(static_cast<double>(width));
  params.add(prefix + ".wq", normal_array({width, width}, std_proj, rng.split("wq")), group);
  params.add(prefix + ".wk", normal_array({width, width}, std_proj, rng.split("wk")), group);
  params.add(prefix + ".wv", normal_array({width, width}, std_proj, rng.split("wv")), group);
  params.add(prefix + ".wo", DenseArray::zeros({width, width}), group);
}

TextVars encode_text(Tape& tape, const TextSequence& seq, const ModelConfig& config) {
  const std::size_t len = seq.length;
  const std::size_t padded = seq.tokens.size();
  if (len == 0) throw InputError("encode_text: empty sequence");
  if (len > padded) throw InputError("encode_text: length exceeds token count");
  if (padded > config.max_text_length) {
    throw InputError("encode_text: " + std::to_string(padded) + " tokens exceed max_text_length " +
                     std::to_string(config.max_text_length));
  }
  std::vector<std::size_t> ids(padded);
  std::vector<std::size_t> positions(padded);
  for (std::size_t i = 0; i < padded; ++i) {
    if (seq.tokens[i] >= config.vocab_size) {
      throw InputError("encode_text: token id " + std::to_string(seq.tokens[i]) +
                       " outside vocabulary of " + std::to_string(config.vocab_size));
    }
    ids[i] = seq.tokens[i];
    positions[i] = i;
  }
  Var x = add(gather_rows(tape.parameter("text.token_embedding"), ids),
              gather_rows(tape.parameter("text.position_embedding"), positions));
  Var indicators = tape.parameter("text.indicators");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix("text", l);
    x = transformer_block(x, p, len);
    indicators = bind_query_indicators(indicators, x, p + ".bind", len);
  }
  Var tokens = slice_rows(layer_norm(x, "text.ln_final"), 0, len);
  const std::size_t m = config.indicator_count;
  TextVars out;
  out.locals = tokens;
  out.focus_indicators = slice_rows(indicators, 1, m - 1);
  if (config.use_indicators) {
    out.global = l2_normalize_rows(slice_rows(indicators, 0, 1));
  } else {
    out.global = l2_normalize_rows(mean_over_groups(tokens, len));
  }
  return out;
}

EncodedText encode_text(const TextSequence& seq, const ParameterSet& params,
                        const ModelConfig& config) {
  Tape tape(params, Tape::Mode::inference);
  TextVars vars = encode_text(tape, seq, config);
  return {vars.global.value().reshaped({config.embed_dim}), vars.focus_indicators.value(),
          vars.locals.value()};
}

Var temporal_mean_pool(Var features, std::size_t frames) {
  if (frames == 0) throw InputError("temporal_mean_pool: no frames");
  return mean_over_groups(features, frames);
}

DenseArray temporal_mean_pool(const DenseArray& features, std::size_t frames) {
  Tape tape(Tape::Mode::inference);
  if (features.rank() == 3) {
    if (features.shape()[0] != frames) {
      throw DimensionError("temporal_mean_pool: frame count mismatch");
    }
  }
  return temporal_mean_pool(tape.constant(features), frames).value();
}

VideoVars encode_video(Tape& tape, const VideoClip& clip, const ModelConfig& config) {
  const std::size_t frames = clip.frames;
  const std::size_t patches = clip.patches;
  if (frames == 0) throw InputError("encode_video: clip has no frames");
  if (frames > config.max_frames) {
    throw InputError("encode_video: " + std::to_string(frames) + " frames exceed max_frames " +
                     std::to_string(config.max_frames));
  }
  if (patches != config.patches) {
    throw DimensionError("encode_video: clip has " + std::to_string(patches) +
                         " patches per frame, model expects " + std::to_string(config.patches));
  }
  if (clip.features.rows() != frames * patches || clip.features.cols() != config.patch_dim) {
    throw DimensionError("encode_video: features " + shape_string(clip.features.shape()) +
                         " do not match " + std::to_string(frames) + " frames x " +
                         std::to_string(patches) + " patches x " +
                         std::to_string(config.patch_dim));
  }
  std::vector<std::size_t> frame_ids(frames * patches);
  std::vector<std::size_t> position_ids(frames * patches);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t p = 0; p < patches; ++p) {
      frame_ids[t * patches + p] = t;
      position_ids[t * patches + p] = p;
    }
  }
  Var raw = tape.constant(clip.features.reshaped({frames * patches, config.patch_dim}));
  Var type = tape.parameter("video.type_embedding");
  Var x = add_row(matmul(raw, tape.parameter("video.input_proj.weight")),
                  tape.parameter("video.input_proj.bias"));
  x = add_row(x, slice_rows(type, 1, 1));
  x = add(x, gather_rows(tape.parameter("video.frame_embedding"), frame_ids));
  x = add(x, gather_rows(tape.parameter("video.position_embedding"), position_ids));
  Var cls = add(tape.parameter("video.cls"), slice_rows(type, 0, 1));
  x = concat_rows({cls, x});

  Var indicators = tape.parameter("video.indicators");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix("video", l);
    x = transformer_block(x, p, kAllKeys);
    indicators = bind_query_indicators(indicators, x, p + ".bind", kAllKeys);
  }
  x = layer_norm(x, "video.ln_final");
  VideoVars out;
  out.global = l2_normalize_rows(slice_rows(x, 0, 1));
  out.locals = temporal_mean_pool(slice_rows(x, 1, frames * patches), frames);
  out.focus_indicators = indicators;
  return out;
}

EncodedVideo encode_video(const VideoClip& clip, const ParameterSet& params,
                          const ModelConfig& config) {
  Tape tape(params, Tape::Mode::inference);
  VideoVars vars = encode_video(tape, clip, config);
  return {vars.global.value().reshaped({config.embed_dim}), vars.locals.value(),
          vars.focus_indicators.value()};
}

void add_encoder_parameters(ParameterSet& params, const ModelConfig& config, RandomStream rng) {
  const std::size_t c = config.embed_dim;
  const std::size_t m = config.indicator_count;
  const auto base = ParamGroup::base;
  const double embed_std = 1.0 / std::sqrt(static_cast<double>(c));

  RandomStream text = rng.split("text");
  params.add("text.token_embedding",
             normal_array({config.vocab_size, c}, 1.0, text.split("token_embedding")), base);
  params.add("text.position_embedding",
             normal_array({config.max_text_length, c}, embed_std, text.split("position_embedding")),
             base);
  params.add("text.indicators", kaiming_normal({m, c}, c, text.split("indicators")), base);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix("text", l);
    add_transformer_block_parameters(params, p, c, config.ffn_dim, base, text.split(p));
    add_binding_parameters(params, p + ".bind", c, base, text.split(p + ".bind"));
  }
  add_layer_norm_parameters(params, "text.ln_final", c, base);

  RandomStream video = rng.split("video");
  params.add("video.input_proj.weight",
             kaiming_normal({config.patch_dim, c}, config.patch_dim, video.split("input_proj")),
             base);
  params.add("video.input_proj.bias", DenseArray::zeros({c}), base);
  params.add("video.type_embedding", normal_array({2, c}, embed_std, video.split("type")), base);
  params.add("video.frame_embedding",
             normal_array({config.max_frames, c}, embed_std, video.split("frame")), base);
  params.add("video.position_embedding",
             normal_array({config.patches, c}, embed_std, video.split("position")), base);
  params.add("video.cls", normal_array({1, c}, 1.0, video.split("cls")), base);
  params.add("video.indicators", kaiming_normal({m - 1, c}, c, video.split("indicators")), base);
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = layer_prefix("video", l);
    add_transformer_block_parameters(params, p, c, config.ffn_dim, base, video.split(p));
    add_binding_parameters(params, p + ".bind", c, base, video.split(p + ".bind"));
  }
  add_layer_norm_parameters(params, "video.ln_final", c, base);
}

}  // namespace tokenbinder
