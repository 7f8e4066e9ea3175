#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/parameters.hpp"
#include "tokenbinder/random.hpp"
#include "tokenbinder/tape.hpp"

namespace tokenbinder {

// Token ids. Positions at or beyond `length` are padding and are masked out
// of every attention.
struct TextSequence {
  std::vector<std::uint32_t> tokens;
  std::size_t length = 0;

  static TextSequence of(std::vector<std::uint32_t> ids) {
    const std::size_t n = ids.size();
    return {std::move(ids), n};
  }
  friend bool operator==(const TextSequence&, const TextSequence&) = default;
};

// Patch features, frame-major: row t·patches + p is patch p of frame t.
struct VideoClip {
  std::size_t frames = 0;
  std::size_t patches = 0;
  DenseArray features;  // [frames·patches × patch_dim]

  friend bool operator==(const VideoClip&, const VideoClip&) = default;
};

struct EncodedText {
  DenseArray global;            // [C], unit norm
  DenseArray focus_indicators;  // [(m−1) × C]
  DenseArray locals;            // [M × C] final token states
};

struct EncodedVideo {
  DenseArray global;            // [C], unit norm
  DenseArray locals;            // [P² × C] temporally pooled patch states
  DenseArray focus_indicators;  // [(m−1) × C] video-side indicators
};

// Tape-level encodings used during training.
struct TextVars {
  Var global;  // 1×C
  Var focus_indicators;
  Var locals;
};

struct VideoVars {
  Var global;  // 1×C
  Var locals;
  Var focus_indicators;
};

// indicators + attention(indicators·wq, tokens·wk, tokens·wv)·wo
// with parameters `<prefix>.{wq,wk,wv,wo}`. Indicators never attend to each
// other. With wo = 0 this is the identity.
Var bind_query_indicators(Var indicators, Var tokens, std::string_view prefix,
                          std::size_t key_count);
DenseArray bind_query_indicators(const DenseArray& indicators, const DenseArray& tokens,
                                 const ParameterSet& params, std::string_view prefix);

TextVars encode_text(Tape& tape, const TextSequence& seq, const ModelConfig& config);
EncodedText encode_text(const TextSequence& seq, const ParameterSet& params,
                        const ModelConfig& config);

// features [T·P² × C] (frame-major) -> [P² × C], mean over frames per position.
Var temporal_mean_pool(Var features, std::size_t frames);
DenseArray temporal_mean_pool(const DenseArray& features, std::size_t frames);

VideoVars encode_video(Tape& tape, const VideoClip& clip, const ModelConfig& config);
EncodedVideo encode_video(const VideoClip& clip, const ParameterSet& params,
                          const ModelConfig& config);

// All text and video encoder parameters (group `base`). Binding output
// projections start at zero.
void add_encoder_parameters(ParameterSet& params, const ModelConfig& config, RandomStream rng);
void add_binding_parameters(ParameterSet& params, const std::string& prefix, std::size_t width,
                            ParamGroup group, RandomStream rng);

}  // namespace tokenbinder
