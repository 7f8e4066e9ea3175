#pragma once

#include <cstdint>

#include "tokenbinder/config.hpp"
#include "tokenbinder/encoders.hpp"
#include "tokenbinder/parameters.hpp"
#include "tokenbinder/pipeline.hpp"

namespace tokenbinder {

inline constexpr const char* kLogitScaleName = "logit_scale";

/// Encoders, both fusion networks and the contrastive temperature, bundled
/// with the hyperparameters that shaped them.
class Model {
 public:
  Model(ModelConfig config, ParameterSet params);

  // Kaiming/normal initialisation from `seed`; identity-at-init for every
  // residual binding and fusion block, zero delta scales, log(1/tau) logit
  // scale.
  static Model initialize(const ModelConfig& config, double tau, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& parameters() noexcept { return params_; }

  FusionNetwork fusion(Direction direction) const;
  double temperature() const;

  EncodedText encode(const TextSequence& seq) const;
  EncodedVideo encode(const VideoClip& clip) const;

 private:
  ModelConfig config_;
  ParameterSet params_;
};

}  // namespace tokenbinder
