#include "tokenbinder/model.hpp"

#include <cmath>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

Model::Model(ModelConfig config, ParameterSet params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  // Spot-check that the parameters were built for this shape.
  const auto& indicators = params_.value("text.indicators");
  if (indicators.rows() != config_.indicator_count || indicators.cols() != config_.embed_dim) {
    throw ConfigError("parameters do not match config: text.indicators is " +
                      shape_string(indicators.shape()));
  }
  for (Direction d : {Direction::t2v, Direction::v2t}) {
    const FusionNetwork net = fusion(d);
    const auto& emb = params_.value(net.prefix + ".candidate_embedding");
    if (emb.rows() != net.k) {
      throw ConfigError("parameters do not match config: " + net.prefix +
                        " was built for k = " + std::to_string(emb.rows()));
    }
    if (!params_.contains(net.prefix + ".block" + std::to_string(net.blocks - 1) + ".wo")) {
      throw ConfigError("parameters do not match config: fusion_blocks");
    }
  }
}

Model Model::initialize(const ModelConfig& config, double tau, std::uint64_t seed) {
  config.validate();
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  RandomStream root = RandomStream(seed).split("init");
  ParameterSet params;
  add_encoder_parameters(params, config, root.split("encoders"));
  for (Direction d : {Direction::t2v, Direction::v2t}) {
    const FusionNetwork net = FusionNetwork::for_direction(config, d);
    add_fusion_parameters(params, net, root.split(net.prefix));
  }
  params.add(kLogitScaleName, DenseArray::scalar(std::log(1.0 / tau)), ParamGroup::base);
  return Model(config, std::move(params));
}

FusionNetwork Model::fusion(Direction direction) const {
  return FusionNetwork::for_direction(config_, direction);
}

double Model::temperature() const { return std::exp(-params_.value(kLogitScaleName)[0]); }

EncodedText Model::encode(const TextSequence& seq) const {
  return encode_text(seq, params_, config_);
}

EncodedVideo Model::encode(const VideoClip& clip) const {
  return encode_video(clip, params_, config_);
}

}  // namespace tokenbinder
