#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tokenbinder {

// Encoder, fusion and pipeline hyperparameters.
struct ModelConfig {
  std::size_t embed_dim = 64;        // C
  std::size_t layers = 2;            // L
  std::size_t indicator_count = 4;   // m
  std::size_t max_indicator_count = 6;
  std::size_t vocab_size = 256;
  std::size_t max_text_length = 16;
  std::size_t patches = 16;          // P², spatial positions per frame
  std::size_t max_frames = 8;
  std::size_t patch_dim = 32;        // raw patch feature width
  std::size_t ffn_dim = 128;
  std::size_t fusion_blocks = 1;     // B_f
  std::size_t top_k = 10;            // k
  std::size_t mlp_hidden = 128;
  std::string activation = "gelu";
  double gumbel_temp = 1.0;
  bool use_gumbel = true;
  bool use_indicators = true;
  bool use_stage1_scores = true;

  void validate() const;
};

struct TrainConfig {
  double tau = 0.01;
  bool learnable_tau = true;
  std::size_t batch_size = 20;
  std::size_t k_train = 0;  // 0: min(top_k, batch_size)
  double lr_fusion = 1e-4;
  double lr_base = 1e-6;
  double weight_decay = 0.2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  // Cohort members kept adjacent when batching, so in-batch candidates include
  // hard negatives. 0 or 1 shuffles items independently.
  std::size_t cohort_chunk = 2;
  std::vector<std::string> frozen;  // parameter names excluded from updates

  std::size_t effective_k_train(std::size_t top_k) const;
  void validate() const;
};

struct SyntheticSpec {
  std::size_t pairs = 500;
  std::size_t group_size = 5;       // g
  std::size_t latent_dim = 32;      // equals ModelConfig::patch_dim
  std::size_t fine_pool = 16;       // distinct fine latents shared across cohorts
  std::size_t frames = 4;
  std::size_t patches = 16;
  std::size_t text_length = 8;
  std::size_t vocab_size = 256;
  std::size_t coarse_tokens = 6;    // coarse words per caption
  std::size_t detail_patches = 2;   // spatial positions carrying the fine latent
  double detail_strength = 1.0;
  double noise = 0.5;
  std::uint64_t seed = 7;
  std::uint64_t rendering = 0;      // 0 = training rendering; others are held-out redraws

  std::size_t cohorts() const { return group_size ? pairs / group_size : 0; }
  void validate() const;
};

enum class Direction : std::uint8_t { t2v = 0, v2t = 1 };
std::string_view to_string(Direction d);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec data;
  std::string dataset_path;     // empty: generate synthetic data
  std::string checkpoint_path;  // empty: fresh initialisation
  std::uint64_t eval_rendering = 1;
  std::size_t query_index = 0;
  Direction query_direction = Direction::t2v;

  // Cross-section checks (e.g. patch_dim == latent_dim) plus every member's.
  void validate() const;
};

/// Parses flat `key: value` (or `key = value`) lines. `#` starts a comment.
/// Unknown keys and malformed values throw ConfigError naming the line.
/// Missing keys keep their defaults. The result is validated.
RunConfig parse_config(std::string_view text, std::string_view source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Sets one key from its textual value; ConfigError on unknown key or bad value.
// Does not validate cross-key invariants.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);
bool is_config_key(std::string_view key);
std::vector<std::string> config_keys();
std::string get_setting(const RunConfig& config, std::string_view key);

// Every key with its current value, one `key: value` line each, in key order.
std::string format_config(const RunConfig& config);

}  // namespace tokenbinder
