#include "tokenbinder/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t parse_size(std::string_view key, std::string_view v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects true/false, got '" + std::string(v) + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

struct KeySpec {
  std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Field>
KeySpec size_key(Field field) {
  return {[field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_size(k, v); },
          [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
KeySpec double_key(Field field) {
  return {[field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_double(k, v); },
          [field](const RunConfig& c) { return fmt_double(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
KeySpec bool_key(Field field) {
  return {[field](RunConfig& c, std::string_view k, std::string_view v) { field(c) = parse_bool(k, v); },
          [field](const RunConfig& c) { return fmt_bool(field(const_cast<RunConfig&>(c))); }};
}

template <typename Field>
KeySpec string_key(Field field) {
  return {[field](RunConfig& c, std::string_view, std::string_view v) { field(c) = std::string(v); },
          [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return expr; }

const std::map<std::string, KeySpec, std::less<>>& registry() {
  static const std::map<std::string, KeySpec, std::less<>> keys = [] {
    std::map<std::string, KeySpec, std::less<>> k;
    // model
    k["embed_dim"] = size_key(FIELD(c.model.embed_dim));
    k["layers"] = size_key(FIELD(c.model.layers));
    k["indicator_count"] = size_key(FIELD(c.model.indicator_count));
    k["max_indicator_count"] = size_key(FIELD(c.model.max_indicator_count));
    k["max_text_length"] = size_key(FIELD(c.model.max_text_length));
    k["max_frames"] = size_key(FIELD(c.model.max_frames));
    k["ffn_dim"] = size_key(FIELD(c.model.ffn_dim));
    k["fusion_blocks"] = size_key(FIELD(c.model.fusion_blocks));
    k["k"] = size_key(FIELD(c.model.top_k));
    k["mlp_hidden"] = size_key(FIELD(c.model.mlp_hidden));
    k["activation"] = string_key(FIELD(c.model.activation));
    k["gumbel_temp"] = double_key(FIELD(c.model.gumbel_temp));
    k["use_gumbel"] = bool_key(FIELD(c.model.use_gumbel));
    k["use_indicators"] = bool_key(FIELD(c.model.use_indicators));
    k["use_stage1_scores"] = bool_key(FIELD(c.model.use_stage1_scores));
    // shared between the model and the generator
    k["vocab_size"] = {[](RunConfig& c, std::string_view key, std::string_view v) {
                         c.model.vocab_size = c.data.vocab_size = parse_size(key, v);
                       },
                       [](const RunConfig& c) { return std::to_string(c.model.vocab_size); }};
    k["patches"] = {[](RunConfig& c, std::string_view key, std::string_view v) {
                      c.model.patches = c.data.patches = parse_size(key, v);
                    },
                    [](const RunConfig& c) { return std::to_string(c.model.patches); }};
    k["patch_dim"] = {[](RunConfig& c, std::string_view key, std::string_view v) {
                        c.model.patch_dim = c.data.latent_dim = parse_size(key, v);
                      },
                      [](const RunConfig& c) { return std::to_string(c.model.patch_dim); }};
    // training
    k["tau"] = double_key(FIELD(c.train.tau));
    k["learnable_tau"] = bool_key(FIELD(c.train.learnable_tau));
    k["batch_size"] = size_key(FIELD(c.train.batch_size));
    k["k_train"] = size_key(FIELD(c.train.k_train));
    k["lr_fusion"] = double_key(FIELD(c.train.lr_fusion));
    k["lr_base"] = double_key(FIELD(c.train.lr_base));
    k["weight_decay"] = double_key(FIELD(c.train.weight_decay));
    k["beta1"] = double_key(FIELD(c.train.beta1));
    k["beta2"] = double_key(FIELD(c.train.beta2));
    k["adam_eps"] = double_key(FIELD(c.train.adam_eps));
    k["epochs"] = size_key(FIELD(c.train.epochs));
    k["seed"] = size_key(FIELD(c.train.seed));
    k["cohort_chunk"] = size_key(FIELD(c.train.cohort_chunk));
    k["freeze"] = {[](RunConfig& c, std::string_view, std::string_view v) {
                     c.train.frozen.clear();
                     std::size_t start = 0;
                     while (start <= v.size()) {
                       const auto end = std::min(v.find(';', start), v.size());
                       const auto item = trim(v.substr(start, end - start));
                       if (!item.empty()) c.train.frozen.emplace_back(item);
                       start = end + 1;
                     }
                   },
                   [](const RunConfig& c) {
                     std::string out;
                     for (const auto& n : c.train.frozen) out += (out.empty() ? "" : ";") + n;
                     return out;
                   }};
    // synthetic data
    k["pairs"] = size_key(FIELD(c.data.pairs));
    k["group_size"] = size_key(FIELD(c.data.group_size));
    k["fine_pool"] = size_key(FIELD(c.data.fine_pool));
    k["frames"] = size_key(FIELD(c.data.frames));
    k["text_length"] = size_key(FIELD(c.data.text_length));
    k["coarse_tokens"] = size_key(FIELD(c.data.coarse_tokens));
    k["detail_patches"] = size_key(FIELD(c.data.detail_patches));
    k["detail_strength"] = double_key(FIELD(c.data.detail_strength));
    k["noise"] = double_key(FIELD(c.data.noise));
    k["data_seed"] = size_key(FIELD(c.data.seed));
    // run
    k["dataset"] = string_key(FIELD(c.dataset_path));
    k["checkpoint"] = string_key(FIELD(c.checkpoint_path));
    k["eval_rendering"] = size_key(FIELD(c.eval_rendering));
    k["query_index"] = size_key(FIELD(c.query_index));
    k["query_direction"] = {[](RunConfig& c, std::string_view key, std::string_view v) {
                              if (v == "t2v") {
                                c.query_direction = Direction::t2v;
                              } else if (v == "v2t") {
                                c.query_direction = Direction::v2t;
                              } else {
                                throw ConfigError("'" + std::string(key) +
                                                  "' expects t2v or v2t, got '" + std::string(v) + "'");
                              }
                            },
                            [](const RunConfig& c) { return std::string(to_string(c.query_direction)); }};
    return k;
  }();
  return keys;
}

#undef FIELD

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::t2v ? "t2v" : "v2t"; }

void ModelConfig::validate() const {
  check(embed_dim >= 1, "embed_dim must be >= 1");
  check(layers >= 1, "layers must be >= 1");
  check(indicator_count >= 2, "indicator_count must be >= 2 (one global plus at least one focus indicator)");
  check(indicator_count <= max_indicator_count,
        "indicator_count " + std::to_string(indicator_count) + " exceeds max_indicator_count " +
            std::to_string(max_indicator_count));
  check(vocab_size >= 1, "vocab_size must be >= 1");
  check(max_text_length >= 1, "max_text_length must be >= 1");
  check(patches >= 1, "patches must be >= 1");
  check(max_frames >= 1, "max_frames must be >= 1");
  check(patch_dim >= 1, "patch_dim must be >= 1");
  check(ffn_dim >= 1, "ffn_dim must be >= 1");
  check(fusion_blocks >= 1, "fusion_blocks must be >= 1");
  check(top_k >= 1, "k must be >= 1");
  check(mlp_hidden >= 1, "mlp_hidden must be >= 1");
  check(activation == "gelu", "activation must be 'gelu', got '" + activation + "'");
  check(gumbel_temp > 0.0, "gumbel_temp must be positive");
}

std::size_t TrainConfig::effective_k_train(std::size_t top_k) const {
  return k_train ? k_train : std::min(top_k, batch_size);
}

void TrainConfig::validate() const {
  check(tau > 0.0, "tau must be positive");
  check(batch_size >= 2, "batch_size must be >= 2");
  check(k_train <= batch_size, "k_train must not exceed batch_size");
  check(lr_fusion > 0.0 && lr_base > 0.0, "learning rates must be positive");
  check(weight_decay >= 0.0, "weight_decay must be non-negative");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  check(adam_eps > 0.0, "adam_eps must be positive");
  check(epochs >= 1, "epochs must be >= 1");
}

void SyntheticSpec::validate() const {
  check(group_size >= 1, "group_size must be >= 1");
  check(pairs >= 1, "pairs must be >= 1");
  check(pairs % group_size == 0, "pairs (" + std::to_string(pairs) +
                                     ") must be divisible by group_size (" +
                                     std::to_string(group_size) + ")");
  check(latent_dim >= 1, "latent_dim must be >= 1");
  check(fine_pool >= group_size, "fine_pool must be >= group_size so cohort members differ");
  check(frames >= 1, "frames must be >= 1");
  check(patches >= 1, "patches must be >= 1");
  check(coarse_tokens >= 1, "coarse_tokens must be >= 1");
  check(text_length >= coarse_tokens + 1, "text_length must leave room for the fine token");
  check(coarse_tokens <= latent_dim, "coarse_tokens must not exceed latent_dim");
  check(vocab_size >= 2 * latent_dim + fine_pool,
        "vocab_size must be >= 2*latent_dim + fine_pool");
  check(detail_patches >= 1 && detail_patches <= patches, "detail_patches must lie in [1, patches]");
  check(noise >= 0.0 && noise <= 1.0, "noise must lie in [0, 1]");
  check(detail_strength >= 0.0, "detail_strength must be non-negative");
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
  check(data.latent_dim == model.patch_dim, "data latent width must equal patch_dim");
  check(data.patches == model.patches, "data patches must equal model patches");
  check(data.frames <= model.max_frames, "frames exceeds max_frames");
  check(data.text_length <= model.max_text_length, "text_length exceeds max_text_length");
  check(data.vocab_size <= model.vocab_size, "data vocabulary exceeds model vocab_size");
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& keys = registry();
  auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second.set(config, key, trim(value));
}

bool is_config_key(std::string_view key) { return registry().contains(key); }

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [k, spec] : registry()) out.push_back(k);
  return out;
}

std::string get_setting(const RunConfig& config, std::string_view key) {
  const auto& keys = registry();
  auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second.get(config);
}

std::string format_config(const RunConfig& config) {
  std::string out;
  for (const auto& [k, spec] : registry()) out += k + ": " + spec.get(config) + "\n";
  return out;
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto sep = line.find_first_of(":=");
    const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
    if (sep == std::string_view::npos) {
      throw ConfigError(where + "expected 'key: value', got '" + std::string(line) + "'");
    }
    const auto key = trim(line.substr(0, sep));
    const auto value = trim(line.substr(sep + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    try {
      apply_setting(config, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  config.validate();
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace tokenbinder
