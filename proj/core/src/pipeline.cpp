#include "tokenbinder/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tokenbinder/errors.hpp"
#include "tokenbinder/nn.hpp"
#include "tokenbinder/ops.hpp"

namespace tokenbinder {
namespace {

// Descending score, ascending index on ties.
struct ByScore {
  std::span<const double> scores;
  bool operator()(std::size_t a, std::size_t b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

}  // namespace

Gallery::Gallery(GallerySide side, std::size_t width, std::size_t local_count)
    : side_(side), width_(width), local_count_(local_count) {
  if (width == 0) throw DimensionError("gallery width must be positive");
}

void Gallery::add(GalleryEntry entry) {
  if (entry.global.size() != width_) {
    throw DimensionError("gallery entry " + std::to_string(entry.id) + ": global has " +
                         std::to_string(entry.global.size()) + " values, gallery width is " +
                         std::to_string(width_));
  }
  if (entry.locals.rows() != local_count_ || entry.locals.cols() != width_ ||
      entry.locals.size() != local_count_ * width_) {
    throw DimensionError("gallery entry " + std::to_string(entry.id) + ": locals " +
                         shape_string(entry.locals.shape()) + ", expected " +
                         std::to_string(local_count_) + "x" + std::to_string(width_));
  }
  const auto pos = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(),
                                    std::pair{entry.id, std::size_t{0}});
  if (pos != sorted_ids_.end() && pos->first == entry.id) {
    throw InputError("duplicate gallery id " + std::to_string(entry.id));
  }
  sorted_ids_.insert(pos, {entry.id, entries_.size()});
  entry.global = entry.global.reshaped({width_});
  entry.locals = entry.locals.reshaped({local_count_, width_});
  entries_.push_back(std::move(entry));
}

std::size_t Gallery::index_of(std::uint64_t id) const {
  const auto pos = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(),
                                    std::pair{id, std::size_t{0}});
  if (pos == sorted_ids_.end() || pos->first != id) {
    throw InputError("id " + std::to_string(id) + " not in gallery");
  }
  return pos->second;
}

bool Gallery::contains(std::uint64_t id) const {
  const auto pos = std::lower_bound(sorted_ids_.begin(), sorted_ids_.end(),
                                    std::pair{id, std::size_t{0}});
  return pos != sorted_ids_.end() && pos->first == id;
}

FusionNetwork FusionNetwork::for_direction(const ModelConfig& config, Direction direction) {
  FusionNetwork net;
  net.prefix = direction == Direction::t2v ? "fusion.t2v" : "fusion.v2t";
  net.width = config.embed_dim;
  net.indicators = config.indicator_count - 1;
  net.k = config.top_k;
  net.blocks = config.fusion_blocks;
  net.hidden = config.mlp_hidden;
  net.gumbel_temp = config.gumbel_temp;
  net.use_gumbel = config.use_gumbel;
  return net;
}

void add_fusion_parameters(ParameterSet& params, const FusionNetwork& net, RandomStream rng) {
  const auto group = ParamGroup::fusion;
  const std::size_t c = net.width;
  const double proj_std = 1.0 / std::sqrt(static_cast<double>(c));
  params.add(net.prefix + ".candidate_embedding",
             normal_array({net.k, c}, 1.0, rng.split("candidate_embedding")), group);
  for (std::size_t b = 0; b < net.blocks; ++b) {
    const std::string p = net.prefix + ".block" + std::to_string(b);
    RandomStream block = rng.split(p);
    params.add(p + ".wq", normal_array({c, c}, proj_std, block.split("wq")), group);
    params.add(p + ".wk", normal_array({c, c}, proj_std, block.split("wk")), group);
    params.add(p + ".wv", normal_array({c, c}, proj_std, block.split("wv")), group);
    params.add(p + ".wo", DenseArray::zeros({c, c}), group);
  }
  MlpInit mlp{net.indicators * c, net.hidden, net.k,
              1.0 / std::sqrt(static_cast<double>(net.hidden))};
  add_mlp_parameters(params, net.prefix + ".delta_mlp", mlp, group, rng.split("delta_mlp"));
  params.add(net.prefix + ".delta_scale", DenseArray::zeros({1, 1}), group);
}

std::size_t FinalScores::rank_of(std::size_t gallery_index) const {
  const auto it = std::find(order.begin(), order.end(), gallery_index);
  if (it == order.end()) throw InputError("gallery index not ranked");
  return static_cast<std::size_t>(it - order.begin()) + 1;
}

BroadScores broad_view_scores(std::span<const double> query_global, const Gallery& gallery) {
  if (gallery.empty()) throw InputError("broad_view_scores: empty gallery");
  if (query_global.size() != gallery.width()) {
    throw DimensionError("broad_view_scores: query width " + std::to_string(query_global.size()) +
                         " != gallery width " + std::to_string(gallery.width()));
  }
  BroadScores out;
  out.scores.resize(gallery.size());
  for (std::size_t j = 0; j < gallery.size(); ++j) {
    const auto g = gallery[j].global.data();
    double acc = 0.0;
    for (std::size_t c = 0; c < g.size(); ++c) acc += query_global[c] * g[c];
    out.scores[j] = acc;
  }
  return out;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    ByScore{scores});
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> stage1_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), ByScore{scores});
  return idx;
}

CandidateSet select_top_k(const BroadScores& scores, const Gallery& gallery, std::size_t k) {
  if (k == 0) throw InputError("select_top_k: k must be >= 1");
  if (scores.scores.size() != gallery.size()) {
    throw DimensionError("select_top_k: score count does not match gallery size");
  }
  CandidateSet out;
  out.clamped = k > gallery.size();
  out.gallery_indices = top_k_indices(scores.scores, k);
  out.local_count = gallery.local_count();
  const std::size_t n = gallery.local_count(), c = gallery.width();
  out.locals = DenseArray::zeros({out.size() * n, c});
  for (std::size_t r = 0; r < out.size(); ++r) {
    const std::size_t g = out.gallery_indices[r];
    out.stage1_scores.push_back(scores.scores[g]);
    const auto src = gallery[g].locals.data();
    std::copy(src.begin(), src.end(), out.locals.data().begin() + static_cast<std::ptrdiff_t>(r * n * c));
  }
  return out;
}

Var focused_fuse(Var focus_indicators, Var candidate_tokens,
                 std::span<const std::size_t> tokens_per_candidate, const FusionNetwork& net,
                 RandomStream& rng, bool deterministic) {
  const std::size_t count = tokens_per_candidate.size();
  if (count == 0) throw InputError("focused_fuse: no candidates");
  if (count > net.k) {
    throw ConfigError("focused_fuse: " + std::to_string(count) +
                      " candidates exceed the network's k = " + std::to_string(net.k));
  }
  if (focus_indicators.rows() != net.indicators || focus_indicators.cols() != net.width) {
    throw DimensionError("focused_fuse: indicators " +
                         shape_string(focus_indicators.value().shape()) + " do not match network " +
                         std::to_string(net.indicators) + "x" + std::to_string(net.width));
  }
  std::vector<std::size_t> owner;
  owner.reserve(candidate_tokens.rows());
  for (std::size_t j = 0; j < count; ++j) owner.insert(owner.end(), tokens_per_candidate[j], j);
  if (owner.size() != candidate_tokens.rows()) {
    throw DimensionError("focused_fuse: token rows do not match per-candidate counts");
  }
  Tape& tape = focus_indicators.tape();
  Var tokens = add(candidate_tokens,
                   gather_rows(tape.parameter(net.prefix + ".candidate_embedding"), owner));
  AttentionOptions options;
  options.use_gumbel = net.use_gumbel && !deterministic;
  options.gumbel_temp = net.gumbel_temp;
  Var indicators = focus_indicators;
  for (std::size_t b = 0; b < net.blocks; ++b) {
    const std::string p = net.prefix + ".block" + std::to_string(b);
    Var q = matmul(indicators, tape.parameter(p + ".wq"));
    Var k = matmul(tokens, tape.parameter(p + ".wk"));
    Var v = matmul(tokens, tape.parameter(p + ".wv"));
    Var attended = scaled_dot_attention(q, k, v, options, &rng);
    indicators = add(indicators, matmul(attended, tape.parameter(p + ".wo")));
  }
  return indicators;
}

DenseArray focused_fuse(const DenseArray& focus_indicators, const CandidateSet& candidates,
                        const FusionNetwork& net, const ParameterSet& params, RandomStream& rng,
                        bool deterministic) {
  Tape tape(params, Tape::Mode::inference);
  const std::vector<std::size_t> counts(candidates.size(), candidates.local_count);
  return focused_fuse(tape.constant(focus_indicators), tape.constant(candidates.locals), counts,
                      net, rng, deterministic)
      .value();
}

DeltaVars project_deltas(Var fused_indicators, const FusionNetwork& net, std::size_t count) {
  if (fused_indicators.rows() != net.indicators || fused_indicators.cols() != net.width) {
    throw ConfigError("project_deltas: got " + shape_string(fused_indicators.value().shape()) +
                      " indicators, network expects " + std::to_string(net.indicators) + "x" +
                      std::to_string(net.width));
  }
  if (count == 0 || count > net.k) {
    throw ConfigError("project_deltas: candidate count " + std::to_string(count) +
                      " outside [1, " + std::to_string(net.k) + "]");
  }
  Tape& tape = fused_indicators.tape();
  Var flat = reshape(fused_indicators, 1, net.indicators * net.width);
  Var logits = mlp_forward(flat, net.prefix + ".delta_mlp");
  if (count < net.k) logits = slice_cols(logits, 0, count);
  return {logits, mul_scalar(logits, tape.parameter(net.prefix + ".delta_scale"))};
}

DeltaProjection project_deltas(const DenseArray& fused_indicators, const FusionNetwork& net,
                               const ParameterSet& params, std::size_t count) {
  Tape tape(params, Tape::Mode::inference);
  DeltaVars vars = project_deltas(tape.constant(fused_indicators), net, count);
  return {vars.logits.value().values(), vars.deltas.value().values()};
}

FinalScores compose_scores(const CandidateSet& candidates, std::span<const double> deltas,
                           const BroadScores& broad, bool use_stage1_scores) {
  const std::size_t n = broad.scores.size();
  const std::size_t k = candidates.size();
  if (deltas.size() != k) {
    throw DimensionError("compose_scores: " + std::to_string(deltas.size()) + " deltas for " +
                         std::to_string(k) + " candidates");
  }
  FinalScores out;
  out.stage1 = broad.scores;
  out.final_score = broad.scores;
  out.delta.assign(n, 0.0);
  out.reranked = k;
  std::vector<char> in_block(n, 0);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t g = candidates.gallery_indices[j];
    in_block[g] = 1;
    out.delta[g] = deltas[j];
    out.final_score[g] = (use_stage1_scores ? broad.scores[g] : 0.0) + deltas[j];
  }
  std::vector<std::size_t> block(candidates.gallery_indices);
  std::sort(block.begin(), block.end(), ByScore{out.final_score});
  out.order = std::move(block);
  out.order.reserve(n);
  for (std::size_t g : stage1_order(broad.scores)) {
    if (!in_block[g]) out.order.push_back(g);
  }
  return out;
}

FinalScores rank_broad(std::span<const double> query_global, const Gallery& gallery) {
  BroadScores broad = broad_view_scores(query_global, gallery);
  FinalScores out;
  out.order = stage1_order(broad.scores);
  out.delta.assign(broad.scores.size(), 0.0);
  out.final_score = broad.scores;
  out.stage1 = std::move(broad.scores);
  return out;
}

FinalScores rank_full(const QueryEncoding& query, const Gallery& gallery,
                      const FusionNetwork& net, const ParameterSet& params,
                      const RankOptions& options, RandomStream rng) {
  BroadScores broad = broad_view_scores(query.global.data(), gallery);
  CandidateSet candidates = select_top_k(broad, gallery, std::min(options.k, net.k));
  DenseArray fused =
      focused_fuse(query.focus_indicators, candidates, net, params, rng, options.deterministic);
  DeltaProjection projection = project_deltas(fused, net, params, candidates.size());
  return compose_scores(candidates, projection.deltas, broad, options.use_stage1_scores);
}

}  // namespace tokenbinder
