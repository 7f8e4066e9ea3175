#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/parameters.hpp"
#include "tokenbinder/random.hpp"
#include "tokenbinder/tape.hpp"

namespace tokenbinder {

// Which modality the gallery holds: videos for t2v, captions for v2t.
enum class GallerySide : std::uint8_t { video = 0, text = 1 };

struct GalleryEntry {
  std::uint64_t id = 0;
  DenseArray global;  // [C], unit norm
  DenseArray locals;  // [n × C]

  friend bool operator==(const GalleryEntry&, const GalleryEntry&) = default;
};

/// Candidates for one retrieval direction. All entries share the same width
/// C and local count n; ids are unique.
class Gallery {
 public:
  Gallery(GallerySide side, std::size_t width, std::size_t local_count);

  // DimensionError on shape mismatch, InputError on duplicate id.
  void add(GalleryEntry entry);

  GallerySide side() const noexcept { return side_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t local_count() const noexcept { return local_count_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const GalleryEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::vector<GalleryEntry>& entries() const noexcept { return entries_; }
  // Gallery index of an id; InputError when absent.
  std::size_t index_of(std::uint64_t id) const;
  bool contains(std::uint64_t id) const;

  friend bool operator==(const Gallery&, const Gallery&) = default;

 private:
  GallerySide side_;
  std::size_t width_;
  std::size_t local_count_;
  std::vector<GalleryEntry> entries_;
  std::vector<std::pair<std::uint64_t, std::size_t>> sorted_ids_;
};

struct BroadScores {
  std::vector<double> scores;  // aligned with gallery order
};

struct CandidateSet {
  std::vector<std::size_t> gallery_indices;  // best first
  std::vector<double> stage1_scores;         // non-increasing
  DenseArray locals;                         // [k·n × C], candidate-major
  std::size_t local_count = 0;               // n
  bool clamped = false;                      // requested k exceeded N

  std::size_t size() const noexcept { return gallery_indices.size(); }
};

/// Shape of one focused-view fusion network. Parameters live in a
/// ParameterSet under `prefix`:
///   candidate_embedding [k×C], block<b>.{wq,wk,wv,wo} [C×C],
///   delta_mlp.* ((m−1)·C → hidden → k), delta_scale [1×1].
struct FusionNetwork {
  std::string prefix = "fusion.t2v";
  std::size_t width = 64;       // C
  std::size_t indicators = 3;   // m − 1
  std::size_t k = 10;           // logits produced
  std::size_t blocks = 1;       // B_f
  std::size_t hidden = 128;
  double gumbel_temp = 1.0;
  bool use_gumbel = true;

  static FusionNetwork for_direction(const ModelConfig& config, Direction direction);
};

// Output projections and delta scale start at zero, so the network leaves
// indicators unchanged and produces zero deltas until trained.
void add_fusion_parameters(ParameterSet& params, const FusionNetwork& net, RandomStream rng);

struct FinalScores {
  std::vector<std::size_t> order;   // gallery indices, rank 1 first
  std::vector<double> stage1;       // per gallery index
  std::vector<double> delta;        // per gallery index; zero outside the block
  std::vector<double> final_score;  // per gallery index
  std::size_t reranked = 0;         // size of the re-ranked top block

  // 1-based rank of a gallery index.
  std::size_t rank_of(std::size_t gallery_index) const;
  friend bool operator==(const FinalScores&, const FinalScores&) = default;
};

struct DeltaProjection {
  std::vector<double> logits;
  std::vector<double> deltas;
};

// scores[j] = query · gallery[j].global
BroadScores broad_view_scores(std::span<const double> query_global, const Gallery& gallery);

// Indices of the k best scores, descending, ties by ascending index. k is
// clamped to the score count.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t k);
// Full descending order with the same tie rule.
std::vector<std::size_t> stage1_order(std::span<const double> scores);

CandidateSet select_top_k(const BroadScores& scores, const Gallery& gallery, std::size_t k);

// Residual Gumbel cross-attention of the focus indicators over the candidates'
// flattened local tokens. `candidate_tokens` is (Σ n_j)×C, candidate-major, and
// `tokens_per_candidate` gives each candidate's row count; candidate j's rows
// get candidate_embedding[j] added.
Var focused_fuse(Var focus_indicators, Var candidate_tokens,
                 std::span<const std::size_t> tokens_per_candidate, const FusionNetwork& net,
                 RandomStream& rng, bool deterministic);
DenseArray focused_fuse(const DenseArray& focus_indicators, const CandidateSet& candidates,
                        const FusionNetwork& net, const ParameterSet& params, RandomStream& rng,
                        bool deterministic);

struct DeltaVars {
  Var logits;  // 1×count
  Var deltas;  // 1×count
};
// logits = MLP(concat(fused)) truncated to `count` ≤ k; deltas = delta_scale·logits.
DeltaVars project_deltas(Var fused_indicators, const FusionNetwork& net, std::size_t count);
DeltaProjection project_deltas(const DenseArray& fused_indicators, const FusionNetwork& net,
                               const ParameterSet& params, std::size_t count);

// Candidates re-sorted by refined score (stage-1 + delta, or delta alone when
// use_stage1_scores is false) fill ranks 1..k; everything else follows in
// stage-1 order.
FinalScores compose_scores(const CandidateSet& candidates, std::span<const double> deltas,
                           const BroadScores& broad, bool use_stage1_scores = true);

// Stage-1 ranking only.
FinalScores rank_broad(std::span<const double> query_global, const Gallery& gallery);

struct QueryEncoding {
  DenseArray global;            // [C]
  DenseArray focus_indicators;  // [(m−1) × C]
};

struct RankOptions {
  std::size_t k = 10;
  bool deterministic = true;
  bool use_stage1_scores = true;
};

// broad_view_scores → select_top_k → focused_fuse → project_deltas → compose_scores
FinalScores rank_full(const QueryEncoding& query, const Gallery& gallery,
                      const FusionNetwork& net, const ParameterSet& params,
                      const RankOptions& options, RandomStream rng = RandomStream(0));

}  // namespace tokenbinder
