#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <string_view>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/pipeline.hpp"

namespace tokenbinder {

enum class Stage : std::uint8_t { broad_only = 0, two_stage = 1 };
std::string_view to_string(Stage stage);

// 1-based rank of the true item per query.
struct RankMatrix {
  std::vector<std::size_t> ranks;
  std::size_t gallery_size = 0;

  std::size_t queries() const noexcept { return ranks.size(); }
};

struct MetricsReport {
  double r1 = 0.0;  // percent
  double r5 = 0.0;
  double r10 = 0.0;
  double mdr = 0.0;
  double mnr = 0.0;
  Direction direction = Direction::t2v;
  Stage stage = Stage::two_stage;
  std::size_t queries = 0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// InputError when a truth id is not in the gallery.
RankMatrix compute_ranks(std::span<const FinalScores> results, const Gallery& gallery,
                         std::span<const std::uint64_t> truth_ids);

// R@j = 100·|{rank ≤ j}|/Q, MdR with midpoint averaging for even Q, MnR mean.
MetricsReport summarize(const RankMatrix& ranks, Direction direction = Direction::t2v,
                        Stage stage = Stage::two_stage);

// Ranks every query against the gallery, via stage 1 only or the full
// two-stage path (always deterministic).
MetricsReport evaluate_direction(std::span<const QueryEncoding> queries,
                                 std::span<const std::uint64_t> truth_ids, const Gallery& gallery,
                                 const FusionNetwork& net, const ParameterSet& params,
                                 const RankOptions& options, Stage stage, Direction direction);

// One CSV row per stage: t2v then v2t, each R@1, R@5, R@10, MdR, MnR.
void write_metrics_header(std::ostream& out, std::string_view leading_columns = "stage");
void write_metrics_row(std::ostream& out, std::string_view leading, const MetricsReport& t2v,
                       const MetricsReport& v2t);
std::string format_metric(double value);

}  // namespace tokenbinder
