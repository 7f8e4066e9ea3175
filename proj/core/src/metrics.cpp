#include "tokenbinder/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {

std::string_view to_string(Stage stage) {
  return stage == Stage::broad_only ? "broad-only" : "two-stage";
}

RankMatrix compute_ranks(std::span<const FinalScores> results, const Gallery& gallery,
                         std::span<const std::uint64_t> truth_ids) {
  if (results.size() != truth_ids.size()) {
    throw InputError("compute_ranks: " + std::to_string(results.size()) + " results for " +
                     std::to_string(truth_ids.size()) + " truth ids");
  }
  RankMatrix out;
  out.gallery_size = gallery.size();
  out.ranks.reserve(results.size());
  for (std::size_t q = 0; q < results.size(); ++q) {
    const std::size_t target = gallery.index_of(truth_ids[q]);
    const auto& order = results[q].order;
    const auto it = std::find(order.begin(), order.end(), target);
    if (it == order.end()) {
      throw InputError("compute_ranks: query " + std::to_string(q) + " ordering lacks its truth");
    }
    out.ranks.push_back(static_cast<std::size_t>(it - order.begin()) + 1);
  }
  return out;
}

MetricsReport summarize(const RankMatrix& ranks, Direction direction, Stage stage) {
  const std::size_t q = ranks.queries();
  if (q == 0) throw InputError("summarize: no queries");
  MetricsReport r;
  r.direction = direction;
  r.stage = stage;
  r.queries = q;
  std::size_t hit1 = 0, hit5 = 0, hit10 = 0;
  double total = 0.0;
  for (std::size_t rank : ranks.ranks) {
    if (rank == 0) throw InputError("summarize: ranks are 1-based");
    hit1 += rank <= 1;
    hit5 += rank <= 5;
    hit10 += rank <= 10;
    total += static_cast<double>(rank);
  }
  const double n = static_cast<double>(q);
  r.r1 = 100.0 * static_cast<double>(hit1) / n;
  r.r5 = 100.0 * static_cast<double>(hit5) / n;
  r.r10 = 100.0 * static_cast<double>(hit10) / n;
  r.mnr = total / n;
  std::vector<std::size_t> sorted = ranks.ranks;
  std::sort(sorted.begin(), sorted.end());
  r.mdr = q % 2 ? static_cast<double>(sorted[q / 2])
                : (static_cast<double>(sorted[q / 2 - 1]) + static_cast<double>(sorted[q / 2])) / 2.0;
  return r;
}

MetricsReport evaluate_direction(std::span<const QueryEncoding> queries,
                                 std::span<const std::uint64_t> truth_ids, const Gallery& gallery,
                                 const FusionNetwork& net, const ParameterSet& params,
                                 const RankOptions& options, Stage stage, Direction direction) {
  std::vector<FinalScores> results;
  results.reserve(queries.size());
  RankOptions opts = options;
  opts.deterministic = true;
  for (const auto& query : queries) {
    if (stage == Stage::broad_only) {
      results.push_back(rank_broad(query.global.values(), gallery));
    } else {
      results.push_back(rank_full(query, gallery, net, params, opts));
    }
  }
  return summarize(compute_ranks(results, gallery, truth_ids), direction, stage);
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", value);
  return buf;
}

void write_metrics_header(std::ostream& out, std::string_view leading_columns) {
  out << leading_columns;
  for (const char* d : {"t2v", "v2t"}) {
    for (const char* m : {"r1", "r5", "r10", "mdr", "mnr"}) out << ',' << d << '_' << m;
  }
  out << '\n';
}

void write_metrics_row(std::ostream& out, std::string_view leading, const MetricsReport& t2v,
                       const MetricsReport& v2t) {
  out << leading;
  for (const MetricsReport* r : {&t2v, &v2t}) {
    for (double v : {r->r1, r->r5, r->r10, r->mdr, r->mnr}) out << ',' << format_metric(v);
  }
  out << '\n';
}

}  // namespace tokenbinder
