#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "tokenbinder/errors.hpp"
#include "tokenbinder/evaluation.hpp"
#include "tokenbinder/metrics.hpp"

using namespace tbtest;

namespace {

Gallery id_gallery(std::size_t n) {
  Gallery g(GallerySide::video, 1, 1);
  for (std::size_t j = 0; j < n; ++j) g.add({10 * j, DenseArray::vector({1.0}), DenseArray::zeros({1, 1})});
  return g;
}

FinalScores with_order(std::vector<std::size_t> order) {
  FinalScores f;
  f.order = std::move(order);
  return f;
}

MetricsReport sort_oracle(std::vector<std::size_t> ranks) {
  std::sort(ranks.begin(), ranks.end());
  const double q = static_cast<double>(ranks.size());
  auto recall = [&](std::size_t j) {
    return 100.0 * static_cast<double>(std::upper_bound(ranks.begin(), ranks.end(), j) - ranks.begin()) / q;
  };
  MetricsReport r;
  r.r1 = recall(1);
  r.r5 = recall(5);
  r.r10 = recall(10);
  const std::size_t h = ranks.size() / 2;
  r.mdr = ranks.size() % 2 ? double(ranks[h]) : (double(ranks[h - 1]) + double(ranks[h])) / 2.0;
  r.mnr = std::accumulate(ranks.begin(), ranks.end(), 0.0) / q;
  r.queries = ranks.size();
  return r;
}

std::vector<std::size_t> random_ranks(RandomStream rng, std::size_t max_rank) {
  std::vector<std::size_t> r(1 + rng.below(50));
  for (auto& x : r) x = 1 + rng.below(max_rank);
  return r;
}

}  // namespace

TEST(Ranks, PerfectAndWorstCase) {
  const Gallery g = id_gallery(3);
  const std::vector<FinalScores> first = {with_order({0, 1, 2}), with_order({1, 0, 2})};
  const std::vector<std::uint64_t> truth_first = {0, 10};
  EXPECT_EQ(compute_ranks(first, g, truth_first).ranks, (std::vector<std::size_t>{1, 1}));
  const std::vector<FinalScores> last = {with_order({0, 1, 2})};
  const std::vector<std::uint64_t> truth_last = {20};
  EXPECT_EQ(compute_ranks(last, g, truth_last).ranks, (std::vector<std::size_t>{3}));
}

TEST(Ranks, MissingTruthRejected) {
  const Gallery g = id_gallery(3);
  const std::vector<FinalScores> r = {with_order({0, 1, 2})};
  const std::vector<std::uint64_t> truth = {5};
  EXPECT_THROW(compute_ranks(r, g, truth), InputError);
}

TEST(Ranks, MatchesLinearScan) {
  for (std::uint64_t trial = 0; trial < 500; ++trial) {
    RandomStream rng = RandomStream(1).split(trial);
    const std::size_t n = 1 + rng.below(30);
    const Gallery g = id_gallery(n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const std::size_t truth = rng.below(n);
    std::size_t ahead = 0;
    while (order[ahead] != truth) ++ahead;
    const std::vector<FinalScores> r = {with_order(order)};
    const std::vector<std::uint64_t> ids = {10 * truth};
    const RankMatrix m = compute_ranks(r, g, ids);
    ASSERT_EQ(m.ranks[0], ahead + 1);
    EXPECT_LE(m.ranks[0], n);
  }
}

TEST(Ranks, IncreasingTransformKeepsRank) {
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    RandomStream rng = RandomStream(2).split(trial);
    const std::size_t n = 2 + rng.below(30);
    std::vector<double> s(n), t(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = rng.normal();
      t[j] = std::exp(3.0 * s[j]) + 7.0;
    }
    const Gallery g = id_gallery(n);
    const std::vector<FinalScores> a = {with_order(stage1_order(s))};
    const std::vector<FinalScores> b = {with_order(stage1_order(t))};
    const std::vector<std::uint64_t> ids = {10 * rng.below(n)};
    EXPECT_EQ(compute_ranks(a, g, ids).ranks, compute_ranks(b, g, ids).ranks);
  }
}

TEST(Summary, PerfectRetrieval) {
  const MetricsReport r = summarize(RankMatrix{{1, 1, 1}, 5});
  EXPECT_EQ(r.r1, 100.0);
  EXPECT_EQ(r.r5, 100.0);
  EXPECT_EQ(r.r10, 100.0);
  EXPECT_EQ(r.mdr, 1.0);
  EXPECT_EQ(r.mnr, 1.0);
}

TEST(Summary, TwoQueryArithmetic) {
  const MetricsReport r = summarize(RankMatrix{{1, 3}, 5});
  EXPECT_EQ(r.r1, 50.0);
  EXPECT_EQ(r.r5, 100.0);
  EXPECT_EQ(r.mdr, 2.0);
  EXPECT_EQ(r.mnr, 2.0);
}

TEST(Summary, EvenCountMedianIsMidpoint) {
  EXPECT_EQ(summarize(RankMatrix{{4, 1, 2, 9}, 10}).mdr, 3.0);
  EXPECT_EQ(summarize(RankMatrix{{1, 2}, 10}).mdr, 1.5);
}

TEST(Summary, EmptyRejected) { EXPECT_THROW(summarize(RankMatrix{}), InputError); }

TEST(SummaryProperty, MatchesSortOracle) {
  for (std::uint64_t trial = 0; trial < 1000; ++trial) {
    const auto ranks = random_ranks(RandomStream(3).split(trial), 40);
    const MetricsReport got = summarize(RankMatrix{ranks, 40});
    const MetricsReport want = sort_oracle(ranks);
    ASSERT_EQ(got.r1, want.r1);
    ASSERT_EQ(got.r5, want.r5);
    ASSERT_EQ(got.r10, want.r10);
    ASSERT_EQ(got.mdr, want.mdr);
    ASSERT_NEAR(got.mnr, want.mnr, 1e-12);
    EXPECT_LE(got.r1, got.r5);
    EXPECT_LE(got.r5, got.r10);
    EXPECT_LE(got.r10, 100.0);
    EXPECT_GE(got.mdr, 1.0);
    EXPECT_GE(got.mnr, 1.0);
  }
}

TEST(SummaryProperty, QueryOrderIrrelevant) {
  for (std::uint64_t trial = 0; trial < 200; ++trial) {
    RandomStream rng = RandomStream(4).split(trial);
    auto ranks = random_ranks(rng.split("r"), 20);
    const MetricsReport a = summarize(RankMatrix{ranks, 20});
    RandomStream s = rng.split("p");
    for (std::size_t i = ranks.size(); i > 1; --i) std::swap(ranks[i - 1], ranks[s.below(i)]);
    const MetricsReport b = summarize(RankMatrix{ranks, 20});
    EXPECT_EQ(a.r1, b.r1);
    EXPECT_EQ(a.r10, b.r10);
    EXPECT_EQ(a.mdr, b.mdr);
    EXPECT_NEAR(a.mnr, b.mnr, 1e-12);
  }
}

TEST(MetricsCsv, HeaderAndRowFormat) {
  std::ostringstream out;
  write_metrics_header(out);
  MetricsReport t = summarize(RankMatrix{{1, 3}, 5});
  MetricsReport v = summarize(RankMatrix{{2, 2, 7}, 9}, Direction::v2t);
  write_metrics_row(out, "two-stage", t, v);
  EXPECT_EQ(out.str(),
            "stage,t2v_r1,t2v_r5,t2v_r10,t2v_mdr,t2v_mnr,v2t_r1,v2t_r5,v2t_r10,v2t_mdr,v2t_mnr\n"
            "two-stage,50.0000,100.0000,100.0000,2.0000,2.0000,0.0000,66.6667,100.0000,2.0000,3.6667\n");
}

class EvaluationTest : public ::testing::Test {
 protected:
  RunConfig config = tiny_config();
  Model model = Model::initialize(config.model, config.train.tau, 5);
  EncodedCorpus corpus = encode_corpus(model, generate_synthetic_pairs(config.data));
};

TEST_F(EvaluationTest, UntrainedStagesAgree) {
  const Evaluation broad = evaluate(model, corpus, Stage::broad_only);
  const Evaluation full = evaluate(model, corpus, Stage::two_stage);
  for (auto [a, b] : {std::pair{broad.t2v, full.t2v}, std::pair{broad.v2t, full.v2t}}) {
    EXPECT_EQ(a.r1, b.r1);
    EXPECT_EQ(a.r5, b.r5);
    EXPECT_EQ(a.mdr, b.mdr);
    EXPECT_EQ(a.mnr, b.mnr);
  }
}

TEST_F(EvaluationTest, SingleEntryGalleryIsPerfect) {
  EncodedCorpus one{{corpus.texts[0]}, {corpus.videos[0]}};
  for (Stage stage : {Stage::broad_only, Stage::two_stage}) {
    const Evaluation e = evaluate(model, one, stage);
    EXPECT_EQ(e.t2v.r1, 100.0);
    EXPECT_EQ(e.v2t.r1, 100.0);
    EXPECT_EQ(e.t2v.mdr, 1.0);
    EXPECT_EQ(e.v2t.mnr, 1.0);
  }
}

TEST_F(EvaluationTest, GalleriesUseItemIndicesAsIds) {
  const Gallery v = video_gallery(corpus);
  const Gallery t = text_gallery(corpus);
  EXPECT_EQ(v.size(), corpus.videos.size());
  EXPECT_EQ(v.side(), GallerySide::video);
  EXPECT_EQ(t.side(), GallerySide::text);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i].id, i);
    EXPECT_EQ(t[i].id, i);
  }
  EXPECT_EQ(v.local_count(), config.model.patches);
  EXPECT_EQ(t.local_count(), config.data.text_length);
}
