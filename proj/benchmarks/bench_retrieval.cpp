#include <benchmark/benchmark.h>

#include <cmath>

#include "tokenbinder/dataset.hpp"
#include "tokenbinder/evaluation.hpp"
#include "tokenbinder/model.hpp"
#include "tokenbinder/nn.hpp"
#include "tokenbinder/pipeline.hpp"

using namespace tokenbinder;

namespace {

Gallery random_gallery(std::size_t n, std::size_t width, std::size_t locals, RandomStream rng) {
  Gallery g(GallerySide::video, width, locals);
  for (std::size_t j = 0; j < n; ++j) {
    DenseArray global = normal_array({width}, 1.0, rng.split(j));
    double norm = 0.0;
    for (double x : global.data()) norm += x * x;
    for (double& x : global.data()) x /= std::sqrt(norm);
    g.add({j, std::move(global),
           normal_array({locals, width}, 1.0, rng.split(j).split(1))});
  }
  return g;
}

void BM_Attention(benchmark::State& state) {
  const auto keys = static_cast<std::size_t>(state.range(0));
  RandomStream rng(1);
  const DenseArray q = normal_array({3, 64}, 1.0, rng.split("q"));
  const DenseArray k = normal_array({keys, 64}, 1.0, rng.split("k"));
  const DenseArray v = normal_array({keys, 64}, 1.0, rng.split("v"));
  RandomStream noise = rng.split("g");
  for (auto _ : state) benchmark::DoNotOptimize(scaled_dot_attention(q, k, v, true, 1.0, noise));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(keys));
}
BENCHMARK(BM_Attention)->Arg(16)->Arg(160)->Arg(320);

void BM_BroadScores(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Gallery g = random_gallery(n, 64, 1, RandomStream(2));
  const std::vector<double> q(g[0].global.data().begin(), g[0].global.data().end());
  for (auto _ : state) benchmark::DoNotOptimize(broad_view_scores(q, g));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_BroadScores)->Arg(100)->Arg(1000)->Arg(10000);

void BM_RankFull(benchmark::State& state) {
  ModelConfig mc;
  mc.top_k = static_cast<std::size_t>(state.range(0));
  const Model model = Model::initialize(mc, 0.01, 3);
  const Gallery g = random_gallery(500, mc.embed_dim, mc.patches, RandomStream(3));
  RandomStream rng(4);
  const QueryEncoding q{g[7].global, normal_array({mc.indicator_count - 1, mc.embed_dim}, 1.0, rng)};
  const FusionNetwork net = model.fusion(Direction::t2v);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rank_full(q, g, net, model.parameters(), RankOptions{mc.top_k, true, true}));
  }
}
BENCHMARK(BM_RankFull)->Arg(5)->Arg(10)->Arg(20);

void BM_EncodePair(benchmark::State& state) {
  RunConfig c;
  c.data.pairs = 10;
  c.data.group_size = 5;
  const PairedDataset d = generate_synthetic_pairs(c.data);
  const Model model = Model::initialize(c.model, c.train.tau, 5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_text(d.texts[0], model.parameters(), c.model));
    benchmark::DoNotOptimize(encode_video(d.videos[0], model.parameters(), c.model));
  }
}
BENCHMARK(BM_EncodePair);

}  // namespace

BENCHMARK_MAIN();
