// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails, unless it is listed with
// --known-unmet (its FAIL line is still printed).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "support.hpp"
#include "tokenbinder/evaluation.hpp"
#include "tokenbinder/losses.hpp"
#include "tokenbinder/metrics.hpp"
#include "tokenbinder/training.hpp"

using namespace tbtest;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("tokenbinder_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DenseArray unit(DenseArray v) {
  double n = 0.0;
  for (double x : v.data()) n += x * x;
  for (double& x : v.data()) x /= std::sqrt(n);
  return v;
}

// --- 1: gradient suite -------------------------------------------------------

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  const auto lines = tokenbinder::cli::run_gradient_suite(RunConfig{});
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& l : lines) {
    if (l.max_rel_error >= worst) worst = l.max_rel_error, worst_name = l.name;
  }
  const std::set<std::string> required = {"binding_attention", "fusion_attention_t2v",
                                          "delta_mlp_t2v", "contrastive_t2v",
                                          "contrastive_v2t", "focused_ce", "combined_loss"};
  std::size_t covered = 0;
  for (const auto& l : lines) covered += required.count(l.name);
  return {worst < 1e-4 && seconds < 120.0 && covered == required.size(),
          std::to_string(lines.size()) + " checks, max rel error " + fmt("%.2e", worst) + " (" +
              worst_name + "), " + fmt("%.1f", seconds) + " s"};
}

// --- 2: ranking oracle -------------------------------------------------------

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Brute force: score, fuse over k·n flattened tokens, MLP, add Δ to the top-k
// block, sort the block, append the rest in stage-1 order.
std::vector<std::size_t> ranking_oracle(const QueryEncoding& q, const Gallery& g,
                                        const FusionNetwork& net, const ParameterSet& p,
                                        std::size_t k) {
  const std::size_t n = g.size(), c = g.width(), per = g.local_count();
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    s[j] = 0.0;
    for (std::size_t x = 0; x < c; ++x) s[j] += q.global[x] * g[j].global[x];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  const std::size_t kk = std::min(k, n);

  DenseArray tokens = DenseArray::zeros({kk * per, c});
  const DenseArray& emb = p.value(net.prefix + ".candidate_embedding");
  for (std::size_t r = 0; r < kk; ++r)
    for (std::size_t t = 0; t < per; ++t)
      for (std::size_t x = 0; x < c; ++x)
        tokens(r * per + t, x) = g[order[r]].locals(t, x) + emb(r, x);
  DenseArray fused = q.focus_indicators;
  for (std::size_t b = 0; b < net.blocks; ++b) {
    const std::string pre = net.prefix + ".block" + std::to_string(b);
    const DenseArray att = oracle_attention(oracle_matmul(fused, p.value(pre + ".wq")),
                                            oracle_matmul(tokens, p.value(pre + ".wk")),
                                            oracle_matmul(tokens, p.value(pre + ".wv")));
    const DenseArray upd = oracle_matmul(att, p.value(pre + ".wo"));
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += upd[i];
  }
  const std::string mlp = net.prefix + ".delta_mlp";
  DenseArray h = oracle_matmul(fused.reshaped({1, fused.size()}), p.value(mlp + ".fc1.weight"));
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = gelu(h[i] + p.value(mlp + ".fc1.bias")[i]);
  DenseArray logits = oracle_matmul(h, p.value(mlp + ".fc2.weight"));
  const double scale = p.value(net.prefix + ".delta_scale")[0];

  std::vector<double> refined = s;
  for (std::size_t r = 0; r < kk; ++r) {
    refined[order[r]] = s[order[r]] + scale * (logits[r] + p.value(mlp + ".fc2.bias")[r]);
  }
  std::sort(order.begin(), order.begin() + static_cast<long>(kk), [&](auto a, auto b) {
    return refined[a] != refined[b] ? refined[a] > refined[b] : a < b;
  });
  return order;
}

Outcome ranking_oracle_equivalence() {
  std::size_t matched = 0, reordered = 0;
  const std::size_t trials = 1000;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RandomStream rng = RandomStream(2024).split(trial);
    FusionNetwork net;
    net.width = 8;
    net.indicators = 1 + rng.below(5);
    net.k = 1 + rng.below(16);
    net.blocks = 1 + rng.below(2);
    net.hidden = 4 + rng.below(12);
    ParameterSet p;
    add_fusion_parameters(p, net, rng.split("init"));
    // Trained-looking parameters so the deltas actually reorder the block.
    for (auto& [name, param] : p) {
      param.value = normal_array(param.value.shape(), name.ends_with("delta_scale") ? 1.0 : 0.5,
                                 rng.split(name));
    }
    const std::size_t n_entries = 1 + rng.below(64), per = 1 + rng.below(4);
    Gallery g(GallerySide::video, 8, per);
    for (std::size_t j = 0; j < n_entries; ++j) {
      g.add({j, unit(normal_array({8}, 1.0, rng.split("g").split(j))),
             normal_array({per, 8}, 1.0, rng.split("l").split(j))});
    }
    const QueryEncoding q{unit(normal_array({8}, 1.0, rng.split("q"))),
                          normal_array({net.indicators, 8}, 1.0, rng.split("i"))};
    const FinalScores f = rank_full(q, g, net, p, RankOptions{net.k, true, true});
    const auto oracle = ranking_oracle(q, g, net, p, net.k);
    matched += f.order == oracle;
    reordered += f.order != stage1_order(f.stage1);
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {matched == trials && seconds < 60.0,
          std::to_string(matched) + "/" + std::to_string(trials) + " galleries match (" +
              std::to_string(reordered) + " re-ordered by deltas), " + fmt("%.1f", seconds) + " s"};
}

// --- 3: identity at init -----------------------------------------------------

Outcome identity_at_init() {
  const ModelConfig mc;
  const Model model = Model::initialize(mc, 0.01, 99);
  std::size_t agree = 0;
  const std::size_t trials = 1000;
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RandomStream rng = RandomStream(3).split(trial);
    const Direction dir = trial % 2 ? Direction::v2t : Direction::t2v;
    const std::size_t per = dir == Direction::t2v ? mc.patches : 8;
    const std::size_t n_entries = 1 + rng.below(64);
    Gallery g(dir == Direction::t2v ? GallerySide::video : GallerySide::text, mc.embed_dim, per);
    for (std::size_t j = 0; j < n_entries; ++j) {
      g.add({j, unit(normal_array({mc.embed_dim}, 1.0, rng.split("g").split(j))),
             normal_array({per, mc.embed_dim}, 1.0, rng.split("l").split(j))});
    }
    const QueryEncoding q{unit(normal_array({mc.embed_dim}, 1.0, rng.split("q"))),
                          normal_array({mc.indicator_count - 1, mc.embed_dim}, 1.0, rng.split("i"))};
    // Alternate Gumbel noise on and off: with zero projections it cannot matter.
    const RankOptions opt{mc.top_k, trial % 4 < 2, true};
    agree += rank_full(q, g, model.fusion(dir), model.parameters(), opt, rng.split("r")).order ==
             rank_broad(q.global.data(), g).order;
  }
  return {agree == trials, std::to_string(agree) + "/" + std::to_string(trials) + " queries agree"};
}

// --- 4: metric oracle --------------------------------------------------------

Outcome metric_oracle() {
  std::size_t matched = 0, even = 0, fractional = 0;
  const std::size_t trials = 1000;
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RandomStream rng = RandomStream(4).split(trial);
    std::vector<std::size_t> ranks(1 + rng.below(60));
    for (auto& r : ranks) r = 1 + rng.below(30);
    const MetricsReport got = summarize(RankMatrix{ranks, 30});
    std::vector<std::size_t> s = ranks;
    std::sort(s.begin(), s.end());
    const double q = static_cast<double>(s.size());
    auto recall = [&](std::size_t j) {
      return 100.0 * static_cast<double>(std::count_if(s.begin(), s.end(), [j](auto r) { return r <= j; })) / q;
    };
    const std::size_t h = s.size() / 2;
    const double mdr = s.size() % 2 ? double(s[h]) : (double(s[h - 1]) + double(s[h])) / 2.0;
    double sum = 0.0;
    for (auto r : s) sum += double(r);
    even += s.size() % 2 == 0;
    fractional += mdr != std::floor(mdr);
    matched += got.r1 == recall(1) && got.r5 == recall(5) && got.r10 == recall(10) &&
               got.mdr == mdr && std::abs(got.mnr - sum / q) <= 1e-12 * sum / q;
  }
  return {matched == trials && fractional > 0,
          std::to_string(matched) + "/" + std::to_string(trials) + " match (" + std::to_string(even) +
              " even-Q, " + std::to_string(fractional) + " fractional medians)"};
}

// --- 5: loss identities ------------------------------------------------------

Outcome loss_identities() {
  double worst_uniform = 0.0;
  for (std::size_t b : {2u, 3u, 5u, 8u, 16u}) {
    const DenseArray x = DenseArray::filled({b, 4}, 0.5);
    for (Direction d : {Direction::t2v, Direction::v2t}) {
      worst_uniform = std::max(worst_uniform, std::abs(contrastive_loss(x, x, 0.01, d) - std::log(double(b))));
    }
  }
  const DenseArray eye = DenseArray::matrix({{1.0, 0.0}, {0.0, 1.0}});
  const double perfect = std::max(contrastive_loss(eye, eye, 0.01, Direction::t2v),
                                  contrastive_loss(eye, eye, 0.01, Direction::v2t));
  bool symmetric = true;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const DenseArray x = random_matrix(2 + trial % 7, 5, RandomStream(5).split(trial));
    symmetric &= contrastive_loss(x, x, 0.07, Direction::t2v) == contrastive_loss(x, x, 0.07, Direction::v2t);
  }
  bool combined = combined_loss(LossParts{1, 1, 2, 2}) == 3.0 && combined_loss(LossParts{}) == 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto r = random_vector(4, RandomStream(6).split(trial));
    combined &= combined_loss(LossParts{r[0], r[1], r[2], r[3]}) == (r[0] + r[1]) / 2 + (r[2] + r[3]) / 2;
  }
  return {worst_uniform <= 1e-12 && perfect <= 1e-3 && symmetric && combined,
          "uniform |l - log B| " + fmt("%.1e", worst_uniform) + ", perfect pairs " + fmt("%.2e", perfect) +
              ", symmetric " + (symmetric ? "equal" : "differ") + ", combined " +
              (combined ? "exact" : "inexact")};
}

// --- 6: Gumbel statistics ----------------------------------------------------

Outcome gumbel_statistics() {
  const std::vector<DenseArray> cases = {DenseArray::matrix({{0.5, -0.5}}),
                                         DenseArray::matrix({{1.0, 0.0, -1.0}}),
                                         DenseArray::matrix({{2.0, 0.3, 0.3, -1.0}}),
                                         DenseArray::matrix({{0.1, 1.2, -0.7, 0.0, 0.9}})};
  const int draws = 100000;
  double worst = 0.0;
  bool bitwise = true;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const DenseArray& logits = cases[ci];
    const DenseArray p = softmax(logits);
    RandomStream rng = RandomStream(6).split(ci);
    std::vector<int> hits(logits.cols(), 0);
    for (int d = 0; d < draws; ++d) {
      const DenseArray y = gumbel_softmax(logits, 1.0, rng, false);
      ++hits[static_cast<std::size_t>(std::max_element(y.data().begin(), y.data().end()) - y.data().begin())];
    }
    for (std::size_t j = 0; j < hits.size(); ++j) worst = std::max(worst, std::abs(hits[j] / double(draws) - p[j]));
    RandomStream unused(0);
    bitwise &= gumbel_softmax(logits, 1.0, unused, true) == p;
  }
  return {worst <= 0.02 && bitwise, "max |freq - softmax| " + fmt("%.4f", worst) +
                                        ", deterministic " + (bitwise ? "bitwise equal" : "differs")};
}

// --- 7: trend reproduction ---------------------------------------------------

Outcome trend_reproduction(const fs::path& config_path) {
  const RunConfig base = load_config(config_path);
  int wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig c = base;
    c.train.seed = seed;
    const auto start = std::chrono::steady_clock::now();
    Model model = Model::initialize(c.model, c.train.tau, seed);
    train_loop(tokenbinder::cli::training_data(c), model, c.train);
    const EncodedCorpus corpus = encode_corpus(model, tokenbinder::cli::evaluation_data(c));
    const double broad = evaluate(model, corpus, Stage::broad_only).t2v.r1;
    const double full = evaluate(model, corpus, Stage::two_stage).t2v.r1;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool win = full - broad >= 5.0;
    wins += win;
    detail << (seed > 1 ? "; " : "") << "seed " << seed << ": broad " << fmt("%.1f", broad) << " two-stage "
           << fmt("%.1f", full) << " (" << fmt("%.0f", seconds) << " s)";
    std::cerr << "  criterion 7 seed " << seed << ": broad R@1 " << broad << ", two-stage R@1 " << full << '\n';
  }
  detail << "; " << wins << "/3 seeds gain >= 5 points";
  return {wins >= 2, detail.str()};
}

// --- 8: ablation harness -----------------------------------------------------

Outcome ablation_harness(const fs::path& config_path) {
  using namespace tokenbinder::cli;
  Command cmd;
  cmd.verb = Verb::ablate;
  cmd.config_path = config_path;
  cmd.overrides = {{"indicator_count", {"2", "4", "6"}}, {"k", {"5", "10", "20"}}, {"fusion_blocks", {"1", "2"}}};
  cmd.out_dir = scratch_dir("ablation");
  std::ostringstream out, err;
  const int rc = execute(cmd, out, err);
  std::istringstream csv(slurp(cmd.out_dir / "ablation.csv"));
  std::string line;
  std::getline(csv, line);
  const bool header_ok = line.rfind("axis,value,t2v_r1", 0) == 0;
  std::vector<std::string> keys;
  while (std::getline(csv, line)) keys.push_back(line.substr(0, line.find(',', line.find(',') + 1)));
  const std::vector<std::string> expected = {"indicator_count,2", "indicator_count,4", "indicator_count,6",
                                             "k,5", "k,10", "k,20", "fusion_blocks,1", "fusion_blocks,2"};
  const ModelConfig defaults;
  const bool defaults_ok = defaults.indicator_count == 4 && defaults.top_k == 10 && defaults.fusion_blocks == 1;
  return {rc == 0 && header_ok && keys == expected && defaults_ok,
          std::to_string(keys.size()) + " rows (expected 8), defaults m=" +
              std::to_string(defaults.indicator_count) + " k=" + std::to_string(defaults.top_k) +
              " B_f=" + std::to_string(defaults.fusion_blocks)};
}

// --- 9: determinism ----------------------------------------------------------

Outcome determinism(const fs::path& config_path) {
  using namespace tokenbinder::cli;
  std::vector<fs::path> dirs;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = scratch_dir(std::string("determinism_") + run);
    std::ostringstream out, err;
    Command train;
    train.verb = Verb::train;
    train.config_path = config_path;
    train.out_dir = dir;
    train.seed = 17;
    if (execute(train, out, err) != 0) return {false, "train failed: " + err.str()};
    Command eval = train;
    eval.verb = Verb::eval;
    eval.overrides = {{"checkpoint", {(dir / "checkpoint.tbck").string()}}};
    if (execute(eval, out, err) != 0) return {false, "eval failed: " + err.str()};
    Command query = eval;
    query.verb = Verb::query;
    if (execute(query, out, err) != 0) return {false, "query failed: " + err.str()};
    dirs.push_back(dir);
  }
  std::size_t compared = 0, identical = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    const fs::path name = entry.path().filename();
    ++compared;
    identical += fs::exists(dirs[1] / name) && slurp(entry.path()) == slurp(dirs[1] / name);
  }
  const bool has_all = fs::exists(dirs[0] / "loss.csv") && fs::exists(dirs[0] / "checkpoint.tbck") &&
                       fs::exists(dirs[0] / "metrics.csv");
  return {has_all && compared == identical && compared > 0,
          std::to_string(identical) + "/" + std::to_string(compared) +
              " artifacts byte-identical (loss log, checkpoints, galleries, metrics, query)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<int> selected;
  std::vector<int> known_unmet;
  std::string config_dir = TOKENBINDER_CONFIG_DIR;
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--known-unmet", known_unmet, "criteria whose failure does not fail the run");
  app.add_option("--config-dir", config_dir, "directory holding benchmark.cfg and smoke.cfg");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  const fs::path benchmark = fs::path(config_dir) / "benchmark.cfg";
  const fs::path smoke = fs::path(config_dir) / "smoke.cfg";
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradient_suite},
      {"ranking oracle", ranking_oracle_equivalence},
      {"identity at init", identity_at_init},
      {"metric oracle", metric_oracle},
      {"loss identities", loss_identities},
      {"gumbel statistics", gumbel_statistics},
      {"trend reproduction", [&] { return trend_reproduction(benchmark); }},
      {"ablation harness", [&] { return ablation_harness(smoke); }},
      {"determinism", [&] { return determinism(smoke); }},
  };

  int status = 0;
  for (int id : selected) {
    const auto& [name, check] = criteria[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool excused = !o.pass && std::count(known_unmet.begin(), known_unmet.end(), id) > 0;
    std::cout << "criterion " << id << " (" << name << "): " << (o.pass ? "PASS" : "FAIL") << "  "
              << o.detail << (excused ? "  [known unmet]" : "") << std::endl;
    if (!o.pass && !excused) status = 1;
  }
  return status;
}
