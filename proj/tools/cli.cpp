#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tokenbinder/dataset.hpp"
#include "tokenbinder/errors.hpp"
#include "tokenbinder/evaluation.hpp"
#include "tokenbinder/gradcheck.hpp"
#include "tokenbinder/io.hpp"
#include "tokenbinder/losses.hpp"
#include "tokenbinder/metrics.hpp"
#include "tokenbinder/nn.hpp"
#include "tokenbinder/ops.hpp"
#include "tokenbinder/training.hpp"

namespace tokenbinder::cli {
namespace {

namespace fs = std::filesystem;

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

// TOKENBINDER_LOG=quiet|info|debug, default info.
LogLevel log_level() {
  const char* env = std::getenv("TOKENBINDER_LOG");
  if (env == nullptr) return LogLevel::info;
  const std::string v(env);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err), level_(log_level()) {}
  void info(const std::string& msg) const { emit(LogLevel::info, msg); }
  void debug(const std::string& msg) const { emit(LogLevel::debug, msg); }

 private:
  void emit(LogLevel at, const std::string& msg) const {
    if (level_ >= at) err_ << "[tokenbinder] " << msg << '\n';
  }
  std::ostream& err_;
  LogLevel level_;
};

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    out.push_back(text.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

Override parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError("--set expects key=value, got '" + text + "'");
  }
  Override o{text.substr(0, eq), split_values(text.substr(eq + 1))};
  if (!is_config_key(o.key)) throw UsageError("--set: unknown config key '" + o.key + "'");
  for (const auto& v : o.values) {
    if (v.empty()) throw UsageError("--set " + o.key + ": empty value");
  }
  return o;
}

void add_common_options(CLI::App* sub, Command& cmd, std::vector<std::string>& sets,
                        std::string& config, std::string& out, std::uint64_t& seed) {
  sub->add_option("--config", config, "key: value config file");
  sub->add_option("--set", sets, "override key=value[,value...] (lists only for ablate)")
      ->allow_extra_args(false);
  sub->add_option("--out", out, "output directory");
  sub->add_option("--seed", seed, "training seed");
  sub->add_flag("--deterministic", cmd.deterministic, "disable Gumbel noise in training");
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace

std::string_view to_string(Verb verb) {
  switch (verb) {
    case Verb::train: return "train";
    case Verb::eval: return "eval";
    case Verb::query: return "query";
    case Verb::gradcheck: return "gradcheck";
    case Verb::ablate: return "ablate";
  }
  return "?";
}

Command parse_args(int argc, const char* const* argv) {
  Command cmd;
  CLI::App app{"Two-stage text-video retrieval with query indicators"};
  app.require_subcommand(1);
  struct Slot {
    Verb verb;
    std::vector<std::string> sets;
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    CLI::App* sub = nullptr;
  };
  std::vector<Slot> slots;
  for (Verb v : {Verb::train, Verb::eval, Verb::query, Verb::gradcheck, Verb::ablate}) {
    slots.push_back({v, {}, {}, {}, 0, nullptr});
  }
  const char* help[] = {"train and write per-epoch checkpoints plus a loss log",
                        "evaluate broad-only and two-stage retrieval",
                        "rank the gallery for one query",
                        "finite-difference gradient suite on a toy configuration",
                        "sweep components or config axes, one CSV row per setting"};
  for (std::size_t i = 0; i < slots.size(); ++i) {
    Slot& s = slots[i];
    s.sub = app.add_subcommand(std::string(to_string(s.verb)), help[i]);
    add_common_options(s.sub, cmd, s.sets, s.config, s.out, s.seed);
  }
  if (argc < 2) throw UsageError("missing verb (train, eval, query, gradcheck, ablate)");
  const std::string verb = argv[1];
  if (verb.empty() || verb[0] != '-') {
    bool known = false;
    for (const Slot& s : slots) known = known || verb == to_string(s.verb);
    if (!known) throw UsageError("unknown verb '" + verb + "'");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.empty()) msg = e.get_name();
    throw UsageError(msg);
  }
  for (const Slot& s : slots) {
    if (!s.sub->parsed()) continue;
    cmd.verb = s.verb;
    if (!s.config.empty()) {
      if (!fs::exists(s.config)) throw UsageError("--config: no such file '" + s.config + "'");
      cmd.config_path = s.config;
    }
    if (!s.out.empty()) cmd.out_dir = s.out;
    if (s.sub->count("--seed") > 0) cmd.seed = s.seed;
    for (const auto& text : s.sets) {
      Override o = parse_override(text);
      if (o.values.size() > 1 && cmd.verb != Verb::ablate) {
        throw UsageError("--set " + o.key + ": value lists are only accepted by ablate");
      }
      cmd.overrides.push_back(std::move(o));
    }
  }
  return cmd;
}

RunConfig resolve_config(const Command& cmd) {
  RunConfig config = cmd.config_path ? load_config(*cmd.config_path) : RunConfig{};
  for (const auto& o : cmd.overrides) {
    if (o.values.size() == 1) apply_setting(config, o.key, o.values.front());
  }
  if (cmd.seed) config.train.seed = *cmd.seed;
  if (cmd.deterministic) config.model.use_gumbel = false;
  config.validate();
  return config;
}

PairedDataset training_data(const RunConfig& config) {
  if (!config.dataset_path.empty()) return load_dataset(config.dataset_path);
  SyntheticSpec spec = config.data;
  spec.rendering = 0;
  return generate_synthetic_pairs(spec);
}

PairedDataset evaluation_data(const RunConfig& config) {
  if (!config.dataset_path.empty()) return load_dataset(config.dataset_path);
  SyntheticSpec spec = config.data;
  spec.rendering = config.eval_rendering;
  return generate_synthetic_pairs(spec);
}

Model load_or_initialize(const RunConfig& config) {
  if (!config.checkpoint_path.empty()) {
    return Model(config.model, load_checkpoint(config.checkpoint_path));
  }
  return Model::initialize(config.model, config.train.tau, config.train.seed);
}

std::vector<AblationRow> ablation_rows(const Command& cmd, const RunConfig& base) {
  std::vector<AblationRow> rows;
  for (const auto& o : cmd.overrides) {
    if (o.values.size() < 2) continue;
    for (const auto& v : o.values) {
      RunConfig c = base;
      apply_setting(c, o.key, v);
      c.validate();
      rows.push_back({o.key, v, std::move(c)});
    }
  }
  if (!rows.empty()) return rows;
  // Cumulative component toggles: none, +indicators, +stage-1 scores, +Gumbel.
  const struct {
    const char* label;
    bool indicators, stage1, gumbel;
  } steps[] = {{"none", false, false, false},
               {"indicators", true, false, false},
               {"indicators+stage1", true, true, false},
               {"indicators+stage1+gumbel", true, true, true}};
  for (const auto& s : steps) {
    RunConfig c = base;
    c.model.use_indicators = s.indicators;
    c.model.use_stage1_scores = s.stage1;
    c.model.use_gumbel = s.gumbel && !cmd.deterministic;
    c.validate();
    rows.push_back({"components", s.label, std::move(c)});
  }
  return rows;
}

namespace {

// Σ x∘W for a fixed random W, so every output coordinate reaches the loss
// with an O(1) weight.
Var probe(Tape& tape, Var x, std::uint64_t seed) {
  const std::size_t n = x.value().size();
  const DenseArray w = normal_array({1, n}, 1.0, RandomStream(seed).split("probe"));
  return matmul_nt(reshape(x, 1, n), tape.constant(w));
}

RunConfig toy_config(const RunConfig& base) {
  RunConfig c = base;
  c.dataset_path.clear();
  c.checkpoint_path.clear();
  const char* settings[][2] = {
      {"embed_dim", "8"},   {"ffn_dim", "16"},      {"mlp_hidden", "16"},   {"k", "3"},
      {"batch_size", "2"},  {"k_train", "0"},       {"vocab_size", "40"},   {"patch_dim", "8"},
      {"patches", "4"},     {"frames", "2"},        {"max_frames", "2"},    {"text_length", "4"},
      {"max_text_length", "4"}, {"coarse_tokens", "2"}, {"fine_pool", "4"}, {"pairs", "4"},
      {"group_size", "2"},  {"detail_patches", "1"}, {"tau", "0.5"},        {"fusion_blocks", "1"}};
  for (const auto& s : settings) apply_setting(c, s[0], s[1]);
  c.validate();
  return c;
}

// A parameter set holding only `inputs`, for checks on loose tensors.
void add_inputs(ParameterSet& params, const std::vector<std::pair<std::string, Shape>>& inputs,
                RandomStream rng) {
  for (const auto& [name, shape] : inputs) params.add(name, normal_array(shape, 1.0, rng.split(name)));
}

}  // namespace

std::vector<GradcheckLine> run_gradient_suite(const RunConfig& base) {
  const RunConfig cfg = toy_config(base);
  const ModelConfig& mc = cfg.model;
  const std::size_t c = mc.embed_dim, m = mc.indicator_count;
  // Central differences at this step size keep both truncation and rounding
  // error well under the tolerance for the toy shapes.
  const double eps = 3e-5;
  std::vector<GradcheckLine> lines;
  auto record = [&](const std::string& name, const LossBuilder& loss, ParameterSet& params) {
    lines.push_back({name, check_gradients(loss, params, eps).max_rel_error});
  };

  // Trained-looking parameters: the exact initialisation has zero output
  // projections, identical captions and tied candidate scores, where the
  // objective is not smooth.
  Model model = Model::initialize(mc, cfg.train.tau, cfg.train.seed);
  RandomStream jitter = RandomStream(cfg.train.seed).split("gradcheck");
  for (auto& [name, p] : model.parameters()) {
    RandomStream r = jitter.split(name);
    for (double& v : p.value.data()) v += 0.05 * r.normal();
  }
  ParameterSet& mp = model.parameters();

  {
    ParameterSet params;
    add_inputs(params, {{"in.indicators", {m, c}}, {"in.tokens", {5, c}}}, jitter.split("bind"));
    add_binding_parameters(params, "bind", c, ParamGroup::base, jitter.split("bind.w"));
    params.value("bind.wo") = normal_array({c, c}, 0.3, jitter.split("bind.wo"));
    record("binding_attention",
           [&](Tape& t) {
             return probe(t, bind_query_indicators(t.parameter("in.indicators"),
                                                   t.parameter("in.tokens"), "bind", kAllKeys),
                          1);
           },
           params);
  }
  for (Direction d : {Direction::t2v, Direction::v2t}) {
    const FusionNetwork net = model.fusion(d);
    ParameterSet params = mp;
    add_inputs(params, {{"in.focus", {m - 1, c}}, {"in.tokens", {3 * 2, c}}},
               jitter.split(net.prefix));
    const std::vector<std::size_t> counts{2, 2, 2};
    record("fusion_attention_" + std::string(to_string(d)),
           [&](Tape& t) {
             RandomStream g = RandomStream(5).split("gumbel");
             return probe(t,
                          focused_fuse(t.parameter("in.focus"), t.parameter("in.tokens"), counts,
                                       net, g, /*deterministic=*/false),
                          2);
           },
           params);
    record("delta_mlp_" + std::string(to_string(d)),
           [&](Tape& t) { return probe(t, project_deltas(t.parameter("in.focus"), net, 3).deltas, 3); },
           params);
  }
  {
    ParameterSet params;
    add_inputs(params, {{"in.text", {3, c}}, {"in.video", {3, c}}, {"in.scale", {1, 1}}},
               jitter.split("contrastive"));
    for (Direction d : {Direction::t2v, Direction::v2t}) {
      record("contrastive_" + std::string(to_string(d)),
             [&, d](Tape& t) {
               return contrastive_loss(l2_normalize_rows(t.parameter("in.text")),
                                       l2_normalize_rows(t.parameter("in.video")),
                                       exp(t.parameter("in.scale")), d);
             },
             params);
    }
  }
  {
    ParameterSet params;
    add_inputs(params, {{"in.logits", {1, 3}}, {"in.parts", {1, 4}}}, jitter.split("ce"));
    record("focused_ce",
           [](Tape& t) { return focused_ce_loss(t.parameter("in.logits"), 1); }, params);
    record("combined_loss",
           [](Tape& t) {
             Var p = t.parameter("in.parts");
             return combined_loss(pick(p, 0, 0), pick(p, 0, 1), pick(p, 0, 2), pick(p, 0, 3));
           },
           params);
  }
  {
    const PairedDataset data = generate_synthetic_pairs(cfg.data);
    const std::vector<std::size_t> items{0, 2};
    const Batch batch = make_batch(data, items, 0);
    record("dual_stage_objective",
           [&](Tape& t) {
             return batch_objective(t, batch, mc, cfg.train, RandomStream(9)).combined;
           },
           mp);
  }
  return lines;
}

namespace {

int do_train(const Command& cmd, const RunConfig& config, std::ostream& out, const Log& log) {
  ensure_dir(cmd.out_dir);
  const PairedDataset data = training_data(config);
  Model model = load_or_initialize(config);
  log.info("training on " + std::to_string(data.size()) + " pairs for " +
           std::to_string(config.train.epochs) + " epochs");
  const TrainResult result = train_loop(data, model, config.train, [&](std::size_t e, const Model& m) {
    const fs::path path = cmd.out_dir / ("checkpoint_epoch" + std::to_string(e) + ".tbck");
    save_checkpoint(m.parameters(), path);
    log.debug("wrote " + path.string());
  });
  save_checkpoint(model.parameters(), cmd.out_dir / "checkpoint.tbck");
  {
    auto csv = open_out(cmd.out_dir / "loss.csv");
    write_loss_csv(csv, result.steps);
  }
  write_text(cmd.out_dir / "config.cfg", format_config(config));
  out << "epoch,combined,l_t2v,l_v2t,l_focus_t,l_focus_v\n";
  for (std::size_t e = 0; e < result.epochs.size(); ++e) {
    const LossReport& r = result.epochs[e];
    out << e + 1 << ',' << fmt("%.6f", r.combined) << ',' << fmt("%.6f", r.t2v) << ','
        << fmt("%.6f", r.v2t) << ',' << fmt("%.6f", r.focus_t) << ',' << fmt("%.6f", r.focus_v)
        << '\n';
  }
  return 0;
}

int do_eval(const Command& cmd, const RunConfig& config, std::ostream& out, const Log& log) {
  ensure_dir(cmd.out_dir);
  const Model model = load_or_initialize(config);
  const PairedDataset data = evaluation_data(config);
  log.info("evaluating " + std::to_string(data.size()) + " pairs");
  const EncodedCorpus corpus = encode_corpus(model, data);
  save_gallery(video_gallery(corpus), cmd.out_dir / "video_gallery.tbgl");
  save_gallery(text_gallery(corpus), cmd.out_dir / "text_gallery.tbgl");
  std::ostringstream csv;
  write_metrics_header(csv);
  for (Stage stage : {Stage::broad_only, Stage::two_stage}) {
    const Evaluation e = evaluate(model, corpus, stage);
    write_metrics_row(csv, to_string(stage), e.t2v, e.v2t);
  }
  write_text(cmd.out_dir / "metrics.csv", csv.str());
  out << csv.str();
  return 0;
}

int do_query(const Command& cmd, const RunConfig& config, std::ostream& out, const Log& log) {
  ensure_dir(cmd.out_dir);
  const Model model = load_or_initialize(config);
  const PairedDataset data = evaluation_data(config);
  if (config.query_index >= data.size()) {
    throw InputError("query_index " + std::to_string(config.query_index) + " outside dataset of " +
                     std::to_string(data.size()));
  }
  const EncodedCorpus corpus = encode_corpus(model, data);
  const bool t2v = config.query_direction == Direction::t2v;
  const Gallery gallery = t2v ? video_gallery(corpus) : text_gallery(corpus);
  const QueryEncoding query = t2v ? text_queries(corpus)[config.query_index]
                                  : video_queries(corpus)[config.query_index];
  RankOptions options;
  options.k = config.model.top_k;
  options.use_stage1_scores = config.model.use_stage1_scores;
  const FinalScores scores =
      config.model.use_indicators
          ? rank_full(query, gallery, model.fusion(config.query_direction), model.parameters(),
                      options)
          : rank_broad(query.global.data(), gallery);
  log.info(std::string(to_string(config.query_direction)) + " query " +
           std::to_string(config.query_index) + ": true item at rank " +
           std::to_string(scores.rank_of(gallery.index_of(config.query_index))));
  std::ostringstream csv;
  csv << "rank,id,stage1,delta,final\n";
  for (std::size_t r = 0; r < scores.order.size(); ++r) {
    const std::size_t g = scores.order[r];
    csv << r + 1 << ',' << gallery[g].id << ',' << fmt("%.17g", scores.stage1[g]) << ','
        << fmt("%.17g", scores.delta[g]) << ',' << fmt("%.17g", scores.final_score[g]) << '\n';
  }
  write_text(cmd.out_dir / "query.csv", csv.str());
  out << csv.str();
  return 0;
}

int do_gradcheck(const Command& cmd, const RunConfig& config, std::ostream& out, const Log& log) {
  ensure_dir(cmd.out_dir);
  const auto lines = run_gradient_suite(config);
  std::ostringstream report;
  double worst = 0.0;
  for (const auto& l : lines) {
    worst = std::max(worst, l.max_rel_error);
    report << l.name << ' ' << fmt("%.3e", l.max_rel_error) << ' '
           << (l.max_rel_error < kGradcheckTolerance ? "PASS" : "FAIL") << '\n';
  }
  const bool ok = worst < kGradcheckTolerance;
  report << "max_rel_error " << fmt("%.3e", worst) << ' ' << (ok ? "PASS" : "FAIL") << '\n';
  write_text(cmd.out_dir / "gradcheck.txt", report.str());
  out << report.str();
  if (!ok) log.info("gradient check failed");
  return ok ? 0 : 1;
}

int do_ablate(const Command& cmd, const RunConfig& config, std::ostream& out, const Log& log) {
  ensure_dir(cmd.out_dir);
  const auto rows = ablation_rows(cmd, config);
  std::ostringstream csv;
  write_metrics_header(csv, "axis,value");
  out << csv.str();
  for (const auto& row : rows) {
    log.info("ablation " + row.axis + "=" + row.value);
    const PairedDataset train = training_data(row.config);
    Model model = load_or_initialize(row.config);
    train_loop(train, model, row.config.train);
    const EncodedCorpus corpus = encode_corpus(model, evaluation_data(row.config));
    const Evaluation e = evaluate(model, corpus, Stage::two_stage);
    std::ostringstream line;
    write_metrics_row(line, row.axis + "," + row.value, e.t2v, e.v2t);
    csv << line.str();
    out << line.str() << std::flush;
  }
  write_text(cmd.out_dir / "ablation.csv", csv.str());
  return 0;
}

}  // namespace

int execute(const Command& cmd, std::ostream& out, std::ostream& err) {
  const Log log(err);
  const RunConfig config = resolve_config(cmd);
  switch (cmd.verb) {
    case Verb::train: return do_train(cmd, config, out, log);
    case Verb::eval: return do_eval(cmd, config, out, log);
    case Verb::query: return do_query(cmd, config, out, log);
    case Verb::gradcheck: return do_gradcheck(cmd, config, out, log);
    case Verb::ablate: return do_ablate(cmd, config, out, log);
  }
  return 2;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "-h" || a == "--help") {
      out << "usage: tokenbinder {train|eval|query|gradcheck|ablate} [--config PATH]\n"
             "                  [--set key=value[,value...]]... [--out DIR] [--seed N]\n"
             "                  [--deterministic]\n"
             "environment: TOKENBINDER_LOG=quiet|info|debug\n";
      return 0;
    }
  }
  try {
    return execute(parse_args(argc, argv), out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace tokenbinder::cli
