#include "tokenbinder/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tokenbinder/errors.hpp"
#include "tokenbinder/losses.hpp"
#include "tokenbinder/ops.hpp"
#include "tokenbinder/pipeline.hpp"

namespace tokenbinder {
namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, RandomStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
  }
}

// Upper bound on the learnable logit scale, log(100).
const double kMaxLogitScale = std::log(100.0);

struct FocusedTerms {
  Var ce;           // mean focused cross-entropy
  Var calibration;  // mean calibration cross-entropy
};

// One retrieval direction of the focused stage: every query re-ranks its
// in-batch candidates. `scores` is queries × candidates (stage-1).
FocusedTerms focused_direction(Tape& tape, const std::vector<Var>& query_indicators,
                               const std::vector<Var>& gallery_locals, const DenseArray& scores,
                               const FusionNetwork& net, std::size_t k, bool use_stage1,
                               double inv_temperature, RandomStream rng) {
  const std::size_t b = query_indicators.size();
  std::vector<Var> ce_terms;
  std::vector<Var> cal_terms;
  ce_terms.reserve(b);
  cal_terms.reserve(b);
  Var delta_scale = tape.parameter(net.prefix + ".delta_scale");
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = scores.row(i);
    RandomStream query_rng = rng.split(i);
    TrainingCandidates cands = training_candidates(row, i, k);
    shuffle_candidates(cands, query_rng.split("order"));
    std::vector<Var> tokens;
    std::vector<std::size_t> counts;
    std::vector<double> stage1;
    for (std::size_t j : cands.items) {
      tokens.push_back(gallery_locals[j]);
      counts.push_back(gallery_locals[j].rows());
      stage1.push_back(use_stage1 ? row[j] : 0.0);
    }
    Var fused = focused_fuse(query_indicators[i], concat_rows(tokens), counts, net, query_rng,
                             /*deterministic=*/false);
    DeltaVars dv = project_deltas(fused, net, cands.items.size());
    ce_terms.push_back(focused_ce_loss(dv.logits, cands.true_position));

    // Only delta_scale sees this term: stage-1 scores and logits enter as
    // constants.
    Var refined = add(tape.constant(DenseArray::vector(stage1)),
                      mul_scalar(tape.constant(dv.logits.value()), delta_scale));
    cal_terms.push_back(focused_ce_loss(scale(refined, inv_temperature), cands.true_position));
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  return {scale(add_n(ce_terms), inv_b), scale(add_n(cal_terms), inv_b)};
}

bool finite(const LossReport& r) {
  return std::isfinite(r.t2v) && std::isfinite(r.v2t) && std::isfinite(r.focus_t) &&
         std::isfinite(r.focus_v) && std::isfinite(r.combined) && std::isfinite(r.calibration);
}

}  // namespace

Batch make_batch(const PairedDataset& dataset, std::span<const std::size_t> items,
                 std::size_t index) {
  Batch batch;
  batch.index = index;
  batch.texts.reserve(items.size());
  batch.videos.reserve(items.size());
  for (std::size_t i : items) {
    if (i >= dataset.size()) {
      throw InputError("make_batch: item " + std::to_string(i) + " outside dataset of " +
                       std::to_string(dataset.size()));
    }
    batch.texts.push_back(dataset.texts[i]);
    batch.videos.push_back(dataset.videos[i]);
  }
  return batch;
}

TrainingCandidates training_candidates(std::span<const double> scores, std::size_t truth,
                                       std::size_t k) {
  if (truth >= scores.size()) throw InputError("training_candidates: truth outside scores");
  TrainingCandidates out;
  out.items = top_k_indices(scores, k);
  const auto it = std::find(out.items.begin(), out.items.end(), truth);
  if (it == out.items.end()) {
    out.items.back() = truth;
    out.true_position = out.items.size() - 1;
    out.injected = true;
  } else {
    out.true_position = static_cast<std::size_t>(it - out.items.begin());
  }
  return out;
}

ObjectiveVars batch_objective(Tape& tape, const Batch& batch, const ModelConfig& model,
                              const TrainConfig& train, RandomStream rng, LossReport* report) {
  const std::size_t b = batch.size();
  if (b < 2) throw InputError("train_step: batch must hold at least 2 pairs");
  if (batch.videos.size() != b) throw InputError("train_step: unaligned batch");

  std::vector<TextVars> texts;
  std::vector<VideoVars> videos;
  texts.reserve(b);
  videos.reserve(b);
  for (const auto& t : batch.texts) texts.push_back(encode_text(tape, t, model));
  for (const auto& v : batch.videos) videos.push_back(encode_video(tape, v, model));

  std::vector<Var> tg;
  std::vector<Var> vg;
  for (std::size_t i = 0; i < b; ++i) {
    tg.push_back(texts[i].global);
    vg.push_back(videos[i].global);
  }
  Var text_globals = concat_rows(tg);
  Var video_globals = concat_rows(vg);
  Var inv_temperature = exp(tape.parameter(kLogitScaleName));
  Var l_t2v = contrastive_loss(text_globals, video_globals, inv_temperature, Direction::t2v);
  Var l_v2t = contrastive_loss(text_globals, video_globals, inv_temperature, Direction::v2t);

  Var zero = tape.constant(DenseArray::scalar(0.0));
  Var focus_t = zero;
  Var focus_v = zero;
  Var calibration = zero;
  if (model.use_indicators) {
    const std::size_t k = std::min(train.effective_k_train(model.top_k), b);
    DenseArray sim;
    {
      Tape scratch(Tape::Mode::inference);
      sim = matmul_nt(scratch.constant(text_globals.value()),
                      scratch.constant(video_globals.value()))
                .value();
    }
    const double inv_temp_value = inv_temperature.value()[0];

    std::vector<Var> text_ind;
    std::vector<Var> video_ind;
    std::vector<Var> text_locals;
    std::vector<Var> video_locals;
    for (std::size_t i = 0; i < b; ++i) {
      text_ind.push_back(texts[i].focus_indicators);
      video_ind.push_back(videos[i].focus_indicators);
      text_locals.push_back(slice_rows(texts[i].locals, 0, batch.texts[i].length));
      video_locals.push_back(videos[i].locals);
    }
    const FusionNetwork t2v_net = FusionNetwork::for_direction(model, Direction::t2v);
    const FusionNetwork v2t_net = FusionNetwork::for_direction(model, Direction::v2t);
    DenseArray sim_t = DenseArray::zeros({b, b});
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t j = 0; j < b; ++j) sim_t(j, i) = sim(i, j);
    }
    FocusedTerms t = focused_direction(tape, text_ind, video_locals, sim, t2v_net, k,
                                       model.use_stage1_scores, inv_temp_value, rng.split("t2v"));
    FocusedTerms v = focused_direction(tape, video_ind, text_locals, sim_t, v2t_net, k,
                                       model.use_stage1_scores, inv_temp_value, rng.split("v2t"));
    focus_t = t.ce;
    focus_v = v.ce;
    calibration = scale(add(t.calibration, v.calibration), 0.5);
  }
  Var combined = combined_loss(l_t2v, l_v2t, focus_v, focus_t);
  if (report) {
    report->t2v = l_t2v.value()[0];
    report->v2t = l_v2t.value()[0];
    report->focus_t = focus_t.value()[0];
    report->focus_v = focus_v.value()[0];
    report->combined = combined.value()[0];
    report->calibration = calibration.value()[0];
  }
  return {combined, calibration, add(combined, calibration)};
}

bool decays(std::string_view name) {
  const auto leaf = name.substr(name.rfind('.') == std::string_view::npos ? 0 : name.rfind('.') + 1);
  return leaf == "weight" || leaf == "wq" || leaf == "wk" || leaf == "wv" || leaf == "wo";
}

AdamW::AdamW(const TrainConfig& config) : config_(config) {
  config_.validate();
  if (!config_.learnable_tau) config_.frozen.emplace_back(kLogitScaleName);
}

bool AdamW::is_frozen(std::string_view name) const {
  return std::find(config_.frozen.begin(), config_.frozen.end(), name) != config_.frozen.end();
}

void AdamW::step(ParameterSet& params, const GradientMap& grads) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (auto& [name, param] : params) {
    if (is_frozen(name)) continue;
    const auto g = grads.find(name);
    if (g == grads.end()) continue;
    const double lr = param.group == ParamGroup::fusion ? config_.lr_fusion : config_.lr_base;
    const double decay = decays(name) ? config_.weight_decay : 0.0;
    auto [it, inserted] = moments_.try_emplace(name, Moments{DenseArray::zeros(param.value.shape()),
                                                             DenseArray::zeros(param.value.shape())});
    auto m = it->second.m.data();
    auto v = it->second.v.data();
    auto w = param.value.data();
    const auto grad = g->second.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double update = (m[i] / correction1) / (std::sqrt(v[i] / correction2) + config_.adam_eps);
      w[i] -= lr * (update + decay * w[i]);
    }
    if (name == kLogitScaleName) w[0] = std::clamp(w[0], 0.0, kMaxLogitScale);
  }
}

LossReport train_step(const Batch& batch, Model& model, AdamW& optimizer,
                      const TrainConfig& config, RandomStream rng) {
  LossReport report;
  GradientMap grads;
  {
    Tape tape(model.parameters());
    const ObjectiveVars objective =
        batch_objective(tape, batch, model.config(), config, rng, &report);
    if (!finite(report)) {
      char buf[256];
      std::snprintf(buf, sizeof buf,
                    "non-finite loss at batch %zu (t2v %g, v2t %g, focus_t %g, focus_v %g)",
                    batch.index, report.t2v, report.v2t, report.focus_t, report.focus_v);
      throw NumericError(buf);
    }
    tape.backward(objective.total);
    grads = tape.parameter_gradients();
  }
  optimizer.step(model.parameters(), grads);
  return report;
}

void shuffle_candidates(TrainingCandidates& candidates, RandomStream rng) {
  const std::size_t truth = candidates.items.at(candidates.true_position);
  shuffle_in_place(candidates.items, rng);
  candidates.true_position = static_cast<std::size_t>(
      std::find(candidates.items.begin(), candidates.items.end(), truth) - candidates.items.begin());
}

std::vector<std::vector<std::size_t>> epoch_batches(const PairedDataset& dataset,
                                                    const TrainConfig& config, std::size_t epoch) {
  RandomStream rng = RandomStream(config.seed).split("shuffle").split(epoch);
  std::vector<std::size_t> order;
  order.reserve(dataset.size());
  auto shuffle = [&rng](auto& v) { shuffle_in_place(v, rng); };
  std::map<std::uint32_t, std::vector<std::size_t>> cohorts;
  for (std::size_t i = 0; i < dataset.size(); ++i) cohorts[dataset.groups[i]].push_back(i);
  if (config.cohort_chunk > 1) {
    // Shuffle each cohort, cut it into chunks, then shuffle the chunks.
    std::vector<std::vector<std::size_t>> chunks;
    for (auto& [label, members] : cohorts) {
      shuffle(members);
      for (std::size_t s = 0; s < members.size(); s += config.cohort_chunk) {
        const std::size_t e = std::min(members.size(), s + config.cohort_chunk);
        chunks.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(s),
                            members.begin() + static_cast<std::ptrdiff_t>(e));
      }
    }
    shuffle(chunks);
    for (const auto& chunk : chunks) order.insert(order.end(), chunk.begin(), chunk.end());
  } else {
    order.resize(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    if (end - start < 2) break;  // a lone pair has no negatives
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

TrainResult train_loop(const PairedDataset& dataset, Model& model, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  config.validate();
  dataset.validate();
  if (dataset.size() < 2) throw InputError("train_loop: dataset needs at least 2 pairs");
  AdamW optimizer(config);
  const RandomStream step_root = RandomStream(config.seed).split("step");
  TrainResult result;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    LossReport total;
    const auto batches = epoch_batches(dataset, config, epoch);
    for (const auto& items : batches) {
      ++step;
      const Batch batch = make_batch(dataset, items, step);
      const LossReport r = train_step(batch, model, optimizer, config, step_root.split(step));
      result.steps.push_back({epoch, step, r});
      total.t2v += r.t2v;
      total.v2t += r.v2t;
      total.focus_t += r.focus_t;
      total.focus_v += r.focus_v;
      total.combined += r.combined;
      total.calibration += r.calibration;
    }
    const double n = static_cast<double>(std::max<std::size_t>(batches.size(), 1));
    total.t2v /= n;
    total.v2t /= n;
    total.focus_t /= n;
    total.focus_v /= n;
    total.combined /= n;
    total.calibration /= n;
    result.epochs.push_back(total);
    if (on_epoch) on_epoch(epoch, model);
  }
  return result;
}

void write_loss_csv(std::ostream& out, std::span<const StepRecord> steps) {
  out << "epoch,step,l_t2v,l_v2t,l_focus_t,l_focus_v,combined\n";
  char buf[256];
  for (const auto& s : steps) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.epoch, s.step,
                  s.loss.t2v, s.loss.v2t, s.loss.focus_t, s.loss.focus_v, s.loss.combined);
    out << buf;
  }
}

}  // namespace tokenbinder
