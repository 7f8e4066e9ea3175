#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dataset.hpp"
#include "tokenbinder/model.hpp"
#include "tokenbinder/random.hpp"
#include "tokenbinder/tape.hpp"

namespace tokenbinder {

// Pair i is (texts[i], videos[i]).
struct Batch {
  std::vector<TextSequence> texts;
  std::vector<VideoClip> videos;
  std::size_t index = 0;  // position in the run, for diagnostics

  std::size_t size() const noexcept { return texts.size(); }
};

Batch make_batch(const PairedDataset& dataset, std::span<const std::size_t> items,
                 std::size_t index = 0);

struct LossReport {
  double t2v = 0.0;
  double v2t = 0.0;
  double focus_t = 0.0;
  double focus_v = 0.0;
  double combined = 0.0;
  // Delta-scale calibration term, optimised alongside but not part of `combined`.
  double calibration = 0.0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

/// In-batch focused candidates for one query: the k best stage-1 entries,
/// with the true item written over the last slot when it missed the cut.
struct TrainingCandidates {
  std::vector<std::size_t> items;
  std::size_t true_position = 0;
  bool injected = false;
};
TrainingCandidates training_candidates(std::span<const double> scores, std::size_t truth,
                                       std::size_t k);
// Randomises slot order so the fusion cannot learn a prior over stage-1 rank.
void shuffle_candidates(TrainingCandidates& candidates, RandomStream rng);

struct ObjectiveVars {
  Var combined;     // dual-stage loss, fully differentiable
  Var calibration;  // depends on parameters only through the delta scales
  Var total;        // combined + calibration, what the optimiser minimises
};

/// Records the training objective for one batch on `tape`. Gumbel noise in the
/// fusion attention is drawn from `rng`. The calibration term treats stage-1
/// scores and fusion logits as constants, so finite differences of `total`
/// do not match its tape gradient; check `combined` instead.
ObjectiveVars batch_objective(Tape& tape, const Batch& batch, const ModelConfig& model,
                              const TrainConfig& train, RandomStream rng,
                              LossReport* report = nullptr);

/// Adam with decoupled weight decay and one learning rate per parameter group.
/// Decay applies to weight matrices only. Frozen names are never touched.
class AdamW {
 public:
  explicit AdamW(const TrainConfig& config);

  void step(ParameterSet& params, const GradientMap& grads);
  std::uint64_t steps() const noexcept { return steps_; }
  bool is_frozen(std::string_view name) const;

 private:
  struct Moments {
    DenseArray m;
    DenseArray v;
  };
  TrainConfig config_;
  std::uint64_t steps_ = 0;
  std::map<std::string, Moments, std::less<>> moments_;
};

bool decays(std::string_view parameter_name);

// One optimisation step. NumericError naming batch.index on a non-finite loss.
LossReport train_step(const Batch& batch, Model& model, AdamW& optimizer,
                      const TrainConfig& config, RandomStream rng);

struct StepRecord {
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // 1-based, counted over the whole run
  LossReport loss;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::vector<LossReport> epochs;  // per-epoch means
};

// Batches for one epoch, in order. Every item appears once; a trailing batch
// of a single pair is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(const PairedDataset& dataset,
                                                    const TrainConfig& config, std::size_t epoch);

using EpochCallback = std::function<void(std::size_t epoch, const Model& model)>;

TrainResult train_loop(const PairedDataset& dataset, Model& model, const TrainConfig& config,
                       const EpochCallback& on_epoch = {});

// epoch,step,l_t2v,l_v2t,l_focus_t,l_focus_v,combined
void write_loss_csv(std::ostream& out, std::span<const StepRecord> steps);

}  // namespace tokenbinder
