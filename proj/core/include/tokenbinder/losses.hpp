#pragma once

#include <cstddef>
#include <span>

#include "tokenbinder/config.hpp"
#include "tokenbinder/dense_array.hpp"
#include "tokenbinder/tape.hpp"

namespace tokenbinder {

// Symmetric InfoNCE half. S = text · videoᵀ · inv_temperature;
// t2v: −mean_i log softmax(S[i,:])[i]; v2t: the same over columns.
Var contrastive_loss(Var text_globals, Var video_globals, Var inv_temperature,
                     Direction direction);
double contrastive_loss(const DenseArray& text_globals, const DenseArray& video_globals,
                        double tau, Direction direction);

// −log softmax(logits)[true_position]
Var focused_ce_loss(Var logits, std::size_t true_position);
double focused_ce_loss(std::span<const double> logits, std::size_t true_position);

struct LossParts {
  double t2v = 0.0;
  double v2t = 0.0;
  double focus_v = 0.0;
  double focus_t = 0.0;
};

// (t2v + v2t)/2 + (focus_v + focus_t)/2
double combined_loss(const LossParts& parts);
Var combined_loss(Var t2v, Var v2t, Var focus_v, Var focus_t);

}  // namespace tokenbinder
