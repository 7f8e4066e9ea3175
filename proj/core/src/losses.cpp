#include "tokenbinder/losses.hpp"

#include "tokenbinder/errors.hpp"
#include "tokenbinder/ops.hpp"

namespace tokenbinder {

Var contrastive_loss(Var text_globals, Var video_globals, Var inv_temperature,
                     Direction direction) {
  const std::size_t b = text_globals.rows();
  if (b < 2) throw InputError("contrastive_loss: batch must hold at least 2 pairs");
  if (video_globals.rows() != b || video_globals.cols() != text_globals.cols()) {
    throw DimensionError("contrastive_loss: text " + shape_string(text_globals.value().shape()) +
                         " vs video " + shape_string(video_globals.value().shape()));
  }
  Var logits = mul_scalar(matmul_nt(text_globals, video_globals), inv_temperature);
  if (direction == Direction::v2t) logits = transpose(logits);
  Var log_probs = log_softmax_rows(logits);
  std::vector<Var> diagonal;
  diagonal.reserve(b);
  for (std::size_t i = 0; i < b; ++i) diagonal.push_back(pick(log_probs, i, i));
  return scale(add_n(diagonal), -1.0 / static_cast<double>(b));
}

double contrastive_loss(const DenseArray& text_globals, const DenseArray& video_globals,
                        double tau, Direction direction) {
  if (!(tau > 0.0)) throw ConfigError("contrastive_loss: tau must be positive");
  Tape tape(Tape::Mode::inference);
  return contrastive_loss(tape.constant(text_globals), tape.constant(video_globals),
                          tape.constant(DenseArray::scalar(1.0 / tau)), direction)
      .value()[0];
}

Var focused_ce_loss(Var logits, std::size_t true_position) {
  if (true_position >= logits.value().size()) {
    throw UsageError("focused_ce_loss: true position " + std::to_string(true_position) +
                     " outside " + std::to_string(logits.value().size()) + " logits");
  }
  Var flat = reshape(logits, 1, logits.value().size());
  return scale(pick(log_softmax_rows(flat), 0, true_position), -1.0);
}

double focused_ce_loss(std::span<const double> logits, std::size_t true_position) {
  Tape tape(Tape::Mode::inference);
  return focused_ce_loss(
             tape.constant(DenseArray::vector(std::vector<double>(logits.begin(), logits.end()))),
             true_position)
      .value()[0];
}

double combined_loss(const LossParts& parts) {
  return (parts.t2v + parts.v2t) / 2.0 + (parts.focus_v + parts.focus_t) / 2.0;
}

Var combined_loss(Var t2v, Var v2t, Var focus_v, Var focus_t) {
  return add(scale(add(t2v, v2t), 0.5), scale(add(focus_v, focus_t), 0.5));
}

}  // namespace tokenbinder
