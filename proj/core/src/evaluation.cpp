#include "tokenbinder/evaluation.hpp"

#include <numeric>

#include "tokenbinder/errors.hpp"

namespace tokenbinder {
namespace {

std::vector<std::uint64_t> identity_ids(std::size_t n) {
  std::vector<std::uint64_t> ids(n);
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  return ids;
}

}  // namespace

EncodedCorpus encode_corpus(const Model& model, const PairedDataset& dataset) {
  dataset.validate();
  EncodedCorpus corpus;
  corpus.texts.reserve(dataset.size());
  corpus.videos.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    EncodedText t = model.encode(dataset.texts[i]);
    const std::size_t len = dataset.texts[i].length;
    if (t.locals.rows() != len) {
      DenseArray trimmed = DenseArray::zeros({len, t.locals.cols()});
      std::copy_n(t.locals.data().begin(), trimmed.size(), trimmed.data().begin());
      t.locals = std::move(trimmed);
    }
    corpus.texts.push_back(std::move(t));
    corpus.videos.push_back(model.encode(dataset.videos[i]));
  }
  return corpus;
}

Gallery video_gallery(const EncodedCorpus& corpus) {
  if (corpus.videos.empty()) throw InputError("video_gallery: empty corpus");
  const auto& first = corpus.videos.front();
  Gallery g(GallerySide::video, first.global.size(), first.locals.rows());
  for (std::size_t i = 0; i < corpus.videos.size(); ++i) {
    g.add({i, corpus.videos[i].global, corpus.videos[i].locals});
  }
  return g;
}

Gallery text_gallery(const EncodedCorpus& corpus) {
  if (corpus.texts.empty()) throw InputError("text_gallery: empty corpus");
  const auto& first = corpus.texts.front();
  Gallery g(GallerySide::text, first.global.size(), first.locals.rows());
  for (std::size_t i = 0; i < corpus.texts.size(); ++i) {
    g.add({i, corpus.texts[i].global, corpus.texts[i].locals});
  }
  return g;
}

std::vector<QueryEncoding> text_queries(const EncodedCorpus& corpus) {
  std::vector<QueryEncoding> out;
  out.reserve(corpus.texts.size());
  for (const auto& t : corpus.texts) out.push_back({t.global, t.focus_indicators});
  return out;
}

std::vector<QueryEncoding> video_queries(const EncodedCorpus& corpus) {
  std::vector<QueryEncoding> out;
  out.reserve(corpus.videos.size());
  for (const auto& v : corpus.videos) out.push_back({v.global, v.focus_indicators});
  return out;
}

Evaluation evaluate(const Model& model, const EncodedCorpus& corpus, Stage stage) {
  const ModelConfig& config = model.config();
  const Stage effective = config.use_indicators ? stage : Stage::broad_only;
  RankOptions options;
  options.k = config.top_k;
  options.deterministic = true;
  options.use_stage1_scores = config.use_stage1_scores;
  const auto truth = identity_ids(corpus.texts.size());
  Evaluation out;
  out.t2v = evaluate_direction(text_queries(corpus), truth, video_gallery(corpus),
                               model.fusion(Direction::t2v), model.parameters(), options,
                               effective, Direction::t2v);
  out.v2t = evaluate_direction(video_queries(corpus), truth, text_gallery(corpus),
                               model.fusion(Direction::v2t), model.parameters(), options,
                               effective, Direction::v2t);
  out.t2v.stage = stage;
  out.v2t.stage = stage;
  return out;
}

}  // namespace tokenbinder
