#pragma once

#include <vector>

#include "tokenbinder/dataset.hpp"
#include "tokenbinder/metrics.hpp"
#include "tokenbinder/model.hpp"
#include "tokenbinder/pipeline.hpp"

namespace tokenbinder {

struct EncodedCorpus {
  std::vector<EncodedText> texts;
  std::vector<EncodedVideo> videos;
};

EncodedCorpus encode_corpus(const Model& model, const PairedDataset& dataset);

// Gallery ids are dataset item indices. Text galleries use each caption's
// final token states as locals, so every caption must have the same length.
Gallery video_gallery(const EncodedCorpus& corpus);
Gallery text_gallery(const EncodedCorpus& corpus);
std::vector<QueryEncoding> text_queries(const EncodedCorpus& corpus);
std::vector<QueryEncoding> video_queries(const EncodedCorpus& corpus);

struct Evaluation {
  MetricsReport t2v;
  MetricsReport v2t;
};

// Both directions for one stage. Uses the model's k and score composition.
// Without query indicators there is no focused stage and both stages rank by
// stage 1 alone.
Evaluation evaluate(const Model& model, const EncodedCorpus& corpus, Stage stage);

}  // namespace tokenbinder
