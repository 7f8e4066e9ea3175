#include "tokenbinder/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tokenbinder/errors.hpp"
#include "tokenbinder/random.hpp"

namespace tokenbinder {
namespace {

// `count` distinct values from [0, bound), in draw order.
std::vector<std::size_t> sample_distinct(std::size_t bound, std::size_t count, RandomStream rng) {
  std::vector<std::size_t> pool(bound);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(bound - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace

void PairedDataset::validate() const {
  if (texts.size() != videos.size() || texts.size() != groups.size()) {
    throw InputError("dataset: " + std::to_string(texts.size()) + " texts, " +
                     std::to_string(videos.size()) + " videos, " +
                     std::to_string(groups.size()) + " group labels");
  }
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const VideoClip& v = videos[i];
    if (v.frames == 0 || v.features.rows() != v.frames * v.patches) {
      throw InputError("dataset: clip " + std::to_string(i) + " has inconsistent shape");
    }
    if (texts[i].length == 0 || texts[i].length > texts[i].tokens.size()) {
      throw InputError("dataset: caption " + std::to_string(i) + " has invalid length");
    }
  }
}

PairedDataset generate_synthetic_pairs(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t cohorts = spec.cohorts();
  const std::size_t dim = spec.latent_dim;
  const std::size_t coarse_vocab = 2 * dim;
  RandomStream root = RandomStream(spec.seed).split("synthetic");
  RandomStream latents = root.split("latents");

  // Coarse latents. A cohort's keywords name the signs of its latent's
  // `coarse_tokens` strongest dimensions: word 2d is "+d", 2d+1 is "−d".
  std::vector<std::vector<double>> coarse(cohorts, std::vector<double>(dim));
  std::vector<std::vector<std::uint32_t>> keywords(cohorts);
  std::set<std::vector<std::uint32_t>> seen;
  for (std::size_t c = 0; c < cohorts; ++c) {
    RandomStream cs = latents.split("coarse").split(c);
    for (std::uint64_t attempt = 0;; ++attempt) {
      RandomStream draw = cs.split(attempt);
      for (double& v : coarse[c]) v = draw.normal();
      std::vector<std::size_t> dims(dim);
      std::iota(dims.begin(), dims.end(), std::size_t{0});
      std::stable_sort(dims.begin(), dims.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(coarse[c][a]) > std::abs(coarse[c][b]);
      });
      std::vector<std::uint32_t> words;
      for (std::size_t i = 0; i < spec.coarse_tokens; ++i) {
        words.push_back(static_cast<std::uint32_t>(2 * dims[i] + (coarse[c][dims[i]] < 0.0)));
      }
      auto key = words;
      std::sort(key.begin(), key.end());
      if (seen.insert(key).second) {
        keywords[c] = std::move(words);
        break;
      }
      if (attempt > 1000) throw ConfigError("synthetic: cannot draw distinct cohort keyword sets");
    }
  }
  std::vector<std::vector<double>> fine(spec.fine_pool, std::vector<double>(dim));
  for (std::size_t f = 0; f < spec.fine_pool; ++f) {
    RandomStream fs = latents.split("fine").split(f);
    for (double& v : fine[f]) v = fs.normal();
  }

  PairedDataset out;
  out.seed = spec.seed;
  out.texts.reserve(spec.pairs);
  out.videos.reserve(spec.pairs);
  out.groups.reserve(spec.pairs);
  RandomStream render = root.split("render").split(spec.rendering);
  for (std::size_t c = 0; c < cohorts; ++c) {
    const auto members = sample_distinct(spec.fine_pool, spec.group_size,
                                         latents.split("assign").split(c));
    for (std::size_t r = 0; r < spec.group_size; ++r) {
      const std::size_t item = c * spec.group_size + r;
      const std::size_t f = members[r];
      RandomStream rs = render.split(item);

      RandomStream ts = rs.split("text");
      std::vector<std::uint32_t> tokens;
      tokens.reserve(spec.text_length);
      for (std::size_t i = 0; tokens.size() + 1 < spec.text_length; ++i) {
        std::uint32_t word = keywords[c][i % spec.coarse_tokens];
        if (spec.noise > 0.0 && ts.uniform() < spec.noise) {
          word = static_cast<std::uint32_t>(ts.below(coarse_vocab));
        }
        tokens.push_back(word);
      }
      tokens.push_back(static_cast<std::uint32_t>(coarse_vocab + f));
      for (std::size_t i = tokens.size(); i > 1; --i) {
        std::swap(tokens[i - 1], tokens[static_cast<std::size_t>(ts.below(i))]);
      }
      out.texts.push_back(TextSequence::of(std::move(tokens)));

      RandomStream vs = rs.split("video");
      const auto detail = sample_distinct(spec.patches, spec.detail_patches, vs.split("detail"));
      std::vector<char> is_detail(spec.patches, 0);
      for (std::size_t p : detail) is_detail[p] = 1;
      VideoClip clip;
      clip.frames = spec.frames;
      clip.patches = spec.patches;
      clip.features = DenseArray::zeros({spec.frames * spec.patches, dim});
      RandomStream ns = vs.split("noise");
      for (std::size_t t = 0; t < spec.frames; ++t) {
        for (std::size_t p = 0; p < spec.patches; ++p) {
          auto row = clip.features.row(t * spec.patches + p);
          for (std::size_t d = 0; d < dim; ++d) {
            double x = coarse[c][d];
            if (is_detail[p]) x += spec.detail_strength * fine[f][d];
            if (spec.noise > 0.0) x += spec.noise * ns.normal();
            row[d] = x;
          }
        }
      }
      out.videos.push_back(std::move(clip));
      out.groups.push_back(static_cast<std::uint32_t>(c));
    }
  }
  return out;
}

}  // namespace tokenbinder
