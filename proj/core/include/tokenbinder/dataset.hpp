#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "tokenbinder/config.hpp"
#include "tokenbinder/encoders.hpp"

namespace tokenbinder {

/// Aligned caption/clip pairs: texts[i] describes videos[i]. groups[i] is the
/// hard-negative cohort of pair i.
struct PairedDataset {
  std::vector<TextSequence> texts;
  std::vector<VideoClip> videos;
  std::vector<std::uint32_t> groups;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return texts.size(); }
  // InputError when lengths disagree or shapes are inconsistent.
  void validate() const;

  friend bool operator==(const PairedDataset&, const PairedDataset&) = default;
};

/// Cohorts of `group_size` pairs share a coarse latent (caption keywords and
/// the base patch pattern); within a cohort each pair carries a distinct fine
/// latent drawn from a pool shared by all cohorts (one caption word and a
/// pattern stamped on a few patch positions). Latents depend only on
/// spec.seed; spec.rendering selects an independent noise draw of the same
/// latents.
PairedDataset generate_synthetic_pairs(const SyntheticSpec& spec);

}  // namespace tokenbinder
