#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tokenbinder/dataset.hpp"
#include "tokenbinder/parameters.hpp"
#include "tokenbinder/pipeline.hpp"

// Binary containers. All integers and floats are little-endian; floats are
// IEEE-754 binary64, so every round trip is bit-exact. Decoding failures throw
// FormatError carrying the byte offset of the problem. Every container ends
// with a u64 FNV-1a checksum of the bytes before it.
namespace tokenbinder {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint32_t kGalleryVersion = 1;
inline constexpr std::uint32_t kDatasetVersion = 1;

// "TBCK" version count, then per parameter:
//   name_len u32, name, group u8, rank u32, dims u64×rank, values f64×size
std::vector<std::byte> encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_checkpoint(const std::filesystem::path& path);

// "TBGL" version N C n side(u8), then per entry: id u64, global f64×C,
// locals f64×n·C. Empty galleries are rejected with InputError.
std::vector<std::byte> encode_gallery(const Gallery& gallery);
Gallery decode_gallery(std::span<const std::byte> bytes);
void save_gallery(const Gallery& gallery, const std::filesystem::path& path);
Gallery load_gallery(const std::filesystem::path& path);

// "TBDS" version pairs max_tokens frames patches patch_dim seed, then per pair
// length u32 + max_tokens u32 ids (zero padded), then per pair
// frames·patches·patch_dim f64, then per pair group u32. All clips share one
// shape.
std::vector<std::byte> encode_dataset(const PairedDataset& dataset);
PairedDataset decode_dataset(std::span<const std::byte> bytes);
void save_dataset(const PairedDataset& dataset, const std::filesystem::path& path);
PairedDataset load_dataset(const std::filesystem::path& path);

}  // namespace tokenbinder
