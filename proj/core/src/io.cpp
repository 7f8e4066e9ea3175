#include "tokenbinder/io.hpp"

#include <fstream>
#include <iterator>

#include "binary_io.hpp"
#include "tokenbinder/errors.hpp"

namespace tokenbinder {
namespace detail {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

}  // namespace detail

using detail::ByteReader;
using detail::ByteWriter;

namespace {

// Guards size arithmetic on untrusted header fields.
std::size_t checked_mul(ByteReader& r, std::uint64_t a, std::uint64_t b, std::uint64_t at) {
  if (a != 0 && b > (std::uint64_t{1} << 60) / a) r.fail("implausible size in header", at);
  return static_cast<std::size_t>(a * b);
}

}  // namespace

std::vector<std::byte> encode_checkpoint(const ParameterSet& params) {
  ByteWriter w;
  w.bytes("TBCK");
  w.u32(kCheckpointVersion);
  w.u64(params.size());
  for (const auto& [name, p] : params) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(p.group));
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u64(d);
    w.f64s(p.value.data());
  }
  return w.take();
}

ParameterSet decode_checkpoint(std::span<const std::byte> bytes) {
  ByteReader r(bytes, "checkpoint");
  r.expect_magic("TBCK");
  const auto version_at = r.offset();
  if (const auto v = r.u32("version"); v != kCheckpointVersion) {
    r.fail("unsupported version " + std::to_string(v), version_at);
  }
  const auto count_at = r.offset();
  const std::uint64_t count = r.u64("parameter count");
  if (count > r.remaining()) r.fail("parameter count exceeds file size", count_at);
  ParameterSet params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto record_at = r.offset();
    const std::uint32_t name_len = r.u32("name length");
    std::string name = r.string(name_len, "name");
    const auto group_at = r.offset();
    const std::uint8_t group = r.u8("group");
    if (group > 1) r.fail("unknown parameter group " + std::to_string(group), group_at);
    const auto rank_at = r.offset();
    const std::uint32_t rank = r.u32("rank");
    if (rank == 0 || rank > 8) r.fail("unsupported rank " + std::to_string(rank), rank_at);
    Shape shape;
    std::size_t size = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim_at = r.offset();
      const std::uint64_t dim = r.u64("dimension");
      size = checked_mul(r, size, dim, dim_at);
      shape.push_back(static_cast<std::size_t>(dim));
    }
    r.need(size * 8, "values");
    std::vector<double> values(size);
    r.f64s(values, "values");
    if (params.contains(name)) r.fail("duplicate parameter " + name, record_at);
    params.add(std::move(name), DenseArray(std::move(shape), std::move(values)),
               static_cast<ParamGroup>(group));
  }
  r.expect_end();
  return params;
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(params));
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path));
}

std::vector<std::byte> encode_gallery(const Gallery& gallery) {
  if (gallery.empty()) throw InputError("refusing to save an empty gallery");
  ByteWriter w;
  w.bytes("TBGL");
  w.u32(kGalleryVersion);
  w.u64(gallery.size());
  w.u64(gallery.width());
  w.u64(gallery.local_count());
  w.u8(static_cast<std::uint8_t>(gallery.side()));
  for (const auto& e : gallery.entries()) {
    w.u64(e.id);
    w.f64s(e.global.data());
    w.f64s(e.locals.data());
  }
  return w.take();
}

Gallery decode_gallery(std::span<const std::byte> bytes) {
  ByteReader r(bytes, "gallery");
  r.expect_magic("TBGL");
  const auto version_at = r.offset();
  if (const auto v = r.u32("version"); v != kGalleryVersion) {
    r.fail("unsupported version " + std::to_string(v), version_at);
  }
  const auto n_at = r.offset();
  const std::uint64_t n = r.u64("entry count");
  const auto c_at = r.offset();
  const std::uint64_t c = r.u64("width");
  const auto locals_at = r.offset();
  const std::uint64_t locals = r.u64("local count");
  const auto side_at = r.offset();
  const std::uint8_t side = r.u8("side");
  if (n == 0) r.fail("empty gallery", n_at);
  if (c == 0) r.fail("zero width", c_at);
  if (locals == 0) r.fail("zero local count", locals_at);
  if (side > 1) r.fail("unknown side tag " + std::to_string(side), side_at);
  const std::size_t local_values = checked_mul(r, locals, c, locals_at);
  const std::size_t record = checked_mul(r, 1 + c + local_values, 8, c_at);
  const std::size_t body = checked_mul(r, n, record, n_at);
  if (body != r.remaining()) {
    r.fail("header promises " + std::to_string(body) + " bytes of entries, file has " +
               std::to_string(r.remaining()),
           r.offset());
  }
  Gallery g(static_cast<GallerySide>(side), static_cast<std::size_t>(c),
            static_cast<std::size_t>(locals));
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto entry_at = r.offset();
    GalleryEntry e;
    e.id = r.u64("id");
    e.global = DenseArray::zeros({static_cast<std::size_t>(c)});
    r.f64s(e.global.data(), "global");
    e.locals = DenseArray::zeros({static_cast<std::size_t>(locals), static_cast<std::size_t>(c)});
    r.f64s(e.locals.data(), "locals");
    if (g.contains(e.id)) r.fail("duplicate id " + std::to_string(e.id), entry_at);
    g.add(std::move(e));
  }
  r.expect_end();
  return g;
}

void save_gallery(const Gallery& gallery, const std::filesystem::path& path) {
  detail::write_file(path, encode_gallery(gallery));
}

Gallery load_gallery(const std::filesystem::path& path) {
  return decode_gallery(detail::read_file(path));
}

std::vector<std::byte> encode_dataset(const PairedDataset& dataset) {
  dataset.validate();
  if (dataset.size() == 0) throw InputError("refusing to save an empty dataset");
  std::size_t max_tokens = 0;
  for (const auto& t : dataset.texts) max_tokens = std::max(max_tokens, t.length);
  const VideoClip& first = dataset.videos.front();
  for (const auto& v : dataset.videos) {
    if (v.frames != first.frames || v.patches != first.patches ||
        v.features.cols() != first.features.cols()) {
      throw InputError("dataset files need every clip to share one shape");
    }
  }
  ByteWriter w;
  w.bytes("TBDS");
  w.u32(kDatasetVersion);
  w.u64(dataset.size());
  w.u64(max_tokens);
  w.u64(first.frames);
  w.u64(first.patches);
  w.u64(first.features.cols());
  w.u64(dataset.seed);
  for (const auto& t : dataset.texts) {
    w.u32(static_cast<std::uint32_t>(t.length));
    for (std::size_t i = 0; i < max_tokens; ++i) w.u32(i < t.length ? t.tokens[i] : 0);
  }
  for (const auto& v : dataset.videos) w.f64s(v.features.data());
  for (std::uint32_t g : dataset.groups) w.u32(g);
  return w.take();
}

PairedDataset decode_dataset(std::span<const std::byte> bytes) {
  ByteReader r(bytes, "dataset");
  r.expect_magic("TBDS");
  const auto version_at = r.offset();
  if (const auto v = r.u32("version"); v != kDatasetVersion) {
    r.fail("unsupported version " + std::to_string(v), version_at);
  }
  const auto pairs_at = r.offset();
  const std::uint64_t pairs = r.u64("pair count");
  const auto tokens_at = r.offset();
  const std::uint64_t max_tokens = r.u64("max tokens");
  const auto frames_at = r.offset();
  const std::uint64_t frames = r.u64("frames");
  const auto patches_at = r.offset();
  const std::uint64_t patches = r.u64("patches");
  const auto dim_at = r.offset();
  const std::uint64_t dim = r.u64("patch width");
  PairedDataset out;
  out.seed = r.u64("seed");
  if (pairs == 0) r.fail("no pairs", pairs_at);
  if (max_tokens == 0) r.fail("zero token width", tokens_at);
  if (frames == 0) r.fail("zero frames", frames_at);
  if (patches == 0) r.fail("zero patches", patches_at);
  if (dim == 0) r.fail("zero patch width", dim_at);
  const std::size_t text_bytes = checked_mul(r, 4, 1 + max_tokens, tokens_at);
  const std::size_t clip_values = checked_mul(r, checked_mul(r, frames, patches, patches_at), dim, dim_at);
  const std::size_t per_pair = text_bytes + checked_mul(r, clip_values, 8, dim_at) + 4;
  if (checked_mul(r, pairs, per_pair, pairs_at) != r.remaining()) {
    r.fail("header does not match file size", pairs_at);
  }
  out.texts.reserve(pairs);
  for (std::uint64_t i = 0; i < pairs; ++i) {
    const auto len_at = r.offset();
    const std::uint32_t len = r.u32("text length");
    if (len == 0 || len > max_tokens) r.fail("invalid text length", len_at);
    TextSequence t;
    for (std::uint64_t j = 0; j < max_tokens; ++j) {
      const std::uint32_t id = r.u32("token");
      if (j < len) t.tokens.push_back(id);
    }
    t.length = len;
    out.texts.push_back(std::move(t));
  }
  out.videos.reserve(pairs);
  for (std::uint64_t i = 0; i < pairs; ++i) {
    VideoClip v;
    v.frames = frames;
    v.patches = patches;
    v.features = DenseArray::zeros({static_cast<std::size_t>(frames * patches), static_cast<std::size_t>(dim)});
    r.f64s(v.features.data(), "patch features");
    out.videos.push_back(std::move(v));
  }
  for (std::uint64_t i = 0; i < pairs; ++i) out.groups.push_back(r.u32("group"));
  r.expect_end();
  return out;
}

void save_dataset(const PairedDataset& dataset, const std::filesystem::path& path) {
  detail::write_file(path, encode_dataset(dataset));
}

PairedDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path));
}

}  // namespace tokenbinder
