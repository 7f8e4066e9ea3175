#pragma once

// Little-endian byte buffer helpers shared by the file formats.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokenbinder/errors.hpp"

namespace tokenbinder::detail {

// FNV-1a over the payload; stored as the last 8 bytes of every container.
inline std::uint64_t fnv1a(std::span<const std::byte> data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : data) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void bytes(std::string_view s) {
    for (char c : s) buf_.push_back(static_cast<std::byte>(c));
  }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<std::byte>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  const std::vector<std::byte>& buffer() const noexcept { return buf_; }
  // Appends the checksum and hands over the buffer.
  std::vector<std::byte> take() {
    put(fnv1a(buf_), 8);
    return std::move(buf_);
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFF));
  }
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> data, std::string_view what)
      : data_(data), what_(what) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }

  // Checks the magic, then splits off and verifies the trailing checksum so
  // later reads only see the payload.
  void expect_magic(std::string_view magic) {
    need(magic.size(), "magic");
    for (std::size_t i = 0; i < magic.size(); ++i) {
      if (static_cast<char>(data_[pos_ + i]) != magic[i]) {
        fail("bad magic, not a " + std::string(what_) + " file", pos_ + i);
      }
    }
    pos_ += magic.size();
    need(8, "checksum");
    const std::size_t payload = data_.size() - 8;
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) {
      stored |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[payload + i])) << (8 * i);
    }
    data_ = data_.first(payload);
    if (fnv1a(data_) != stored) fail("checksum mismatch", payload);
  }
  std::uint8_t u8(const char* field) {
    need(1, field);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32(const char* field) { return static_cast<std::uint32_t>(get(4, field)); }
  std::uint64_t u64(const char* field) { return get(8, field); }
  double f64(const char* field) { return std::bit_cast<double>(get(8, field)); }
  void f64s(std::span<double> out, const char* field) {
    need(out.size() * 8, field);
    for (double& v : out) v = std::bit_cast<double>(get(8, field));
  }
  std::string string(std::size_t n, const char* field) {
    need(n, field);
    std::string s(n, '\0');
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<char>(data_[pos_ + i]);
    pos_ += n;
    return s;
  }
  void expect_end() {
    if (pos_ != data_.size()) {
      fail(std::to_string(data_.size() - pos_) + " trailing bytes", pos_);
    }
  }
  [[noreturn]] void fail(const std::string& message, std::uint64_t at) const {
    throw FormatError(std::string(what_) + ": " + message, at);
  }
  // Throws unless `n` more bytes are available.
  void need(std::size_t n, const char* field) const {
    if (n > remaining()) {
      fail(std::string("truncated while reading ") + field, pos_);
    }
  }

 private:
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::byte> data_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace tokenbinder::detail
