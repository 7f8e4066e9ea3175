#include "tokenbinder/random.hpp"

#include <cmath>
#include <numbers>

namespace tokenbinder {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// SplitMix64 finalizer.
constexpr std::uint64_t mix(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Two rounds keep (key, counter) pairs with small differences apart.
constexpr std::uint64_t hash2(std::uint64_t key, std::uint64_t counter) noexcept {
  return mix(mix(key + kGolden) ^ (counter * kGolden + 0x632BE59BD9B4E019ull));
}

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) noexcept : key_(mix(seed ^ kGolden)) {}

RandomStream RandomStream::split(std::string_view tag) const noexcept {
  return RandomStream(hash2(key_, fnv1a(tag) ^ 0xA5A5A5A5A5A5A5A5ull), 0);
}

RandomStream RandomStream::split(std::uint64_t index) const noexcept {
  return RandomStream(hash2(key_ ^ 0x5851F42D4C957F2Dull, index), 0);
}

std::uint64_t RandomStream::next_u64() noexcept { return hash2(key_, counter_++); }

double RandomStream::uniform() noexcept {
  // 53 random bits mapped to the centre of each of 2^53 cells, so 0 and 1 are
  // never produced.
  const std::uint64_t bits = next_u64() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::gumbel() noexcept { return -std::log(-std::log(uniform())); }

std::uint64_t RandomStream::below(std::uint64_t bound) noexcept {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = bound * (UINT64_MAX / bound);
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

}  // namespace tokenbinder
