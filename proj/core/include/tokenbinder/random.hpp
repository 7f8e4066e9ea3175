#pragma once

#include <cstdint>
#include <string_view>

namespace tokenbinder {

/// Counter-based, splittable random stream.
///
/// Every draw is a pure function of (key, counter), so a child stream obtained
/// with split() produces the same values no matter when or in which order the
/// parent is consumed. One seed therefore pins an entire run.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed = 0) noexcept;

  // Independent child stream. Children with different tags (or indices) are
  // decorrelated; the parent's counter is not advanced.
  RandomStream split(std::string_view tag) const noexcept;
  RandomStream split(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  // Gumbel(0, 1): -log(-log(u)).
  double gumbel() noexcept;
  // Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  RandomStream(std::uint64_t key, std::uint64_t counter) noexcept
      : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace tokenbinder
