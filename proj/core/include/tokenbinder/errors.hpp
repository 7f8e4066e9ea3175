#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace tokenbinder {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Array shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameter, missing parameter, or malformed config file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Empty or out-of-range input data.
class InputError : public Error {
 public:
  using Error::Error;
};

// Caller misuse (wrong argument kind, index out of range, bad CLI usage).
class UsageError : public Error {
 public:
  using Error::Error;
};

// Loss or activation became NaN/Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Binary file rejected while reading or writing. Carries the byte offset at
// which the problem was detected.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace tokenbinder
