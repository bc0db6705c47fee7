#pragma once

#include <stdexcept>
#include <string>

namespace srtrl {

/// Base class for every recoverable error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch between operands. Never broadcast silently.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class InvalidModeError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration value (keep-rate out of range, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation requested on a decomposition that does not support it.
class UnsupportedDecompositionError : public Error {
 public:
  using Error::Error;
};

/// CP sketching was given independent per-mode draws.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class EnumerationLimitError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized tensor, decomposition or checkpoint.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite or exploding objective.
class DivergedError : public Error {
 public:
  DivergedError(int epoch, double value)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " (objective " + std::to_string(value) + ")"),
        epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace srtrl
