#pragma once

#include <stdexcept>
#include <string>

namespace udr {

/// Extents of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A precondition on values (not shapes) was violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user-facing configuration (schedule bounds, acceleration, flags).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed on-disk container. `offset` is the byte position where parsing failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Checkpoint does not match the model configuration it is loaded into.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training or sampling produced a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace udr
