#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace srlfi {

/// Operand shapes do not conform for the requested operation.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the mathematical domain of an operation (log of a
/// non-positive value, fractional power of a negative value, ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Training produced a non-finite loss.
class NumericError : public std::runtime_error {
public:
  NumericError(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch_(epoch), batch_(batch) {}

  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

private:
  std::size_t epoch_;
  std::size_t batch_;
};

/// Malformed or corrupted persisted artifact.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Artifact written by an unsupported format version.
class VersionError : public FormatError {
public:
  using FormatError::FormatError;
};

/// Invalid experiment configuration. `field()` is the dotted path of the
/// offending key, e.g. "training.learning_rate".
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

/// Importance weights collapsed onto too few samples.
class WeightDegeneracyError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace srlfi
