#ifndef MSVAE_ERRORS_HPP_
#define MSVAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace msvae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value, mode, or schema violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation (gamma <= 0,
/// empty sample sets, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong state (backward before forward, sampling
/// an untrained stage).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Training or evaluation produced a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind {
  kBadMagic,
  kBadVersion,
  kTruncated,
  kLengthMismatch,
  kBadField,
  kOverflow,
  kParse,
};

/// Malformed or unrepresentable file contents.
class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : Error(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Persisted artifacts are individually valid but mutually inconsistent
/// (stage dimension chain broken, manifest offsets outside the blob).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace msvae

#endif  // MSVAE_ERRORS_HPP_
