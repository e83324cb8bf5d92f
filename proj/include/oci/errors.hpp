#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oci {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input data (bad boxes, duplicate names, bad ranges).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Text that does not conform to the augmented-instruction grammar.
/// Carries the byte offset of the offending construct.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t byte_offset)
      : Error(what + " (byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}
  std::size_t byte_offset() const { return byte_offset_; }

 private:
  std::size_t byte_offset_;
};

/// Inconsistent or out-of-range configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value produced by a numeric operation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse (stepping an optimizer with no gradients, etc).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures, always carrying the path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace oci
