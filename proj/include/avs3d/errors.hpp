// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace avs {

/// Violated precondition on an argument (bad dims, empty vocabulary, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for everything raised while reading or writing files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MagicMismatchError : public FormatError {
 public:
  MagicMismatchError(const std::string& path, const std::string& expected)
      : FormatError("magic mismatch in '" + path + "': expected \"" +
                    expected + "\"") {}
};

class TruncatedPayloadError : public FormatError {
 public:
  TruncatedPayloadError(const std::string& path, std::size_t expected,
                        std::size_t actual)
      : FormatError("truncated payload in '" + path + "': expected " +
                    std::to_string(expected) + " bytes, found " +
                    std::to_string(actual)),
        expected_bytes(expected),
        actual_bytes(actual) {}

  std::size_t expected_bytes;
  std::size_t actual_bytes;
};

class CountOverflowError : public FormatError {
 public:
  CountOverflowError(const std::string& path, std::size_t count)
      : FormatError("count overflow in '" + path + "': " +
                    std::to_string(count) + " exceeds the supported maximum") {
  }
};

class MissingResourceError : public FormatError {
 public:
  explicit MissingResourceError(const std::string& path)
      : FormatError("missing resource: '" + path + "'") {}
};

/// Well-formed bytes, but the content breaks a schema rule.
class SchemaError : public FormatError {
 public:
  explicit SchemaError(const std::string& what)
      : FormatError("schema violation: " + what) {}
};

}  // namespace avs
