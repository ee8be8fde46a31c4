#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace optx {

// Dimension mismatch between tensors/layers.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite numbers are required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input text; carries the byte offset of the failure.
struct ParseError : std::runtime_error {
  ParseError(const std::string& what, std::size_t byte_offset)
      : std::runtime_error(what + " (byte " + std::to_string(byte_offset) + ")"),
        offset(byte_offset) {}
  std::size_t offset;
};

// Well-formed input whose content violates the schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid or unsupported configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace optx
