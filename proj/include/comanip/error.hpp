#pragma once

#include <stdexcept>
#include <string>

namespace comanip {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/graph shape mismatches; message names the offending op and shapes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Bad argument values (domain violations, out-of-range config fields).
struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error(msg) {}
};

// Config files: unknown keys, type mismatches, unparsable input.
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// File formats: magic/version mismatches, truncated or corrupt payloads.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// Numerical failures that abort a run (NaN gradients, sim blow-ups).
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace comanip
