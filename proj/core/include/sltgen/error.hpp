#pragma once

#include <stdexcept>
#include <string>

namespace sltgen {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes; the message names the offending node or op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration, CLI arguments, or API preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (IDX, checkpoint manifest, raw tensor files).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sltgen
