#pragma once

#include <stdexcept>
#include <string>

namespace lasforge {

// Incompatible tensor or parameter shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A NaN/Inf surfaced in a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Unreadable/unwritable files and malformed data files. CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss. CLI exit code 4.
class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::string checkpoint)
      : NumericalError(what), checkpoint_(std::move(checkpoint)) {}

  // Directory holding the last finite parameters; empty when none was written.
  const std::string& checkpoint() const noexcept { return checkpoint_; }

 private:
  std::string checkpoint_;
};

}  // namespace lasforge
