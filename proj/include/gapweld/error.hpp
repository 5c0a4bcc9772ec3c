#pragma once

#include <stdexcept>
#include <string>

namespace gapweld {

// Bad input values, malformed files, or inconsistent arguments. Maps to CLI exit 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Filesystem failures (missing file, unwritable destination). Maps to CLI exit 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gapweld
