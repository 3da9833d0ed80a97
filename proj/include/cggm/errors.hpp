#pragma once

#include <stdexcept>
#include <string>

namespace cggm {

// Invalid user input: malformed files, dimension mismatches, bad options.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: loss of positive definiteness, non-finite objective,
// degenerate data.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cggm
