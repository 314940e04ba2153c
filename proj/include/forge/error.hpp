#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Bad input: wrong dimensions, out-of-range parameters, malformed files.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// Exact evaluation exceeded the configured mantissa budget.
class ArithmeticOverflow : public std::overflow_error {
 public:
  explicit ArithmeticOverflow(const std::string& what) : std::overflow_error(what) {}
};

// A certificate or compilation step whose soundness precondition fails.
class RefusedError : public std::runtime_error {
 public:
  explicit RefusedError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace detail
}  // namespace forge
