#pragma once

#include <stdexcept>
#include <string>

namespace bgr {

/// Operand shapes do not chain (dimension mismatch, wrong vector length, ...).
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A value lies outside the domain an operation accepts.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// API misuse that is neither a shape nor a domain problem (e.g. non-scalar loss).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad configuration file, unknown key, or malformed override.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string dims(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace detail
}  // namespace bgr
