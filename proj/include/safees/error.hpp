#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace safees {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `position` is a 0-based byte offset into the source.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at position " + std::to_string(position)), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Evaluation left the real domain of an operator (division by zero, ln of a
/// nonpositive value, ...). `position` locates the offending node in the source.
class DomainError : public Error {
 public:
  DomainError(const std::string& message, std::size_t position)
      : Error(message + " (node at position " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// A state component became NaN or infinite during integration.
class NumericalAbort : public Error {
 public:
  explicit NumericalAbort(double last_valid_time)
      : Error("non-finite state encountered; last valid time " + std::to_string(last_valid_time)),
        last_valid_time_(last_valid_time) {}
  double last_valid_time() const noexcept { return last_valid_time_; }

 private:
  double last_valid_time_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An oracle found nothing to work with, e.g. no feasible samples in a box.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// A numeric probe contradicts a standing assumption on the maps.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace safees
