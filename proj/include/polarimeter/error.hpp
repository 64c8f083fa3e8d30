#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace polarimeter {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a domain invariant (non-Hermitian matrix, bad setting count, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The measurement records do not constrain all 16 Stokes parameters.
class RankDeficientError : public Error {
 public:
  RankDeficientError(std::string message, std::vector<std::string> directions)
      : Error(std::move(message)), directions_(std::move(directions)) {}

  /// Unconstrained Stokes directions, e.g. "XY" or "0.707*XY - 0.707*YX".
  const std::vector<std::string>& directions() const noexcept { return directions_; }

 private:
  std::vector<std::string> directions_;
};

/// Data too degenerate to produce a state (e.g. every eigenvalue clipped).
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Timing parameters admit no counting time.
class InfeasibleTimingError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file, config document or wire message.
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace polarimeter
