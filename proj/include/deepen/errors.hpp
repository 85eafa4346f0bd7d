#pragma once

#include <stdexcept>
#include <string>

namespace deepen {

// Error hierarchy. Every library failure derives from Error so callers (the
// CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class CheckpointIncompatible : public Error {
 public:
  using Error::Error;
};

// Non-finite values or a blown-up iteration.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NumericalBreakdown : public NumericalError {
 public:
  NumericalBreakdown(const std::string& what, int iteration)
      : NumericalError(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}
  int iteration() const noexcept { return iteration_; }

 private:
  int iteration_;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, int step)
      : NumericalError(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  int step() const noexcept { return step_; }

 private:
  int step_;
};

class StagnationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace deepen
