#pragma once

#include <stdexcept>
#include <string>

#include "onestep/types.hpp"

namespace onestep {

// Caller passed arguments that break a documented precondition.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Non-finite value produced by the dynamics or a user callback.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, Vec x, Vec u)
      : std::runtime_error(what), x_(std::move(x)), u_(std::move(u)) {}
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}

  const Vec& state() const { return x_; }
  const Vec& input() const { return u_; }

 private:
  Vec x_;
  Vec u_;
};

class SynthesisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A run cannot start, e.g. the initial state lies outside {V(0, .) <= 0}.
class PreconditionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Experiment configuration is malformed, incomplete or references missing files.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace onestep
