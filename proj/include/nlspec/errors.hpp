#pragma once

#include <stdexcept>
#include <string>

namespace nlspec {

enum class ErrorKind {
  usage,
  config,
  sizing,
  out_of_range,
  convergence,
  self_adjointness,
  conditioning,
  hypothesis,
  prerequisite,
  io,
};

const char *to_string(ErrorKind kind);

/// Base class for every error raised by the library. The kind drives the CLI
/// exit code and the structured error block of a report.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class UsageError : public Error {
public:
  explicit UsageError(const std::string &what) : Error(ErrorKind::usage, what) {}
};

class ConfigError : public Error {
public:
  explicit ConfigError(const std::string &what) : Error(ErrorKind::config, what) {}
};

class OutOfRangeError : public Error {
public:
  explicit OutOfRangeError(const std::string &what)
      : Error(ErrorKind::out_of_range, what) {}
};

/// A requested construction does not fit the grid. `max_feasible` carries the
/// largest admissible value of the offending parameter (radius, count, n).
class SizingError : public Error {
public:
  SizingError(const std::string &what, double max_feasible)
      : Error(ErrorKind::sizing, what), max_feasible_(max_feasible) {}

  double max_feasible() const noexcept { return max_feasible_; }

private:
  double max_feasible_;
};

class ConvergenceError : public Error {
public:
  explicit ConvergenceError(const std::string &what)
      : Error(ErrorKind::convergence, what) {}
};

class SelfAdjointnessError : public Error {
public:
  explicit SelfAdjointnessError(const std::string &what)
      : Error(ErrorKind::self_adjointness, what) {}
};

class ConditioningError : public Error {
public:
  explicit ConditioningError(const std::string &what)
      : Error(ErrorKind::conditioning, what) {}
};

class HypothesisError : public Error {
public:
  explicit HypothesisError(const std::string &what)
      : Error(ErrorKind::hypothesis, what) {}
};

class PrerequisiteError : public Error {
public:
  explicit PrerequisiteError(const std::string &what)
      : Error(ErrorKind::prerequisite, what) {}
};

class IoError : public Error {
public:
  explicit IoError(const std::string &what) : Error(ErrorKind::io, what) {}
};

} // namespace nlspec
