#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stopgame {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Quadrature, root finding or horizon control failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Grid or dimension mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Operation not available for the given variant (e.g. no mixture for a table).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// A simulated path produced a non-finite state.
class SimulationError : public Error {
 public:
  SimulationError(const std::string& what, double last_valid_time, long cell = -1)
      : Error(what), last_valid_time_(last_valid_time), cell_(cell) {}
  double last_valid_time() const noexcept { return last_valid_time_; }
  long cell() const noexcept { return cell_; }

 private:
  double last_valid_time_;
  long cell_;
};

/// Configuration could not be loaded; carries every issue found.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> issues)
      : Error(join(issues)), issues_(std::move(issues)) {}
  const std::vector<std::string>& issues() const noexcept { return issues_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) {
      if (!out.empty()) out += "; ";
      out += s;
    }
    return out;
  }
  std::vector<std::string> issues_;
};

}  // namespace stopgame
