#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adopt {

enum class ErrorKind {
  InvalidInput,
  InvalidState,
  InvalidScenario,
  NonConvergence,
  FitFailure,
  CalibrationFailure,
  Parse,
  Io,
  Internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when an optimizer exhausts its iteration budget. Carries the best
// iterate so callers can inspect or resume from it.
class NonConvergence : public Error {
 public:
  NonConvergence(std::string stage, int iterations, std::vector<double> best,
                 double grad_norm);
  const std::string& stage() const noexcept { return stage_; }
  int iterations() const noexcept { return iterations_; }
  const std::vector<double>& best() const noexcept { return best_; }
  double grad_norm() const noexcept { return grad_norm_; }

 private:
  std::string stage_;
  int iterations_;
  std::vector<double> best_;
  double grad_norm_;
};

// The calibration target lies outside what the shift bracket can reach.
class CalibrationFailure : public Error {
 public:
  CalibrationFailure(double target, double achieved_low, double achieved_high);
  double target() const noexcept { return target_; }
  double achieved_low() const noexcept { return low_; }
  double achieved_high() const noexcept { return high_; }

 private:
  double target_, low_, high_;
};

class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::size_t column,
             const std::string& detail);
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t line_, column_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace adopt
