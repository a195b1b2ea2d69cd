#include "adopt/error.hpp"

namespace adopt {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidState: return "invalid-state";
    case ErrorKind::InvalidScenario: return "invalid-scenario";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::FitFailure: return "fit-failure";
    case ErrorKind::CalibrationFailure: return "calibration-failure";
    case ErrorKind::Parse: return "parse-error";
    case ErrorKind::Io: return "io-error";
    case ErrorKind::Internal: return "internal-error";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

NonConvergence::NonConvergence(std::string stage, int iterations,
                               std::vector<double> best, double grad_norm)
    : Error(ErrorKind::NonConvergence,
            stage + ": no convergence after " + std::to_string(iterations) +
                " iterations (gradient norm " + std::to_string(grad_norm) + ")"),
      stage_(std::move(stage)),
      iterations_(iterations),
      best_(std::move(best)),
      grad_norm_(grad_norm) {}

CalibrationFailure::CalibrationFailure(double target, double achieved_low,
                                       double achieved_high)
    : Error(ErrorKind::CalibrationFailure,
            "calibration target " + std::to_string(target) +
                " unreachable; bracket achieves [" + std::to_string(achieved_low) +
                ", " + std::to_string(achieved_high) + "]"),
      target_(target),
      low_(achieved_low),
      high_(achieved_high) {}

ParseError::ParseError(std::string file, std::size_t line, std::size_t column,
                       const std::string& detail)
    : Error(ErrorKind::Parse, file + ":" + std::to_string(line) + ":" +
                                  std::to_string(column) + ": " + detail),
      file_(std::move(file)),
      line_(line),
      column_(column) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace adopt
