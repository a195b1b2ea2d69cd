#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

namespace adopt {

struct Bounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Bounds unbounded(Eigen::Index n);
  static Bounds box(Eigen::Index n, double cap);
};

struct OptimConfig {
  double grad_tol = 1e-6;   // on the projected gradient 2-norm, times grad_scale
  double grad_scale = 1.0;
  int max_iter = 500;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
  // When > 0, also stop once the objective improves by less than this
  // absolute amount in an iteration (used by generalized-EM inner solves).
  double value_tol = 0.0;
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  Eigen::VectorXd gradient;
  double grad_norm = 0.0;  // scaled projected gradient norm
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;  // objective after each accepted step, starting at x0
};

// Objective to MAXIMIZE. Must fill `grad` (resized by the callee if needed).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// BFGS ascent with projected backtracking (Armijo) line search on a box.
// Coordinates sitting on a bound whose gradient points outward are frozen for
// the iteration; the inverse-Hessian block of the free coordinates sets the
// direction.
OptimResult maximize(const Objective& f, Eigen::VectorXd x0, const Bounds& bounds,
                     const OptimConfig& config = {});

/// Central finite-difference gradient, for tests and diagnostics.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step = 1e-5);

}  // namespace adopt
