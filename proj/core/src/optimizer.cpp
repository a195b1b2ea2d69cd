#include "adopt/optimizer.hpp"

#include <cmath>
#include <limits>

#include "adopt/error.hpp"

namespace adopt {

Bounds Bounds::unbounded(Eigen::Index n) {
  const double inf = std::numeric_limits<double>::infinity();
  return {Eigen::VectorXd::Constant(n, -inf), Eigen::VectorXd::Constant(n, inf)};
}

Bounds Bounds::box(Eigen::Index n, double cap) {
  return {Eigen::VectorXd::Constant(n, -cap), Eigen::VectorXd::Constant(n, cap)};
}

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Bounds& b) {
  return x.cwiseMax(b.lower).cwiseMin(b.upper);
}

// Mask of coordinates blocked by a bound for an ascent step.
std::vector<bool> active_set(const Eigen::VectorXd& x, const Eigen::VectorXd& g, const Bounds& b) {
  std::vector<bool> active(static_cast<std::size_t>(x.size()), false);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double tol = 1e-12 * std::max(1.0, std::abs(x[i]));
    active[i] = (x[i] <= b.lower[i] + tol && g[i] < 0.0) ||
                (x[i] >= b.upper[i] - tol && g[i] > 0.0);
  }
  return active;
}

double projected_norm(const Eigen::VectorXd& g, const std::vector<bool>& active) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    if (!active[i]) s += g[i] * g[i];
  }
  return std::sqrt(s);
}

}  // namespace

OptimResult maximize(const Objective& f, Eigen::VectorXd x0, const Bounds& bounds,
                     const OptimConfig& config) {
  const Eigen::Index n = x0.size();
  require(bounds.lower.size() == n && bounds.upper.size() == n, ErrorKind::InvalidInput,
          "optimizer bounds dimension mismatch");

  OptimResult r;
  r.x = project(x0, bounds);
  Eigen::VectorXd g(n);
  r.value = f(r.x, g);
  r.evaluations = 1;
  require(std::isfinite(r.value), ErrorKind::InvalidState, "objective is not finite at start");
  r.trace.push_back(r.value);

  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  auto active = active_set(r.x, g, bounds);
  r.grad_norm = projected_norm(g, active) * config.grad_scale;

  if (n == 0) {
    r.gradient = g;
    r.converged = true;
    return r;
  }
  if (const double gmax = g.cwiseAbs().maxCoeff(); gmax > 1.0) h /= gmax;

  while (r.iterations < config.max_iter) {
    if (r.grad_norm < config.grad_tol) {
      r.converged = true;
      break;
    }

    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
    {
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!active[i]) free.push_back(i);
      }
      for (Eigen::Index a : free) {
        double s = 0.0;
        for (Eigen::Index b : free) s += h(a, b) * g[b];
        dir[a] = s;
      }
    }
    if (g.dot(dir) <= 0.0) {
      h.setIdentity();
      dir = g;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (active[i]) dir[i] = 0.0;
      }
    }

    // Projected backtracking.
    double step = 1.0;
    Eigen::VectorXd x_new, g_new(n);
    double f_new = -std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int k = 0; k < config.max_backtracks; ++k) {
      x_new = project(r.x + step * dir, bounds);
      const Eigen::VectorXd s = x_new - r.x;
      if (s.norm() <= 1e-16 * std::max(1.0, r.x.norm())) break;
      f_new = f(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new) && f_new >= r.value + config.armijo * g.dot(s)) {
        accepted = true;
        break;
      }
      step *= config.backtrack;
    }

    if (!accepted) {
      // Retry once along the plain projected gradient before giving up.
      if (!h.isIdentity()) {
        h.setIdentity();
        const double gmax = g.cwiseAbs().maxCoeff();
        if (gmax > 1.0) h /= gmax;
        continue;
      }
      break;
    }

    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = -(g_new - g);  // gradient change of -f
    const double sy = s.dot(y);
    const double improvement = f_new - r.value;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd hy = h * y;
      h += (rho * rho * y.dot(hy) + rho) * (s * s.transpose()) -
           rho * (hy * s.transpose() + s * hy.transpose());
    }

    r.x = x_new;
    g = g_new;
    r.value = f_new;
    ++r.iterations;
    r.trace.push_back(r.value);
    active = active_set(r.x, g, bounds);
    r.grad_norm = projected_norm(g, active) * config.grad_scale;

    if (config.value_tol > 0.0 && improvement < config.value_tol) {
      r.converged = true;
      break;
    }
  }
  if (r.grad_norm < config.grad_tol) r.converged = true;
  r.gradient = g;
  return r;
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = f(xp);
    xp[i] = x[i] - h;
    const double fm = f(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace adopt
