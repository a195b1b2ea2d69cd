#include <algorithm>
#include <cmath>
#include <random>

#include "adopt/lccm.hpp"
#include "adopt/numeric.hpp"
#include "panel_kernels.hpp"

namespace adopt {

namespace {

using detail::kCoefOffset;
using detail::kFeatureCount;

// Weighted binary-logit objective of one class given fixed cell masses.
double class_q(int s, const Eigen::VectorXd& coef, const AdoptionPanel& panel,
               const detail::CellMass& mass, std::size_t cells, Eigen::VectorXd& grad) {
  const int w = panel.window();
  const int nf = kFeatureCount[s];
  grad.setZero(nf);
  std::array<double, 6> x{};
  double q = 0.0;
  for (std::size_t c = 0; c < cells; ++c) {
    for (int t = 1; t <= w; ++t) {
      const std::size_t i = (static_cast<std::size_t>(s) * cells + c) * static_cast<std::size_t>(w) +
                            static_cast<std::size_t>(t - 1);
      const double a = mass.at_risk[i];
      if (a == 0.0) continue;
      const double b = mass.adopted[i];
      detail::class_features(s, panel.zone_month(c / 2, t), c % 2 == 1, panel.social_regressor(t), x.data());
      double v = 0.0;
      for (int f = 0; f < nf; ++f) v += coef[f] * x[f];
      q += b * log_sigmoid(v) + (a - b) * log_sigmoid(-v);
      const double resid = b - a * sigmoid(v);
      for (int f = 0; f < nf; ++f) grad[f] += resid * x[f];
    }
  }
  return q;
}

// sum_n sum_s omega_ns log P(s | z_n; tau), with gradient and (optionally) Hessian.
double membership_q(const Eigen::VectorXd& tau, const AdoptionPanel& panel, const Eigen::MatrixXd& omega,
                    Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  if (grad) grad->setZero(6);
  if (hess) hess->setZero(6, 6);
  double q = 0.0;
  const auto& rows = panel.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto n = static_cast<Eigen::Index>(i);
    const double male = r.male ? 1.0 : 0.0;
    std::array<double, 3> v = {0.0, tau[0] + tau[1] * r.income + tau[2] * male,
                               tau[3] + tau[4] * r.income + tau[5] * male};
    const double lse = logsumexp(v);
    const double total = omega(n, 0) + omega(n, 1) + omega(n, 2);
    const double z[3] = {1.0, r.income, male};
    double p[3];
    for (int s = 0; s < kClassCount; ++s) {
      const double lp = v[s] - lse;
      q += omega(n, s) * lp;
      p[s] = std::exp(lp);
    }
    if (grad) {
      for (int s = 1; s < kClassCount; ++s) {
        const double resid = omega(n, s) - total * p[s];
        for (int k = 0; k < 3; ++k) (*grad)[(s - 1) * 3 + k] += resid * z[k];
      }
    }
    if (hess) {
      for (int s = 1; s < kClassCount; ++s) {
        for (int u = 1; u < kClassCount; ++u) {
          const double c = total * ((s == u ? p[s] : 0.0) - p[s] * p[u]);
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) (*hess)((s - 1) * 3 + k, (u - 1) * 3 + l) -= c * z[k] * z[l];
        }
      }
    }
  }
  return q;
}

// Damped Newton ascent on the concave membership objective, kept in the box.
Eigen::VectorXd membership_step(Eigen::VectorXd tau, const AdoptionPanel& panel, const Eigen::MatrixXd& omega,
                                const Bounds& box, int max_iter, double grad_scale) {
  Eigen::VectorXd g;
  Eigen::MatrixXd h;
  double q = membership_q(tau, panel, omega, &g, &h);
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() * grad_scale < 1e-12) break;
    Eigen::VectorXd dir = (-h).ldlt().solve(g);
    if (!dir.allFinite() || dir.dot(g) <= 0.0) dir = g * (1.0 / std::max(1.0, g.cwiseAbs().maxCoeff()));
    double step = 1.0;
    bool moved = false;
    for (int k = 0; k < 40; ++k, step *= 0.5) {
      const Eigen::VectorXd cand = (tau + step * dir).cwiseMax(box.lower).cwiseMin(box.upper);
      const double qc = membership_q(cand, panel, omega, nullptr, nullptr);
      if (qc >= q) {
        moved = qc > q;
        tau = cand;
        break;
      }
    }
    if (!moved) break;
    q = membership_q(tau, panel, omega, &g, &h);
  }
  return tau;
}

struct StartResult {
  Eigen::VectorXd theta;
  std::vector<double> trajectory;
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

void check_monotone(std::vector<double>& traj, double value, const EmConfig& cfg,
                    std::vector<std::string>& warnings) {
  if (!traj.empty() && value < traj.back() - cfg.monotone_slack) {
    const std::string msg = "EM log-likelihood decreased from " + std::to_string(traj.back()) +
                            " to " + std::to_string(value);
    if (!cfg.tempered_posterior) fail(ErrorKind::Internal, msg);
    warnings.push_back(msg + " (tempered posterior)");
  }
  traj.push_back(value);
}

// A start is either a parameter vector or initial class responsibilities
// (followed by one M-step from `theta`).
StartResult run_start(const AdoptionPanel& panel, Eigen::VectorXd theta, const Eigen::MatrixXd* h0,
                      const EmConfig& cfg) {
  StartResult out;
  const Bounds bounds = adoption_bounds(cfg.coefficient_cap);
  const std::size_t cells = panel.zone_count() * 2;
  const auto& rows = panel.rows();
  const auto n = static_cast<Eigen::Index>(rows.size());

  OptimConfig inner;
  inner.max_iter = cfg.inner_max_iter;
  inner.grad_tol = 1e-10;
  inner.grad_scale = panel.total_weight() > 0.0 ? 1.0 / panel.total_weight() : 1.0;

  theta = theta.cwiseMax(bounds.lower).cwiseMin(bounds.upper);
  auto params = AdoptionParams::from_vector(theta, 0.0);

  auto m_step = [&](const Eigen::MatrixXd& h, int inner_iters) {
    inner.max_iter = inner_iters;
    Eigen::MatrixXd omega(n, kClassCount);
    for (Eigen::Index i = 0; i < n; ++i) omega.row(i) = rows[static_cast<std::size_t>(i)].weight * h.row(i);

    Eigen::VectorXd next = theta;
    {
      Bounds b{bounds.lower.head(6), bounds.upper.head(6)};
      next.head(6) = membership_step(theta.head(6), panel, omega, b, inner_iters, inner.grad_scale);
    }
    const auto mass = detail::accumulate_mass(panel, omega, cells);
    for (int s = 0; s < 2; ++s) {
      const Eigen::Index off = kCoefOffset[s], nf = kFeatureCount[s];
      Objective f = [&, s](const Eigen::VectorXd& coef, Eigen::VectorXd& g) {
        return class_q(s, coef, panel, mass, cells, g);
      };
      Bounds b{bounds.lower.segment(off, nf), bounds.upper.segment(off, nf)};
      next.segment(off, nf) = maximize(f, theta.segment(off, nf), b, inner).x;
    }
    {
      // Constant-only class: closed-form weighted logit, clamped to its box.
      double a = 0.0, b = 0.0;
      for (std::size_t c = 0; c < cells; ++c) {
        for (int t = 1; t <= panel.window(); ++t) {
          const std::size_t i = (2 * cells + c) * static_cast<std::size_t>(panel.window()) +
                                static_cast<std::size_t>(t - 1);
          a += mass.at_risk[i];
          b += mass.adopted[i];
        }
      }
      double lambda = kNonAdopterAscMin;
      if (b > 0.0 && a > b) lambda = std::log(b / (a - b));
      next[param_index::kNonAdopter] = std::clamp(lambda, kNonAdopterAscMin, kNonAdopterAscMax);
    }
    theta = next;
    params = AdoptionParams::from_vector(theta, 0.0);
    return weighted_loglik(params, panel);
  };
  auto em_step = [&]() { return m_step(posterior(params, panel, cfg.tempered_posterior), cfg.inner_max_iter); };

  double ll = h0 ? m_step(*h0, std::max(cfg.inner_max_iter, 200)) : weighted_loglik(params, panel);
  check_monotone(out.trajectory, ll, cfg, out.warnings);

  bool switch_to_polish = false;
  while (out.iterations < cfg.max_iter) {
    const double next = em_step();
    ++out.iterations;
    check_monotone(out.trajectory, next, cfg, out.warnings);
    const double gain = next - ll;
    ll = next;
    if (gain < cfg.tol) {
      out.converged = true;
      break;
    }
    if (cfg.polish && gain < cfg.polish_switch_tol) {
      switch_to_polish = true;
      break;
    }
  }

  if (switch_to_polish) {
    Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
      return weighted_loglik(AdoptionParams::from_vector(x, 0.0), panel, g);
    };
    OptimConfig pc;
    pc.max_iter = cfg.polish_max_iter;
    pc.grad_tol = cfg.polish_grad_tol;
    pc.grad_scale = inner.grad_scale;
    const auto opt = maximize(f, theta, bounds, pc);
    for (std::size_t k = 1; k < opt.trace.size(); ++k) {
      check_monotone(out.trajectory, opt.trace[k], cfg, out.warnings);
    }
    out.iterations += opt.iterations;
    theta = opt.x;
    params = AdoptionParams::from_vector(theta, 0.0);
    ll = opt.value;
    out.converged = opt.converged;
    // Confirm with EM steps at the polished point.
    for (int k = 0; k < 20 && out.iterations < cfg.max_iter + cfg.polish_max_iter; ++k) {
      const double next = em_step();
      ++out.iterations;
      check_monotone(out.trajectory, next, cfg, out.warnings);
      const double gain = next - ll;
      ll = next;
      if (gain < cfg.tol) {
        out.converged = true;
        break;
      }
    }
  }
  out.theta = theta;
  return out;
}

Eigen::VectorXd initial_theta(const AdoptionPanel& panel) {
  double a = 0.0, b = 0.0;
  for (const auto& r : panel.rows()) {
    a += r.weight * r.exit_month;
    if (r.adopted) b += r.weight;
  }
  double base = -5.0;
  if (a > 0.0 && b > 0.0 && a > b) base = std::log(b / (a - b));
  base = std::clamp(base, -20.0, -0.5);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(AdoptionParams::kSize);
  theta[param_index::kInnovatorAsc] = base + 1.0;
  theta[param_index::kImitatorAsc] = base - 1.0;
  theta[param_index::kNonAdopter] = std::clamp(base - 6.0, kNonAdopterAscMin, kNonAdopterAscMax);
  return theta;
}

// Early adopters lean innovator, late adopters imitator, never-adopters non-adopter.
Eigen::MatrixXd timing_responsibilities(const AdoptionPanel& panel, double split_quantile, double purity) {
  std::vector<int> months;
  for (const auto& r : panel.rows()) {
    if (r.adopted) months.push_back(r.exit_month);
  }
  std::sort(months.begin(), months.end());
  const int split = months.empty()
                        ? 0
                        : months[std::min(months.size() - 1,
                                          static_cast<std::size_t>(split_quantile * static_cast<double>(months.size())))];
  Eigen::MatrixXd h(static_cast<Eigen::Index>(panel.size()), kClassCount);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    const auto& r = panel.rows()[i];
    const auto n = static_cast<Eigen::Index>(i);
    if (!r.adopted) {
      h.row(n) << 0.05, 0.15, 0.8;
    } else if (r.exit_month <= split) {
      h.row(n) << purity, 1.0 - purity, 0.0;
    } else {
      h.row(n) << 1.0 - purity, purity, 0.0;
    }
  }
  return h;
}

}  // namespace

Eigen::MatrixXd opg_covariance(const AdoptionParams& params, const AdoptionPanel& panel,
                               const std::vector<bool>& free) {
  const Eigen::MatrixXd scores = person_scores(params, panel);
  const Eigen::Index k = AdoptionParams::kSize;
  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
  const auto& rows = panel.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto g = scores.row(static_cast<Eigen::Index>(i));
    info.noalias() += rows[i].weight * (g.transpose() * g);
  }
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (free[static_cast<std::size_t>(j)] && info(j, j) > 1e-10 * std::max(1e-300, info.diagonal().maxCoeff()))
      idx.push_back(j);
  }
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = info(idx[a], idx[b]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub);
  Eigen::VectorXd inv = eig.eigenvalues();
  const double top = m ? inv.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < m; ++i) inv[i] = inv[i] > 1e-12 * std::max(1.0, top) ? 1.0 / inv[i] : 0.0;
  const Eigen::MatrixXd sub_cov = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) cov(idx[a], idx[b]) = sub_cov(a, b);
  return cov;
}

EmResult em_estimate(const AdoptionPanel& panel, const EmConfig& config,
                     const std::optional<AdoptionParams>& init) {
  require(panel.size() > 0, ErrorKind::InvalidInput, "EM needs at least one person");
  require(config.restarts >= 1, ErrorKind::InvalidInput, "EM needs at least one start");
  const Eigen::VectorXd base = init ? init->to_vector() : initial_theta(panel);

  EmResult best;
  bool have_best = false, best_degenerate = true;
  for (int r = 0; r < config.restarts; ++r) {
    // Start 0: the supplied parameters, else timing responsibilities. Start 1:
    // the other of the two. Later starts jitter one of them.
    Eigen::VectorXd start = base;
    std::optional<Eigen::MatrixXd> h0;
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    const bool from_params = (r % 2 == 0) == init.has_value();
    if (!from_params) {
      double q = 0.5, purity = 0.8;
      if (r > 1) {
        q = std::uniform_real_distribution<double>(0.3, 0.7)(rng);
        purity = std::uniform_real_distribution<double>(0.6, 0.9)(rng);
      }
      h0 = timing_responsibilities(panel, q, purity);
      if (init) start = initial_theta(panel);
    } else if (r > 1) {
      std::normal_distribution<double> jitter(0.0, config.init_jitter);
      for (Eigen::Index j = 0; j < param_index::kNonAdopter; ++j) start[j] += jitter(rng);
    }
    StartResult sr = run_start(panel, start, h0 ? &*h0 : nullptr, config);
    const auto params = AdoptionParams::from_vector(sr.theta, 0.0);
    const double ll = sr.trajectory.back();

    const Eigen::MatrixXd post = posterior(params, panel);
    ClassProbs mass{};
    for (std::size_t i = 0; i < panel.size(); ++i) {
      for (int s = 0; s < kClassCount; ++s) mass[s] += panel.rows()[i].weight * post(static_cast<Eigen::Index>(i), s);
    }
    bool degenerate = false;
    for (int s = 0; s < kClassCount; ++s) {
      if (mass[s] / panel.total_weight() < config.min_class_mass) degenerate = true;
    }

    EmResult candidate;
    candidate.warnings = std::move(sr.warnings);
    if (degenerate) {
      candidate.warnings.push_back("start " + std::to_string(r) +
                                   ": degenerate class (posterior mass below minimum); restarting");
    }
    if (!sr.converged) {
      candidate.warnings.push_back("start " + std::to_string(r) + ": stopped at iteration limit");
    }
    best.restart_logliks.push_back(ll);
    const bool better = !have_best || (best_degenerate && !degenerate) ||
                        (degenerate == best_degenerate && ll > best.loglik);
    std::vector<std::string> carried = best.warnings;
    carried.insert(carried.end(), candidate.warnings.begin(), candidate.warnings.end());
    if (better) {
      auto logliks = std::move(best.restart_logliks);
      best = EmResult{};
      best.restart_logliks = std::move(logliks);
      best.params = AdoptionParams::from_vector(sr.theta, 0.0);
      best.posterior = post;
      best.trajectory = std::move(sr.trajectory);
      best.loglik = ll;
      best.iterations = sr.iterations;
      best.converged = sr.converged;
      best.degenerate = degenerate;
      best.best_restart = r;
      have_best = true;
      best_degenerate = degenerate;
    }
    best.warnings = std::move(carried);
  }

  best.params.phi = init ? init->phi : AdoptionParams{}.phi;
  const Bounds bounds = adoption_bounds(config.coefficient_cap);
  const Eigen::VectorXd theta = best.params.to_vector();
  best.free.assign(AdoptionParams::kSize, true);
  for (Eigen::Index j = 0; j < AdoptionParams::kSize; ++j) {
    best.free[static_cast<std::size_t>(j)] = theta[j] > bounds.lower[j] + 1e-6 && theta[j] < bounds.upper[j] - 1e-6;
  }
  best.covariance = opg_covariance(best.params, panel, best.free);
  for (Eigen::Index j = 0; j < AdoptionParams::kSize; ++j) {
    auto f = best.free[static_cast<std::size_t>(j)];
    if (f && !(best.covariance(j, j) > 0.0)) {
      best.free[static_cast<std::size_t>(j)] = false;
      best.warnings.push_back(std::string(AdoptionParams::names()[static_cast<std::size_t>(j)]) +
                              ": flat likelihood, no standard error");
    }
  }
  best.std_errors = best.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();

  const Eigen::MatrixXd prior = membership_matrix(best.params, panel);
  best.class_shares = {0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < panel.size(); ++i) {
    for (int s = 0; s < kClassCount; ++s) {
      best.class_shares[s] += panel.rows()[i].weight * prior(static_cast<Eigen::Index>(i), s) / panel.total_weight();
    }
  }
  best.fit = fit_stats(best.loglik, static_cast<int>(AdoptionParams::kSize), panel.observation_count(),
                       null_loglik(panel));
  if (best.degenerate) best.warnings.push_back("every start ended with a degenerate class");
  return best;
}

PhiSearchResult phi_grid_search(std::span<const Person> persons, const NetworkTimeline& network,
                                const DcModel& dc, const SamplingWeights& weights,
                                std::span<const double> grid, int window_end,
                                const EmConfig& config) {
  require(!grid.empty(), ErrorKind::InvalidInput, "phi grid must not be empty");
  for (double phi : grid) {
    require(phi >= 0.0 && std::isfinite(phi), ErrorKind::InvalidInput, "phi grid values must be >= 0");
  }
  const auto y = cumulative_adopters(persons, window_end);
  PhiSearchResult out;
  std::vector<AdoptionPanel> panels;
  std::vector<EmResult> fits;
  panels.reserve(grid.size());
  for (double phi : grid) {
    panels.emplace_back(persons, accessibility_field(dc, persons, network, phi), y, window_end, weights);
    fits.push_back(em_estimate(panels.back(), config));
  }
  // Profile points that trail the best one get a second start from the best
  // parameters, so local optima at one phi do not decide the comparison.
  auto best_index = [&] {
    std::size_t b = 0;
    for (std::size_t i = 1; i < fits.size(); ++i) {
      if (fits[i].loglik > fits[b].loglik) b = i;
    }
    return b;
  };
  const std::size_t first_best = best_index();
  EmConfig warm = config;
  warm.restarts = 1;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    if (i == first_best) continue;
    EmResult again = em_estimate(panels[i], warm, fits[first_best].params);
    if (again.loglik > fits[i].loglik) {
      again.restart_logliks.insert(again.restart_logliks.begin(), fits[i].restart_logliks.begin(),
                                   fits[i].restart_logliks.end());
      again.best_restart = static_cast<int>(again.restart_logliks.size()) - 1;
      fits[i] = std::move(again);
    }
  }
  std::size_t b = 0;
  for (std::size_t i = 0; i < fits.size(); ++i) {
    fits[i].params.phi = grid[i];
    out.profile.push_back({grid[i], fits[i].loglik});
    if (fits[i].loglik > fits[b].loglik || (fits[i].loglik == fits[b].loglik && grid[i] < grid[b])) b = i;
  }
  out.best_phi = grid[b];
  out.best = std::move(fits[b]);
  return out;
}

}  // namespace adopt
