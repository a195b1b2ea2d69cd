#include "adopt/bass.hpp"

#include <algorithm>
#include <cmath>

#include "adopt/error.hpp"

namespace adopt {

std::vector<std::string> BassParams::validate() const {
  require(std::isfinite(p) && p > 0.0, ErrorKind::InvalidInput, "Bass p must be > 0");
  require(std::isfinite(q) && q >= 0.0, ErrorKind::InvalidInput, "Bass q must be >= 0");
  require(std::isfinite(M) && M > 0.0, ErrorKind::InvalidInput, "Bass M must be > 0");
  std::vector<std::string> warnings;
  if (p + q >= 1.0) warnings.push_back("Bass hazard p + q >= 1 leaves (0, 1) near saturation");
  return warnings;
}

AdoptionSeries AdoptionSeries::from_new_adopters(const std::vector<double>& new_adopters) {
  AdoptionSeries s;
  s.S.reserve(new_adopters.size() + 1);
  s.Y.reserve(new_adopters.size() + 1);
  s.S.push_back(0.0);
  s.Y.push_back(0.0);
  for (double v : new_adopters) {
    s.S.push_back(v);
    s.Y.push_back(s.Y.back() + v);
  }
  s.validate();
  return s;
}

void AdoptionSeries::validate() const {
  require(S.size() == Y.size() && !S.empty(), ErrorKind::InvalidInput,
          "adoption series needs matching S and Y starting at month 0");
  for (std::size_t t = 0; t < S.size(); ++t) {
    require(std::isfinite(S[t]) && S[t] >= 0.0, ErrorKind::InvalidInput,
            "new adopters must be >= 0 (month " + std::to_string(t) + ")");
    if (t > 0) {
      require(Y[t] >= Y[t - 1], ErrorKind::InvalidInput, "cumulative adopters must be non-decreasing");
    }
  }
}

double bass_hazard(const BassParams& params, double y_prev) {
  require(y_prev >= 0.0 && y_prev <= params.M * (1.0 + 1e-12), ErrorKind::InvalidInput,
          "Bass hazard needs 0 <= Y(t-1) <= M");
  return std::clamp(params.p + params.q / params.M * y_prev, 0.0, 1.0);
}

AdoptionSeries bass_simulate(const BassParams& params, int horizon) {
  params.validate();
  require(horizon >= 1, ErrorKind::InvalidInput, "Bass horizon must be >= 1");
  AdoptionSeries s;
  s.S.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  s.Y.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (std::size_t t = 1; t < s.S.size(); ++t) {
    const double y = std::min(s.Y[t - 1], params.M);
    s.S[t] = bass_hazard(params, y) * (params.M - y);
    s.Y[t] = s.Y[t - 1] + s.S[t];
  }
  return s;
}

double bass_closed_form(const BassParams& params, double t) {
  require(t >= 0.0, ErrorKind::InvalidInput, "Bass closed form needs t >= 0");
  const double e = std::exp(-(params.p + params.q) * t);
  return params.M * (1.0 - e) / (1.0 + params.q / params.p * e);
}

BassFit bass_fit_ols(const AdoptionSeries& series) {
  series.validate();
  const int n = series.horizon();
  require(n >= 4, ErrorKind::InvalidInput, "Bass fit needs at least 4 months");
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd s(n);
  double ymax = 0.0;
  for (int t = 1; t <= n; ++t) {
    const double y = series.Y[static_cast<std::size_t>(t - 1)];
    X(t - 1, 0) = 1.0;
    X(t - 1, 1) = y;
    X(t - 1, 2) = y * y;
    s[t - 1] = series.S[static_cast<std::size_t>(t)];
    ymax = std::max(ymax, series.Y[static_cast<std::size_t>(t)]);
  }
  require(X.col(1).maxCoeff() > X.col(1).minCoeff(), ErrorKind::InvalidInput,
          "Bass fit needs varying cumulative adopters");

  // Scale columns before solving; Y^2 spans many orders of magnitude.
  const Eigen::Vector3d scale(1.0, std::max(1.0, ymax), std::max(1.0, ymax * ymax));
  const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
  const Eigen::Vector3d beta = Xs.colPivHouseholderQr().solve(s).cwiseQuotient(scale);

  BassFit fit;
  fit.a = beta[0];
  fit.b = beta[1];
  fit.c = beta[2];
  fit.observations = n;
  const Eigen::VectorXd resid = s - X * beta;
  fit.residuals.assign(resid.data(), resid.data() + n);
  const double ss_tot = (s.array() - s.mean()).square().sum();
  fit.r_squared = ss_tot > 0.0 ? 1.0 - resid.squaredNorm() / ss_tot : 0.0;

  // c must be clearly negative relative to the linear term's scale.
  const double c_floor = 1e-12 * (std::abs(fit.b) + std::abs(fit.a) / std::max(1.0, ymax)) / std::max(1.0, ymax);
  if (!(fit.c < -c_floor)) {
    fail(ErrorKind::FitFailure, "Bass fit: quadratic coefficient c = " + std::to_string(fit.c) +
                                    " is not negative; series is not Bass-shaped");
  }
  const double disc = fit.b * fit.b - 4.0 * fit.a * fit.c;
  if (disc < 0.0) fail(ErrorKind::FitFailure, "Bass fit: no real market-potential root");
  const double M = (-fit.b - std::sqrt(disc)) / (2.0 * fit.c);
  if (!(M > ymax)) {
    fail(ErrorKind::FitFailure, "Bass fit: market potential " + std::to_string(M) +
                                    " does not exceed observed cumulative " + std::to_string(ymax));
  }
  fit.params = {fit.a / M, -fit.c * M, M};
  if (!(fit.params.p > 0.0)) fail(ErrorKind::FitFailure, "Bass fit: implied p is not positive");
  return fit;
}

AdoptionSeries bass_forecast(const BassParams& params, const AdoptionSeries& observed, int months) {
  params.validate();
  observed.validate();
  require(months >= 0, ErrorKind::InvalidInput, "forecast months must be >= 0");
  AdoptionSeries out = observed;
  for (int k = 0; k < months; ++k) {
    const double y = std::min(out.Y.back(), params.M);
    const double s = std::max(0.0, bass_hazard(params, y) * (params.M - y));
    out.S.push_back(s);
    out.Y.push_back(out.Y.back() + s);
  }
  return out;
}

}  // namespace adopt
