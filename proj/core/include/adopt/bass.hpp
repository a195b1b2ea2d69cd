#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace adopt {

struct BassParams {
  double p = 0.0;  // coefficient of innovation
  double q = 0.0;  // coefficient of imitation
  double M = 0.0;  // total potential market

  /// Throws InvalidInput on p <= 0, q < 0 or M <= 0. Returns warnings, e.g.
  /// when p + q > 1 lets the hazard leave (0, 1).
  std::vector<std::string> validate() const;
  bool operator==(const BassParams&) const = default;
};

// S[t] new adopters and Y[t] cumulative adopters for t = 0..T, with S[0] = 0.
struct AdoptionSeries {
  std::vector<double> S;
  std::vector<double> Y;

  int horizon() const noexcept { return S.empty() ? 0 : static_cast<int>(S.size()) - 1; }
  /// Builds Y from monthly new adopters S(1..T).
  static AdoptionSeries from_new_adopters(const std::vector<double>& new_adopters);
  void validate() const;
  bool operator==(const AdoptionSeries&) const = default;
};

/// p + (q/M) Y_prev, clipped to [0, 1]. Y_prev outside [0, M] is an error.
double bass_hazard(const BassParams& params, double y_prev);

/// Discrete recursion S(t) = hazard(Y(t-1)) (M - Y(t-1)).
AdoptionSeries bass_simulate(const BassParams& params, int horizon);

/// Continuous-time cumulative adopters M (1 - e^{-(p+q)t}) / (1 + (q/p) e^{-(p+q)t}).
double bass_closed_form(const BassParams& params, double t);

struct BassFit {
  BassParams params;
  double a = 0.0, b = 0.0, c = 0.0;  // S = a + b Y(t-1) + c Y(t-1)^2
  double r_squared = 0.0;
  std::vector<double> residuals;  // months 1..T
  int observations = 0;
};

// OLS of S(t) on [1, Y(t-1), Y(t-1)^2] over t = 1..T with Y(0) = 0.
BassFit bass_fit_ols(const AdoptionSeries& series);

/// Continues a series past its last month with the fitted recursion; S clipped at 0.
AdoptionSeries bass_forecast(const BassParams& params, const AdoptionSeries& observed, int months);

}  // namespace adopt
