#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adopt/destination_choice.hpp"
#include "adopt/model.hpp"
#include "adopt/optimizer.hpp"

namespace adopt {

inline constexpr int kClassCount = 3;
enum class LatentClass { Innovator = 0, Imitator = 1, NonAdopter = 2 };
std::string_view to_string(LatentClass c) noexcept;

using ClassProbs = std::array<double, kClassCount>;

// Membership utility z_n' tau_s; the innovator class is the zero reference.
struct MembershipCoefs {
  double asc = 0.0;
  double income = 0.0;  // per $1000 monthly income
  double male = 0.0;
  bool operator==(const MembershipCoefs&) const = default;
};

struct InnovatorCoefs {
  double asc = 0.0;
  double tech = 0.0;
  double station = 0.0;   // station in home zone
  double onstreet = 0.0;  // on-street parking in home zone
  double access_covered = 0.0;
  double access_uncovered = 0.0;
  bool operator==(const InnovatorCoefs&) const = default;
};

struct ImitatorCoefs {
  double asc = 0.0;
  double tech = 0.0;
  double access_covered = 0.0;
  double access_uncovered = 0.0;
  double social = 0.0;  // per 100 cumulative adopters at t-1
  bool operator==(const ImitatorCoefs&) const = default;
};

struct NonAdopterCoefs {
  double asc = 0.0;
  bool operator==(const NonAdopterCoefs&) const = default;
};

inline constexpr double kNonAdopterAscMin = -30.0;
inline constexpr double kNonAdopterAscMax = 0.0;

struct AdoptionParams {
  MembershipCoefs imitator_membership;
  MembershipCoefs nonadopter_membership;
  InnovatorCoefs innovator;
  ImitatorCoefs imitator;
  NonAdopterCoefs nonadopter;
  double phi = 1.0;

  static constexpr Eigen::Index kSize = 18;
  // Vector layout: [imitator membership(3), non-adopter membership(3),
  // innovator(6), imitator(5), non-adopter(1)]. phi is not part of it.
  Eigen::VectorXd to_vector() const;
  static AdoptionParams from_vector(const Eigen::VectorXd& v, double phi);
  static const std::array<std::string_view, kSize>& names();
  void validate() const;

  bool operator==(const AdoptionParams&) const = default;
};

namespace param_index {
inline constexpr Eigen::Index kMembership = 0;  // 6 entries
inline constexpr Eigen::Index kInnovator = 6;   // 6 entries
inline constexpr Eigen::Index kImitator = 12;   // 5 entries
inline constexpr Eigen::Index kNonAdopter = 17;
inline constexpr Eigen::Index kInnovatorAsc = kInnovator;
inline constexpr Eigen::Index kImitatorAsc = kImitator;
}  // namespace param_index

/// Box used by every adoption-parameter search: +-cap, non-adopter ASC in [-30, 0].
Bounds adoption_bounds(double cap = 50.0);

ClassProbs membership_probs(const AdoptionParams& params, const Person& person);

struct AdoptionContext {
  double access = 0.0;
  bool covered = false;
  bool station = false;
  bool onstreet = false;
  double y_prev = 0.0;  // cumulative adopters through month - 1
};

/// Systematic adoption utility per class; non-adoption utility is 0 throughout.
ClassProbs adoption_utility(const AdoptionParams& params, const Person& person,
                            const AdoptionContext& ctx);

/// Binary logit probability, clipped into [1e-300, 1 - 1e-16].
double adoption_prob(double utility);

AdoptionContext adoption_context(const AccessibilityField& field, std::size_t person_index,
                                 int month, std::span<const double> y_series);

// Log-likelihood of one person's risk-set months under each class, evaluated
// month by month. `y_series[t]` is cumulative adopters through month t.
ClassProbs panel_class_loglik(const AdoptionParams& params, const Person& person,
                              std::size_t person_index, const AccessibilityField& field,
                              std::span<const double> y_series, int window_end);

// Estimation panel in aggregated form. Adoption utilities depend on a person
// only through (home zone, tech-firm flag), so per-month class probabilities
// are computed per cell and persons refer to their cell.
class AdoptionPanel {
 public:
  struct Row {
    PersonId id = 0;
    double income = 0.0;
    bool male = false;
    bool tech = false;
    std::size_t zone = 0;
    int exit_month = 0;  // last month in the risk set (0: never at risk)
    bool adopted = false;
    double weight = 1.0;
  };
  struct ZoneMonth {
    double access = 0.0;
    bool covered = false, station = false, onstreet = false;
  };

  AdoptionPanel(std::span<const Person> persons, const AccessibilityField& field,
                std::vector<double> y_series, int window_end, const SamplingWeights& weights);

  std::size_t size() const noexcept { return rows_.size(); }
  std::size_t zone_count() const noexcept { return zones_; }
  int window() const noexcept { return window_; }
  const std::vector<Row>& rows() const noexcept { return rows_; }
  const ZoneMonth& zone_month(std::size_t zone, int month) const {
    return zone_months_[zone * static_cast<std::size_t>(window_) + static_cast<std::size_t>(month - 1)];
  }
  double social_regressor(int month) const { return y_series_[static_cast<std::size_t>(month - 1)] / 100.0; }
  const std::vector<double>& y_series() const noexcept { return y_series_; }
  std::size_t observation_count() const noexcept { return observations_; }
  double total_weight() const noexcept { return total_weight_; }

  /// Same persons and covariates with every weight multiplied by `factor`.
  AdoptionPanel scaled(double factor) const;
  /// Panel made of the listed rows (repeats allowed), e.g. for resampling.
  AdoptionPanel subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<Row> rows_;
  std::vector<ZoneMonth> zone_months_;
  std::vector<double> y_series_;
  std::size_t zones_ = 0;
  int window_ = 0;
  std::size_t observations_ = 0;
  double total_weight_ = 0.0;
};

/// Per-person, per-class panel log-likelihoods (size() x 3).
Eigen::MatrixXd class_logliks(const AdoptionParams& params, const AdoptionPanel& panel);
/// Prior membership probabilities (size() x 3).
Eigen::MatrixXd membership_matrix(const AdoptionParams& params, const AdoptionPanel& panel);

/// sum_n w_n log sum_s P(s | z_n) P(y_n | s).
double weighted_loglik(const AdoptionParams& params, const AdoptionPanel& panel);
/// As above, filling the analytic gradient over AdoptionParams::to_vector().
double weighted_loglik(const AdoptionParams& params, const AdoptionPanel& panel,
                       Eigen::VectorXd& gradient);

/// Posterior class probabilities; `tempered` raises each person's likelihood to its weight.
Eigen::MatrixXd posterior(const AdoptionParams& params, const AdoptionPanel& panel,
                          bool tempered = false);

/// Unit-weight per-person scores d/dtheta log sum_s P(s) P(y_n | s) (size() x 18).
Eigen::MatrixXd person_scores(const AdoptionParams& params, const AdoptionPanel& panel);

/// Equal-shares null: every binary choice at probability 1/2.
double null_loglik(const AdoptionPanel& panel);

struct FitStats {
  double loglik = 0.0;
  double null_loglik = 0.0;
  int parameters = 0;
  std::size_t observations = 0;
  double aic = 0.0;
  double bic = 0.0;
  double rho_bar2 = 0.0;
  std::string null_definition = "equal shares (P(adopt) = 1/2 in every risk-set month)";
};

FitStats fit_stats(double final_loglik, int n_params, std::size_t n_observations,
                   double null_loglik = std::numeric_limits<double>::quiet_NaN());

struct EmConfig {
  double tol = 1e-7;       // absolute weighted-loglik change
  int max_iter = 2000;
  int restarts = 5;
  std::uint64_t seed = 1;
  int inner_max_iter = 25;  // quasi-Newton iterations per M-step block
  double min_class_mass = 1e-3;
  double coefficient_cap = 50.0;
  double init_jitter = 0.3;
  // After EM slows below `polish_switch_tol`, finish with quasi-Newton ascent
  // on the marginal likelihood itself.
  bool polish = true;
  double polish_switch_tol = 1.0;
  int polish_max_iter = 1000;
  double polish_grad_tol = 1e-8;  // per unit of total weight
  bool tempered_posterior = false;
  double monotone_slack = 1e-9;
};

struct EmResult {
  AdoptionParams params;
  Eigen::MatrixXd posterior;  // persons x 3
  std::vector<double> trajectory;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  Eigen::MatrixXd covariance;  // 18 x 18 (OPG); zero rows for parameters on a bound
  Eigen::VectorXd std_errors;
  std::vector<bool> free;  // estimated away from bounds
  ClassProbs class_shares{};  // weighted mean prior membership
  bool degenerate = false;
  int best_restart = 0;
  std::vector<double> restart_logliks;
  std::vector<std::string> warnings;
  FitStats fit;
};

EmResult em_estimate(const AdoptionPanel& panel, const EmConfig& config = {},
                     const std::optional<AdoptionParams>& init = std::nullopt);

/// OPG covariance (sum_n w_n g_n g_n')^-1 over coordinates in `free`.
Eigen::MatrixXd opg_covariance(const AdoptionParams& params, const AdoptionPanel& panel,
                               const std::vector<bool>& free);

struct PhiProfilePoint {
  double phi = 0.0;
  double loglik = 0.0;
};

struct PhiSearchResult {
  double best_phi = 0.0;
  std::vector<PhiProfilePoint> profile;
  EmResult best;
};

PhiSearchResult phi_grid_search(std::span<const Person> persons, const NetworkTimeline& network,
                                const DcModel& dc, const SamplingWeights& weights,
                                std::span<const double> grid, int window_end,
                                const EmConfig& config = {});

enum class MnlCovariates { Union, InnovatorTemplate };

struct MnlResult {
  MnlCovariates covariates = MnlCovariates::Union;
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd std_errors;
  Eigen::MatrixXd covariance;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
  FitStats fit;
};

// Single-class binary logit over the same weighted panel.
MnlResult mnl_baseline_estimate(const AdoptionPanel& panel,
                                MnlCovariates covariates = MnlCovariates::Union,
                                const OptimConfig& optim = {});

}  // namespace adopt
