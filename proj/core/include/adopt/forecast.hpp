#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adopt/destination_choice.hpp"
#include "adopt/lccm.hpp"
#include "adopt/model.hpp"

namespace adopt {

struct FacilityEdit {
  ZoneId zone = 0;
  Facility facility = Facility::Station;
  int month = 0;
  bool operator==(const FacilityEdit&) const = default;
};

struct Scenario {
  std::string name;
  std::vector<FacilityEdit> edits;
  int horizon = 12;  // forecast months beyond the calibration month
  bool operator==(const Scenario&) const = default;
};

/// Timeline with the scenario's facilities added, extended to at least
/// `min_horizon`. Edits at or before `window_end` are an InvalidScenario error.
NetworkTimeline apply_scenario(const NetworkTimeline& network, const Scenario& scenario,
                               int window_end, int min_horizon = 0);

// Sample-enumeration population for forecasts starting at `start_month`.
// Class weights are conditional on staying out of the service through
// start_month - 1: posteriors from the observed history, or prior membership
// when start_month == 1.
struct ForecastPopulation {
  std::vector<Person> persons;
  std::vector<double> expansion;      // persons represented by each sample member
  std::vector<unsigned char> at_risk;  // not adopted before start_month
  Eigen::MatrixXd class_weights;       // persons x 3
  std::optional<AdoptionPanel> history;  // window start_month - 1
  int start_month = 1;
  double y_start = 0.0;  // cumulative adopters through start_month - 1

  std::size_t size() const noexcept { return persons.size(); }
};

/// `population_size` scales the WESML weights to population counts; without
/// it each weighted sample member represents one person.
ForecastPopulation make_population(const AdoptionParams& params, std::vector<Person> persons,
                                   const DcModel& dc, const NetworkTimeline& network,
                                   const SamplingWeights& weights, int start_month,
                                   std::optional<double> population_size = std::nullopt);

/// Observed adopters in `month` in population units.
double observed_new_adopters(const ForecastPopulation& population, int month);

// Expected series for months start..end; S[k] and Y[k] refer to month start + k.
struct ExpectedSeries {
  int start_month = 1;
  std::vector<double> S;
  std::vector<double> Y;
};

/// Expected adopters with E[Y(t-1)] feeding the imitator utility.
/// `field` must cover months start..end_month for the population's persons.
ExpectedSeries enumerate_forecast(const AdoptionParams& params, const ForecastPopulation& population,
                                  const AccessibilityField& field, int end_month);

/// Convenience overload computing accessibility on `network` with params.phi.
ExpectedSeries enumerate_forecast(const AdoptionParams& params, const ForecastPopulation& population,
                                  const DcModel& dc, const NetworkTimeline& network, int end_month);

struct CalibrationResult {
  AdoptionParams params;  // innovator and imitator ASCs shifted by `shift`
  double shift = 0.0;
  double target = 0.0;
  double achieved = 0.0;
  int iterations = 0;
};

struct CalibrationConfig {
  double lower = -10.0;
  double upper = 10.0;
  double tolerance = 0.5;  // adopters; bisection continues well past it
  int max_iter = 200;
};

/// Common shift on the innovator and imitator ASCs so that expected new
/// adopters in population.start_month equal `target`.
CalibrationResult calibrate_ascs(const AdoptionParams& params, const ForecastPopulation& population,
                                 const AccessibilityField& field, double target,
                                 const CalibrationConfig& config = {});

enum class BootstrapMode {
  Parametric,  // parameters drawn from N(theta, covariance); expected-value propagation
  MonteCarlo,  // as Parametric, then individual adoption simulated per draw
  Resample,    // persons resampled with replacement and re-estimated per draw
};
std::string_view to_string(BootstrapMode m) noexcept;
BootstrapMode bootstrap_mode_from_string(std::string_view s);

struct BootstrapConfig {
  int draws = 1000;
  std::uint64_t seed = 42;
  BootstrapMode mode = BootstrapMode::Parametric;
  double shift = 0.0;  // calibration shift applied to every draw
  // Recompute class weights from each draw's parameters (needs population.history).
  bool redraw_membership = true;
  EmConfig resample_em{};  // Resample mode only
};

inline constexpr std::array<double, 5> kForecastQuantiles = {0.025, 0.25, 0.5, 0.75, 0.975};

struct ScenarioForecast {
  std::string name;
  int start_month = 1;
  std::vector<int> months;
  std::vector<double> point_S, point_Y;  // at the (shifted) point estimate
  std::vector<double> mean_S, mean_Y;    // over draws
  std::array<std::vector<double>, 5> quantile_Y;  // cumulative
  std::array<std::vector<double>, 5> quantile_S;  // monthly
  Eigen::MatrixXd draws_Y;  // draws x months
  Eigen::MatrixXd draws_S;
};

struct ForecastResult {
  std::vector<ScenarioForecast> scenarios;
  std::vector<std::string> warnings;
  int draws = 0;
  std::uint64_t seed = 0;
};

struct ScenarioInput {
  std::string name;
  AccessibilityField field;
  int end_month = 0;
};

/// Accessibility per scenario, each covering start..start + horizon.
std::vector<ScenarioInput> prepare_scenarios(const DcModel& dc, double phi,
                                             const ForecastPopulation& population,
                                             const NetworkTimeline& network,
                                             std::span<const Scenario> scenarios, int window_end);

/// Same seed gives identical output for any thread count.
ForecastResult bootstrap_forecast(const AdoptionParams& params, const Eigen::MatrixXd& covariance,
                                  const ForecastPopulation& population,
                                  std::span<const ScenarioInput> scenarios,
                                  const BootstrapConfig& config);

/// Nearest positive semi-definite matrix (negative eigenvalues set to zero).
/// `clipped` receives whether any eigenvalue was below -1e-10 * scale.
Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& m, bool* clipped = nullptr);

struct HoldoutConfig {
  int split_month = 24;
  int calib_month = 25;
  int horizon = 30;
  EmConfig em{};
  BootstrapConfig bootstrap{};
  std::optional<double> population_size;
};

struct HoldoutMonth {
  int month = 0;
  double actual = 0.0;
  double mean = 0.0;
  double point = 0.0;
  std::array<double, 5> quantiles{};
  bool in_box = false;
  bool in_whiskers = false;
};

struct HoldoutResult {
  EmResult estimate;
  CalibrationResult calibration;
  std::vector<HoldoutMonth> months;  // calib_month + 1 .. horizon
  double box_coverage = 0.0;
  double whisker_coverage = 0.0;
  std::vector<std::string> warnings;
};

/// Estimate on months 1..split, calibrate on calib_month, forecast the rest.
HoldoutResult holdout_validate(std::span<const Person> persons, const NetworkTimeline& network,
                               const DcModel& dc, const SamplingWeights& weights, double phi,
                               const HoldoutConfig& config);

}  // namespace adopt
