#pragma once

#include <Eigen/Dense>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adopt/model.hpp"
#include "adopt/optimizer.hpp"

namespace adopt {

struct Trip {
  PersonId person = 0;
  ZoneId origin = 0;
  ZoneId destination = 0;
  int month = 0;
};

// Zone roles the destination utility refers to. Only hub zones carry an ASC;
// every other destination's constant is fixed at zero so that newly opened
// stations have a well-defined utility.
struct DcSpec {
  std::vector<ZoneId> hub_zones;
  std::vector<ZoneId> tech_zones;
  std::vector<ZoneId> downtown_zones;
  std::vector<ZoneId> airport_zones;
  double size_floor = 1.0;  // employees / mi^2
};

struct DcParams {
  double beta_distance = 0.0;  // per 100 km
  double alpha_logsize = 0.0;  // per ln(employment density)
  double delta_home = 0.0;
  double theta_onstreet = 0.0;
  double pair_tech_downtown = 0.0;
  double pair_tech_airport = 0.0;
  std::map<ZoneId, double> asc;  // hub zone -> constant

  bool operator==(const DcParams&) const = default;
};

struct DcModel {
  DcSpec spec;
  DcParams params;

  std::size_t size() const noexcept { return 6 + spec.hub_zones.size(); }
  std::vector<std::string> names() const;
  Eigen::VectorXd pack() const;
  void unpack(const Eigen::VectorXd& theta);
  void validate() const;
};

// Per-zone lookups for the destination utility, built once per network.
class DcDesign {
 public:
  DcDesign(const DcSpec& spec, const NetworkTimeline& network);

  std::size_t size() const noexcept { return 6 + n_hubs_; }
  // Writes the feature vector of destination `dest` for a traveller living in
  // `home`, starting at `origin`, during `month` (all zone indices).
  void features(std::size_t home, std::size_t origin, std::size_t dest, int month,
                double* out) const;
  const NetworkTimeline& network() const noexcept { return *network_; }

 private:
  const NetworkTimeline* network_;
  std::size_t n_hubs_ = 0;
  std::vector<double> log_size_;
  std::vector<int> hub_index_;  // -1 when not a hub
  std::vector<unsigned char> tech_, downtown_, airport_;
};

double dc_utility(const DcModel& model, const NetworkTimeline& network, const Person& person,
                  ZoneId origin, ZoneId destination, int month);

/// MNL probabilities over active destinations (ascending zone index order).
std::vector<double> destination_probabilities(const DcModel& model, const NetworkTimeline& network,
                                              const Person& person, ZoneId origin, int month);

struct DcLoglik {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;  // filled only on request
  std::size_t single_destination_trips = 0;
};

DcLoglik dc_loglik_full(const DcModel& model, std::span<const Trip> trips,
                        const NetworkTimeline& network, std::span<const Person> persons,
                        bool want_hessian = false);

double dc_loglik(const DcModel& model, std::span<const Trip> trips, const NetworkTimeline& network,
                 std::span<const Person> persons);

struct DcEstimate {
  DcModel model;
  std::vector<std::string> names;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd std_errors;
  Eigen::VectorXd t_stats;
  std::vector<bool> identified;
  double loglik = 0.0;
  double null_loglik = 0.0;  // all coefficients zero (equal shares)
  double grad_norm = 0.0;
  int iterations = 0;
  std::size_t trips = 0;
  std::size_t single_destination_trips = 0;
  std::vector<std::string> warnings;
};

struct DcEstimateConfig {
  OptimConfig optim{};
  double coefficient_cap = 30.0;
};

// Maximum likelihood from a zero start. Coefficients whose regressor never
// varies within a choice set are reported as not identified and held at 0.
DcEstimate dc_estimate(std::span<const Trip> trips, const NetworkTimeline& network,
                       std::span<const Person> persons, const DcSpec& spec,
                       const DcEstimateConfig& config = {});

/// Expected maximum utility ln(sum_j exp V_nij) over destinations active at `month`.
double accessibility_logsum(const DcModel& model, const NetworkTimeline& network,
                            const Person& person, ZoneId origin, int month);

/// source / max(distance, 1 km)^phi.
double accessibility_impute(double source_value, double distance_km, double phi);

// Month-indexed accessibility for each person's home zone. Covered homes use
// their own logsum; uncovered homes impute from the nearest covered zone.
class AccessibilityField {
 public:
  AccessibilityField() = default;

  int horizon() const noexcept { return horizon_; }
  double phi() const noexcept { return phi_; }
  std::size_t person_count() const noexcept { return person_zone_.size(); }
  std::size_t zone_count() const noexcept { return zone_ids_.size(); }
  std::size_t person_zone(std::size_t person) const { return person_zone_.at(person); }
  const std::vector<PersonId>& person_ids() const noexcept { return person_ids_; }
  const std::vector<ZoneId>& zone_ids() const noexcept { return zone_ids_; }

  double value(std::size_t person, int month) const { return zone_value(person_zone(person), month); }
  bool covered(std::size_t person, int month) const { return zone_covered(person_zone(person), month); }

  double zone_value(std::size_t zone, int month) const { return cell(zone, month).value; }
  bool zone_covered(std::size_t zone, int month) const { return cell(zone, month).covered; }
  bool zone_station(std::size_t zone, int month) const { return cell(zone, month).station; }
  bool zone_onstreet(std::size_t zone, int month) const { return cell(zone, month).onstreet; }
  bool supplied(int month) const { return month >= 1 && month <= horizon_ && supplied_[month - 1]; }

  /// Imputations whose source logsum was negative (the quotient then rises with distance).
  std::size_t negative_source_imputations() const noexcept { return negative_sources_; }

 private:
  friend AccessibilityField accessibility_field(const DcModel&, std::span<const Person>,
                                                const NetworkTimeline&, double);
  struct Cell {
    double value = 0.0;
    bool covered = false, station = false, onstreet = false;
  };
  const Cell& cell(std::size_t zone, int month) const {
    require(month >= 1 && month <= horizon_, ErrorKind::InvalidInput,
            "accessibility month " + std::to_string(month) + " outside field horizon");
    return cells_[zone * static_cast<std::size_t>(horizon_) + static_cast<std::size_t>(month - 1)];
  }

  int horizon_ = 0;
  double phi_ = 0.0;
  std::vector<ZoneId> zone_ids_;
  std::vector<PersonId> person_ids_;
  std::vector<std::size_t> person_zone_;
  std::vector<Cell> cells_;
  std::vector<unsigned char> supplied_;
  std::size_t negative_sources_ = 0;
};

AccessibilityField accessibility_field(const DcModel& model, std::span<const Person> persons,
                                       const NetworkTimeline& network, double phi);

}  // namespace adopt
