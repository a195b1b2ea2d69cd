#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "adopt/error.hpp"

namespace adopt {

using ZoneId = std::int64_t;
using PersonId = std::int64_t;

enum class Facility { Station, OnStreet };
std::string_view to_string(Facility f) noexcept;
Facility facility_from_string(std::string_view s);

struct Zone {
  ZoneId id = 0;
  double employment_density = 0.0;  // employees per square mile
  std::optional<int> station_from;  // first month with a station
  std::optional<int> onstreet_from;

  bool has_station(int month) const noexcept { return station_from && *station_from <= month; }
  bool has_onstreet(int month) const noexcept { return onstreet_from && *onstreet_from <= month; }
  bool covered(int month) const noexcept { return has_station(month) || has_onstreet(month); }
  bool operator==(const Zone&) const = default;
};

// Zones plus a symmetric distance table and month-indexed facility activation.
// Zones are stored sorted by id; zone indices below refer to that order.
class NetworkTimeline {
 public:
  NetworkTimeline() = default;
  // distances_km is row-major zones.size() x zones.size() in the SAME order as
  // `zones` as given; it is reordered together with the zones.
  NetworkTimeline(std::vector<Zone> zones, std::vector<double> distances_km, int horizon);

  std::size_t size() const noexcept { return zones_.size(); }
  int horizon() const noexcept { return horizon_; }
  const std::vector<Zone>& zones() const noexcept { return zones_; }
  const Zone& zone(std::size_t index) const { return zones_.at(index); }

  std::size_t index_of(ZoneId id) const;
  std::optional<std::size_t> find(ZoneId id) const noexcept;

  double distance(std::size_t i, std::size_t j) const noexcept { return dist_[i * zones_.size() + j]; }
  double distance_by_id(ZoneId a, ZoneId b) const { return distance(index_of(a), index_of(b)); }

  /// Indices of zones hosting any facility at `month`, ascending.
  std::vector<std::size_t> active_destinations(int month) const;

  /// Copy with a facility added at `month` (no-op if already active earlier).
  NetworkTimeline with_facility(ZoneId zone, Facility type, int month) const;
  NetworkTimeline with_horizon(int horizon) const;

  bool operator==(const NetworkTimeline&) const = default;

 private:
  std::vector<Zone> zones_;
  std::vector<double> dist_;
  int horizon_ = 0;
};

enum class Stratum { AdopterSample, PopulationSample };
std::string_view to_string(Stratum s) noexcept;
Stratum stratum_from_string(std::string_view s);

struct Person {
  PersonId id = 0;
  ZoneId home_zone = 0;
  double income_k = 0.0;  // monthly income, $1000
  bool male = false;
  bool tech_firm_employee = false;
  Stratum stratum = Stratum::PopulationSample;
  std::optional<int> adoption_month;
};

/// Throws InvalidInput when the person's invariants fail for `horizon`.
void validate_person(const Person& p, int horizon);

enum class Choice { NotAdopt = 0, Adopt = 1 };

struct PanelObservation {
  PersonId person = 0;
  int month = 0;
  Choice choice = Choice::NotAdopt;
  bool operator==(const PanelObservation&) const = default;
};

/// Per-month binary observations up to and including adoption (absorbing).
std::vector<PanelObservation> expand_panel(const Person& person, int horizon);

/// Risk-set length T_n without materializing the panel.
int risk_months(const Person& person, int horizon) noexcept;

struct StratumCount {
  std::size_t adopter_sample = 0;
  std::size_t population_sample = 0;
};

struct PopulationFractions {
  double adopter_sample = 0.0;
  double population_sample = 0.0;
};

// w_g = W_g / H_g for the two sampling strata.
struct SamplingWeights {
  double adopter_sample = 1.0;
  double population_sample = 1.0;

  double operator()(Stratum s) const noexcept {
    return s == Stratum::AdopterSample ? adopter_sample : population_sample;
  }
};

SamplingWeights compute_weights(const StratumCount& counts, const PopulationFractions& population);
StratumCount count_strata(std::span<const Person> persons);

/// Y(t) for t = 0..horizon: the number of persons adopting at or before t.
std::vector<double> cumulative_adopters(std::span<const Person> persons, int horizon);

}  // namespace adopt
