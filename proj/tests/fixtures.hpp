#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "adopt/destination_choice.hpp"
#include "adopt/lccm.hpp"
#include "adopt/model.hpp"
#include "adopt/synthgen.hpp"

namespace fixtures {

struct ZoneSpec {
  double x = 0.0, y = 0.0;
  double employment = 1000.0;
  std::optional<int> station, onstreet;
};

inline adopt::NetworkTimeline network(const std::vector<ZoneSpec>& specs, int horizon) {
  std::vector<adopt::Zone> zones;
  const auto n = specs.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    adopt::Zone z;
    z.id = static_cast<adopt::ZoneId>(i + 1);
    z.employment_density = specs[i].employment;
    z.station_from = specs[i].station;
    z.onstreet_from = specs[i].onstreet;
    zones.push_back(z);
    for (std::size_t j = 0; j < n; ++j) {
      dist[i * n + j] = std::hypot(specs[i].x - specs[j].x, specs[i].y - specs[j].y);
    }
  }
  return adopt::NetworkTimeline(zones, dist, horizon);
}

// Random zones on a 30 km square; every zone active from month 1.
inline adopt::NetworkTimeline random_network(std::mt19937_64& rng, std::size_t n, int horizon = 1) {
  std::uniform_real_distribution<double> pos(0.0, 30.0), emp(0.0, 10.0);
  std::vector<ZoneSpec> specs(n);
  for (std::size_t i = 0; i < n; ++i) {
    specs[i].x = pos(rng);
    specs[i].y = pos(rng);
    specs[i].employment = std::exp(emp(rng));
    if (i % 3 == 1) {
      specs[i].onstreet = 1;
    } else {
      specs[i].station = 1;
    }
  }
  return network(specs, horizon);
}

inline adopt::DcSpec dc_spec() {
  adopt::DcSpec s;
  s.hub_zones = {1, 3};
  s.tech_zones = {1};
  s.downtown_zones = {2};
  s.airport_zones = {3};
  return s;
}

inline adopt::DcModel random_dc(std::mt19937_64& rng, const adopt::DcSpec& spec) {
  std::normal_distribution<double> n(0.0, 1.0);
  adopt::DcModel m{spec, {}};
  m.params.beta_distance = n(rng);
  m.params.alpha_logsize = 0.3 * n(rng);
  m.params.delta_home = n(rng);
  m.params.theta_onstreet = n(rng);
  m.params.pair_tech_downtown = n(rng);
  m.params.pair_tech_airport = n(rng);
  for (auto h : spec.hub_zones) m.params.asc[h] = n(rng);
  return m;
}

inline adopt::Person person(adopt::PersonId id, adopt::ZoneId home, std::optional<int> adopted = std::nullopt,
                            bool tech = false, double income = 5.0, bool male = false) {
  adopt::Person p;
  p.id = id;
  p.home_zone = home;
  p.income_k = income;
  p.male = male;
  p.tech_firm_employee = tech;
  p.adoption_month = adopted;
  p.stratum = adopted ? adopt::Stratum::AdopterSample : adopt::Stratum::PopulationSample;
  return p;
}

// A quick synthetic city: 6 zones, 1500 persons, 18 months.
inline adopt::SynthConfig small_synth(std::uint64_t seed) {
  auto c = adopt::SynthConfig::defaults();
  c.seed = seed;
  c.n_zones = 6;
  c.n_persons = 1500;
  c.horizon = 18;
  c.trip_months = 3;
  return c;
}

inline adopt::AdoptionParams random_params(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  adopt::AdoptionParams p = adopt::SynthConfig::defaults().truth;
  Eigen::VectorXd v = p.to_vector();
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += n(rng);
  v[adopt::param_index::kNonAdopter] = -8.0 + n(rng);
  return adopt::AdoptionParams::from_vector(v, 1.0);
}

}  // namespace fixtures
