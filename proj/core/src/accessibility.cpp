#include <cmath>
#include <limits>

#include "adopt/destination_choice.hpp"
#include "adopt/numeric.hpp"

namespace adopt {

namespace {

double logsum_from(const DcDesign& design, const Eigen::VectorXd& theta,
                   const std::vector<std::size_t>& active, std::size_t home, std::size_t origin,
                   int month, std::vector<double>& scratch_v, std::vector<double>& scratch_x) {
  scratch_v.resize(active.size());
  scratch_x.resize(design.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    design.features(home, origin, active[a], month, scratch_x.data());
    scratch_v[a] = Eigen::Map<const Eigen::VectorXd>(scratch_x.data(), theta.size()).dot(theta);
  }
  return logsumexp(scratch_v);
}

}  // namespace

double accessibility_logsum(const DcModel& model, const NetworkTimeline& network,
                            const Person& person, ZoneId origin, int month) {
  const auto active = network.active_destinations(month);
  require(!active.empty(), ErrorKind::InvalidState,
          "no active destinations in month " + std::to_string(month));
  const DcDesign design(model.spec, network);
  std::vector<double> v, x;
  return logsum_from(design, model.pack(), active, network.index_of(person.home_zone),
                     network.index_of(origin), month, v, x);
}

double accessibility_impute(double source_value, double distance_km, double phi) {
  require(distance_km >= 0.0, ErrorKind::InvalidInput, "distance must be non-negative");
  require(phi >= 0.0, ErrorKind::InvalidInput, "friction exponent must be non-negative");
  return source_value / std::pow(std::max(distance_km, 1.0), phi);
}

AccessibilityField accessibility_field(const DcModel& model, std::span<const Person> persons,
                                       const NetworkTimeline& network, double phi) {
  require(network.horizon() >= 1, ErrorKind::InvalidInput, "network horizon must be >= 1");
  require(phi >= 0.0, ErrorKind::InvalidInput, "friction exponent must be non-negative");
  model.validate();

  AccessibilityField field;
  field.horizon_ = network.horizon();
  field.phi_ = phi;
  const std::size_t n = network.size();
  const auto horizon = static_cast<std::size_t>(field.horizon_);
  field.zone_ids_.reserve(n);
  for (const auto& z : network.zones()) field.zone_ids_.push_back(z.id);
  field.person_ids_.reserve(persons.size());
  field.person_zone_.reserve(persons.size());
  for (const auto& p : persons) {
    field.person_ids_.push_back(p.id);
    field.person_zone_.push_back(network.index_of(p.home_zone));
  }
  field.cells_.assign(n * horizon, {});
  field.supplied_.assign(horizon, 0);

  const DcDesign design(model.spec, network);
  const Eigen::VectorXd theta = model.pack();
  std::vector<double> v, x;
  for (int t = 1; t <= field.horizon_; ++t) {
    const auto active = network.active_destinations(t);
    field.supplied_[t - 1] = !active.empty();
    for (std::size_t z = 0; z < n; ++z) {
      auto& c = field.cells_[z * horizon + static_cast<std::size_t>(t - 1)];
      const Zone& zone = network.zone(z);
      c.station = zone.has_station(t);
      c.onstreet = zone.has_onstreet(t);
      c.covered = c.station || c.onstreet;
      if (active.empty()) continue;
      if (c.covered) {
        c.value = logsum_from(design, theta, active, z, z, t, v, x);
        continue;
      }
      // Nearest covered zone; `active` is ascending so ties keep the lowest id.
      std::size_t nearest = active.front();
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k : active) {
        if (network.distance(z, k) < best) {
          best = network.distance(z, k);
          nearest = k;
        }
      }
      const double source = logsum_from(design, theta, active, z, nearest, t, v, x);
      if (source < 0.0) ++field.negative_sources_;
      c.value = accessibility_impute(source, best, phi);
    }
  }
  return field;
}

}  // namespace adopt
