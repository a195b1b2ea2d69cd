#include <algorithm>
#include <cmath>
#include <numeric>

#include "adopt/model.hpp"

namespace adopt {

std::string_view to_string(Facility f) noexcept {
  return f == Facility::Station ? "station" : "onstreet";
}

Facility facility_from_string(std::string_view s) {
  if (s == "station") return Facility::Station;
  if (s == "onstreet" || s == "on-street" || s == "on_street") return Facility::OnStreet;
  fail(ErrorKind::InvalidInput, "unknown facility type '" + std::string(s) + "'");
}

NetworkTimeline::NetworkTimeline(std::vector<Zone> zones, std::vector<double> distances_km,
                                 int horizon)
    : horizon_(horizon) {
  const std::size_t n = zones.size();
  require(n > 0, ErrorKind::InvalidInput, "network has no zones");
  require(horizon >= 1, ErrorKind::InvalidInput, "network horizon must be >= 1");
  require(distances_km.size() == n * n, ErrorKind::InvalidInput,
          "distance table must be zones x zones");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return zones[a].id < zones[b].id; });

  zones_.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Zone& z = zones[order[k]];
    if (k > 0) {
      require(z.id != zones_.back().id, ErrorKind::InvalidInput,
              "duplicate zone id " + std::to_string(z.id));
    }
    require(z.employment_density >= 0.0 && std::isfinite(z.employment_density),
            ErrorKind::InvalidInput,
            "zone " + std::to_string(z.id) + ": employment density must be >= 0");
    require(!z.station_from || *z.station_from >= 1, ErrorKind::InvalidInput,
            "zone " + std::to_string(z.id) + ": activation month must be >= 1");
    require(!z.onstreet_from || *z.onstreet_from >= 1, ErrorKind::InvalidInput,
            "zone " + std::to_string(z.id) + ": activation month must be >= 1");
    zones_.push_back(z);
  }

  dist_.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const double d = distances_km[order[a] * n + order[b]];
      require(std::isfinite(d) && d >= 0.0, ErrorKind::InvalidInput,
              "distances must be finite and non-negative");
      dist_[a * n + b] = d;
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    require(dist_[a * n + a] == 0.0, ErrorKind::InvalidInput,
            "distance table must have a zero diagonal");
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d1 = dist_[a * n + b], d2 = dist_[b * n + a];
      require(std::abs(d1 - d2) <= 1e-9 * std::max(1.0, std::abs(d1)), ErrorKind::InvalidInput,
              "distance table must be symmetric (zones " + std::to_string(zones_[a].id) + ", " +
                  std::to_string(zones_[b].id) + ")");
    }
  }
}

std::optional<std::size_t> NetworkTimeline::find(ZoneId id) const noexcept {
  auto it = std::lower_bound(zones_.begin(), zones_.end(), id,
                             [](const Zone& z, ZoneId v) { return z.id < v; });
  if (it == zones_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - zones_.begin());
}

std::size_t NetworkTimeline::index_of(ZoneId id) const {
  auto idx = find(id);
  if (!idx) fail(ErrorKind::InvalidInput, "unknown zone id " + std::to_string(id));
  return *idx;
}

std::vector<std::size_t> NetworkTimeline::active_destinations(int month) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < zones_.size(); ++i) {
    if (zones_[i].covered(month)) out.push_back(i);
  }
  return out;
}

NetworkTimeline NetworkTimeline::with_facility(ZoneId zone, Facility type, int month) const {
  require(month >= 1, ErrorKind::InvalidInput, "activation month must be >= 1");
  NetworkTimeline copy = *this;
  Zone& z = copy.zones_[index_of(zone)];
  auto& slot = type == Facility::Station ? z.station_from : z.onstreet_from;
  if (!slot || *slot > month) slot = month;
  copy.horizon_ = std::max(copy.horizon_, month);
  return copy;
}

NetworkTimeline NetworkTimeline::with_horizon(int horizon) const {
  require(horizon >= 1, ErrorKind::InvalidInput, "horizon must be >= 1");
  NetworkTimeline copy = *this;
  copy.horizon_ = horizon;
  return copy;
}

}  // namespace adopt
