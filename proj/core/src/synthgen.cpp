#include "adopt/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "adopt/numeric.hpp"

namespace adopt {

namespace {

enum Stream : std::uint64_t { kZones = 1, kCovariates = 2, kClass = 3, kAdoption = 4, kTrips = 5, kSample = 6 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t counter_key(std::uint64_t seed, std::uint64_t stream, std::uint64_t i, std::uint64_t j = 0) {
  return splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ i) ^ j);
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t i, std::uint64_t j) {
  return static_cast<double>(counter_key(seed, stream, i, j) >> 11) * 0x1.0p-53;
}

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream, std::uint64_t i) {
  return std::mt19937_64(counter_key(seed, stream, i));
}

std::size_t draw_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    acc += probs[k];
    if (u < acc) return k;
  }
  return probs.size() - 1;
}

}  // namespace

SynthConfig SynthConfig::defaults() {
  SynthConfig c;
  c.dc.beta_distance = -0.24;
  c.dc.alpha_logsize = 0.18;
  c.dc.delta_home = 1.55;
  c.dc.theta_onstreet = 0.34;
  c.dc.pair_tech_downtown = 1.00;
  c.dc.pair_tech_airport = 2.78;
  c.dc.asc = {{1, 1.10}, {3, 1.76}, {4, 0.61}, {5, 0.93}};

  auto& t = c.truth;
  t.imitator_membership = {1.0, -0.10, -0.3};
  t.nonadopter_membership = {2.2, -0.05, -0.9};
  t.innovator = {-3.5, 0.8, 0.8, 0.6, 0.3, 0.6};
  t.imitator = {-9.0, 1.5, 0.5, 0.45, 0.6};
  t.nonadopter = {-23.46};
  t.phi = 1.0;
  return c;
}

void SynthConfig::validate() const {
  require(n_zones >= 2, ErrorKind::InvalidInput, "synth needs at least 2 zones");
  require(n_persons >= 1, ErrorKind::InvalidInput, "synth needs at least 1 person");
  require(horizon >= 1, ErrorKind::InvalidInput, "synth horizon must be >= 1");
  require(plane_km > 0.0, ErrorKind::InvalidInput, "plane size must be > 0");
  require(nonadopter_sample_fraction > 0.0 && nonadopter_sample_fraction <= 1.0, ErrorKind::InvalidInput,
          "non-adopter sample fraction must be in (0, 1]");
  require(income_median_k > 0.0 && income_sigma >= 0.0, ErrorKind::InvalidInput,
          "income distribution needs median > 0 and sigma >= 0");
  require(employment_median > 0.0 && employment_sigma >= 0.0, ErrorKind::InvalidInput,
          "employment distribution needs median > 0 and sigma >= 0");
  for (double s : {male_share, tech_share, covered_share, activation_share, onstreet_share}) {
    require(s >= 0.0 && s <= 1.0, ErrorKind::InvalidInput, "shares must lie in [0, 1]");
  }
  require(trip_months >= 0 && trips_per_month >= 0, ErrorKind::InvalidInput, "trip counts must be >= 0");
  if (!home_zone_weights.empty()) {
    require(home_zone_weights.size() == static_cast<std::size_t>(n_zones), ErrorKind::InvalidInput,
            "home zone weights need one entry per zone");
    double sum = 0.0;
    for (double w : home_zone_weights) {
      require(w >= 0.0 && std::isfinite(w), ErrorKind::InvalidInput, "home zone weights must be >= 0");
      sum += w;
    }
    require(sum > 0.0, ErrorKind::InvalidInput, "home zone weights sum to zero");
  }
  if (population_size) require(*population_size > 0.0, ErrorKind::InvalidInput, "population size must be > 0");
  truth.validate();
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  SynthData out;
  out.config = config;
  const std::uint64_t seed = config.seed;
  const auto nz = static_cast<std::size_t>(config.n_zones);
  const int horizon = config.horizon;

  // Zones and supply timeline.
  std::vector<Zone> zones(nz);
  std::vector<double> xs(nz), ys(nz), zone_income(nz);
  {
    auto rng = substream(seed, kZones, 0);
    std::uniform_real_distribution<double> pos(0.0, config.plane_km);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t z = 0; z < nz; ++z) {
      zones[z].id = static_cast<ZoneId>(z + 1);
      xs[z] = pos(rng);
      ys[z] = pos(rng);
      zones[z].employment_density = config.employment_median * std::exp(config.employment_sigma * normal(rng));
      zone_income[z] = config.income_median_k * std::exp(config.income_sigma * normal(rng));
    }
    const auto covered = std::max<std::size_t>(
        std::min<std::size_t>(2, nz), static_cast<std::size_t>(std::lround(config.covered_share * static_cast<double>(nz))));
    const int last_open = std::max(1, static_cast<int>(std::lround(config.activation_share * horizon)));
    for (std::size_t z = 0; z < std::min<std::size_t>(2, nz); ++z) zones[z].station_from = 1;
    std::vector<std::size_t> order(nz > 2 ? nz - 2 : 0);
    std::iota(order.begin(), order.end(), std::size_t{2});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t extra = covered > 2 ? covered - 2 : 0;
    const std::size_t opened = std::min(extra, order.size());
    auto n_onstreet = static_cast<std::size_t>(std::lround(config.onstreet_share * static_cast<double>(opened)));
    if (config.onstreet_share > 0.0 && opened > 0) n_onstreet = std::max<std::size_t>(n_onstreet, 1);
    std::vector<unsigned char> onstreet(opened, 0);
    std::fill_n(onstreet.begin(), n_onstreet, 1);
    std::shuffle(onstreet.begin(), onstreet.end(), rng);
    for (std::size_t k = 0; k < opened; ++k) {
      const int month = 1 + static_cast<int>(std::lround(static_cast<double>(k + 1) / static_cast<double>(extra) *
                                                          static_cast<double>(last_open - 1)));
      auto& zone = zones[order[k]];
      if (onstreet[k]) {
        zone.onstreet_from = month;
      } else {
        zone.station_from = month;
      }
    }
  }
  std::vector<double> dist(nz * nz, 0.0);
  for (std::size_t i = 0; i < nz; ++i) {
    for (std::size_t j = 0; j < nz; ++j) {
      dist[i * nz + j] = i == j ? 0.0 : std::hypot(xs[i] - xs[j], ys[i] - ys[j]);
    }
  }
  out.network = NetworkTimeline(zones, dist, horizon);

  DcSpec spec = config.dc_spec;
  auto in_range = [&](ZoneId id) { return id >= 1 && id <= static_cast<ZoneId>(nz); };
  if (spec.hub_zones.empty() && spec.tech_zones.empty() && spec.downtown_zones.empty() && spec.airport_zones.empty()) {
    for (ZoneId id : {1, 3, 4, 5}) if (in_range(id)) spec.hub_zones.push_back(id);
    if (in_range(1)) spec.tech_zones = {1};
    if (in_range(2)) spec.downtown_zones = {2};
    if (in_range(3)) spec.airport_zones = {3};
  }
  DcParams dcp = config.dc;
  for (auto it = dcp.asc.begin(); it != dcp.asc.end();) {
    it = std::find(spec.hub_zones.begin(), spec.hub_zones.end(), it->first) == spec.hub_zones.end()
             ? dcp.asc.erase(it)
             : std::next(it);
  }
  for (ZoneId h : spec.hub_zones) dcp.asc.try_emplace(h, 0.0);
  out.dc = DcModel{spec, dcp};
  out.dc.validate();

  // Population covariates and latent classes.
  const auto n = static_cast<std::size_t>(config.n_persons);
  std::vector<Person> population(n);
  std::vector<int> cls(n);
  std::vector<double> home_w = config.home_zone_weights;
  if (home_w.empty()) home_w.assign(nz, 1.0);
  const double home_sum = std::accumulate(home_w.begin(), home_w.end(), 0.0);
  for (auto& w : home_w) w /= home_sum;
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = substream(seed, kCovariates, i);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Person& p = population[i];
    p.id = static_cast<PersonId>(i + 1);
    const std::size_t z = draw_index(home_w, unif(rng));
    p.home_zone = zones[z].id;
    const double eps = normal(rng);
    p.income_k = config.zone_income ? zone_income[z] : config.income_median_k * std::exp(config.income_sigma * eps);
    p.male = unif(rng) < config.male_share;
    p.tech_firm_employee = unif(rng) < config.tech_share;
    const auto probs = membership_probs(config.truth, p);
    for (int s = 0; s < kClassCount; ++s) out.analytic_shares[s] += probs[s] / static_cast<double>(n);
    cls[i] = static_cast<int>(draw_index(probs, counter_uniform(seed, kClass, i, 0)));
  }

  // Monthly adoption with live cumulative feedback.
  const auto field = accessibility_field(out.dc, population, out.network, config.truth.phi);
  out.population_y.assign(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (int t = 1; t <= horizon; ++t) {
    const double y_prev = out.population_y[static_cast<std::size_t>(t - 1)];
    double adopted = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      Person& p = population[i];
      if (p.adoption_month) continue;
      AdoptionContext ctx = adoption_context(field, i, t, out.population_y);
      ctx.y_prev = y_prev;
      const double v = adoption_utility(config.truth, p, ctx)[static_cast<std::size_t>(cls[i])];
      if (counter_uniform(seed, kAdoption, i, static_cast<std::uint64_t>(t)) < adoption_prob(v)) {
        p.adoption_month = t;
        adopted += 1.0;
      }
    }
    out.population_y[static_cast<std::size_t>(t)] = y_prev + adopted;
  }

  // Choice-based sample: every adopter plus a share of never-adopters.
  std::size_t pop_adopters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Person& p = population[i];
    if (p.adoption_month) {
      ++pop_adopters;
      p.stratum = Stratum::AdopterSample;
    } else {
      p.stratum = Stratum::PopulationSample;
      if (counter_uniform(seed, kSample, i, 0) >= config.nonadopter_sample_fraction) continue;
    }
    out.persons.push_back(p);
    out.classes.push_back(static_cast<LatentClass>(cls[i]));
  }
  out.population_adopters = pop_adopters;
  if (pop_adopters == 0) {
    out.warnings.push_back("no adopters generated; adoption utilities are too low for this horizon");
  }

  const auto counts = count_strata(out.persons);
  const double share = static_cast<double>(pop_adopters) / static_cast<double>(n);
  out.fractions = {share, 1.0 - share};
  if (counts.adopter_sample > 0 && counts.population_sample > 0) {
    out.weights = compute_weights(counts, out.fractions);
  } else {
    out.weights = {};
    out.warnings.push_back("one sampling stratum is empty; weights left at 1");
  }

  // Destination-choice trips for adopters in the last months.
  const int first_trip_month = std::max(1, horizon - config.trip_months + 1);
  for (std::size_t k = 0; k < out.persons.size(); ++k) {
    const Person& p = out.persons[k];
    if (!p.adoption_month) continue;
    auto rng = substream(seed, kTrips, static_cast<std::uint64_t>(p.id));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t home = out.network.index_of(p.home_zone);
    for (int t = std::max(first_trip_month, *p.adoption_month); t <= horizon; ++t) {
      const auto active = out.network.active_destinations(t);
      if (active.empty()) continue;
      std::size_t origin = home;
      if (!out.network.zone(home).covered(t)) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a : active) {
          if (out.network.distance(home, a) < best) {
            best = out.network.distance(home, a);
            origin = a;
          }
        }
      }
      const ZoneId origin_id = out.network.zone(origin).id;
      const auto probs = destination_probabilities(out.dc, out.network, p, origin_id, t);
      for (int r = 0; r < config.trips_per_month; ++r) {
        const std::size_t d = active[draw_index(probs, unif(rng))];
        out.trips.push_back({p.id, origin_id, out.network.zone(d).id, t});
      }
    }
  }
  return out;
}

}  // namespace adopt
