#include <cmath>

#include "adopt/model.hpp"

namespace adopt {

std::string_view to_string(Stratum s) noexcept {
  return s == Stratum::AdopterSample ? "adopter-sample" : "population-sample";
}

Stratum stratum_from_string(std::string_view s) {
  if (s == "adopter-sample" || s == "adopter") return Stratum::AdopterSample;
  if (s == "population-sample" || s == "population") return Stratum::PopulationSample;
  fail(ErrorKind::InvalidInput, "unknown stratum '" + std::string(s) + "'");
}

void validate_person(const Person& p, int horizon) {
  const std::string who = "person " + std::to_string(p.id);
  require(std::isfinite(p.income_k), ErrorKind::InvalidInput, who + ": income must be finite");
  if (p.adoption_month) {
    require(*p.adoption_month >= 1 && *p.adoption_month <= horizon, ErrorKind::InvalidInput,
            who + ": adoption month " + std::to_string(*p.adoption_month) +
                " outside [1, " + std::to_string(horizon) + "]");
    require(p.stratum == Stratum::AdopterSample, ErrorKind::InvalidInput,
            who + ": population-sample persons are non-adopters");
  }
}

int risk_months(const Person& person, int horizon) noexcept {
  if (person.adoption_month && *person.adoption_month <= horizon) return *person.adoption_month;
  return horizon;
}

std::vector<PanelObservation> expand_panel(const Person& person, int horizon) {
  require(horizon >= 1, ErrorKind::InvalidInput, "horizon must be >= 1");
  validate_person(person, horizon);
  const int last = risk_months(person, horizon);
  std::vector<PanelObservation> out;
  out.reserve(static_cast<std::size_t>(last));
  for (int t = 1; t <= last; ++t) {
    const bool adopt = person.adoption_month && *person.adoption_month == t;
    out.push_back({person.id, t, adopt ? Choice::Adopt : Choice::NotAdopt});
  }
  return out;
}

StratumCount count_strata(std::span<const Person> persons) {
  StratumCount c;
  for (const auto& p : persons) {
    (p.stratum == Stratum::AdopterSample ? c.adopter_sample : c.population_sample)++;
  }
  return c;
}

SamplingWeights compute_weights(const StratumCount& counts, const PopulationFractions& population) {
  require(counts.adopter_sample > 0 && counts.population_sample > 0, ErrorKind::InvalidInput,
          "both sampling strata need at least one person");
  const double wa = population.adopter_sample, wp = population.population_sample;
  require(wa > 0.0 && wa < 1.0 && wp > 0.0 && wp < 1.0, ErrorKind::InvalidInput,
          "population fractions must lie in (0, 1)");
  require(std::abs(wa + wp - 1.0) <= 1e-9, ErrorKind::InvalidInput,
          "population fractions must sum to 1");
  const double total = static_cast<double>(counts.adopter_sample + counts.population_sample);
  return {wa / (static_cast<double>(counts.adopter_sample) / total),
          wp / (static_cast<double>(counts.population_sample) / total)};
}

std::vector<double> cumulative_adopters(std::span<const Person> persons, int horizon) {
  std::vector<double> y(static_cast<std::size_t>(horizon) + 1, 0.0);
  for (const auto& p : persons) {
    if (p.adoption_month && *p.adoption_month >= 1 && *p.adoption_month <= horizon) {
      y[static_cast<std::size_t>(*p.adoption_month)] += 1.0;
    }
  }
  for (int t = 1; t <= horizon; ++t) y[t] += y[t - 1];
  return y;
}

}  // namespace adopt
