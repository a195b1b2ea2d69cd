#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adopt/destination_choice.hpp"
#include "adopt/lccm.hpp"
#include "adopt/model.hpp"

namespace adopt {

struct SynthConfig {
  std::uint64_t seed = 1;
  int n_zones = 12;
  int n_persons = 5000;  // simulated population
  int horizon = 30;
  double plane_km = 20.0;

  DcSpec dc_spec;  // empty roles: zone 1 tech firm, 2 downtown, 3 airport; hubs 1, 3, 4, 5
  DcParams dc;
  AdoptionParams truth;

  // Share of never-adopters kept in the population sample; every adopter is sampled.
  double nonadopter_sample_fraction = 1.0;

  double income_median_k = 5.0;
  double income_sigma = 0.4;
  bool zone_income = false;  // every resident gets the zone's median income
  double male_share = 0.5;
  double tech_share = 0.12;
  std::vector<double> home_zone_weights;  // empty: uniform

  double employment_median = 3000.0;
  double employment_sigma = 0.8;

  // Supply: zones 1 and 2 open stations in month 1; further zones open one by
  // one until `covered_share` of all zones are covered by month
  // `activation_share * horizon`. `onstreet_share` of them get on-street parking
  // instead of a station.
  double covered_share = 0.6;
  double activation_share = 0.7;
  double onstreet_share = 0.3;

  int trip_months = 6;        // trips simulated in the last months of the horizon
  int trips_per_month = 2;    // per active adopter

  std::optional<double> population_size;  // recorded in weights.json

  /// Defaults patterned on the published estimates, scaled to a desk-size city.
  static SynthConfig defaults();
  void validate() const;
};

struct SynthData {
  SynthConfig config;
  NetworkTimeline network;
  DcModel dc;
  std::vector<Person> persons;  // estimation sample
  std::vector<LatentClass> classes;  // latent class of each sample person
  std::vector<Trip> trips;
  PopulationFractions fractions;
  SamplingWeights weights;
  std::size_t population_adopters = 0;
  std::vector<double> population_y;  // population cumulative adopters, months 0..horizon
  ClassProbs analytic_shares{};      // mean membership probabilities over the population
  std::vector<std::string> warnings;
};

SynthData generate(const SynthConfig& config);

}  // namespace adopt
