#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "adopt/destination_choice.hpp"
#include "adopt/error.hpp"
#include "adopt/numeric.hpp"
#include "fixtures.hpp"

using namespace adopt;

namespace {

DcModel table1_model() {
  DcModel m;
  m.params.beta_distance = -0.24;
  m.params.alpha_logsize = 0.18;
  m.params.delta_home = 1.55;
  m.params.theta_onstreet = 0.34;
  return m;
}

// Draws trips from the model itself; origins are home zones.
std::vector<Trip> simulate_trips(const DcModel& model, const NetworkTimeline& net,
                                 const std::vector<Person>& persons, std::size_t n, std::mt19937_64& rng) {
  std::vector<Trip> trips;
  std::uniform_int_distribution<std::size_t> who(0, persons.size() - 1);
  for (std::size_t k = 0; k < n; ++k) {
    const Person& p = persons[who(rng)];
    const auto probs = destination_probabilities(model, net, p, p.home_zone, 1);
    const auto active = net.active_destinations(1);
    std::discrete_distribution<std::size_t> pick(probs.begin(), probs.end());
    trips.push_back({p.id, p.home_zone, net.zone(active[pick(rng)]).id, 1});
  }
  return trips;
}

}  // namespace

TEST_CASE("destination utility at zero and at reported coefficients") {
  auto net = fixtures::network({{0, 0, std::exp(1.0), 1}, {100, 0, std::exp(1.0), 1, 1}}, 2);
  const auto traveller = fixtures::person(1, 2);
  DcModel zero;
  CHECK(dc_utility(zero, net, traveller, 2, 1, 1) == 0.0);
  CHECK(dc_utility(zero, net, traveller, 1, 2, 2) == 0.0);

  const auto m = table1_model();
  // 100 km away, ln(size) = 1, not home, no on-street.
  CHECK(dc_utility(m, net, fixtures::person(1, 2), 2, 1, 1) == doctest::Approx(-0.06).epsilon(1e-12));
  // Same distance and size, but the home zone with on-street parking.
  CHECK(dc_utility(m, net, fixtures::person(1, 2), 1, 2, 1) == doctest::Approx(1.83).epsilon(1e-12));

  auto sparse = fixtures::network({{0, 0, 100, 1}, {1, 0, 100, 5}}, 6);
  CHECK_THROWS_AS(dc_utility(m, sparse, traveller, 1, 2, 3), Error);
}

TEST_CASE("employment below the floor is clamped") {
  auto net = fixtures::network({{0, 0, 0.0, 1}, {0, 0, 0.5, 1}}, 1);
  DcModel m;
  m.params.alpha_logsize = 2.0;
  CHECK(dc_utility(m, net, fixtures::person(1, 1), 1, 2, 1) == 0.0);
  CHECK(dc_utility(m, net, fixtures::person(1, 2), 2, 1, 1) == 0.0);
}

TEST_CASE("dc_loglik on tiny choice sets") {
  auto net = fixtures::network({{0, 0, 100, 1}, {0, 0, 100, 1}}, 1);
  const std::vector<Person> persons{fixtures::person(1, 1)};
  const std::vector<Trip> one{{1, 1, 2, 1}};
  DcModel m;
  CHECK(dc_loglik(m, one, net, persons) == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  // Chosen V = 1 via the home dummy; the other destination has V = 0.
  m.params.delta_home = 1.0;
  const std::vector<Trip> home{{1, 2, 1, 1}};
  CHECK(dc_loglik(m, home, net, persons) == doctest::Approx(-std::log1p(std::exp(-1.0))).epsilon(1e-14));
  CHECK(dc_loglik(m, home, net, persons) == doctest::Approx(-0.3133).epsilon(1e-4));

  std::mt19937_64 rng(3);
  auto big = fixtures::random_network(rng, 5);
  std::vector<Person> people;
  for (int i = 0; i < 30; ++i) people.push_back(fixtures::person(i + 1, 1 + i % 5));
  const auto model = fixtures::random_dc(rng, fixtures::dc_spec());
  auto trips = simulate_trips(model, big, people, 200, rng);
  const double once = dc_loglik(model, trips, big, people);
  CHECK(once <= 0.0);
  auto twice = trips;
  twice.insert(twice.end(), trips.begin(), trips.end());
  CHECK(dc_loglik(model, twice, big, people) == doctest::Approx(2 * once).epsilon(1e-12));
}

TEST_CASE("single-destination trips contribute zero and are counted") {
  auto net = fixtures::network({{0, 0, 100, 1}, {5, 0, 100, 3}}, 3);
  const std::vector<Person> persons{fixtures::person(1, 1)};
  const std::vector<Trip> trips{{1, 1, 1, 1}, {1, 1, 2, 3}};
  DcModel m;
  const auto ll = dc_loglik_full(m, trips, net, persons);
  CHECK(ll.single_destination_trips == 1);
  CHECK(ll.value == doctest::Approx(std::log(0.5)));
}

TEST_CASE("dc_loglik gradient matches central differences") {
  std::mt19937_64 rng(17);
  auto net = fixtures::random_network(rng, 5);
  std::vector<Person> people;
  for (int i = 0; i < 20; ++i) people.push_back(fixtures::person(i + 1, 1 + i % 5, std::nullopt, i % 2 == 0));
  const auto spec = fixtures::dc_spec();
  auto model = fixtures::random_dc(rng, spec);
  const auto trips = simulate_trips(model, net, people, 150, rng);
  for (int rep = 0; rep < 5; ++rep) {
    auto at = fixtures::random_dc(rng, spec);
    const auto full = dc_loglik_full(at, trips, net, people, true);
    const auto numeric = numeric_gradient(
        [&](const Eigen::VectorXd& th) {
          DcModel m = at;
          m.unpack(th);
          return dc_loglik(m, trips, net, people);
        },
        at.pack(), 1e-5);
    const double rel = (full.gradient - numeric).norm() / std::max(1.0, numeric.norm());
    CHECK(rel < 1e-6);
    // Hessian of an MNL log-likelihood is negative semi-definite.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(full.hessian);
    CHECK(eig.eigenvalues().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("probabilities sum to one and logsum shifts with a constant") {
  std::mt19937_64 rng(5);
  auto net = fixtures::random_network(rng, 7);
  const auto spec = fixtures::dc_spec();
  for (int rep = 0; rep < 20; ++rep) {
    auto m = fixtures::random_dc(rng, spec);
    const auto p = fixtures::person(1, 1 + rep % 7, std::nullopt, rep % 2 == 0);
    const auto probs = destination_probabilities(m, net, p, 1 + (rep * 3) % 7, 1);
    CHECK(std::abs(std::accumulate(probs.begin(), probs.end(), 0.0) - 1.0) < 1e-12);
  }
  std::vector<double> v{0.3, -1.2, 4.0, 2.5};
  const double base = logsumexp(v);
  for (auto& x : v) x += 123.25;
  CHECK(std::abs(logsumexp(v) - (base + 123.25)) < 1e-12);
}

TEST_CASE("accessibility logsum closed forms") {
  DcModel m;
  const auto p = fixtures::person(1, 1);
  auto one = fixtures::network({{0, 0, 100, 1}, {1, 0, 100}}, 1);
  m.params.delta_home = 0.7;
  CHECK(accessibility_logsum(m, one, p, 1, 1) == doctest::Approx(0.7).epsilon(1e-14));

  DcModel zero;
  auto two = fixtures::network({{0, 0, 100, 1}, {0, 0, 100, 1}}, 1);
  CHECK(accessibility_logsum(zero, two, p, 1, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  // K identical destinations with V = alpha ln(size): v + ln K, cross-checked by direct summation.
  for (int k : {1, 3, 8}) {
    std::vector<fixtures::ZoneSpec> z(static_cast<std::size_t>(k + 1), {0, 0, 50.0, 1});
    z[0].station.reset();
    z[0].employment = 1.0;
    auto net = fixtures::network(z, 1);
    DcModel s;
    s.params.alpha_logsize = 0.4;
    const double v = 0.4 * std::log(50.0);
    double brute = 0.0;
    for (int j = 0; j < k; ++j) brute += std::exp(v);
    const double got = accessibility_logsum(s, net, p, 1, 1);
    CHECK(got == doctest::Approx(v + std::log(k)).epsilon(1e-13));
    CHECK(got == doctest::Approx(std::log(brute)).epsilon(1e-13));
  }

  auto empty = fixtures::network({{0, 0, 100, 4}, {1, 0, 100}}, 4);
  CHECK_THROWS_AS(accessibility_logsum(zero, empty, p, 1, 2), Error);
}

TEST_CASE("accessibility imputation formula") {
  CHECK(accessibility_impute(3.2, 1.0, 2.5) == 3.2);
  CHECK(accessibility_impute(2.0, 4.0, 1.0) == doctest::Approx(0.5));
  CHECK(accessibility_impute(2.0, 37.0, 0.0) == 2.0);
  CHECK(accessibility_impute(2.0, 0.25, 1.5) == 2.0);
  CHECK(accessibility_impute(-1.0, 10.0, 1.0) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(accessibility_impute(1.0, -1.0, 1.0), Error);
}

TEST_CASE("accessibility field: coverage, imputation and temporal locality") {
  // Zone 1 station from month 1, zone 2 on-street from month 4, zone 3 never covered.
  auto net = fixtures::network({{0, 0, 200, 1}, {3, 0, 80, std::nullopt, 4}, {0, 4, 120}}, 6);
  DcModel m;
  m.params.alpha_logsize = 0.2;
  m.params.delta_home = 1.0;
  m.params.theta_onstreet = 0.3;
  m.params.beta_distance = -0.5;
  const std::vector<Person> persons{fixtures::person(1, 1), fixtures::person(2, 2), fixtures::person(3, 3)};
  const auto field = accessibility_field(m, persons, net, 1.0);

  // Month 1: a single station in person 1's home zone.
  CHECK(field.value(0, 1) == doctest::Approx(accessibility_logsum(m, net, persons[0], 1, 1)));
  CHECK(field.value(0, 1) == doctest::Approx(1.0 + 0.2 * std::log(200.0)));
  CHECK(field.covered(0, 1));
  CHECK_FALSE(field.covered(1, 3));
  CHECK(field.covered(1, 4));
  CHECK_FALSE(field.covered(2, 6));

  // Person 3 imputes from the nearest covered zone; zone 1 is 4 km away, zone 2 is 5 km away.
  const double src = accessibility_logsum(m, net, persons[2], 1, 5);
  CHECK(field.value(2, 5) == doctest::Approx(src / 4.0));

  // Covered-zone values never fall while supply grows.
  for (int t = 2; t <= 6; ++t) CHECK(field.value(0, t) >= field.value(0, t - 1) - 1e-12);

  // A station added at month 5 leaves months 1..4 untouched.
  const auto later = accessibility_field(m, persons, net.with_facility(3, Facility::Station, 5), 1.0);
  for (std::size_t n = 0; n < 3; ++n) {
    for (int t = 1; t <= 4; ++t) CHECK(later.value(n, t) == field.value(n, t));
  }
  CHECK(later.covered(2, 5));
}

TEST_CASE("imputation ties go to the lowest zone id") {
  auto net = fixtures::network({{0, 0, 100}, {-3, 0, 50, 1}, {3, 0, 900, 1}}, 1);
  DcModel m;
  m.params.alpha_logsize = 0.5;
  m.params.delta_home = 2.0;
  const std::vector<Person> persons{fixtures::person(1, 1), fixtures::person(2, 2), fixtures::person(3, 3)};
  const auto field = accessibility_field(m, persons, net, 1.0);
  const double from2 = accessibility_logsum(m, net, persons[0], 2, 1);
  CHECK(field.value(0, 1) == doctest::Approx(from2 / 3.0));
}

TEST_CASE("logsum monotonicity on random three-zone networks") {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> month(1, 5);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<fixtures::ZoneSpec> z(3);
    std::uniform_real_distribution<double> pos(0, 20);
    for (auto& s : z) {
      s.x = pos(rng);
      s.y = pos(rng);
      s.employment = 10 + 10 * pos(rng);
      s.station = month(rng);
    }
    auto net = fixtures::network(z, 5);
    auto m = fixtures::random_dc(rng, fixtures::dc_spec());
    const auto p = fixtures::person(1, 1);
    for (int t = 2; t <= 5; ++t) {
      if (!net.zone(0).covered(t - 1)) continue;
      CHECK(accessibility_logsum(m, net, p, 1, t) >= accessibility_logsum(m, net, p, 1, t - 1) - 1e-12);
    }
  }
}

TEST_CASE("dc_estimate recovers simulated coefficients") {
  std::mt19937_64 rng(101);
  auto net = fixtures::random_network(rng, 5);
  std::vector<Person> people;
  for (int i = 0; i < 200; ++i) people.push_back(fixtures::person(i + 1, 1 + i % 5, std::nullopt, i % 3 == 0));
  DcModel truth{fixtures::dc_spec(), {}};
  truth.params.beta_distance = -2.0;
  truth.params.alpha_logsize = 0.3;
  truth.params.delta_home = 1.2;
  truth.params.theta_onstreet = 0.4;
  truth.params.pair_tech_downtown = 0.6;
  truth.params.pair_tech_airport = -0.5;
  truth.params.asc = {{1, 0.5}, {3, -0.3}};

  int within = 0, total = 0;
  for (int rep = 0; rep < 3; ++rep) {
    const auto trips = simulate_trips(truth, net, people, 2000, rng);
    const auto est = dc_estimate(trips, net, people, truth.spec);
    CHECK(est.grad_norm < 1e-6);
    CHECK(est.loglik >= est.null_loglik);
    const Eigen::VectorXd t = truth.pack();
    for (Eigen::Index k = 0; k < t.size(); ++k) {
      if (!est.identified[static_cast<std::size_t>(k)]) continue;
      ++total;
      if (std::abs(est.estimates[k] - t[k]) <= 3 * est.std_errors[k]) ++within;
      CHECK(est.t_stats[k] == doctest::Approx(est.estimates[k] / est.std_errors[k]));
    }
  }
  // Each coordinate misses with probability 0.27%.
  CHECK(within >= total - 1);
}

TEST_CASE("dc_estimate on symmetric uniform choices gives zero coefficients") {
  auto net = fixtures::network({{0, 0, 100, 1}, {1, 0, 100, 1}}, 1);
  std::vector<Person> people;
  std::vector<Trip> trips;
  // Every (home, origin, destination) combination appears equally often.
  for (int i = 0; i < 96; ++i) {
    people.push_back(fixtures::person(i + 1, 1 + i % 2));
    trips.push_back({i + 1, 1 + (i / 2) % 2, 1 + (i / 4) % 2, 1});
  }
  DcSpec spec;
  const auto est = dc_estimate(trips, net, people, spec);
  for (Eigen::Index k = 0; k < est.estimates.size(); ++k) {
    if (est.identified[static_cast<std::size_t>(k)]) CHECK(std::abs(est.estimates[k]) < 1e-6);
  }
  CHECK(est.loglik == doctest::Approx(96 * std::log(0.5)));

  // t = estimate / se; -0.24 with t = -2.06 pairs with se = 0.1165.
  CHECK(-0.24 / -2.06 == doctest::Approx(0.1165).epsilon(1e-3));
}

TEST_CASE("perfect separation is capped with a warning") {
  auto net = fixtures::network({{0, 0, 100, 1}, {1, 0, 100, 1}}, 1);
  std::vector<Person> people;
  std::vector<Trip> trips;
  for (int i = 0; i < 40; ++i) {
    people.push_back(fixtures::person(i + 1, 1 + i % 2));
    trips.push_back({i + 1, 1, 1 + i % 2, 1});
  }
  DcSpec spec;
  const auto est = dc_estimate(trips, net, people, spec);
  CHECK(std::abs(est.model.params.delta_home) <= 30.0 + 1e-9);
  CHECK_FALSE(est.warnings.empty());
}
