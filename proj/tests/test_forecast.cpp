#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "adopt/error.hpp"
#include "adopt/forecast.hpp"
#include "adopt/numeric.hpp"
#include "adopt/parallel.hpp"
#include "adopt/synthgen.hpp"
#include "fixtures.hpp"

using namespace adopt;

namespace {

// Same logit hazard in every class and month.
AdoptionParams constant_hazard(double h) {
  AdoptionParams p;
  const double v = std::log(h / (1 - h));
  p.innovator.asc = v;
  p.imitator.asc = v;
  p.nonadopter.asc = v;
  return p;
}

// Positive supply, accessibility and social coefficients.
AdoptionParams positive_params() {
  AdoptionParams p;
  p.imitator_membership = {2.0, 0.0, 0.0};
  p.nonadopter_membership = {3.0, 0.0, 0.0};
  p.innovator = {-5.0, 0.8, 1.38, 0.5, 0.3, 0.2};
  p.imitator = {-6.5, 1.0, 0.68, 0.4, 0.14};
  p.nonadopter.asc = -23.46;
  return p;
}

struct City {
  SynthData data;
  ForecastPopulation pop;
  AccessibilityField field;
};

City city(std::uint64_t seed, const AdoptionParams& params, int start) {
  auto cfg = fixtures::small_synth(seed);
  auto data = generate(cfg);
  auto pop = make_population(params, data.persons, data.dc, data.network, data.weights, start);
  auto field = accessibility_field(data.dc, data.persons, data.network, params.phi);
  return {std::move(data), std::move(pop), std::move(field)};
}

}  // namespace

TEST_CASE("scenario application") {
  auto net = fixtures::network({{0, 0, 100, 1}, {1, 0, 100}, {2, 0, 100}}, 10);
  const Scenario base{"base", {}, 6};
  CHECK(apply_scenario(net, base, 10) == net);

  const Scenario one{"one", {{2, Facility::Station, 11}}, 6};
  const auto added = apply_scenario(net, one, 10, 16);
  CHECK(added.active_destinations(11).size() == net.active_destinations(11).size() + 1);
  CHECK(added.active_destinations(10).size() == 1);
  CHECK(net.active_destinations(11).size() == 1);
  CHECK(added.horizon() == 16);

  const Scenario both{"both", {{2, Facility::Station, 11}, {2, Facility::OnStreet, 12}}, 6};
  const auto merged = apply_scenario(net, both, 10, 16);
  CHECK(merged.active_destinations(12).size() == 2);
  CHECK(merged.zone(1).has_station(12));
  CHECK(merged.zone(1).has_onstreet(12));

  const Scenario early{"early", {{2, Facility::Station, 10}}, 6};
  try {
    apply_scenario(net, early, 10);
    FAIL("expected an invalid scenario");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidScenario);
  }
  const Scenario unknown{"unknown", {{9, Facility::Station, 12}}, 6};
  CHECK_THROWS_AS(apply_scenario(net, unknown, 10), Error);
}

TEST_CASE("sample enumeration: geometric survival and bookkeeping") {
  auto net = fixtures::network({{0, 0, 100, 1}}, 12);
  DcModel dc;
  const std::vector<Person> one{fixtures::person(1, 1)};
  const double h = 0.07;
  const auto params = constant_hazard(h);
  const auto pop = make_population(params, one, dc, net, SamplingWeights{}, 1);
  const auto fc = enumerate_forecast(params, pop, dc, net, 12);
  REQUIRE(fc.Y.size() == 12);
  for (int t = 1; t <= 12; ++t) {
    CHECK(fc.Y[static_cast<std::size_t>(t - 1)] == doctest::Approx(1 - std::pow(1 - h, t)).epsilon(1e-12));
  }

  const auto off = []() {
    AdoptionParams p;
    p.innovator.asc = p.imitator.asc = p.nonadopter.asc = -30.0;
    return p;
  }();
  auto c = city(21, off, 1);
  const auto none = enumerate_forecast(off, c.pop, c.field, 18);
  for (double s : none.S) CHECK(s < 1e-8);

  auto live = city(22, positive_params(), 7);
  const auto fc2 = enumerate_forecast(positive_params(), live.pop, live.field, 18);
  double prev = live.pop.y_start;
  for (std::size_t k = 0; k < fc2.S.size(); ++k) {
    CHECK(fc2.S[k] >= 0.0);
    CHECK(fc2.Y[k] == doctest::Approx(prev + fc2.S[k]).epsilon(1e-14));
    prev = fc2.Y[k];
  }
}

TEST_CASE("calibration") {
  const auto params = positive_params();
  auto c = city(23, params, 10);
  const double natural = enumerate_forecast(params, c.pop, c.field, 10).S[0];

  const auto same = calibrate_ascs(params, c.pop, c.field, natural);
  CHECK(std::abs(same.shift) < 1e-6);

  const double target = natural * 1.7 + 3.0;
  const auto cal = calibrate_ascs(params, c.pop, c.field, target);
  CHECK(std::abs(cal.achieved - target) <= 0.5);
  CHECK(enumerate_forecast(cal.params, c.pop, c.field, 10).S[0] == doctest::Approx(cal.achieved));
  const auto again = calibrate_ascs(cal.params, c.pop, c.field, target);
  CHECK(std::abs(again.shift) < 1e-6);

  const auto doubled = calibrate_ascs(params, c.pop, c.field, 2 * target);
  CHECK(doubled.shift > cal.shift);

  // Brute-force scan of the shift agrees with bisection.
  double crossing = std::nan("");
  double prev_c = -10.0, prev_v = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double s = -10.0 + 0.01 * i;
    auto p = params;
    p.innovator.asc += s;
    p.imitator.asc += s;
    const double v = enumerate_forecast(p, c.pop, c.field, 10).S[0];
    if (i > 0 && prev_v < target && v >= target) crossing = 0.5 * (s + prev_c);
    CHECK((i == 0 || v >= prev_v));
    prev_c = s;
    prev_v = v;
  }
  CHECK(std::abs(cal.shift - crossing) <= 0.01);

  try {
    calibrate_ascs(params, c.pop, c.field, 0.0);
    FAIL("expected a calibration failure");
  } catch (const CalibrationFailure& e) {
    CHECK(e.achieved_low() > 0.0);
    CHECK(e.target() == 0.0);
  }
}

TEST_CASE("adding a station never lowers expected adoption") {
  const auto params = positive_params();
  auto cfg = fixtures::small_synth(24);
  const auto data = generate(cfg);
  const int window = cfg.horizon;
  const auto pop = make_population(params, data.persons, data.dc, data.network, data.weights, window + 1);
  std::vector<Scenario> scenarios{{"base", {}, 8}};
  for (const auto& z : data.network.zones()) {
    if (!z.covered(window)) {
      scenarios.push_back({"station-" + std::to_string(z.id), {{z.id, Facility::Station, window + 1}}, 8});
    }
  }
  REQUIRE(scenarios.size() >= 2);
  const auto inputs = prepare_scenarios(data.dc, params.phi, pop, data.network, scenarios, window);
  const auto base = enumerate_forecast(params, pop, inputs[0].field, inputs[0].end_month);
  for (std::size_t s = 1; s < inputs.size(); ++s) {
    const auto alt = enumerate_forecast(params, pop, inputs[s].field, inputs[s].end_month);
    for (std::size_t k = 0; k < base.Y.size(); ++k) CHECK(alt.Y[k] >= base.Y[k] - 1e-9);
    CHECK(alt.S[0] >= base.S[0] - 1e-9);
  }
}

TEST_CASE("bootstrap: collapse, nesting and determinism") {
  const auto params = positive_params();
  auto c = city(25, params, 10);
  const std::vector<Scenario> scenarios{{"base", {}, 8}};
  const auto inputs = prepare_scenarios(c.data.dc, params.phi, c.pop, c.data.network, scenarios, 9);

  BootstrapConfig one;
  one.draws = 1;
  const auto flat = bootstrap_forecast(params, Eigen::MatrixXd::Zero(18, 18), c.pop, inputs, one);
  const auto& f = flat.scenarios[0];
  for (std::size_t m = 0; m < f.months.size(); ++m) {
    for (std::size_t q = 0; q < 5; ++q) CHECK(f.quantile_Y[q][m] == doctest::Approx(f.point_Y[m]).epsilon(1e-12));
  }

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(18, 18);
  for (Eigen::Index j = 6; j < 17; ++j) cov(j, j) = 0.01;
  BootstrapConfig bc;
  bc.draws = 200;
  bc.seed = 77;
  set_thread_count(1);
  const auto a = bootstrap_forecast(params, cov, c.pop, inputs, bc);
  set_thread_count(4);
  const auto b = bootstrap_forecast(params, cov, c.pop, inputs, bc);
  set_thread_count(default_thread_count());
  CHECK(a.scenarios[0].draws_Y == b.scenarios[0].draws_Y);
  CHECK(a.scenarios[0].quantile_S == b.scenarios[0].quantile_S);

  const auto& s = a.scenarios[0];
  for (std::size_t m = 0; m < s.months.size(); ++m) {
    for (std::size_t q = 1; q < 5; ++q) {
      CHECK(s.quantile_Y[q - 1][m] <= s.quantile_Y[q][m]);
      CHECK(s.quantile_S[q - 1][m] <= s.quantile_S[q][m]);
    }
    for (Eigen::Index d = 0; d < s.draws_Y.rows(); ++d) {
      if (m > 0) CHECK(s.draws_Y(d, static_cast<Eigen::Index>(m)) >= s.draws_Y(d, static_cast<Eigen::Index>(m - 1)));
    }
  }

  Eigen::MatrixXd bad = cov;
  bad(6, 6) = -0.5;
  const auto clipped = bootstrap_forecast(params, bad, c.pop, inputs, bc);
  CHECK_FALSE(clipped.warnings.empty());

  for (auto mode : {BootstrapMode::MonteCarlo, BootstrapMode::Resample}) {
    BootstrapConfig mc = bc;
    mc.draws = 20;
    mc.mode = mode;
    mc.resample_em.max_iter = 20;
    const auto r1 = bootstrap_forecast(params, cov, c.pop, inputs, mc);
    const auto r2 = bootstrap_forecast(params, cov, c.pop, inputs, mc);
    CHECK(r1.scenarios[0].draws_Y == r2.scenarios[0].draws_Y);
  }
  CHECK(bootstrap_mode_from_string(to_string(BootstrapMode::MonteCarlo)) == BootstrapMode::MonteCarlo);
}

TEST_CASE("bootstrap quantiles match a high-draw reference on two persons") {
  auto net = fixtures::network({{0, 0, 100, 1}, {2, 0, 300, std::nullopt, 1}}, 6);
  DcModel dc;
  dc.params.alpha_logsize = 0.3;
  const std::vector<Person> two{fixtures::person(1, 1, std::nullopt, true), fixtures::person(2, 2)};
  auto params = positive_params();
  params.innovator.asc = -2.0;
  params.imitator.asc = -3.0;
  const auto pop = make_population(params, two, dc, net, SamplingWeights{}, 1);
  const std::vector<Scenario> scenarios{{"base", {}, 4}};
  const auto inputs = prepare_scenarios(dc, params.phi, pop, net, scenarios, 0);

  // Only the adoption coefficients vary, so class weights stay fixed.
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(18, 18);
  for (Eigen::Index j = 6; j < 17; ++j) cov(j, j) = 0.04;
  BootstrapConfig bc;
  bc.draws = 1000;
  bc.seed = 5;
  bc.redraw_membership = false;
  const auto got = bootstrap_forecast(params, cov, pop, inputs, bc).scenarios[0];

  // Independent reference: direct draws and enumeration.
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z(0.0, 1.0);
  const int months = static_cast<int>(got.months.size());
  std::vector<std::vector<double>> ref(static_cast<std::size_t>(months));
  for (int d = 0; d < 100000; ++d) {
    Eigen::VectorXd th = params.to_vector();
    for (Eigen::Index j = 6; j < 17; ++j) th[j] += 0.2 * z(rng);
    const auto fc = enumerate_forecast(AdoptionParams::from_vector(th, params.phi), pop, inputs[0].field,
                                       inputs[0].end_month);
    for (int m = 0; m < months; ++m) ref[static_cast<std::size_t>(m)].push_back(fc.Y[static_cast<std::size_t>(m)]);
  }
  for (int m = 0; m < months; ++m) {
    auto& r = ref[static_cast<std::size_t>(m)];
    std::sort(r.begin(), r.end());
    for (std::size_t q = 0; q < 5; ++q) {
      const double level = kForecastQuantiles[q];
      // Reference CDF at the 1000-draw quantile, compared on the probability scale.
      const double cdf = static_cast<double>(std::lower_bound(r.begin(), r.end(), got.quantile_Y[q][static_cast<std::size_t>(m)]) - r.begin()) /
                         static_cast<double>(r.size());
      CHECK(std::abs(cdf - level) <= 4.5 * std::sqrt(level * (1 - level) / 1000.0) + 1e-3);
    }
  }
}

TEST_CASE("hold-out: single-step band and determinism") {
  auto cfg = fixtures::small_synth(26);
  const auto data = generate(cfg);
  HoldoutConfig hc;
  hc.split_month = 15;
  hc.calib_month = 17;
  hc.horizon = 18;
  hc.em.restarts = 2;
  hc.bootstrap.draws = 200;
  const auto r = holdout_validate(data.persons, data.network, data.dc, data.weights, 1.0, hc);
  REQUIRE(r.months.size() == 1);
  CHECK(r.months[0].month == 18);
  for (std::size_t q = 1; q < 5; ++q) CHECK(r.months[0].quantiles[q - 1] <= r.months[0].quantiles[q]);
  CHECK(r.box_coverage >= 0.0);
  CHECK(r.whisker_coverage <= 1.0);

  const auto again = holdout_validate(data.persons, data.network, data.dc, data.weights, 1.0, hc);
  CHECK(again.months[0].quantiles == r.months[0].quantiles);
  CHECK(again.calibration.shift == r.calibration.shift);

  HoldoutConfig bad = hc;
  bad.calib_month = 15;
  CHECK_THROWS_AS(holdout_validate(data.persons, data.network, data.dc, data.weights, 1.0, bad), Error);
}

TEST_CASE("nearest PSD projection") {
  Eigen::MatrixXd m(2, 2);
  m << 1.0, 2.0, 2.0, 1.0;
  bool clipped = false;
  const auto p = nearest_psd(m, &clipped);
  CHECK(clipped);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-12);
  const auto same = nearest_psd(Eigen::MatrixXd::Identity(3, 3), &clipped);
  CHECK_FALSE(clipped);
  CHECK(same.isApprox(Eigen::MatrixXd::Identity(3, 3)));
}
