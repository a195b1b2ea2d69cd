#include "adopt/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "adopt/numeric.hpp"
#include "adopt/parallel.hpp"
#include "panel_kernels.hpp"

namespace adopt {

std::string_view to_string(BootstrapMode m) noexcept {
  switch (m) {
    case BootstrapMode::Parametric: return "parametric";
    case BootstrapMode::MonteCarlo: return "monte-carlo";
    case BootstrapMode::Resample: return "resample";
  }
  return "?";
}

BootstrapMode bootstrap_mode_from_string(std::string_view s) {
  if (s == "parametric") return BootstrapMode::Parametric;
  if (s == "monte-carlo") return BootstrapMode::MonteCarlo;
  if (s == "resample") return BootstrapMode::Resample;
  fail(ErrorKind::InvalidInput, "unknown bootstrap mode '" + std::string(s) + "'");
}

NetworkTimeline apply_scenario(const NetworkTimeline& network, const Scenario& scenario,
                               int window_end, int min_horizon) {
  require(scenario.horizon >= 0, ErrorKind::InvalidScenario,
          "scenario '" + scenario.name + "' has a negative horizon");
  NetworkTimeline out = network;
  if (min_horizon > out.horizon()) out = out.with_horizon(min_horizon);
  for (const auto& e : scenario.edits) {
    require(e.month > window_end, ErrorKind::InvalidScenario,
            "scenario '" + scenario.name + "': edit at zone " + std::to_string(e.zone) + " month " +
                std::to_string(e.month) + " is not after the estimation window (" +
                std::to_string(window_end) + ")");
    require(network.find(e.zone).has_value(), ErrorKind::InvalidScenario,
            "scenario '" + scenario.name + "': unknown zone " + std::to_string(e.zone));
    out = out.with_facility(e.zone, e.facility, e.month);
  }
  return out;
}

namespace {

constexpr std::size_t kDrawBlock = 1;

// Zone-month covariates for months start..end plus the cell of each person.
struct ForecastCells {
  int start = 1, end = 0;
  std::size_t zones = 0, cells = 0;
  std::vector<AdoptionPanel::ZoneMonth> zm;  // [zone * months + (t - start)]
  std::vector<std::size_t> person_cell;

  int months() const { return end - start + 1; }
  const AdoptionPanel::ZoneMonth& at(std::size_t zone, int t) const {
    return zm[zone * static_cast<std::size_t>(months()) + static_cast<std::size_t>(t - start)];
  }
};

ForecastCells build_cells(const ForecastPopulation& pop, const AccessibilityField& field, int end) {
  require(end >= pop.start_month, ErrorKind::InvalidInput, "forecast must end at or after its start month");
  require(field.horizon() >= end, ErrorKind::InvalidInput,
          "accessibility field ends before forecast month " + std::to_string(end));
  require(field.person_count() == pop.size(), ErrorKind::InvalidInput,
          "accessibility field was built for a different population");
  ForecastCells fc;
  fc.start = pop.start_month;
  fc.end = end;
  fc.zones = field.zone_count();
  fc.cells = fc.zones * 2;
  fc.zm.resize(fc.zones * static_cast<std::size_t>(fc.months()));
  for (std::size_t z = 0; z < fc.zones; ++z) {
    for (int t = fc.start; t <= end; ++t) {
      auto& c = fc.zm[z * static_cast<std::size_t>(fc.months()) + static_cast<std::size_t>(t - fc.start)];
      c = {field.zone_value(z, t), field.zone_covered(z, t), field.zone_station(z, t), field.zone_onstreet(z, t)};
    }
  }
  fc.person_cell.resize(pop.size());
  for (std::size_t n = 0; n < pop.size(); ++n) {
    require(field.person_ids()[n] == pop.persons[n].id, ErrorKind::InvalidInput,
            "accessibility field person order does not match the population");
    fc.person_cell[n] = field.person_zone(n) * 2 + (pop.persons[n].tech_firm_employee ? 1 : 0);
  }
  return fc;
}

double class_prob(int s, const Eigen::VectorXd& theta, const AdoptionPanel::ZoneMonth& zm, bool tech,
                  double social) {
  std::array<double, 6> x{};
  detail::class_features(s, zm, tech, social, x.data());
  double v = 0.0;
  for (int f = 0; f < detail::kFeatureCount[s]; ++f) v += theta[detail::kCoefOffset[s] + f] * x[f];
  return adoption_prob(v);
}

// Initial at-risk mass per (class, cell).
std::vector<double> initial_mass(const ForecastPopulation& pop, const ForecastCells& fc,
                                 const Eigen::MatrixXd& h) {
  std::vector<double> m(kClassCount * fc.cells, 0.0);
  for (std::size_t n = 0; n < pop.size(); ++n) {
    if (!pop.at_risk[n]) continue;
    for (int s = 0; s < kClassCount; ++s) {
      m[static_cast<std::size_t>(s) * fc.cells + fc.person_cell[n]] +=
          pop.expansion[n] * h(static_cast<Eigen::Index>(n), s);
    }
  }
  return m;
}

ExpectedSeries propagate(const Eigen::VectorXd& theta, const ForecastCells& fc, std::vector<double> mass,
                         double y_start, int end) {
  ExpectedSeries out;
  out.start_month = fc.start;
  double y = y_start;
  for (int t = fc.start; t <= end; ++t) {
    const double social = y / 100.0;
    double s_t = 0.0;
    for (int s = 0; s < kClassCount; ++s) {
      for (std::size_t c = 0; c < fc.cells; ++c) {
        double& m = mass[static_cast<std::size_t>(s) * fc.cells + c];
        if (m == 0.0) continue;
        const double p = class_prob(s, theta, fc.at(c / 2, t), c % 2 == 1, social);
        s_t += m * p;
        m *= 1.0 - p;
      }
    }
    y += s_t;
    out.S.push_back(s_t);
    out.Y.push_back(y);
  }
  return out;
}

ExpectedSeries simulate_individuals(const Eigen::VectorXd& theta, const ForecastPopulation& pop,
                                    const ForecastCells& fc, const Eigen::MatrixXd& h, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> cls(pop.size(), -1);
  for (std::size_t n = 0; n < pop.size(); ++n) {
    if (!pop.at_risk[n]) continue;
    const double u = unif(rng);
    const auto i = static_cast<Eigen::Index>(n);
    cls[n] = u < h(i, 0) ? 0 : (u < h(i, 0) + h(i, 1) ? 1 : 2);
  }
  ExpectedSeries out;
  out.start_month = fc.start;
  double y = pop.y_start;
  for (int t = fc.start; t <= fc.end; ++t) {
    const double social = y / 100.0;
    double s_t = 0.0;
    for (std::size_t n = 0; n < pop.size(); ++n) {
      if (cls[n] < 0) continue;
      const std::size_t c = fc.person_cell[n];
      const double p = class_prob(cls[n], theta, fc.at(c / 2, t), c % 2 == 1, social);
      if (unif(rng) < p) {
        s_t += pop.expansion[n];
        cls[n] = -1;
      }
    }
    y += s_t;
    out.S.push_back(s_t);
    out.Y.push_back(y);
  }
  return out;
}

Eigen::VectorXd shifted(Eigen::VectorXd theta, double c) {
  theta[param_index::kInnovatorAsc] += c;
  theta[param_index::kImitatorAsc] += c;
  return theta;
}

Eigen::MatrixXd prior_weights(const AdoptionParams& params, std::span<const Person> persons) {
  Eigen::MatrixXd h(static_cast<Eigen::Index>(persons.size()), kClassCount);
  for (std::size_t n = 0; n < persons.size(); ++n) {
    const auto p = membership_probs(params, persons[n]);
    for (int s = 0; s < kClassCount; ++s) h(static_cast<Eigen::Index>(n), s) = p[s];
  }
  return h;
}

Eigen::MatrixXd class_weights_for(const AdoptionParams& params, const ForecastPopulation& pop) {
  return pop.history ? posterior(params, *pop.history) : prior_weights(params, pop.persons);
}

}  // namespace

ForecastPopulation make_population(const AdoptionParams& params, std::vector<Person> persons,
                                   const DcModel& dc, const NetworkTimeline& network,
                                   const SamplingWeights& weights, int start_month,
                                   std::optional<double> population_size) {
  require(start_month >= 1, ErrorKind::InvalidInput, "forecast start month must be >= 1");
  require(!persons.empty(), ErrorKind::InvalidInput, "forecast population is empty");
  if (population_size) {
    require(*population_size > 0.0, ErrorKind::InvalidInput, "population size must be > 0");
  }
  ForecastPopulation pop;
  pop.start_month = start_month;
  const double scale = population_size ? *population_size / static_cast<double>(persons.size()) : 1.0;
  pop.expansion.reserve(persons.size());
  pop.at_risk.reserve(persons.size());
  for (const Person& p : persons) {
    const double e = weights(p.stratum) * scale;
    const bool adopted_before = p.adoption_month && *p.adoption_month < start_month;
    pop.expansion.push_back(e);
    pop.at_risk.push_back(adopted_before ? 0 : 1);
    if (adopted_before) pop.y_start += e;
  }
  pop.persons = std::move(persons);
  if (start_month > 1) {
    require(network.horizon() >= start_month - 1, ErrorKind::InvalidInput,
            "network timeline ends before the forecast history");
    const auto field = accessibility_field(dc, pop.persons, network, params.phi);
    pop.history.emplace(pop.persons, field, cumulative_adopters(pop.persons, start_month - 1),
                        start_month - 1, weights);
    pop.class_weights = posterior(params, *pop.history);
  } else {
    pop.class_weights = prior_weights(params, pop.persons);
  }
  return pop;
}

double observed_new_adopters(const ForecastPopulation& population, int month) {
  double s = 0.0;
  for (std::size_t n = 0; n < population.size(); ++n) {
    const auto& am = population.persons[n].adoption_month;
    if (am && *am == month) s += population.expansion[n];
  }
  return s;
}

ExpectedSeries enumerate_forecast(const AdoptionParams& params, const ForecastPopulation& population,
                                  const AccessibilityField& field, int end_month) {
  const auto fc = build_cells(population, field, end_month);
  return propagate(params.to_vector(), fc, initial_mass(population, fc, population.class_weights),
                   population.y_start, end_month);
}

ExpectedSeries enumerate_forecast(const AdoptionParams& params, const ForecastPopulation& population,
                                  const DcModel& dc, const NetworkTimeline& network, int end_month) {
  require(network.horizon() >= end_month, ErrorKind::InvalidInput,
          "network timeline ends before forecast month " + std::to_string(end_month));
  return enumerate_forecast(params, population, accessibility_field(dc, population.persons, network, params.phi),
                            end_month);
}

CalibrationResult calibrate_ascs(const AdoptionParams& params, const ForecastPopulation& population,
                                 const AccessibilityField& field, double target,
                                 const CalibrationConfig& config) {
  require(std::isfinite(target) && target >= 0.0, ErrorKind::InvalidInput, "calibration target must be >= 0");
  require(config.lower < config.upper, ErrorKind::InvalidInput, "calibration bracket is empty");
  const int month = population.start_month;
  const auto fc = build_cells(population, field, month);
  const auto mass = initial_mass(population, fc, population.class_weights);
  const Eigen::VectorXd theta = params.to_vector();
  auto predict = [&](double c) { return propagate(shifted(theta, c), fc, mass, population.y_start, month).S[0]; };

  CalibrationResult out;
  out.target = target;
  const double tight = 1e-9 * std::max(1.0, target);
  double f0 = predict(0.0);
  if (std::abs(f0 - target) <= tight) {
    out.params = params;
    out.achieved = f0;
    return out;
  }
  const double flo = predict(config.lower), fhi = predict(config.upper);
  if (!(flo <= target && target <= fhi)) {
    throw CalibrationFailure(target, flo, fhi);
  }
  double lo = config.lower, hi = config.upper, c = 0.0, fc_val = f0;
  for (out.iterations = 0; out.iterations < config.max_iter; ++out.iterations) {
    c = 0.5 * (lo + hi);
    fc_val = predict(c);
    if (std::abs(fc_val - target) <= tight || hi - lo < 1e-14) break;
    (fc_val < target ? lo : hi) = c;
  }
  require(std::abs(fc_val - target) <= config.tolerance, ErrorKind::CalibrationFailure,
          "calibration bisection ended " + std::to_string(std::abs(fc_val - target)) + " adopters from target");
  out.shift = c;
  out.achieved = fc_val;
  out.params = AdoptionParams::from_vector(shifted(theta, c), params.phi);
  return out;
}

Eigen::MatrixXd nearest_psd(const Eigen::MatrixXd& m, bool* clipped) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  Eigen::VectorXd ev = eig.eigenvalues();
  const double scale = ev.size() ? std::max(1.0, ev.cwiseAbs().maxCoeff()) : 1.0;
  bool any = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale) any = true;
    ev[i] = std::max(ev[i], 0.0);
  }
  if (clipped) *clipped = any;
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<ScenarioInput> prepare_scenarios(const DcModel& dc, double phi,
                                             const ForecastPopulation& population,
                                             const NetworkTimeline& network,
                                             std::span<const Scenario> scenarios, int window_end) {
  std::vector<ScenarioInput> out;
  for (const auto& sc : scenarios) {
    const int end = population.start_month + sc.horizon;
    const auto net = apply_scenario(network, sc, window_end, end);
    out.push_back({sc.name, accessibility_field(dc, population.persons, net, phi), end});
  }
  return out;
}

ForecastResult bootstrap_forecast(const AdoptionParams& params, const Eigen::MatrixXd& covariance,
                                  const ForecastPopulation& population,
                                  std::span<const ScenarioInput> scenarios,
                                  const BootstrapConfig& config) {
  require(config.draws >= 1, ErrorKind::InvalidInput, "bootstrap needs at least one draw");
  const Eigen::Index k = AdoptionParams::kSize;
  require(covariance.rows() == k && covariance.cols() == k, ErrorKind::InvalidInput,
          "covariance must be 18 x 18");
  require(covariance.allFinite(), ErrorKind::InvalidInput, "covariance has non-finite entries");
  if (config.mode == BootstrapMode::Resample) {
    require(population.history.has_value(), ErrorKind::InvalidInput,
            "resample bootstrap needs an observed history (start month > 1)");
  }
  ForecastResult result;
  result.draws = config.draws;
  result.seed = config.seed;

  bool clipped = false;
  const Eigen::MatrixXd psd = nearest_psd(covariance, &clipped);
  if (clipped) result.warnings.push_back("covariance was not positive semi-definite; projected to nearest PSD");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(psd);
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

  std::vector<ForecastCells> cells;
  for (const auto& sc : scenarios) cells.push_back(build_cells(population, sc.field, sc.end_month));

  const Eigen::VectorXd theta_hat = params.to_vector();
  const auto draws = static_cast<std::size_t>(config.draws);
  // series[d][scenario]
  std::vector<std::vector<ExpectedSeries>> series(draws, std::vector<ExpectedSeries>(scenarios.size()));

  // Strata for the resampling mode.
  std::vector<std::size_t> adopter_rows, population_rows;
  for (std::size_t n = 0; n < population.size(); ++n) {
    (population.persons[n].stratum == Stratum::AdopterSample ? adopter_rows : population_rows).push_back(n);
  }

  for_each_block(draws, kDrawBlock, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t d = begin; d < end; ++d) {
      std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                        static_cast<std::uint32_t>(d), static_cast<std::uint32_t>(d >> 32)};
      std::mt19937_64 rng(seq);
      Eigen::VectorXd theta = theta_hat;
      if (config.mode == BootstrapMode::Resample) {
        std::vector<std::size_t> rows;
        rows.reserve(population.size());
        for (const auto* stratum : {&adopter_rows, &population_rows}) {
          if (stratum->empty()) continue;
          std::uniform_int_distribution<std::size_t> pick(0, stratum->size() - 1);
          for (std::size_t i = 0; i < stratum->size(); ++i) rows.push_back((*stratum)[pick(rng)]);
        }
        EmConfig em = config.resample_em;
        em.restarts = 1;
        theta = em_estimate(population.history->subset(rows), em, params).params.to_vector();
      } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        Eigen::VectorXd z(k);
        for (Eigen::Index j = 0; j < k; ++j) z[j] = normal(rng);
        theta += root * z;
      }
      theta[param_index::kNonAdopter] =
          std::clamp(theta[param_index::kNonAdopter], kNonAdopterAscMin, kNonAdopterAscMax);
      const auto draw_params = AdoptionParams::from_vector(theta, params.phi);
      const Eigen::MatrixXd h = config.redraw_membership ? class_weights_for(draw_params, population)
                                                         : population.class_weights;
      const Eigen::VectorXd theta_c = shifted(theta, config.shift);
      for (std::size_t s = 0; s < scenarios.size(); ++s) {
        if (config.mode == BootstrapMode::MonteCarlo) {
          series[d][s] = simulate_individuals(theta_c, population, cells[s], h, rng);
        } else {
          series[d][s] = propagate(theta_c, cells[s], initial_mass(population, cells[s], h), population.y_start,
                                   cells[s].end);
        }
      }
    }
  });

  const Eigen::VectorXd theta_point = shifted(theta_hat, config.shift);
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto& fc = cells[s];
    ScenarioForecast sf;
    sf.name = scenarios[s].name;
    sf.start_month = fc.start;
    const auto months = static_cast<std::size_t>(fc.months());
    for (int t = fc.start; t <= fc.end; ++t) sf.months.push_back(t);
    const auto point = propagate(theta_point, fc, initial_mass(population, fc, population.class_weights),
                                 population.y_start, fc.end);
    sf.point_S = point.S;
    sf.point_Y = point.Y;
    sf.draws_S.resize(static_cast<Eigen::Index>(draws), static_cast<Eigen::Index>(months));
    sf.draws_Y.resize(static_cast<Eigen::Index>(draws), static_cast<Eigen::Index>(months));
    for (std::size_t d = 0; d < draws; ++d) {
      for (std::size_t m = 0; m < months; ++m) {
        sf.draws_S(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) = series[d][s].S[m];
        sf.draws_Y(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(m)) = series[d][s].Y[m];
      }
    }
    for (auto& q : sf.quantile_S) q.resize(months);
    for (auto& q : sf.quantile_Y) q.resize(months);
    std::vector<double> col(draws);
    for (std::size_t m = 0; m < months; ++m) {
      const auto mi = static_cast<Eigen::Index>(m);
      for (int which = 0; which < 2; ++which) {
        const Eigen::MatrixXd& mat = which == 0 ? sf.draws_S : sf.draws_Y;
        auto& quant = which == 0 ? sf.quantile_S : sf.quantile_Y;
        double sum = 0.0;
        for (std::size_t d = 0; d < draws; ++d) {
          col[d] = mat(static_cast<Eigen::Index>(d), mi);
          sum += col[d];
        }
        (which == 0 ? sf.mean_S : sf.mean_Y).push_back(sum / static_cast<double>(draws));
        std::sort(col.begin(), col.end());
        for (std::size_t q = 0; q < kForecastQuantiles.size(); ++q) {
          quant[q][m] = quantile_sorted(col, kForecastQuantiles[q]);
        }
      }
    }
    result.scenarios.push_back(std::move(sf));
  }
  return result;
}

HoldoutResult holdout_validate(std::span<const Person> persons, const NetworkTimeline& network,
                               const DcModel& dc, const SamplingWeights& weights, double phi,
                               const HoldoutConfig& config) {
  require(config.split_month >= 1 && config.split_month < config.calib_month &&
              config.calib_month <= config.horizon,
          ErrorKind::InvalidInput, "hold-out needs 1 <= split < calibration month <= horizon");
  require(network.horizon() >= config.horizon, ErrorKind::InvalidInput,
          "network timeline ends before the hold-out horizon");
  HoldoutResult out;
  const auto field = accessibility_field(dc, persons, network, phi);
  const AdoptionPanel panel(persons, field, cumulative_adopters(persons, config.split_month),
                            config.split_month, weights);
  out.estimate = em_estimate(panel, config.em);
  out.estimate.params.phi = phi;
  out.warnings = out.estimate.warnings;

  const auto pop = make_population(out.estimate.params, {persons.begin(), persons.end()}, dc, network, weights,
                                   config.calib_month, config.population_size);
  const double target = observed_new_adopters(pop, config.calib_month);
  out.calibration = calibrate_ascs(out.estimate.params, pop, field, target);

  BootstrapConfig bc = config.bootstrap;
  bc.shift = out.calibration.shift;
  const std::vector<ScenarioInput> inputs = {{"holdout", field, config.horizon}};
  const auto fr = bootstrap_forecast(out.estimate.params, out.estimate.covariance, pop, inputs, bc);
  out.warnings.insert(out.warnings.end(), fr.warnings.begin(), fr.warnings.end());
  const auto& sf = fr.scenarios.front();
  int box = 0, whisker = 0;
  for (std::size_t m = 0; m < sf.months.size(); ++m) {
    if (sf.months[m] <= config.calib_month) continue;
    HoldoutMonth hm;
    hm.month = sf.months[m];
    hm.actual = observed_new_adopters(pop, hm.month);
    hm.mean = sf.mean_S[m];
    hm.point = sf.point_S[m];
    for (std::size_t q = 0; q < kForecastQuantiles.size(); ++q) hm.quantiles[q] = sf.quantile_S[q][m];
    hm.in_box = hm.quantiles[1] <= hm.actual && hm.actual <= hm.quantiles[3];
    hm.in_whiskers = hm.quantiles[0] <= hm.actual && hm.actual <= hm.quantiles[4];
    box += hm.in_box;
    whisker += hm.in_whiskers;
    out.months.push_back(hm);
  }
  if (!out.months.empty()) {
    out.box_coverage = static_cast<double>(box) / static_cast<double>(out.months.size());
    out.whisker_coverage = static_cast<double>(whisker) / static_cast<double>(out.months.size());
  }
  return out;
}

}  // namespace adopt
