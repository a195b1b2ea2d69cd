#include "adopt/destination_choice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "adopt/numeric.hpp"

namespace adopt {

namespace {

constexpr std::size_t kFixedTerms = 6;

bool contains(const std::vector<ZoneId>& v, ZoneId id) {
  return std::find(v.begin(), v.end(), id) != v.end();
}

std::unordered_map<PersonId, std::size_t> home_index(std::span<const Person> persons,
                                                     const NetworkTimeline& network) {
  std::unordered_map<PersonId, std::size_t> out;
  out.reserve(persons.size());
  for (const auto& p : persons) out.emplace(p.id, network.index_of(p.home_zone));
  return out;
}

// One trip's choice set as a dense design matrix.
struct ChoiceSet {
  Eigen::MatrixXd x;  // alternatives x features
  Eigen::Index chosen = 0;
};

std::vector<ChoiceSet> build_choice_sets(const DcDesign& design, std::span<const Trip> trips,
                                         const NetworkTimeline& network,
                                         std::span<const Person> persons,
                                         std::size_t& single_destination) {
  const auto homes = home_index(persons, network);
  const auto k = static_cast<Eigen::Index>(design.size());
  std::vector<ChoiceSet> sets;
  sets.reserve(trips.size());
  single_destination = 0;
  for (const auto& trip : trips) {
    auto home_it = homes.find(trip.person);
    require(home_it != homes.end(), ErrorKind::InvalidInput,
            "trip references unknown person " + std::to_string(trip.person));
    const std::size_t o = network.index_of(trip.origin);
    const std::size_t d = network.index_of(trip.destination);
    require(network.zone(o).covered(trip.month) && network.zone(d).covered(trip.month),
            ErrorKind::InvalidInput,
            "trip of person " + std::to_string(trip.person) + " in month " +
                std::to_string(trip.month) + " uses an inactive zone");
    const auto active = network.active_destinations(trip.month);
    if (active.size() < 2) {
      ++single_destination;
      continue;
    }
    ChoiceSet cs;
    cs.x.resize(static_cast<Eigen::Index>(active.size()), k);
    std::vector<double> row(design.size());
    for (std::size_t a = 0; a < active.size(); ++a) {
      design.features(home_it->second, o, active[a], trip.month, row.data());
      for (Eigen::Index c = 0; c < k; ++c) cs.x(static_cast<Eigen::Index>(a), c) = row[c];
      if (active[a] == d) cs.chosen = static_cast<Eigen::Index>(a);
    }
    sets.push_back(std::move(cs));
  }
  return sets;
}

double choice_sets_loglik(const std::vector<ChoiceSet>& sets, const Eigen::VectorXd& theta,
                          Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const Eigen::Index k = theta.size();
  double ll = 0.0;
  if (grad) grad->setZero(k);
  if (hess) hess->setZero(k, k);
  for (const auto& cs : sets) {
    const Eigen::VectorXd v = cs.x * theta;
    const double lse = logsumexp(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    ll += v[cs.chosen] - lse;
    if (!grad && !hess) continue;
    const Eigen::VectorXd p = (v.array() - lse).exp().matrix();
    const Eigen::VectorXd mean = cs.x.transpose() * p;
    if (grad) *grad += cs.x.row(cs.chosen).transpose() - mean;
    if (hess) {
      *hess -= cs.x.transpose() * p.asDiagonal() * cs.x - mean * mean.transpose();
    }
  }
  return ll;
}

}  // namespace

std::vector<std::string> DcModel::names() const {
  std::vector<std::string> out = {"distance_100km",     "log_employment_density",
                                  "home",               "onstreet_parking",
                                  "pair_tech_downtown", "pair_tech_airport"};
  for (ZoneId hub : spec.hub_zones) out.push_back("asc_zone_" + std::to_string(hub));
  return out;
}

Eigen::VectorXd DcModel::pack() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(size()));
  theta << params.beta_distance, params.alpha_logsize, params.delta_home, params.theta_onstreet,
      params.pair_tech_downtown, params.pair_tech_airport,
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.hub_zones.size()));
  for (std::size_t h = 0; h < spec.hub_zones.size(); ++h) {
    auto it = params.asc.find(spec.hub_zones[h]);
    if (it != params.asc.end()) theta[static_cast<Eigen::Index>(kFixedTerms + h)] = it->second;
  }
  return theta;
}

void DcModel::unpack(const Eigen::VectorXd& theta) {
  require(theta.size() == static_cast<Eigen::Index>(size()), ErrorKind::InvalidInput,
          "destination-choice parameter vector has the wrong length");
  params.beta_distance = theta[0];
  params.alpha_logsize = theta[1];
  params.delta_home = theta[2];
  params.theta_onstreet = theta[3];
  params.pair_tech_downtown = theta[4];
  params.pair_tech_airport = theta[5];
  params.asc.clear();
  for (std::size_t h = 0; h < spec.hub_zones.size(); ++h) {
    params.asc[spec.hub_zones[h]] = theta[static_cast<Eigen::Index>(kFixedTerms + h)];
  }
}

void DcModel::validate() const {
  const Eigen::VectorXd theta = pack();
  require(theta.allFinite(), ErrorKind::InvalidInput,
          "destination-choice coefficients must be finite");
  for (const auto& [zone, value] : params.asc) {
    require(contains(spec.hub_zones, zone), ErrorKind::InvalidInput,
            "ASC given for non-hub zone " + std::to_string(zone));
    (void)value;
  }
  require(spec.size_floor > 0.0, ErrorKind::InvalidInput, "size floor must be positive");
}

DcDesign::DcDesign(const DcSpec& spec, const NetworkTimeline& network)
    : network_(&network), n_hubs_(spec.hub_zones.size()) {
  const std::size_t n = network.size();
  log_size_.resize(n);
  hub_index_.assign(n, -1);
  tech_.assign(n, 0);
  downtown_.assign(n, 0);
  airport_.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Zone& z = network.zone(i);
    log_size_[i] = std::log(std::max(z.employment_density, spec.size_floor));
    tech_[i] = contains(spec.tech_zones, z.id);
    downtown_[i] = contains(spec.downtown_zones, z.id);
    airport_[i] = contains(spec.airport_zones, z.id);
  }
  for (std::size_t h = 0; h < spec.hub_zones.size(); ++h) {
    hub_index_[network.index_of(spec.hub_zones[h])] = static_cast<int>(h);
  }
}

void DcDesign::features(std::size_t home, std::size_t origin, std::size_t dest, int month,
                        double* out) const {
  const NetworkTimeline& net = *network_;
  out[0] = net.distance(origin, dest) / 100.0;
  out[1] = log_size_[dest];
  out[2] = dest == home ? 1.0 : 0.0;
  out[3] = net.zone(dest).has_onstreet(month) ? 1.0 : 0.0;
  out[4] = (tech_[origin] && downtown_[dest]) || (downtown_[origin] && tech_[dest]) ? 1.0 : 0.0;
  out[5] = (tech_[origin] && airport_[dest]) || (airport_[origin] && tech_[dest]) ? 1.0 : 0.0;
  for (std::size_t h = 0; h < n_hubs_; ++h) out[kFixedTerms + h] = 0.0;
  if (hub_index_[dest] >= 0) out[kFixedTerms + static_cast<std::size_t>(hub_index_[dest])] = 1.0;
}

double dc_utility(const DcModel& model, const NetworkTimeline& network, const Person& person,
                  ZoneId origin, ZoneId destination, int month) {
  const std::size_t d = network.index_of(destination);
  require(network.zone(d).covered(month), ErrorKind::InvalidInput,
          "destination zone " + std::to_string(destination) + " is not active in month " +
              std::to_string(month));
  const DcDesign design(model.spec, network);
  std::vector<double> x(design.size());
  design.features(network.index_of(person.home_zone), network.index_of(origin), d, month, x.data());
  const Eigen::VectorXd theta = model.pack();
  return Eigen::Map<const Eigen::VectorXd>(x.data(), theta.size()).dot(theta);
}

std::vector<double> destination_probabilities(const DcModel& model, const NetworkTimeline& network,
                                              const Person& person, ZoneId origin, int month) {
  const auto active = network.active_destinations(month);
  require(!active.empty(), ErrorKind::InvalidState,
          "no active destinations in month " + std::to_string(month));
  const DcDesign design(model.spec, network);
  const Eigen::VectorXd theta = model.pack();
  const std::size_t home = network.index_of(person.home_zone), o = network.index_of(origin);
  std::vector<double> v(active.size()), x(design.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    design.features(home, o, active[a], month, x.data());
    v[a] = Eigen::Map<const Eigen::VectorXd>(x.data(), theta.size()).dot(theta);
  }
  const double lse = logsumexp(v);
  for (double& e : v) e = std::exp(e - lse);
  return v;
}

DcLoglik dc_loglik_full(const DcModel& model, std::span<const Trip> trips,
                        const NetworkTimeline& network, std::span<const Person> persons,
                        bool want_hessian) {
  require(!trips.empty(), ErrorKind::InvalidInput, "destination choice needs at least one trip");
  const DcDesign design(model.spec, network);
  DcLoglik out;
  const auto sets = build_choice_sets(design, trips, network, persons, out.single_destination_trips);
  const Eigen::VectorXd theta = model.pack();
  out.value = choice_sets_loglik(sets, theta, &out.gradient, want_hessian ? &out.hessian : nullptr);
  return out;
}

double dc_loglik(const DcModel& model, std::span<const Trip> trips, const NetworkTimeline& network,
                 std::span<const Person> persons) {
  return dc_loglik_full(model, trips, network, persons).value;
}

DcEstimate dc_estimate(std::span<const Trip> trips, const NetworkTimeline& network,
                       std::span<const Person> persons, const DcSpec& spec,
                       const DcEstimateConfig& config) {
  require(!trips.empty(), ErrorKind::InvalidInput, "destination choice needs at least one trip");
  DcEstimate est;
  est.model.spec = spec;
  est.model.validate();
  const DcDesign design(spec, network);
  const auto sets = build_choice_sets(design, trips, network, persons, est.single_destination_trips);
  est.trips = trips.size();
  est.names = est.model.names();
  const auto k = static_cast<Eigen::Index>(design.size());
  if (est.single_destination_trips > 0) {
    est.warnings.push_back(std::to_string(est.single_destination_trips) +
                           " trips had a single available destination and contribute 0");
  }
  require(!sets.empty(), ErrorKind::InvalidInput,
          "no trip has two or more available destinations");

  // A coefficient is identified only if its regressor varies inside some choice set.
  est.identified.assign(static_cast<std::size_t>(k), false);
  for (const auto& cs : sets) {
    for (Eigen::Index c = 0; c < k; ++c) {
      if (cs.x.col(c).maxCoeff() - cs.x.col(c).minCoeff() > 1e-12) est.identified[c] = true;
    }
  }
  std::vector<Eigen::Index> free;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (est.identified[c]) {
      free.push_back(c);
    } else {
      est.warnings.push_back("coefficient " + est.names[c] + " is not identified; held at 0");
    }
  }
  const auto m = static_cast<Eigen::Index>(free.size());
  auto expand = [&](const Eigen::VectorXd& sub) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < m; ++i) full[free[i]] = sub[i];
    return full;
  };

  Objective objective = [&](const Eigen::VectorXd& sub, Eigen::VectorXd& grad) {
    Eigen::VectorXd g;
    const double ll = choice_sets_loglik(sets, expand(sub), &g, nullptr);
    grad.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) grad[i] = g[free[i]];
    return ll;
  };
  est.null_loglik = choice_sets_loglik(sets, Eigen::VectorXd::Zero(k), nullptr, nullptr);
  // Gradient tolerance per trip so it does not tighten with sample size.
  OptimConfig optim = config.optim;
  optim.grad_scale /= static_cast<double>(std::max<std::size_t>(1, trips.size()));
  const OptimResult opt = maximize(objective, Eigen::VectorXd::Zero(m),
                                   Bounds::box(m, config.coefficient_cap), optim);
  const Eigen::VectorXd theta = expand(opt.x);
  if (!opt.converged) {
    throw NonConvergence("estimate-dc", opt.iterations,
                         std::vector<double>(theta.data(), theta.data() + theta.size()),
                         opt.grad_norm);
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (std::abs(opt.x[i]) >= config.coefficient_cap - 1e-9) {
      est.warnings.push_back("coefficient " + est.names[free[i]] +
                             " reached the cap; possible separation");
    }
  }

  Eigen::MatrixXd hess;
  Eigen::VectorXd grad;
  est.loglik = choice_sets_loglik(sets, theta, &grad, &hess);
  est.iterations = opt.iterations;
  est.grad_norm = opt.grad_norm;
  est.estimates = theta;
  est.model.unpack(theta);

  Eigen::MatrixXd info(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) info(a, b) = -hess(free[a], free[b]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  Eigen::VectorXd inv_vals = eig.eigenvalues();
  const double top = inv_vals.size() ? inv_vals.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < inv_vals.size(); ++i) {
    inv_vals[i] = inv_vals[i] > 1e-12 * std::max(top, 1.0) ? 1.0 / inv_vals[i] : 0.0;
  }
  const Eigen::MatrixXd sub_cov = eig.eigenvectors() * inv_vals.asDiagonal() * eig.eigenvectors().transpose();
  est.covariance = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) est.covariance(free[a], free[b]) = sub_cov(a, b);
  est.std_errors = est.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  est.t_stats = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index c = 0; c < k; ++c) {
    if (est.identified[c] && est.std_errors[c] > 0.0) est.t_stats[c] = theta[c] / est.std_errors[c];
  }
  return est;
}

}  // namespace adopt
