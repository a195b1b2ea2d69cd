#include "adopt/lccm.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "adopt/numeric.hpp"
#include "adopt/parallel.hpp"
#include "panel_kernels.hpp"

namespace adopt {

std::string_view to_string(LatentClass c) noexcept {
  switch (c) {
    case LatentClass::Innovator: return "innovator";
    case LatentClass::Imitator: return "imitator";
    case LatentClass::NonAdopter: return "non-adopter";
  }
  return "unknown";
}

Eigen::VectorXd AdoptionParams::to_vector() const {
  Eigen::VectorXd v(kSize);
  v << imitator_membership.asc, imitator_membership.income, imitator_membership.male,
      nonadopter_membership.asc, nonadopter_membership.income, nonadopter_membership.male,
      innovator.asc, innovator.tech, innovator.station, innovator.onstreet,
      innovator.access_covered, innovator.access_uncovered, imitator.asc, imitator.tech,
      imitator.access_covered, imitator.access_uncovered, imitator.social, nonadopter.asc;
  return v;
}

AdoptionParams AdoptionParams::from_vector(const Eigen::VectorXd& v, double phi) {
  require(v.size() == kSize, ErrorKind::InvalidInput, "adoption parameter vector must have 18 entries");
  AdoptionParams p;
  p.imitator_membership = {v[0], v[1], v[2]};
  p.nonadopter_membership = {v[3], v[4], v[5]};
  p.innovator = {v[6], v[7], v[8], v[9], v[10], v[11]};
  p.imitator = {v[12], v[13], v[14], v[15], v[16]};
  p.nonadopter = {v[17]};
  p.phi = phi;
  return p;
}

const std::array<std::string_view, AdoptionParams::kSize>& AdoptionParams::names() {
  static const std::array<std::string_view, kSize> n = {
      "membership.imitator.asc",      "membership.imitator.income",
      "membership.imitator.male",     "membership.nonadopter.asc",
      "membership.nonadopter.income", "membership.nonadopter.male",
      "innovator.asc",                "innovator.tech",
      "innovator.station",            "innovator.onstreet",
      "innovator.access_covered",     "innovator.access_uncovered",
      "imitator.asc",                 "imitator.tech",
      "imitator.access_covered",      "imitator.access_uncovered",
      "imitator.social",              "nonadopter.asc"};
  return n;
}

void AdoptionParams::validate() const {
  require(to_vector().allFinite(), ErrorKind::InvalidInput, "adoption parameters must be finite");
  require(phi >= 0.0 && std::isfinite(phi), ErrorKind::InvalidInput,
          "friction exponent phi must be >= 0");
}

Bounds adoption_bounds(double cap) {
  Bounds b = Bounds::box(AdoptionParams::kSize, cap);
  b.lower[param_index::kNonAdopter] = kNonAdopterAscMin;
  b.upper[param_index::kNonAdopter] = kNonAdopterAscMax;
  return b;
}

ClassProbs membership_probs(const AdoptionParams& params, const Person& person) {
  const double male = person.male ? 1.0 : 0.0;
  const auto& m2 = params.imitator_membership;
  const auto& m3 = params.nonadopter_membership;
  const std::array<double, 3> v = {0.0, m2.asc + m2.income * person.income_k + m2.male * male,
                                   m3.asc + m3.income * person.income_k + m3.male * male};
  const double lse = logsumexp(v);
  return {std::exp(v[0] - lse), std::exp(v[1] - lse), std::exp(v[2] - lse)};
}

ClassProbs adoption_utility(const AdoptionParams& params, const Person& person,
                            const AdoptionContext& ctx) {
  const double tech = person.tech_firm_employee ? 1.0 : 0.0;
  const auto& c1 = params.innovator;
  const auto& c2 = params.imitator;
  const double v1 = c1.asc + c1.tech * tech + c1.station * (ctx.station ? 1.0 : 0.0) +
                    c1.onstreet * (ctx.onstreet ? 1.0 : 0.0) +
                    ctx.access * (ctx.covered ? c1.access_covered : c1.access_uncovered);
  const double v2 = c2.asc + c2.tech * tech +
                    ctx.access * (ctx.covered ? c2.access_covered : c2.access_uncovered) +
                    ctx.y_prev / 100.0 * c2.social;
  return {v1, v2, params.nonadopter.asc};
}

double adoption_prob(double utility) {
  return std::clamp(sigmoid(utility), 1e-300, 1.0 - 1e-16);
}

AdoptionContext adoption_context(const AccessibilityField& field, std::size_t person_index,
                                 int month, std::span<const double> y_series) {
  require(month >= 1 && static_cast<std::size_t>(month) < y_series.size() + 1,
          ErrorKind::InvalidInput, "cumulative adopter series does not cover month " +
                                      std::to_string(month - 1));
  const std::size_t z = field.person_zone(person_index);
  return {field.zone_value(z, month), field.zone_covered(z, month), field.zone_station(z, month),
          field.zone_onstreet(z, month), y_series[static_cast<std::size_t>(month - 1)]};
}

ClassProbs panel_class_loglik(const AdoptionParams& params, const Person& person,
                              std::size_t person_index, const AccessibilityField& field,
                              std::span<const double> y_series, int window_end) {
  ClassProbs ll{0.0, 0.0, 0.0};
  const int last = risk_months(person, window_end);
  for (int t = 1; t <= last; ++t) {
    const auto v = adoption_utility(params, person, adoption_context(field, person_index, t, y_series));
    const bool adopt = person.adoption_month && *person.adoption_month == t;
    for (int s = 0; s < kClassCount; ++s) {
      ll[s] += adopt ? log_sigmoid(v[s]) : log_sigmoid(-v[s]);
    }
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Aggregated panel

AdoptionPanel::AdoptionPanel(std::span<const Person> persons, const AccessibilityField& field,
                             std::vector<double> y_series, int window_end,
                             const SamplingWeights& weights)
    : zones_(field.zone_count()), window_(window_end) {
  require(window_end >= 1, ErrorKind::InvalidInput, "estimation window must be >= 1 month");
  require(window_end <= field.horizon(), ErrorKind::InvalidInput,
          "accessibility field does not cover the estimation window");
  require(y_series.size() >= static_cast<std::size_t>(window_end), ErrorKind::InvalidInput,
          "cumulative adopter series must cover months 0..window-1");
  require(persons.size() == field.person_count(), ErrorKind::InvalidInput,
          "accessibility field was built for a different person list");
  y_series_ = std::move(y_series);
  rows_.reserve(persons.size());
  for (std::size_t i = 0; i < persons.size(); ++i) {
    const Person& p = persons[i];
    require(field.person_ids()[i] == p.id, ErrorKind::InvalidInput,
            "accessibility field person order does not match");
    Row r;
    r.id = p.id;
    r.income = p.income_k;
    r.male = p.male;
    r.tech = p.tech_firm_employee;
    r.zone = field.person_zone(i);
    r.exit_month = risk_months(p, window_end);
    r.adopted = p.adoption_month && *p.adoption_month <= window_end;
    r.weight = weights(p.stratum);
    observations_ += static_cast<std::size_t>(r.exit_month);
    total_weight_ += r.weight;
    rows_.push_back(r);
  }
  zone_months_.resize(zones_ * static_cast<std::size_t>(window_));
  for (std::size_t z = 0; z < zones_; ++z) {
    for (int t = 1; t <= window_; ++t) {
      auto& zm = zone_months_[z * static_cast<std::size_t>(window_) + static_cast<std::size_t>(t - 1)];
      zm.access = field.zone_value(z, t);
      zm.covered = field.zone_covered(z, t);
      zm.station = field.zone_station(z, t);
      zm.onstreet = field.zone_onstreet(z, t);
    }
  }
}

AdoptionPanel AdoptionPanel::scaled(double factor) const {
  AdoptionPanel copy = *this;
  copy.total_weight_ = 0.0;
  for (auto& r : copy.rows_) {
    r.weight *= factor;
    copy.total_weight_ += r.weight;
  }
  return copy;
}

AdoptionPanel AdoptionPanel::subset(std::span<const std::size_t> rows) const {
  AdoptionPanel copy = *this;
  copy.rows_.clear();
  copy.rows_.reserve(rows.size());
  copy.total_weight_ = 0.0;
  copy.observations_ = 0;
  for (std::size_t i : rows) {
    const Row& r = rows_.at(i);
    copy.rows_.push_back(r);
    copy.total_weight_ += r.weight;
    copy.observations_ += static_cast<std::size_t>(r.exit_month);
  }
  return copy;
}

namespace detail {

CellTable build_cell_table(const Eigen::VectorXd& theta, const AdoptionPanel& panel) {
  CellTable t;
  t.cells = panel.zone_count() * 2;
  t.window = panel.window();
  const std::size_t n = static_cast<std::size_t>(kClassCount) * t.cells * static_cast<std::size_t>(t.window);
  t.log_adopt.resize(n);
  t.log_not.resize(n);
  t.prob.resize(n);
  t.prefix_not.resize(static_cast<std::size_t>(kClassCount) * t.cells * static_cast<std::size_t>(t.window + 1));
  std::array<double, 6> x{};
  for (int s = 0; s < kClassCount; ++s) {
    const auto coef = theta.segment(kCoefOffset[s], kFeatureCount[s]);
    for (std::size_t c = 0; c < t.cells; ++c) {
      const std::size_t zone = c / 2;
      const bool tech = c % 2 == 1;
      double run = 0.0;
      t.prefix_not[t.prefix_at(s, c, 0)] = 0.0;
      for (int m = 1; m <= t.window; ++m) {
        class_features(s, panel.zone_month(zone, m), tech, panel.social_regressor(m), x.data());
        double v = 0.0;
        for (int f = 0; f < kFeatureCount[s]; ++f) v += coef[f] * x[f];
        const std::size_t i = t.at(s, c, m);
        t.log_adopt[i] = log_sigmoid(v);
        t.log_not[i] = log_sigmoid(-v);
        t.prob[i] = sigmoid(v);
        run += t.log_not[i];
        t.prefix_not[t.prefix_at(s, c, m)] = run;
      }
    }
  }
  return t;
}

CellMass accumulate_mass(const AdoptionPanel& panel, const Eigen::MatrixXd& omega,
                         std::size_t cells) {
  const int w = panel.window();
  const std::size_t n = static_cast<std::size_t>(kClassCount) * cells * static_cast<std::size_t>(w);
  CellMass m;
  m.at_risk.assign(n, 0.0);
  m.adopted.assign(n, 0.0);
  // Exits per month first, then suffix sums give the at-risk mass.
  std::vector<double> exits(n, 0.0);
  auto idx = [&](int s, std::size_t c, int t) {
    return (static_cast<std::size_t>(s) * cells + c) * static_cast<std::size_t>(w) +
           static_cast<std::size_t>(t - 1);
  };
  const auto& rows = panel.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.exit_month <= 0) continue;
    const std::size_t c = detail::cell_of(r);
    for (int s = 0; s < kClassCount; ++s) {
      const double o = omega(static_cast<Eigen::Index>(i), s);
      exits[idx(s, c, r.exit_month)] += o;
      if (r.adopted) m.adopted[idx(s, c, r.exit_month)] += o;
    }
  }
  for (int s = 0; s < kClassCount; ++s) {
    for (std::size_t c = 0; c < cells; ++c) {
      double run = 0.0;
      for (int t = w; t >= 1; --t) {
        run += exits[idx(s, c, t)];
        m.at_risk[idx(s, c, t)] = run;
      }
    }
  }
  return m;
}

void add_class_gradient(int s, const AdoptionPanel& panel, const CellTable& table,
                        const CellMass& mass, Eigen::VectorXd& grad) {
  std::array<double, 6> x{};
  for (std::size_t c = 0; c < table.cells; ++c) {
    for (int t = 1; t <= table.window; ++t) {
      const std::size_t i = table.at(s, c, t);
      const double a = mass.at_risk[i];
      if (a == 0.0) continue;
      const double resid = mass.adopted[i] - a * table.prob[i];
      class_features(s, panel.zone_month(c / 2, t), c % 2 == 1, panel.social_regressor(t), x.data());
      for (int f = 0; f < kFeatureCount[s]; ++f) grad[kCoefOffset[s] + f] += resid * x[f];
    }
  }
}

double class_objective(int s, const AdoptionPanel&, const CellTable& table, const CellMass& mass) {
  double q = 0.0;
  for (std::size_t c = 0; c < table.cells; ++c) {
    for (int t = 1; t <= table.window; ++t) {
      const std::size_t i = table.at(s, c, t);
      const double a = mass.at_risk[i];
      if (a == 0.0) continue;
      const double b = mass.adopted[i];
      q += b * table.log_adopt[i] + (a - b) * table.log_not[i];
    }
  }
  return q;
}

}  // namespace detail

namespace {

constexpr std::size_t kBlock = 512;

std::array<double, 3> log_membership(const Eigen::VectorXd& theta, const AdoptionPanel::Row& r) {
  const double male = r.male ? 1.0 : 0.0;
  std::array<double, 3> v = {0.0, theta[0] + theta[1] * r.income + theta[2] * male,
                             theta[3] + theta[4] * r.income + theta[5] * male};
  const double lse = logsumexp(v);
  for (double& e : v) e -= lse;
  return v;
}

// Shared E-step pass: returns sum_n w_n log L_n and fills the posterior.
double mixture_pass(const Eigen::VectorXd& theta, const AdoptionPanel& panel,
                    const detail::CellTable& table, Eigen::MatrixXd* post, bool tempered) {
  const auto& rows = panel.rows();
  const std::size_t blocks = block_count(rows.size(), kBlock);
  std::vector<double> partial(blocks, 0.0);
  if (post) post->resize(static_cast<Eigen::Index>(rows.size()), kClassCount);
  for_each_block(rows.size(), kBlock, [&](std::size_t begin, std::size_t end, std::size_t b) {
    double acc = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const auto& r = rows[i];
      const auto lm = log_membership(theta, r);
      const std::size_t c = detail::cell_of(r);
      std::array<double, 3> joint{};
      for (int s = 0; s < kClassCount; ++s) joint[s] = lm[s] + table.loglik(s, c, r.exit_month, r.adopted);
      const double lse = logsumexp(joint);
      acc += r.weight * lse;
      if (post) {
        if (tempered) {
          std::array<double, 3> tj{};
          for (int s = 0; s < kClassCount; ++s) tj[s] = lm[s] + r.weight * (joint[s] - lm[s]);
          const double tl = logsumexp(tj);
          for (int s = 0; s < kClassCount; ++s) (*post)(static_cast<Eigen::Index>(i), s) = std::exp(tj[s] - tl);
        } else {
          for (int s = 0; s < kClassCount; ++s) (*post)(static_cast<Eigen::Index>(i), s) = std::exp(joint[s] - lse);
        }
      }
    }
    partial[b] = acc;
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace

Eigen::MatrixXd class_logliks(const AdoptionParams& params, const AdoptionPanel& panel) {
  const Eigen::VectorXd theta = params.to_vector();
  const auto table = detail::build_cell_table(theta, panel);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(panel.size()), kClassCount);
  const auto& rows = panel.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    for (int s = 0; s < kClassCount; ++s) {
      out(static_cast<Eigen::Index>(i), s) = table.loglik(s, detail::cell_of(r), r.exit_month, r.adopted);
    }
  }
  return out;
}

Eigen::MatrixXd membership_matrix(const AdoptionParams& params, const AdoptionPanel& panel) {
  const Eigen::VectorXd theta = params.to_vector();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(panel.size()), kClassCount);
  const auto& rows = panel.rows();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto lm = log_membership(theta, rows[i]);
    for (int s = 0; s < kClassCount; ++s) out(static_cast<Eigen::Index>(i), s) = std::exp(lm[s]);
  }
  return out;
}

double weighted_loglik(const AdoptionParams& params, const AdoptionPanel& panel) {
  const Eigen::VectorXd theta = params.to_vector();
  const auto table = detail::build_cell_table(theta, panel);
  return mixture_pass(theta, panel, table, nullptr, false);
}

double weighted_loglik(const AdoptionParams& params, const AdoptionPanel& panel,
                       Eigen::VectorXd& gradient) {
  const Eigen::VectorXd theta = params.to_vector();
  const auto table = detail::build_cell_table(theta, panel);
  Eigen::MatrixXd post;
  const double ll = mixture_pass(theta, panel, table, &post, false);

  gradient = Eigen::VectorXd::Zero(AdoptionParams::kSize);
  const auto& rows = panel.rows();
  Eigen::MatrixXd omega(static_cast<Eigen::Index>(rows.size()), kClassCount);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto lm = log_membership(theta, r);
    const double z[3] = {1.0, r.income, r.male ? 1.0 : 0.0};
    for (int s = 1; s < kClassCount; ++s) {
      const double resid = r.weight * (post(static_cast<Eigen::Index>(i), s) - std::exp(lm[s]));
      for (int k = 0; k < 3; ++k) gradient[(s - 1) * 3 + k] += resid * z[k];
    }
    for (int s = 0; s < kClassCount; ++s) {
      omega(static_cast<Eigen::Index>(i), s) = r.weight * post(static_cast<Eigen::Index>(i), s);
    }
  }
  const auto mass = detail::accumulate_mass(panel, omega, table.cells);
  for (int s = 0; s < kClassCount; ++s) detail::add_class_gradient(s, panel, table, mass, gradient);
  return ll;
}

Eigen::MatrixXd posterior(const AdoptionParams& params, const AdoptionPanel& panel, bool tempered) {
  const Eigen::VectorXd theta = params.to_vector();
  const auto table = detail::build_cell_table(theta, panel);
  Eigen::MatrixXd post;
  mixture_pass(theta, panel, table, &post, tempered);
  return post;
}

Eigen::MatrixXd person_scores(const AdoptionParams& params, const AdoptionPanel& panel) {
  const Eigen::VectorXd theta = params.to_vector();
  const auto table = detail::build_cell_table(theta, panel);
  Eigen::MatrixXd post;
  mixture_pass(theta, panel, table, &post, false);

  // Prefix sums over months of P x per (class, cell), feature-major.
  const int w = panel.window();
  std::array<std::vector<double>, kClassCount> prefix;
  std::array<double, 6> x{};
  for (int s = 0; s < kClassCount; ++s) {
    const int nf = detail::kFeatureCount[s];
    prefix[s].assign(table.cells * static_cast<std::size_t>(w + 1) * static_cast<std::size_t>(nf), 0.0);
    for (std::size_t c = 0; c < table.cells; ++c) {
      for (int t = 1; t <= w; ++t) {
        detail::class_features(s, panel.zone_month(c / 2, t), c % 2 == 1, panel.social_regressor(t), x.data());
        const double p = table.prob[table.at(s, c, t)];
        const std::size_t base = (c * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(t)) * nf;
        const std::size_t prev = base - static_cast<std::size_t>(nf);
        for (int f = 0; f < nf; ++f) prefix[s][base + f] = prefix[s][prev + f] + p * x[f];
      }
    }
  }

  const auto& rows = panel.rows();
  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), AdoptionParams::kSize);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto n = static_cast<Eigen::Index>(i);
    const auto lm = log_membership(theta, r);
    const double z[3] = {1.0, r.income, r.male ? 1.0 : 0.0};
    for (int s = 1; s < kClassCount; ++s) {
      const double resid = post(n, s) - std::exp(lm[s]);
      for (int k = 0; k < 3; ++k) scores(n, (s - 1) * 3 + k) = resid * z[k];
    }
    if (r.exit_month <= 0) continue;
    const std::size_t c = detail::cell_of(r);
    for (int s = 0; s < kClassCount; ++s) {
      const int nf = detail::kFeatureCount[s];
      const std::size_t base = (c * static_cast<std::size_t>(w + 1) + static_cast<std::size_t>(r.exit_month)) * nf;
      if (r.adopted) {
        detail::class_features(s, panel.zone_month(r.zone, r.exit_month), r.tech,
                               panel.social_regressor(r.exit_month), x.data());
      } else {
        x.fill(0.0);
      }
      for (int f = 0; f < nf; ++f) {
        scores(n, detail::kCoefOffset[s] + f) = post(n, s) * (x[f] - prefix[s][base + f]);
      }
    }
  }
  return scores;
}

double null_loglik(const AdoptionPanel& panel) {
  double ll = 0.0;
  for (const auto& r : panel.rows()) ll += r.weight * r.exit_month * std::log(0.5);
  return ll;
}

FitStats fit_stats(double final_loglik, int n_params, std::size_t n_observations, double null_ll) {
  require(n_params >= 0, ErrorKind::InvalidInput, "parameter count must be >= 0");
  require(n_observations >= static_cast<std::size_t>(n_params), ErrorKind::InvalidInput,
          "need at least as many observations as parameters");
  FitStats f;
  f.loglik = final_loglik;
  f.null_loglik = null_ll;
  f.parameters = n_params;
  f.observations = n_observations;
  f.aic = -2.0 * final_loglik + 2.0 * n_params;
  f.bic = -2.0 * final_loglik + n_params * std::log(static_cast<double>(n_observations));
  f.rho_bar2 = std::isfinite(null_ll) && null_ll != 0.0
                   ? 1.0 - (final_loglik - n_params) / null_ll
                   : std::numeric_limits<double>::quiet_NaN();
  return f;
}

// ---------------------------------------------------------------------------
// Single-class baseline

namespace {

int mnl_feature_count(MnlCovariates c) { return c == MnlCovariates::Union ? 7 : 6; }

void mnl_features(MnlCovariates c, const AdoptionPanel::ZoneMonth& zm, bool tech, double social,
                  double* x) {
  detail::class_features(0, zm, tech, social, x);
  if (c == MnlCovariates::Union) x[6] = social;
}

struct MnlCells {
  std::vector<double> at_risk, adopted;  // [c * window + t-1]
};

MnlCells mnl_cells(const AdoptionPanel& panel) {
  Eigen::MatrixXd omega(static_cast<Eigen::Index>(panel.size()), kClassCount);
  for (std::size_t i = 0; i < panel.size(); ++i) {
    omega.row(static_cast<Eigen::Index>(i)).setConstant(panel.rows()[i].weight);
  }
  const auto mass = detail::accumulate_mass(panel, omega, panel.zone_count() * 2);
  const std::size_t n = panel.zone_count() * 2 * static_cast<std::size_t>(panel.window());
  MnlCells out;
  out.at_risk.assign(mass.at_risk.begin(), mass.at_risk.begin() + static_cast<std::ptrdiff_t>(n));
  out.adopted.assign(mass.adopted.begin(), mass.adopted.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

double mnl_objective(MnlCovariates cov, const AdoptionPanel& panel, const MnlCells& cells,
                     const Eigen::VectorXd& beta, Eigen::VectorXd* grad, Eigen::MatrixXd* hess) {
  const int nf = mnl_feature_count(cov);
  const int w = panel.window();
  if (grad) grad->setZero(nf);
  if (hess) hess->setZero(nf, nf);
  std::array<double, 7> xs{};
  double ll = 0.0;
  for (std::size_t c = 0; c < panel.zone_count() * 2; ++c) {
    for (int t = 1; t <= w; ++t) {
      const std::size_t i = c * static_cast<std::size_t>(w) + static_cast<std::size_t>(t - 1);
      const double a = cells.at_risk[i];
      if (a == 0.0) continue;
      const double b = cells.adopted[i];
      mnl_features(cov, panel.zone_month(c / 2, t), c % 2 == 1, panel.social_regressor(t), xs.data());
      const Eigen::Map<const Eigen::VectorXd> x(xs.data(), nf);
      const double v = beta.dot(x);
      ll += b * log_sigmoid(v) + (a - b) * log_sigmoid(-v);
      const double p = sigmoid(v);
      if (grad) *grad += (b - a * p) * x;
      if (hess) *hess -= a * p * (1.0 - p) * x * x.transpose();
    }
  }
  return ll;
}

}  // namespace

MnlResult mnl_baseline_estimate(const AdoptionPanel& panel, MnlCovariates covariates,
                                const OptimConfig& optim) {
  MnlResult res;
  res.covariates = covariates;
  res.names = {"asc", "tech", "station", "onstreet", "access_covered", "access_uncovered"};
  if (covariates == MnlCovariates::Union) res.names.push_back("social");
  const int nf = mnl_feature_count(covariates);
  const auto cells = mnl_cells(panel);

  // Start the constant at the pooled hazard.
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < cells.at_risk.size(); ++i) {
    a += cells.at_risk[i];
    b += cells.adopted[i];
  }
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(nf);
  if (a > 0.0) x0[0] = std::clamp(std::log(std::max(b, 1e-12) / std::max(a - b, 1e-12)), -30.0, 30.0);

  Objective f = [&](const Eigen::VectorXd& beta, Eigen::VectorXd& g) {
    return mnl_objective(covariates, panel, cells, beta, &g, nullptr);
  };
  OptimConfig cfg = optim;
  if (panel.total_weight() > 0.0) cfg.grad_scale = 1.0 / panel.total_weight();
  const auto opt = maximize(f, x0, Bounds::box(nf, 50.0), cfg);
  res.coefficients = opt.x;
  res.iterations = opt.iterations;
  res.converged = opt.converged;
  Eigen::MatrixXd hess;
  res.loglik = mnl_objective(covariates, panel, cells, opt.x, nullptr, &hess);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-hess);
  Eigen::VectorXd inv = eig.eigenvalues();
  const double top = inv.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] > 1e-12 * std::max(1.0, top) ? 1.0 / inv[i] : 0.0;
  res.covariance = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  res.std_errors = res.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  res.fit = fit_stats(res.loglik, nf, panel.observation_count(), null_loglik(panel));
  return res;
}

}  // namespace adopt
