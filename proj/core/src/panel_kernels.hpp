#pragma once

// Cell-level kernels shared by the likelihood, EM and forecasting code.

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "adopt/lccm.hpp"

namespace adopt::detail {

inline constexpr std::array<int, kClassCount> kFeatureCount = {6, 5, 1};
inline constexpr std::array<Eigen::Index, kClassCount> kCoefOffset = {
    param_index::kInnovator, param_index::kImitator, param_index::kNonAdopter};

inline void class_features(int s, const AdoptionPanel::ZoneMonth& zm, bool tech, double social,
                           double* x) {
  const double cov = zm.covered ? zm.access : 0.0;
  const double unc = zm.covered ? 0.0 : zm.access;
  switch (s) {
    case 0:
      x[0] = 1.0;
      x[1] = tech ? 1.0 : 0.0;
      x[2] = zm.station ? 1.0 : 0.0;
      x[3] = zm.onstreet ? 1.0 : 0.0;
      x[4] = cov;
      x[5] = unc;
      break;
    case 1:
      x[0] = 1.0;
      x[1] = tech ? 1.0 : 0.0;
      x[2] = cov;
      x[3] = unc;
      x[4] = social;
      break;
    default:
      x[0] = 1.0;
      break;
  }
}

// Per (class, cell, month) probabilities with prefix sums over months for a
// panel of `cells` = zones x {non-tech, tech}.
struct CellTable {
  std::size_t cells = 0;
  int window = 0;
  std::vector<double> log_adopt, log_not, prob;  // [(s*cells + c)*window + t-1]
  std::vector<double> prefix_not;                // [(s*cells + c)*(window+1) + t]

  std::size_t at(int s, std::size_t c, int t) const {
    return (static_cast<std::size_t>(s) * cells + c) * static_cast<std::size_t>(window) +
           static_cast<std::size_t>(t - 1);
  }
  std::size_t prefix_at(int s, std::size_t c, int t) const {
    return (static_cast<std::size_t>(s) * cells + c) * static_cast<std::size_t>(window + 1) +
           static_cast<std::size_t>(t);
  }
  // Class-s log-likelihood of a risk set ending at `exit`.
  double loglik(int s, std::size_t c, int exit, bool adopted) const {
    if (exit <= 0) return 0.0;
    return prefix_not[prefix_at(s, c, exit - 1)] +
           (adopted ? log_adopt[at(s, c, exit)] : log_not[at(s, c, exit)]);
  }
};

inline std::size_t cell_of(const AdoptionPanel::Row& r) { return r.zone * 2 + (r.tech ? 1 : 0); }

CellTable build_cell_table(const Eigen::VectorXd& theta, const AdoptionPanel& panel);

// Weighted at-risk mass A and adoption mass B per (class, cell, month) given
// person-class weights omega (persons x 3).
struct CellMass {
  std::vector<double> at_risk, adopted;  // indexed like CellTable::at
};
CellMass accumulate_mass(const AdoptionPanel& panel, const Eigen::MatrixXd& omega,
                         std::size_t cells);

/// Adds sum_ct (B - A P) x for class s into grad (full 18-vector layout).
void add_class_gradient(int s, const AdoptionPanel& panel, const CellTable& table,
                        const CellMass& mass, Eigen::VectorXd& grad);

/// sum_ct B log P + (A - B) log(1 - P) for class s.
double class_objective(int s, const AdoptionPanel& panel, const CellTable& table,
                       const CellMass& mass);

}  // namespace adopt::detail
