#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ionlink/constants.hpp"
#include "ionlink/errors.hpp"
#include "ionlink/potential.hpp"
#include "ionlink/species.hpp"

// Total energy of N identical ions on the trap axis and its first two
// derivatives:
//
//   U_tot(z) = sum_i U(z_i) + sum_{i<j} q^2 / (4 pi eps0 |z_i - z_j|)

namespace ionlink {

namespace detail {

inline void require_distinct(std::span<const double> z) {
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) throw std::invalid_argument("ion position is not finite");
    for (std::size_t j = i + 1; j < z.size(); ++j) {
      if (z[i] == z[j]) {
        throw SingularConfiguration("ions " + std::to_string(i) + " and " + std::to_string(j) +
                                    " coincide");
      }
    }
  }
}

inline double pair_constant(const IonSpecies& s) {
  return constants::kCoulombConstant * s.charge * s.charge;
}

}  // namespace detail

inline double total_energy(const AxialPotential& p, double u_ax, std::span<const double> z,
                           const IonSpecies& species) {
  detail::require_distinct(z);
  const double kq = detail::pair_constant(species);
  double trap = 0.0;
  double coulomb = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    trap += eval_potential(p, u_ax, z[i]);
    for (std::size_t j = i + 1; j < z.size(); ++j) coulomb += kq / std::abs(z[i] - z[j]);
  }
  return trap + coulomb;
}

/// dU_tot/dz_i in newtons.
inline std::vector<double> energy_gradient(const AxialPotential& p, double u_ax,
                                           std::span<const double> z,
                                           const IonSpecies& species) {
  detail::require_distinct(z);
  const double kq = detail::pair_constant(species);
  std::vector<double> g(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    double gi = potential_slope(p, u_ax, z[i]);
    for (std::size_t j = 0; j < z.size(); ++j) {
      if (j == i) continue;
      const double d = z[i] - z[j];
      gi -= std::copysign(kq / (d * d), d);
    }
    g[i] = gi;
  }
  return g;
}

/// Second-derivative matrix of U_tot (J/m^2). Exactly symmetric.
inline Eigen::MatrixXd hessian(const AxialPotential& p, double u_ax, std::span<const double> z,
                               const IonSpecies& species) {
  detail::require_distinct(z);
  const double kq = detail::pair_constant(species);
  const auto n = static_cast<Eigen::Index>(z.size());
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    h(i, i) = potential_curvature(p, u_ax, z[i]);
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = std::abs(z[i] - z[j]);
      const double c = 2.0 * kq / (d * d * d);
      h(i, j) = -c;
      h(j, i) = -c;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) h(i, i) -= h(i, j);
    }
  }
  return h;
}

}  // namespace ionlink
