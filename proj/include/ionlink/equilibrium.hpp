#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ionlink/energy.hpp"
#include "ionlink/potential.hpp"
#include "ionlink/species.hpp"

namespace ionlink {

struct IonConfiguration {
  IonSpecies species;
  int n_left = 0;
  int n_right = 0;

  IonConfiguration() = default;
  IonConfiguration(IonSpecies s, int left, int right)
      : species(std::move(s)), n_left(left), n_right(right) {
    validate();
  }

  int total() const { return n_left + n_right; }

  void validate() const {
    if (n_left < 0 || n_right < 0 || n_left + n_right < 1) {
      throw std::invalid_argument("IonConfiguration: need n_left, n_right >= 0 and at least one ion");
    }
  }
};

struct EquilibriumResult {
  std::vector<double> positions;  // m, strictly increasing
  double total_energy = 0.0;      // J
  double grad_norm = 0.0;         // N
  bool converged = false;
  bool escaped = false;  // some ion ended up on the wrong side of the barrier
  int iterations = 0;

  bool usable() const { return converged && !escaped; }
};

struct EquilibriumOptions {
  int max_iterations = 10000;
  double step_tolerance = 1e-13;  // m
  double grad_tolerance = 1e-24;  // N
  double seed_spacing = 5e-6;     // m
};

namespace detail {

inline void append_string(std::vector<double>& out, int n, double center, double spacing) {
  for (int i = 0; i < n; ++i) out.push_back(center + spacing * (i - 0.5 * (n - 1)));
}

inline bool strictly_increasing(const Eigen::VectorXd& z) {
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (!(z[i] > z[i - 1])) return false;
  }
  return true;
}

}  // namespace detail

/// n_left ions around the left bare minimum and n_right around the right
/// one. For a single-well potential all ions go around its minimum, which is
/// only allowed when one of the two counts is zero.
inline std::vector<double> default_seeds(const AxialPotential& p, double u_ax,
                                         const IonConfiguration& config,
                                         double spacing = 5e-6) {
  config.validate();
  std::vector<double> seeds;
  if (is_double_well(p, u_ax)) {
    const auto g = find_wells(p, u_ax, config.species);
    detail::append_string(seeds, config.n_left, g.left_min, spacing);
    detail::append_string(seeds, config.n_right, g.right_min, spacing);
    return seeds;
  }
  const auto roots = stationary_points(p, u_ax);
  if (roots.size() != 1 || !(potential_curvature(p, u_ax, roots[0]) > 0.0)) {
    throw NotADoubleWell("potential has no confining minimum at u_ax = " + std::to_string(u_ax));
  }
  if (config.n_left > 0 && config.n_right > 0) {
    throw NotADoubleWell("configuration needs two wells but the potential has one at u_ax = " +
                         std::to_string(u_ax) + " V");
  }
  detail::append_string(seeds, config.total(), roots[0], spacing);
  return seeds;
}

/// Local minimum of the total energy reached from the seeds (or the default
/// seeds). Newton steps with the analytic Hessian; when the Hessian is not
/// positive definite, a Jacobi-scaled gradient step with backtracking is
/// used instead. Ion order is preserved throughout.
inline EquilibriumResult solve_equilibrium(const AxialPotential& p, double u_ax,
                                           const IonConfiguration& config,
                                           std::optional<std::span<const double>> seeds = {},
                                           const EquilibriumOptions& opts = {}) {
  p.validate();
  config.validate();
  std::vector<double> start;
  if (seeds) {
    start.assign(seeds->begin(), seeds->end());
    if (static_cast<int>(start.size()) != config.total()) {
      throw std::invalid_argument("solve_equilibrium: seed count does not match configuration");
    }
    if (!std::is_sorted(start.begin(), start.end()) ||
        std::adjacent_find(start.begin(), start.end()) != start.end()) {
      throw std::invalid_argument("solve_equilibrium: seeds must be sorted and distinct");
    }
  } else {
    start = default_seeds(p, u_ax, config, opts.seed_spacing);
  }

  const auto& species = config.species;
  const auto n = static_cast<Eigen::Index>(start.size());
  Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(start.data(), n);
  auto energy_at = [&](const Eigen::VectorXd& x) {
    return total_energy(p, u_ax, std::span<const double>(x.data(), x.size()), species);
  };
  auto gradient_at = [&](const Eigen::VectorXd& x) {
    const auto g = energy_gradient(p, u_ax, std::span<const double>(x.data(), x.size()), species);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), n));
  };

  EquilibriumResult result;
  double energy = energy_at(z);
  Eigen::VectorXd grad = gradient_at(z);
  bool done = false;
  int it = 0;
  for (; it < opts.max_iterations && !done; ++it) {
    const Eigen::MatrixXd h = hessian(p, u_ax, std::span<const double>(z.data(), n), species);
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    const bool newton = llt.info() == Eigen::Success;
    Eigen::VectorXd dir;
    if (newton) {
      dir = -llt.solve(grad);
    } else {
      const double scale = h.diagonal().cwiseAbs().maxCoeff();
      dir = -grad / (scale > 0.0 ? scale : 1.0);
    }
    // Energies near convergence differ below double resolution; allow a
    // relative slack for Newton steps only.
    const double slack = newton ? 1e-13 * std::abs(energy) : 0.0;
    double t = 1.0;
    bool accepted = false;
    Eigen::VectorXd trial;
    double trial_energy = energy;
    for (int k = 0; k < 80; ++k, t *= 0.5) {
      trial = z + t * dir;
      if (!detail::strictly_increasing(trial)) continue;
      trial_energy = energy_at(trial);
      if (trial_energy <= energy + slack) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double step = (trial - z).cwiseAbs().maxCoeff();
    z = trial;
    energy = trial_energy;
    grad = gradient_at(z);
    done = step < opts.step_tolerance && grad.norm() < opts.grad_tolerance;
  }

  result.positions.assign(z.data(), z.data() + n);
  result.total_energy = energy;
  result.grad_norm = grad.norm();
  result.iterations = it;
  result.converged = done;
  if (is_double_well(p, u_ax)) {
    const double barrier = find_wells(p, u_ax, species).barrier_position;
    const auto left = std::count_if(result.positions.begin(), result.positions.end(),
                                    [&](double x) { return x < barrier; });
    result.escaped = left != config.n_left;
  }
  return result;
}

}  // namespace ionlink
