#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ionlink/constants.hpp"
#include "ionlink/coupling.hpp"
#include "ionlink/energy.hpp"
#include "ionlink/equilibrium.hpp"
#include "ionlink/errors.hpp"
#include "ionlink/potential.hpp"

namespace ionlink {

/// Normal modes at an equilibrium. Column k of `eigenvectors` is the
/// mass-weighted displacement pattern of frequencies[k].
struct ModeSpectrum {
  std::vector<double> frequencies;  // Hz, ascending
  Eigen::MatrixXd eigenvectors;     // orthonormal columns
  std::vector<double> positions;    // m, equilibrium the modes belong to
  std::vector<double> left_weight;  // share of each mode's norm on left-well ions
};

/// Diagonalizes K_ij = H_ij / sqrt(m_i m_j). Throws UnstableEquilibrium if
/// any eigenvalue is not positive.
inline ModeSpectrum mode_spectrum(const Eigen::MatrixXd& h, std::span<const double> masses) {
  const auto n = h.rows();
  if (h.cols() != n || static_cast<Eigen::Index>(masses.size()) != n) {
    throw std::invalid_argument("mode_spectrum: dimension mismatch");
  }
  Eigen::VectorXd inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(masses[i]);
  const Eigen::MatrixXd k = inv_sqrt.asDiagonal() * h * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(k);
  if (solver.info() != Eigen::Success) throw UnstableEquilibrium("eigen-decomposition failed");
  const auto& lambda = solver.eigenvalues();
  ModeSpectrum out;
  out.frequencies.reserve(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(lambda[i] > 0.0)) {
      throw UnstableEquilibrium("non-positive curvature eigenvalue " + std::to_string(lambda[i]));
    }
    out.frequencies.push_back(std::sqrt(lambda[i]) / (2.0 * constants::kPi));
  }
  out.eigenvectors = solver.eigenvectors();
  return out;
}

/// Full spectrum at the equilibrium of `config`. Throws EquilibriumFailure if
/// the minimizer does not converge or an ion leaves its well.
inline ModeSpectrum mode_frequencies(const AxialPotential& p, double u_ax,
                                     const IonConfiguration& config,
                                     std::optional<std::span<const double>> seeds = {}) {
  const auto eq = solve_equilibrium(p, u_ax, config, seeds);
  if (!eq.converged) {
    throw EquilibriumFailure("equilibrium did not converge at u_ax = " + std::to_string(u_ax) +
                             " V");
  }
  if (eq.escaped) {
    throw EquilibriumFailure("ion crossed the barrier at u_ax = " + std::to_string(u_ax) + " V");
  }
  const std::vector<double> masses(eq.positions.size(), config.species.mass);
  auto spec = mode_spectrum(hessian(p, u_ax, eq.positions, config.species), masses);
  spec.positions = eq.positions;
  spec.left_weight.assign(spec.frequencies.size(), 0.0);
  for (Eigen::Index k = 0; k < spec.eigenvectors.cols(); ++k) {
    for (int i = 0; i < config.n_left; ++i) {
      spec.left_weight[k] += spec.eigenvectors(i, k) * spec.eigenvectors(i, k);
    }
  }
  return spec;
}

struct ScanPoint {
  double u_ax = 0.0;     // V
  double nu_low = 0.0;   // Hz
  double nu_high = 0.0;  // Hz
  bool stable = false;
};

struct CrossingScan {
  std::vector<ScanPoint> points;
  double splitting = std::numeric_limits<double>::quiet_NaN();          // Hz
  double resonance_voltage = std::numeric_limits<double>::quiet_NaN();  // V
};

struct ScanOptions {
  double refine_tolerance = 1e-5;  // V, golden-section bracket width
};

namespace detail {

struct LowestPair {
  double low = 0.0;
  double high = 0.0;
  std::vector<double> positions;
};

/// Two lowest mode frequencies, warm-started when possible; falls back to
/// the default seeds if the warm start fails.
inline std::optional<LowestPair> lowest_pair(const AxialPotential& p, double u_ax,
                                             const IonConfiguration& config,
                                             const std::vector<double>* warm) {
  auto attempt = [&](std::optional<std::span<const double>> seeds) -> std::optional<LowestPair> {
    try {
      const auto spec = mode_frequencies(p, u_ax, config, seeds);
      return LowestPair{spec.frequencies[0], spec.frequencies[1], spec.positions};
    } catch (const Error&) {
      return std::nullopt;
    }
  };
  if (warm != nullptr && !warm->empty()) {
    if (auto r = attempt(std::span<const double>(*warm))) return r;
  }
  try {
    return attempt(std::nullopt);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

inline void require_pair(const IonConfiguration& config) {
  config.validate();
  if (config.total() < 2) throw std::invalid_argument("crossing needs at least two ions");
}

}  // namespace detail

/// Mode gap nu_high - nu_low at one control voltage; NaN if the point has no
/// usable equilibrium.
inline double mode_gap(const AxialPotential& p, double u_ax, const IonConfiguration& config) {
  detail::require_pair(config);
  const auto pair = detail::lowest_pair(p, u_ax, config, nullptr);
  return pair ? pair->high - pair->low : std::numeric_limits<double>::quiet_NaN();
}

/// Sweeps u_ax over [u_min, u_max] in `steps` points, recording the two lowest
/// modes. The minimal gap is refined by golden-section search around the
/// coarse minimum. Points without a stable equilibrium are flagged and left
/// out of the extraction.
inline CrossingScan scan_crossing(const AxialPotential& p, const IonConfiguration& config,
                                  double u_min, double u_max, int steps,
                                  const ScanOptions& opts = {}) {
  detail::require_pair(config);
  if (steps < 3) throw std::invalid_argument("scan_crossing: need at least 3 steps");
  if (!(u_max > u_min)) throw std::invalid_argument("scan_crossing: empty voltage range");

  CrossingScan scan;
  scan.points.reserve(steps);
  std::vector<std::vector<double>> positions(steps);
  std::vector<double> warm;
  for (int k = 0; k < steps; ++k) {
    const double u = u_min + (u_max - u_min) * k / (steps - 1);
    ScanPoint pt{u, std::numeric_limits<double>::quiet_NaN(),
                 std::numeric_limits<double>::quiet_NaN(), false};
    if (auto pair = detail::lowest_pair(p, u, config, &warm)) {
      pt.nu_low = pair->low;
      pt.nu_high = pair->high;
      pt.stable = pair->high > pair->low;
      warm = pair->positions;
      positions[k] = std::move(pair->positions);
    }
    scan.points.push_back(pt);
  }

  int best = -1;
  for (int k = 0; k < steps; ++k) {
    const auto& pt = scan.points[k];
    if (!pt.stable) continue;
    if (best < 0 || pt.nu_high - pt.nu_low < scan.points[best].nu_high - scan.points[best].nu_low) {
      best = k;
    }
  }
  if (best < 0) return scan;
  scan.splitting = scan.points[best].nu_high - scan.points[best].nu_low;
  scan.resonance_voltage = scan.points[best].u_ax;

  std::vector<double> seed = positions[best];
  auto gap = [&](double u) {
    const auto pair = detail::lowest_pair(p, u, config, &seed);
    return pair ? pair->high - pair->low : std::numeric_limits<double>::infinity();
  };
  double a = scan.points[std::max(best - 1, 0)].u_ax;
  double b = scan.points[std::min(best + 1, steps - 1)].u_ax;
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double gc = gap(c);
  double gd = gap(d);
  while (b - a > opts.refine_tolerance) {
    if (gc < gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - inv_phi * (b - a);
      gc = gap(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + inv_phi * (b - a);
      gd = gap(d);
    }
  }
  const double u_ref = 0.5 * (a + b);
  const double g_ref = gap(u_ref);
  if (g_ref < scan.splitting) {
    scan.splitting = g_ref;
    scan.resonance_voltage = u_ref;
  }
  return scan;
}

struct ResonanceEstimate {
  double u_res = 0.0;      // V
  double splitting = 0.0;  // Hz
  double slope = 0.0;      // Hz/V, detuning per volt away from resonance
};

/// Locates the gap minimum by repeated three-point fits of
/// gap^2 = slope^2 (u - u_res)^2 + s^2, starting from u_guess.
inline ResonanceEstimate locate_resonance(const AxialPotential& p, const IonConfiguration& config,
                                          double u_guess = 0.0, double h_initial = 1e-2) {
  detail::require_pair(config);
  double u0 = u_guess;
  double h = h_initial;
  ResonanceEstimate est;
  for (int iter = 0; iter < 100; ++iter) {
    const double gm = mode_gap(p, u0 - h, config);
    const double g0 = mode_gap(p, u0, config);
    const double gp = mode_gap(p, u0 + h, config);
    if (!std::isfinite(gm) || !std::isfinite(g0) || !std::isfinite(gp)) {
      throw EquilibriumFailure("no stable equilibrium near u_ax = " + std::to_string(u0) + " V");
    }
    const double curv = (gp * gp + gm * gm - 2.0 * g0 * g0) / (2.0 * h * h);
    const double lin = (gp * gp - gm * gm) / (2.0 * h);
    if (!(curv > 0.0)) {
      if (h > 1e3) throw std::invalid_argument("control voltage does not tune the wells apart");
      h *= 4.0;
      continue;
    }
    double delta = -lin / (2.0 * curv);
    const double s2 = g0 * g0 - lin * lin / (4.0 * curv);
    est.slope = std::sqrt(curv);
    est.splitting = std::sqrt(std::max(s2, 0.0));
    const double max_move = 50.0 * h;
    delta = std::clamp(delta, -max_move, max_move);
    u0 += delta;
    if (std::abs(delta) < 1e-7 && iter > 0) break;
    h = std::clamp(0.2 * est.splitting / est.slope, 1e-5, 10.0);
  }
  est.u_res = u0;
  const double g = mode_gap(p, u0, config);
  if (std::isfinite(g)) est.splitting = g;
  return est;
}

/// Voltage window centred on resonance whose detuning spans
/// +-span_factor times the splitting.
inline std::pair<double, double> auto_scan_range(const AxialPotential& p,
                                                 const IonConfiguration& config,
                                                 double span_factor = 5.0) {
  const auto est = locate_resonance(p, config);
  const double half = span_factor * est.splitting / est.slope;
  return {est.u_res - half, est.u_res + half};
}

struct EnhancementRow {
  int n_left = 0;
  int n_right = 0;
  double splitting = 0.0;                // Hz, Hessian gap at resonance
  double point_charge_prediction = 0.0;  // Hz
  double resonance_voltage = 0.0;        // V
};

/// Configurations 1+1, 2+1, 2+2, 3+2, 3+3, ... up to max_ions_per_well.
inline std::vector<std::pair<int, int>> antenna_configurations(int max_ions_per_well) {
  if (max_ions_per_well < 1) throw std::invalid_argument("max_ions_per_well must be >= 1");
  std::vector<std::pair<int, int>> out;
  for (int n = 1; n <= max_ions_per_well; ++n) {
    if (n > 1) out.emplace_back(n, n - 1);
    out.emplace_back(n, n);
  }
  return out;
}

/// Hessian splitting for each antenna configuration next to the point-charge
/// estimate sqrt(n_left n_right) times the single-ion rate of the bare wells
/// at u_ax = 0.
inline std::vector<EnhancementRow> enhancement_report(const AxialPotential& p,
                                                      const IonSpecies& species,
                                                      int max_ions_per_well, int steps = 41,
                                                      double span_factor = 5.0) {
  const auto wells = find_wells(p, 0.0, species);
  const double f0 = 0.5 * (wells.freq_left + wells.freq_right);
  std::vector<EnhancementRow> rows;
  for (const auto& [nl, nr] : antenna_configurations(max_ions_per_well)) {
    const IonConfiguration config(species, nl, nr);
    const auto [lo, hi] = auto_scan_range(p, config, span_factor);
    const auto scan = scan_crossing(p, config, lo, hi, steps);
    if (!std::isfinite(scan.splitting)) {
      throw EquilibriumFailure("no stable scan point for configuration " + std::to_string(nl) +
                               "+" + std::to_string(nr));
    }
    EnhancementRow row;
    row.n_left = nl;
    row.n_right = nr;
    row.splitting = scan.splitting;
    row.resonance_voltage = scan.resonance_voltage;
    row.point_charge_prediction =
        point_charge_rate(species, f0, wells.separation_r, nl, nr) / (2.0 * constants::kPi);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ionlink
