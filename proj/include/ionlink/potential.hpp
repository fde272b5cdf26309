#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ionlink/constants.hpp"
#include "ionlink/errors.hpp"
#include "ionlink/species.hpp"

namespace ionlink {

/// Axial double-well potential
///
///   U(z) = (alpha1 + u tune1) z + (alpha2 + u tune2) z^2 + alpha4 z^4
///
/// in SI energy units; u is the control voltage in volts. The cubic term is
/// absent by choice of origin. alpha4 = 0 is accepted so that pure harmonic
/// wells can be represented.
struct AxialPotential {
  double alpha1 = 0.0;  // J/m
  double alpha2 = 0.0;  // J/m^2
  double alpha4 = 0.0;  // J/m^4
  double tune1 = 0.0;   // J/m per V
  double tune2 = 0.0;   // J/m^2 per V

  double linear(double u_ax) const { return alpha1 + u_ax * tune1; }
  double quadratic(double u_ax) const { return alpha2 + u_ax * tune2; }

  void validate() const {
    if (!(alpha4 >= 0.0) || !std::isfinite(alpha1) || !std::isfinite(alpha2) ||
        !std::isfinite(alpha4) || !std::isfinite(tune1) || !std::isfinite(tune2)) {
      throw std::invalid_argument("AxialPotential: coefficients must be finite with alpha4 >= 0");
    }
  }
};

inline double eval_potential(const AxialPotential& p, double u_ax, double z) {
  const double z2 = z * z;
  return p.linear(u_ax) * z + p.quadratic(u_ax) * z2 + p.alpha4 * z2 * z2;
}

inline double potential_slope(const AxialPotential& p, double u_ax, double z) {
  return p.linear(u_ax) + 2.0 * p.quadratic(u_ax) * z + 4.0 * p.alpha4 * z * z * z;
}

inline double potential_curvature(const AxialPotential& p, double u_ax, double z) {
  return 2.0 * p.quadratic(u_ax) + 12.0 * p.alpha4 * z * z;
}

/// Real roots of dU/dz, ascending. Closed-form (trigonometric or Cardano),
/// followed by two Newton polishing steps on the cubic.
inline std::vector<double> stationary_points(const AxialPotential& p, double u_ax) {
  const double a1 = p.linear(u_ax);
  const double a2 = p.quadratic(u_ax);
  std::vector<double> roots;
  if (p.alpha4 == 0.0) {
    if (a2 != 0.0) roots.push_back(-a1 / (2.0 * a2));
    return roots;
  }
  // z^3 + pc z + qc = 0
  const double pc = a2 / (2.0 * p.alpha4);
  const double qc = a1 / (4.0 * p.alpha4);
  const double disc = -(4.0 * pc * pc * pc + 27.0 * qc * qc);
  if (disc > 0.0) {
    const double amp = 2.0 * std::sqrt(-pc / 3.0);
    const double arg = std::clamp(3.0 * qc / (pc * amp), -1.0, 1.0);
    const double phi = std::acos(arg) / 3.0;
    for (int k = 0; k < 3; ++k) {
      roots.push_back(amp * std::cos(phi - 2.0 * constants::kPi * k / 3.0));
    }
  } else {
    const double s = std::sqrt(std::max(0.0, qc * qc / 4.0 + pc * pc * pc / 27.0));
    roots.push_back(std::cbrt(-qc / 2.0 + s) + std::cbrt(-qc / 2.0 - s));
  }
  for (double& z : roots) {
    for (int it = 0; it < 2; ++it) {
      const double f = (z * z + pc) * z + qc;
      const double df = 3.0 * z * z + pc;
      if (df != 0.0) z -= f / df;
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

struct WellGeometry {
  double left_min = 0.0;          // m
  double right_min = 0.0;         // m
  double separation_r = 0.0;      // m
  double freq_left = 0.0;         // Hz
  double freq_right = 0.0;        // Hz
  double barrier_height = 0.0;    // J, above the lower minimum
  double barrier_position = 0.0;  // m, local maximum between the wells
};

/// Local oscillation frequency (Hz) of a particle of mass m at z.
inline double local_frequency(const AxialPotential& p, double u_ax, double z, double mass) {
  const double k = potential_curvature(p, u_ax, z);
  return std::sqrt(k / mass) / (2.0 * constants::kPi);
}

/// Both minima of a double-well potential. Throws NotADoubleWell if dU/dz
/// has fewer than three distinct real roots.
inline WellGeometry find_wells(const AxialPotential& p, double u_ax, const IonSpecies& species) {
  p.validate();
  const auto roots = stationary_points(p, u_ax);
  if (p.alpha4 <= 0.0 || roots.size() != 3) {
    throw NotADoubleWell("potential has a single minimum at u_ax = " + std::to_string(u_ax) + " V");
  }
  WellGeometry g;
  g.left_min = roots[0];
  g.barrier_position = roots[1];
  g.right_min = roots[2];
  const double kl = potential_curvature(p, u_ax, g.left_min);
  const double kr = potential_curvature(p, u_ax, g.right_min);
  if (!(kl > 0.0 && kr > 0.0 && g.left_min < g.barrier_position &&
        g.barrier_position < g.right_min)) {
    throw NotADoubleWell("degenerate stationary points at u_ax = " + std::to_string(u_ax) + " V");
  }
  g.separation_r = g.right_min - g.left_min;
  g.freq_left = std::sqrt(kl / species.mass) / (2.0 * constants::kPi);
  g.freq_right = std::sqrt(kr / species.mass) / (2.0 * constants::kPi);
  const double lower = std::min(eval_potential(p, u_ax, g.left_min),
                                eval_potential(p, u_ax, g.right_min));
  g.barrier_height = std::max(0.0, eval_potential(p, u_ax, g.barrier_position) - lower);
  return g;
}

inline bool is_double_well(const AxialPotential& p, double u_ax) {
  return p.alpha4 > 0.0 && stationary_points(p, u_ax).size() == 3;
}

/// Symmetric double well (alpha1 = 0) whose bare minima sit at
/// +-separation_r/2 with local frequency freq0:
///   alpha2 = -m w0^2 / 4,  alpha4 = m w0^2 / (2 r^2).
/// Coulomb repulsion between ions is not included.
inline AxialPotential calibrate_symmetric(double separation_r, double freq0,
                                          const IonSpecies& species) {
  if (!(separation_r > 0.0) || !(freq0 > 0.0)) {
    throw std::invalid_argument("calibrate_symmetric: separation and frequency must be positive");
  }
  const double w0 = 2.0 * constants::kPi * freq0;
  const double k0 = species.mass * w0 * w0;
  AxialPotential p;
  p.alpha2 = -k0 / 4.0;
  p.alpha4 = k0 / (2.0 * separation_r * separation_r);
  return p;
}

}  // namespace ionlink
