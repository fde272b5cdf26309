#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>

#include "ionlink/constants.hpp"
#include "ionlink/species.hpp"

namespace ionlink {

/// Electrostatic energy (J) of two point dipoles (C m) separated by r_vec (m).
inline double dipole_energy(const Eigen::Vector3d& d1, const Eigen::Vector3d& d2,
                            const Eigen::Vector3d& r_vec) {
  const double r = r_vec.norm();
  if (!(r > 0.0)) throw std::invalid_argument("dipole_energy: zero separation");
  const Eigen::Vector3d e = r_vec / r;
  return constants::kCoulombConstant * (d1.dot(d2) - 3.0 * d1.dot(e) * d2.dot(e)) / (r * r * r);
}

/// Resonant exchange rate (rad/s) between two particles oscillating along
/// the line joining them:
///
///   Omega_c = q1 q2 / (2 pi eps0 sqrt(m1 m2 w1 w2) r^3)
inline double coupling_rate(const IonSpecies& s1, const IonSpecies& s2, double f1, double f2,
                            double r) {
  if (!(f1 > 0.0) || !(f2 > 0.0) || !(r > 0.0) || !(s1.mass > 0.0) || !(s2.mass > 0.0)) {
    throw std::invalid_argument("coupling_rate: frequencies, masses and distance must be positive");
  }
  const double w1 = 2.0 * constants::kPi * f1;
  const double w2 = 2.0 * constants::kPi * f2;
  return s1.charge * s2.charge /
         (2.0 * constants::kPi * constants::kVacuumPermittivity *
          std::sqrt(s1.mass * s2.mass * w1 * w2) * r * r * r);
}

inline double swap_time(double omega_c) {
  if (!(omega_c > 0.0)) throw std::invalid_argument("swap_time: rate must be positive");
  return constants::kPi / omega_c;
}

inline double gate_time(double omega_c) {
  if (!(omega_c > 0.0)) throw std::invalid_argument("gate_time: rate must be positive");
  return 4.0 * constants::kPi / omega_c;
}

struct CouplingResult {
  double omega_c = 0.0;  // rad/s
  double t_swap = 0.0;   // s
  double t_gate = 0.0;   // s
};

inline CouplingResult make_coupling_result(double omega_c) {
  return {omega_c, swap_time(omega_c), gate_time(omega_c)};
}

/// Parallel-dipole coupling relative to longitudinal alignment; theta is the
/// angle between the dipole axes and the separation vector.
inline double angular_factor(double theta) {
  const double c = std::cos(theta);
  return (1.0 - 3.0 * c * c) / -2.0;
}

/// Angle at which parallel dipoles decouple, arccos(sqrt(1/3)).
inline double magic_angle() { return std::acos(std::sqrt(1.0 / 3.0)); }

/// Exchange rate between two ion strings treated as single particles of
/// charge n q and mass n m.
inline double point_charge_rate(const IonSpecies& s, double f, double r, int n1, int n2) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("point_charge_rate: ion counts must be >= 1");
  const IonSpecies a(n1 * s.charge, n1 * s.mass, s.label);
  const IonSpecies b(n2 * s.charge, n2 * s.mass, s.label);
  return coupling_rate(a, b, f, f, r);
}

}  // namespace ionlink
