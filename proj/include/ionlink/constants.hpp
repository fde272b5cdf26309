#pragma once

#include <numbers>
#include <string_view>

namespace ionlink::constants {

/// Version tag embedded in every output file.
inline constexpr std::string_view kTableVersion = "CODATA-2018";

inline constexpr double kPi = std::numbers::pi;

// CODATA 2018, SI units.
inline constexpr double kElementaryCharge = 1.602176634e-19;     // C (exact)
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kReducedPlanck = 1.054571817e-34;        // J s (exact)
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;     // kg
inline constexpr double kElectronMass = 9.1093837015e-31;        // kg

/// q^2 / (4 pi eps0) for unit charges, J m.
inline constexpr double kCoulombConstant = 1.0 / (4.0 * kPi * kVacuumPermittivity);

struct NamedConstant {
  std::string_view name;
  double value;
  std::string_view unit;
};

inline constexpr NamedConstant kTable[] = {
    {"elementary_charge", kElementaryCharge, "C"},
    {"vacuum_permittivity", kVacuumPermittivity, "F/m"},
    {"reduced_planck", kReducedPlanck, "J s"},
    {"atomic_mass_unit", kAtomicMassUnit, "kg"},
    {"electron_mass", kElectronMass, "kg"},
};

}  // namespace ionlink::constants
