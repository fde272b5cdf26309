#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ionlink/constants.hpp"

namespace ionlink {

struct IonSpecies {
  double charge = 0.0;  // C
  double mass = 0.0;    // kg
  std::string label;

  IonSpecies() = default;
  IonSpecies(double charge_c, double mass_kg, std::string name)
      : charge(charge_c), mass(mass_kg), label(std::move(name)) {
    if (charge == 0.0) throw std::invalid_argument("IonSpecies: charge must be non-zero");
    if (!(mass > 0.0)) throw std::invalid_argument("IonSpecies: mass must be positive");
  }
};

namespace detail {

struct KnownIsotope {
  std::string_view label;
  double atomic_mass_u;  // neutral atom
};

// AME2020 neutral-atom masses.
inline constexpr std::array<KnownIsotope, 7> kIsotopes{{
    {"Be9", 9.012183065},
    {"Mg24", 23.985041697},
    {"Mg25", 24.985836976},
    {"Ca40", 39.962590863},
    {"Ca43", 42.958766430},
    {"Sr88", 87.905612253},
    {"Yb171", 170.936331510},
}};

}  // namespace detail

/// Singly charged ion of a tabulated isotope ("Ca40", "Be9", ...). The mass
/// is the neutral atomic mass minus one electron.
inline IonSpecies singly_charged(std::string_view label) {
  const auto& table = detail::kIsotopes;
  const auto it = std::find_if(table.begin(), table.end(),
                               [&](const auto& iso) { return iso.label == label; });
  if (it == table.end()) {
    throw std::invalid_argument("unknown species '" + std::string(label) + "'");
  }
  const double mass =
      it->atomic_mass_u * constants::kAtomicMassUnit - constants::kElectronMass;
  return IonSpecies(constants::kElementaryCharge, mass, std::string(label));
}

inline IonSpecies calcium40() { return singly_charged("Ca40"); }

}  // namespace ionlink
