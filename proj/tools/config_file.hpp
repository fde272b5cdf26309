#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ionlink/errors.hpp"
#include "ionlink/potential.hpp"
#include "ionlink/species.hpp"

// Sectioned key-value configuration (a TOML subset):
//
//   # comment
//   [section]
//   key = 1.5e-6
//   name = "Ca40"
//
// Every quantity is SI with the unit spelled in the key name.

namespace ionlink::cli {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = strip_comment(line);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
        value = value.substr(1, value.size() - 2);
      }
      cfg.values_[section + "." + key] = value;
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::optional<std::string> text(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<double> number(const std::string& key) const {
    const auto t = text(key);
    if (!t) return std::nullopt;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(*t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t->size()) throw ConfigError("key '" + key + "' is not a number: " + *t);
    return v;
  }

  double number_or(const std::string& key, double fallback) const {
    return number(key).value_or(fallback);
  }

  /// [species]: either name = "Ca40" or mass_kg / charge_C (+ label).
  IonSpecies species() const {
    const auto mass = number("species.mass_kg");
    if (mass) {
      const double charge = number_or("species.charge_C", constants::kElementaryCharge);
      return IonSpecies(charge, *mass, text("species.label").value_or("custom"));
    }
    return singly_charged(text("species.name").value_or("Ca40"));
  }

  /// [trap]: explicit alpha coefficients, or the calibration pair
  /// separation_m / freq_Hz.
  AxialPotential potential(const IonSpecies& species) const {
    AxialPotential p;
    if (has("trap.alpha2_J_per_m2") || has("trap.alpha4_J_per_m4")) {
      p.alpha1 = number_or("trap.alpha1_J_per_m", 0.0);
      p.alpha2 = require("trap.alpha2_J_per_m2");
      p.alpha4 = require("trap.alpha4_J_per_m4");
    } else if (has("trap.separation_m") || has("trap.freq_Hz")) {
      p = calibrate_symmetric(require("trap.separation_m"), require("trap.freq_Hz"), species);
      p.alpha1 = number_or("trap.alpha1_J_per_m", 0.0);
    } else {
      throw ConfigError("[trap] needs alpha2/alpha4 coefficients or separation_m/freq_Hz");
    }
    p.tune1 = number_or("trap.tune1_J_per_m_per_V", 0.0);
    p.tune2 = number_or("trap.tune2_J_per_m2_per_V", 0.0);
    p.validate();
    return p;
  }

 private:
  double require(const std::string& key) const {
    const auto v = number(key);
    if (!v) throw ConfigError("missing key '" + key + "'");
    return *v;
  }

  static std::string strip_comment(const std::string& s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  static std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace ionlink::cli
