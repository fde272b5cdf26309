#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "config_file.hpp"
#include "csv.hpp"
#include "ionlink/ionlink.hpp"

namespace ionlink::cli {

class FlaggedFailure : public Error {
 public:
  explicit FlaggedFailure(const std::string& what) : Error("flagged_failure", what) {}
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::pair<int, int> parse_ions(const std::string& spec) {
  int a = -1;
  int b = -1;
  char sep = 0;
  std::istringstream in(spec);
  if (!(in >> a >> sep >> b) || (sep != ',' && sep != '+') || !in.eof()) {
    throw std::invalid_argument("ion counts must look like '2,2' or '2+2', got '" + spec + "'");
  }
  return {a, b};
}

inline std::set<std::string> parse_list(const std::string& text) {
  std::set<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    const auto b = item.find_last_not_of(" \t");
    out.insert(item.substr(a, b - a + 1));
  }
  return out;
}

/// "name=value,name=value" starting values for a fit.
inline std::map<std::string, double> parse_assignments(const std::string& text) {
  std::map<std::string, double> out;
  for (const auto& item : parse_list(text)) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("expected name=value, got '" + item + "'");
    std::size_t used = 0;
    const std::string value = item.substr(eq + 1);
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("not a number in '" + item + "'");
    out[item.substr(0, eq)] = v;
  }
  return out;
}

inline nlohmann::json fit_json(const FitResult& fit) {
  nlohmann::json j;
  auto finite_or_null = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  for (const auto& [k, v] : fit.parameters) j["parameters"][k] = finite_or_null(v);
  for (const auto& [k, v] : fit.uncertainties) j["uncertainties"][k] = finite_or_null(v);
  j["residual"] = finite_or_null(fit.residual);
  j["initial_residual"] = finite_or_null(fit.initial_residual);
  j["converged"] = fit.converged;
  j["evaluations"] = fit.evaluations;
  j["warnings"] = fit.warnings;
  return j;
}

}  // namespace detail

/// Runs one ionlink invocation. `args` excludes the program name. Returns the
/// process exit status: 0 success, 1 usage or input error, 2 flagged
/// computational failure.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dipole-dipole coupled ion strings in a double-well trap"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));

  std::string out_path;
  std::uint64_t seed = 20100503;
  app.add_option("--out", out_path, "Write the result to this file instead of stdout");
  app.add_option("--seed", seed, "Random seed for fit restarts");

  std::string config_path;
  std::string ions = "1,1";
  double u_ax = 0.0;
  auto add_trap_options = [&](CLI::App* sub, bool with_ions) {
    sub->add_option("--config", config_path, "Trap configuration file")->required();
    if (with_ions) sub->add_option("--ions", ions, "Ions per well, e.g. 2,2");
  };

  // calibrate
  double cal_r = 0.0;
  double cal_f = 0.0;
  std::string species_name = "Ca40";
  double cal_tune1 = 0.0;
  double cal_tune2 = 0.0;
  auto* calibrate = app.add_subcommand("calibrate", "Symmetric double well from separation and frequency");
  calibrate->add_option("--r", cal_r, "Well separation (m)")->required();
  calibrate->add_option("--freq", cal_f, "Local well frequency (Hz)")->required();
  calibrate->add_option("--species", species_name, "Ion species label");
  calibrate->add_option("--tune1", cal_tune1, "Linear control-voltage coefficient (J/m per V)");
  calibrate->add_option("--tune2", cal_tune2, "Quadratic control-voltage coefficient (J/m^2 per V)");

  auto* equilibria = app.add_subcommand("equilibria", "Equilibrium positions");
  add_trap_options(equilibria, true);
  equilibria->add_option("--u", u_ax, "Control voltage (V)");

  auto* modes = app.add_subcommand("modes", "Normal-mode spectrum at one control voltage");
  add_trap_options(modes, true);
  modes->add_option("--u", u_ax, "Control voltage (V)");

  std::string u_range = "auto";
  int steps = 0;
  auto* scan = app.add_subcommand("scan", "Two lowest modes versus control voltage");
  add_trap_options(scan, true);
  scan->add_option("--u-range", u_range, "'auto' or 'min:max' in volts");
  scan->add_option("--steps", steps, "Number of scan points");

  int max_ions = 3;
  auto* enhance = app.add_subcommand("enhance", "Antenna enhancement table");
  add_trap_options(enhance, false);
  enhance->add_option("--max-ions", max_ions, "Largest number of ions per well");
  enhance->add_option("--steps", steps, "Scan points per configuration");

  double ex_n1 = 0.0;
  double ex_n2 = 0.0;
  double fswap = 0.0;
  double coupling_hz = 0.0;
  double tau_damp = std::numeric_limits<double>::infinity();
  double heating = 0.0;
  double until = 0.0;
  int points = 101;
  auto* exchange = app.add_subcommand("exchange", "Mean phonon trace of the first well");
  exchange->add_option("--n1", ex_n1, "Initial mean phonons, well 1")->required();
  exchange->add_option("--n2", ex_n2, "Initial mean phonons, well 2")->required();
  auto* ex_swap = exchange->add_option("--fswap", fswap, "Swap time T_swap (s)");
  auto* ex_rate = exchange->add_option("--coupling-hz", coupling_hz, "Coupling Omega_c / 2pi (Hz)");
  ex_swap->excludes(ex_rate);
  exchange->add_option("--tau-damp", tau_damp, "Damping time (s)");
  exchange->add_option("--heating", heating, "Heating rate (quanta/s)");
  exchange->add_option("--until", until, "Last waiting time (s)")->required();
  exchange->add_option("--points", points, "Number of samples");

  int fock_n1 = 0;
  int fock_n2 = 1;
  double time = std::numeric_limits<double>::quiet_NaN();
  double swap_fraction = std::numeric_limits<double>::quiet_NaN();
  int cutoff = -1;
  auto* evolve = app.add_subcommand("evolve", "Exact two-mode Fock-state evolution");
  evolve->add_option("--n1", fock_n1, "Initial Fock level, mode 1");
  evolve->add_option("--n2", fock_n2, "Initial Fock level, mode 2");
  auto* ev_swap = evolve->add_option("--fswap", fswap, "Swap time T_swap (s)");
  auto* ev_rate = evolve->add_option("--coupling-hz", coupling_hz, "Coupling Omega_c / 2pi (Hz)");
  ev_swap->excludes(ev_rate);
  auto* ev_time = evolve->add_option("--time", time, "Evolution time (s)");
  auto* ev_frac = evolve->add_option("--swap-fraction", swap_fraction, "Evolution time in units of T_swap");
  ev_time->excludes(ev_frac);
  evolve->add_option("--cutoff", cutoff, "Fock cutoff per mode");

  std::string data_path;
  std::string freeze;
  std::string start;
  int restarts = 5;
  auto* fit_spectra_cmd = app.add_subcommand("fit-spectra", "Shared potential fit of mode spectra");
  fit_spectra_cmd->add_option("--data", data_path, "Spectra CSV")->required();
  fit_spectra_cmd->add_option("--config", config_path, "Trap file with the initial guess")->required();
  fit_spectra_cmd->add_option("--freeze", freeze, "Comma-separated parameters to hold fixed");
  fit_spectra_cmd->add_option("--restarts", restarts, "Random simplex restarts");

  auto* fit_exchange_cmd = app.add_subcommand("fit-exchange", "Fit of a mean-phonon exchange trace");
  fit_exchange_cmd->add_option("--data", data_path, "Exchange CSV")->required();
  fit_exchange_cmd->add_option("--freeze", freeze, "Comma-separated parameters to hold fixed");
  fit_exchange_cmd->add_option("--start", start, "Starting values, e.g. gamma_h=0,tau_damp=3e-3");
  fit_exchange_cmd->add_option("--restarts", restarts, "Random simplex restarts");

  auto* fit_crossing_cmd = app.add_subcommand("fit-crossing", "Two-level fit of an avoided crossing");
  fit_crossing_cmd->add_option("--data", data_path, "Crossing CSV (u_ax_V, frequency_Hz, sigma_Hz)")->required();
  fit_crossing_cmd->add_option("--freeze", freeze, "Comma-separated parameters to hold fixed");
  fit_crossing_cmd->add_option("--start", start, "Starting values, e.g. splitting=5000");
  fit_crossing_cmd->add_option("--restarts", restarts, "Random simplex restarts");

  auto* constants_cmd = app.add_subcommand("constants", "Print the physical constants table");

  std::vector<std::string> argv_store{"ionlink"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << nlohmann::json{{"error", "usage_error"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }

  auto emit_error = [&](const std::string& kind, const std::string& message) {
    err << nlohmann::json{{"error", kind}, {"message", message}}.dump() << "\n";
  };

  try {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const auto& a : args) hash = detail::fnv1a(hash, a + '\0');
    if (!config_path.empty()) hash = detail::fnv1a(hash, detail::read_file(config_path));
    if (!data_path.empty()) hash = detail::fnv1a(hash, detail::read_file(data_path));
    const std::string hash_text = "fnv1a64:" + detail::hex64(hash);

    std::ostringstream body;
    auto csv_header = [&](const std::vector<std::pair<std::string, std::string>>& extra) {
      body << "# ionlink " << kVersion << "\n";
      body << "# config_hash=" << hash_text << "\n";
      body << "# constants=" << constants::kTableVersion << "\n";
      for (const auto& [k, v] : extra) body << "# " << k << "=" << v << "\n";
    };
    auto json_meta = [&]() {
      return nlohmann::json{{"tool", "ionlink"},
                            {"version", std::string(kVersion)},
                            {"config_hash", hash_text},
                            {"constants", std::string(constants::kTableVersion)}};
    };
    std::optional<std::string> failure;

    ConfigFile cfg;
    IonSpecies species;
    AxialPotential pot;
    auto load_trap = [&]() {
      cfg = ConfigFile::load(config_path);
      species = cfg.species();
      pot = cfg.potential(species);
    };
    auto coupling_from_flags = [&]() {
      if (fswap > 0.0) return constants::kPi / fswap;
      if (coupling_hz > 0.0) return 2.0 * constants::kPi * coupling_hz;
      throw std::invalid_argument("give a positive --fswap or --coupling-hz");
    };

    if (*constants_cmd) {
      csv_header({});
      body << "name,value,unit\n";
      for (const auto& c : constants::kTable) {
        body << c.name << "," << fmt_number(c.value) << "," << c.unit << "\n";
      }
    } else if (*calibrate) {
      const auto s = singly_charged(species_name);
      auto p = calibrate_symmetric(cal_r, cal_f, s);
      p.tune1 = cal_tune1;
      p.tune2 = cal_tune2;
      const auto g = find_wells(p, 0.0, s);
      csv_header({{"separation_m", fmt_number(cal_r)}, {"freq_Hz", fmt_number(cal_f)}});
      body << "[species]\nname = \"" << s.label << "\"\n\n";
      body << "[trap]\n";
      body << "alpha1_J_per_m = " << fmt_number(p.alpha1) << "\n";
      body << "alpha2_J_per_m2 = " << fmt_number(p.alpha2) << "\n";
      body << "alpha4_J_per_m4 = " << fmt_number(p.alpha4) << "\n";
      body << "tune1_J_per_m_per_V = " << fmt_number(p.tune1) << "\n";
      body << "tune2_J_per_m2_per_V = " << fmt_number(p.tune2) << "\n";
      body << "# wells at " << fmt_number(g.left_min) << " m and " << fmt_number(g.right_min)
           << " m, " << fmt_number(g.freq_left) << " Hz / " << fmt_number(g.freq_right) << " Hz\n";
    } else if (*equilibria) {
      load_trap();
      const auto [nl, nr] = detail::parse_ions(ions);
      const IonConfiguration config(species, nl, nr);
      const auto eq = solve_equilibrium(pot, u_ax, config);
      csv_header({{"u_ax_V", fmt_number(u_ax)},
                  {"total_energy_J", fmt_number(eq.total_energy)},
                  {"grad_norm_N", fmt_number(eq.grad_norm)},
                  {"converged", eq.converged ? "1" : "0"},
                  {"escaped", eq.escaped ? "1" : "0"}});
      body << "ion,z_m,well\n";
      for (std::size_t i = 0; i < eq.positions.size(); ++i) {
        body << i << "," << fmt_number(eq.positions[i]) << ","
             << (static_cast<int>(i) < nl ? "left" : "right") << "\n";
      }
      if (!eq.converged) failure = "equilibrium did not converge";
      if (eq.escaped) failure = "an ion crossed the barrier";
    } else if (*modes) {
      load_trap();
      const auto [nl, nr] = detail::parse_ions(ions);
      const IonConfiguration config(species, nl, nr);
      const auto spec = mode_frequencies(pot, u_ax, config);
      std::vector<std::pair<std::string, std::string>> extra{{"u_ax_V", fmt_number(u_ax)}};
      if (is_double_well(pot, u_ax)) {
        const auto g = find_wells(pot, u_ax, species);
        extra.emplace_back("freq_left_Hz", fmt_number(g.freq_left));
        extra.emplace_back("freq_right_Hz", fmt_number(g.freq_right));
        extra.emplace_back("separation_m", fmt_number(g.separation_r));
      }
      csv_header(extra);
      body << "mode,frequency_Hz,left_weight\n";
      for (std::size_t k = 0; k < spec.frequencies.size(); ++k) {
        body << k << "," << fmt_number(spec.frequencies[k]) << ","
             << fmt_number(spec.left_weight[k]) << "\n";
      }
    } else if (*scan) {
      load_trap();
      const auto [nl, nr] = detail::parse_ions(ions);
      const IonConfiguration config(species, nl, nr);
      const int n_steps = steps > 0 ? steps : static_cast<int>(cfg.number_or("scan.steps", 41));
      double lo = 0.0;
      double hi = 0.0;
      if (u_range == "auto") {
        std::tie(lo, hi) = auto_scan_range(pot, config, cfg.number_or("scan.span_factor", 5.0));
      } else {
        const auto colon = u_range.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("--u-range must be 'auto' or 'min:max'");
        lo = std::stod(u_range.substr(0, colon));
        hi = std::stod(u_range.substr(colon + 1));
      }
      const auto result = scan_crossing(pot, config, lo, hi, n_steps);
      csv_header({{"ions", std::to_string(nl) + "+" + std::to_string(nr)},
                  {"splitting_Hz", fmt_number(result.splitting)},
                  {"resonance_voltage_V", fmt_number(result.resonance_voltage)}});
      body << "u_ax_V,nu_low_Hz,nu_high_Hz,stable_flag\n";
      for (const auto& pt : result.points) {
        body << fmt_number(pt.u_ax) << "," << fmt_number(pt.nu_low) << "," << fmt_number(pt.nu_high)
             << "," << (pt.stable ? 1 : 0) << "\n";
      }
      if (!std::isfinite(result.splitting)) failure = "no stable scan point";
    } else if (*enhance) {
      load_trap();
      const int n_steps = steps > 0 ? steps : static_cast<int>(cfg.number_or("scan.steps", 41));
      const auto rows = enhancement_report(pot, species, max_ions, n_steps,
                                           cfg.number_or("scan.span_factor", 5.0));
      csv_header({});
      body << "n_left,n_right,splitting_Hz,point_charge_Hz,resonance_voltage_V\n";
      for (const auto& r : rows) {
        body << r.n_left << "," << r.n_right << "," << fmt_number(r.splitting) << ","
             << fmt_number(r.point_charge_prediction) << "," << fmt_number(r.resonance_voltage)
             << "\n";
      }
    } else if (*exchange) {
      const double omega = coupling_from_flags();
      if (points < 2 || !(until > 0.0)) throw std::invalid_argument("need --points >= 2 and --until > 0");
      const ExchangeModel model{ex_n1, ex_n2, omega, tau_damp, heating};
      std::vector<double> taus;
      for (int k = 0; k < points; ++k) taus.push_back(until * k / (points - 1));
      const auto trace = exchange_trace(model, taus);
      csv_header({{"omega_c_rad_per_s", fmt_number(omega)},
                  {"t_swap_s", fmt_number(swap_time(omega))}});
      body << "tau_s,n1_mean\n";
      for (std::size_t k = 0; k < taus.size(); ++k) {
        body << fmt_number(taus[k]) << "," << fmt_number(trace[k]) << "\n";
      }
    } else if (*evolve) {
      const double omega = coupling_from_flags();
      const double t_swap = swap_time(omega);
      double t = 0.5 * t_swap;
      if (std::isfinite(time)) t = time;
      if (std::isfinite(swap_fraction)) t = swap_fraction * t_swap;
      const auto initial = FockState::basis(fock_n1, fock_n2, cutoff);
      const auto final_state = evolve_fock(initial, omega, t);
      const auto [m1, m2] = mean_phonons(final_state);
      nlohmann::json j;
      j["meta"] = json_meta();
      j["initial"] = {fock_n1, fock_n2};
      j["cutoff"] = final_state.cutoff();
      j["omega_c_rad_per_s"] = omega;
      j["t_swap_s"] = t_swap;
      j["time_s"] = t;
      j["mean_n1"] = m1;
      j["mean_n2"] = m2;
      j["norm"] = final_state.norm2();
      j["bell_fidelity"] = bell_fidelity(final_state);
      j["amplitudes"] = nlohmann::json::array();
      for (int a = 0; a <= final_state.cutoff(); ++a) {
        for (int b = 0; b <= final_state.cutoff(); ++b) {
          const auto c = final_state.at(a, b);
          if (std::norm(c) > 1e-24) j["amplitudes"].push_back({a, b, c.real(), c.imag()});
        }
      }
      body << j.dump(2) << "\n";
    } else if (*fit_exchange_cmd) {
      const auto table = CsvTable::load(data_path);
      const auto c_tau = table.column("tau_s");
      const auto c_n = table.column("n1_mean");
      const auto c_s = table.column("sigma");
      std::vector<ExchangeSample> samples;
      for (std::size_t i = 0; i < table.size(); ++i) {
        samples.push_back({table.number(i, c_tau), table.number(i, c_n), table.number(i, c_s)});
      }
      ExchangeFitOptions o;
      o.seed = seed;
      o.restarts = restarts;
      o.frozen = detail::parse_list(freeze);
      o.initial = detail::parse_assignments(start);
      const auto fit = fit_exchange(samples, o);
      auto j = detail::fit_json(fit);
      const double omega = fit.parameters.at("omega_c");
      j["derived"]["coupling_Hz"] = omega / (2.0 * constants::kPi);
      if (omega > 0.0) j["derived"]["t_swap_s"] = swap_time(omega);
      j["meta"] = json_meta();
      body << j.dump(2) << "\n";
      if (!fit.converged) failure = "exchange fit did not converge";
    } else if (*fit_crossing_cmd) {
      const auto table = CsvTable::load(data_path);
      const auto c_u = table.column("u_ax_V");
      const auto c_f = table.column("frequency_Hz");
      const auto c_s = table.column("sigma_Hz");
      std::vector<CrossingSample> samples;
      for (std::size_t i = 0; i < table.size(); ++i) {
        samples.push_back({table.number(i, c_u), table.number(i, c_f), table.number(i, c_s)});
      }
      CrossingFitOptions o;
      o.seed = seed;
      o.restarts = restarts;
      o.frozen = detail::parse_list(freeze);
      o.initial = detail::parse_assignments(start);
      const auto fit = fit_avoided_crossing(samples, o);
      auto j = detail::fit_json(fit);
      j["meta"] = json_meta();
      body << j.dump(2) << "\n";
      if (!fit.converged) failure = "crossing fit did not converge";
    } else if (*fit_spectra_cmd) {
      load_trap();
      const auto table = CsvTable::load(data_path);
      const auto c_label = table.column("config_label");
      const auto c_u = table.column("u_ax_V");
      const auto c_f = table.column("frequency_Hz");
      const auto c_s = table.column("sigma_Hz");
      const auto c_t = table.column("timestamp_s");
      SpectraDataset data;
      std::map<std::pair<int, int>, std::size_t> index;
      for (std::size_t i = 0; i < table.size(); ++i) {
        const auto key = detail::parse_ions(table.cell(i, c_label));
        auto it = index.find(key);
        if (it == index.end()) {
          it = index.emplace(key, data.series.size()).first;
          data.series.push_back({key.first, key.second, {}});
        }
        data.series[it->second].points.push_back({table.number(i, c_u), table.number(i, c_f),
                                                   table.number(i, c_s), table.number(i, c_t)});
      }
      SpectraFitOptions o;
      o.initial = pot;
      o.seed = seed;
      o.restarts = restarts;
      o.frozen = detail::parse_list(freeze);
      const auto fit = fit_spectra(data, species, o);
      auto j = detail::fit_json(fit);
      j["meta"] = json_meta();
      body << j.dump(2) << "\n";
      if (!fit.converged) failure = "spectra fit did not converge";
    }

    if (out_path.empty()) {
      out << body.str();
    } else {
      std::ofstream f(out_path, std::ios::binary);
      if (!f) throw ConfigError("cannot write '" + out_path + "'");
      f << body.str();
    }
    if (failure) {
      emit_error("flagged_failure", *failure);
      return 2;
    }
    return 0;
  } catch (const Error& e) {
    emit_error(e.kind(), e.what());
    return e.kind() == "config_error" || e.kind() == "malformed_csv" ? 1 : 2;
  } catch (const std::exception& e) {
    emit_error("invalid_argument", e.what());
    return 1;
  }
}

}  // namespace ionlink::cli
