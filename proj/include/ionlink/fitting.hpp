#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ionlink/constants.hpp"
#include "ionlink/dynamics.hpp"
#include "ionlink/equilibrium.hpp"
#include "ionlink/modes.hpp"
#include "ionlink/optimize.hpp"
#include "ionlink/potential.hpp"

namespace ionlink {

struct FitResult {
  std::map<std::string, double> parameters;
  std::map<std::string, double> uncertainties;  // 1 sigma from residual curvature
  double residual = 0.0;          // weighted sum of squares at the optimum
  double initial_residual = 0.0;  // same, at the initial guess
  bool converged = false;
  int evaluations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

inline FitResult to_fit_result(const optimize::Solution& sol,
                               const std::vector<optimize::Parameter>& params) {
  FitResult out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.parameters[params[i].name] = sol.values[i];
    out.uncertainties[params[i].name] = sol.uncertainties[i];
  }
  out.residual = sol.residual;
  out.initial_residual = sol.initial_residual;
  out.converged = sol.converged;
  out.evaluations = sol.evaluations;
  out.warnings = sol.warnings;
  return out;
}

/// Applies user starting values and frozen flags; unknown names are errors.
inline void apply_user_choices(std::vector<optimize::Parameter>& params,
                               const std::map<std::string, double>& initial,
                               const std::set<std::string>& frozen) {
  auto find = [&](const std::string& name) -> optimize::Parameter& {
    for (auto& p : params) {
      if (p.name == name) return p;
    }
    throw std::invalid_argument("fit: unknown parameter '" + name + "'");
  };
  for (const auto& [name, value] : initial) {
    if (!std::isfinite(value)) throw std::invalid_argument("fit: starting value for " + name);
    find(name).initial = value;
  }
  for (const auto& name : frozen) find(name).fixed = true;
}

inline void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("fit: every sigma must be positive and finite");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Exchange traces
// ---------------------------------------------------------------------------

struct ExchangeSample {
  double tau = 0.0;    // s
  double n1 = 0.0;     // quanta
  double sigma = 0.0;  // quanta
};

struct ExchangeFitOptions {
  int restarts = 5;
  std::uint64_t seed = 20100503;
  std::set<std::string> frozen;          // names of parameters held at their starting value
  std::map<std::string, double> initial;  // starting values replacing the automatic guess
};

/// Angular frequency (rad/s) of the strongest peak in the discrete spectrum
/// of the linearly detrended samples.
inline double dominant_angular_frequency(std::span<const ExchangeSample> data) {
  const auto n = data.size();
  double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (const auto& d : data) {
    const double w = 1.0 / (d.sigma * d.sigma);
    sw += w;
    st += w * d.tau;
    sy += w * d.n1;
    stt += w * d.tau * d.tau;
    sty += w * d.tau * d.n1;
  }
  const double det = sw * stt - st * st;
  const double slope = det != 0.0 ? (sw * sty - st * sy) / det : 0.0;
  const double icpt = (sy - slope * st) / sw;

  std::vector<double> taus;
  for (const auto& d : data) taus.push_back(d.tau);
  std::sort(taus.begin(), taus.end());
  const double span = taus.back() - taus.front();
  std::vector<double> gaps;
  for (std::size_t i = 1; i < n; ++i) {
    if (taus[i] > taus[i - 1]) gaps.push_back(taus[i] - taus[i - 1]);
  }
  if (!(span > 0.0) || gaps.empty()) return 0.0;
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  const double w_min = constants::kPi / (2.0 * span);
  const double w_max = constants::kPi / gaps[gaps.size() / 2];
  const int grid = 4000;
  double best_w = 0.0;
  double best_power = -1.0;
  for (int k = 0; k <= grid; ++k) {
    const double w = w_min + (w_max - w_min) * k / grid;
    std::complex<double> acc = 0.0;
    for (const auto& d : data) {
      acc += (d.n1 - icpt - slope * d.tau) * std::polar(1.0, -w * d.tau);
    }
    const double power = std::norm(acc);
    if (power > best_power) {
      best_power = power;
      best_w = w;
    }
  }
  return best_w;
}

/// Weighted fit of the damped exchange trace. Damping is fitted as a rate
/// internally and reported as tau_damp.
inline FitResult fit_exchange(std::span<const ExchangeSample> data,
                              const ExchangeFitOptions& opts = {}) {
  if (data.size() < 8) throw std::invalid_argument("fit_exchange: need at least 8 samples");
  for (const auto& d : data) {
    detail::require_sigma(d.sigma);
    if (!(d.tau >= 0.0)) throw std::invalid_argument("fit_exchange: waiting times must be >= 0");
  }
  double t_min = data[0].tau;
  double t_max = data[0].tau;
  double mean = 0.0;
  for (const auto& d : data) {
    t_min = std::min(t_min, d.tau);
    t_max = std::max(t_max, d.tau);
    mean += d.n1 / static_cast<double>(data.size());
  }
  const double span = t_max - t_min;
  if (!(span > 0.0)) throw std::invalid_argument("fit_exchange: samples span no time");

  double variation = 0.0;
  for (const auto& d : data) variation = std::max(variation, std::abs(d.n1 - mean));
  const bool flat = variation <= 1e-12 * std::max(1.0, std::abs(mean));

  // Initial guess: detrend, take the spectral peak, project the amplitude.
  double w0 = flat ? constants::kPi / span : dominant_angular_frequency(data);
  if (!(w0 > 0.0)) w0 = constants::kPi / span;
  Eigen::MatrixXd design(data.size(), 3);
  Eigen::VectorXd rhs(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = 1.0 / data[i].sigma;
    design(i, 0) = w;
    design(i, 1) = w * data[i].tau;
    design(i, 2) = w * std::cos(w0 * data[i].tau);
    rhs[i] = w * data[i].n1;
  }
  const Eigen::Vector3d lin = design.colPivHouseholderQr().solve(rhs);
  const double nbar0 = lin[0];
  const double heating0 = std::max(lin[1], 0.0);
  const double half_dn0 = lin[2];

  std::vector<optimize::Parameter> params{
      {"n1_0", std::max(nbar0 + half_dn0, 0.0), std::max(0.05 * std::abs(mean), 0.05), false},
      {"n2_0", std::max(nbar0 - half_dn0, 0.0), std::max(0.05 * std::abs(mean), 0.05), false},
      {"omega_c", w0, 0.02 * w0, false},
      {"damping_rate", 1.0 / (3.0 * span), 0.5 / span, false},
      {"gamma_h", heating0, std::max(0.05 * std::abs(mean) / span, 1e-9), false},
  };
  // tau_damp is the public name of the fitted damping rate.
  auto initial = opts.initial;
  auto frozen = opts.frozen;
  if (const auto it = initial.find("tau_damp"); it != initial.end()) {
    if (!(it->second > 0.0)) throw std::invalid_argument("fit_exchange: tau_damp must be positive");
    initial["damping_rate"] = 1.0 / it->second;
    initial.erase(it);
  }
  if (frozen.erase("tau_damp") > 0) frozen.insert("damping_rate");
  detail::apply_user_choices(params, initial, frozen);

  const auto residual = [&](const std::vector<double>& v) {
    Eigen::VectorXd r(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double tau = data[i].tau;
      const double env = std::cos(v[2] * tau) * std::exp(-v[3] * tau);
      const double model = v[0] + 0.5 * (v[1] - v[0]) * (1.0 - env) + v[4] * tau;
      r[i] = (model - data[i].n1) / data[i].sigma;
    }
    return r;
  };
  optimize::Options o;
  o.restarts = opts.restarts;
  o.seed = opts.seed;
  const auto sol = optimize::least_squares(residual, params, o);

  FitResult out = detail::to_fit_result(sol, params);
  const double rate = out.parameters.at("damping_rate");
  const double rate_err = out.uncertainties.at("damping_rate");
  out.parameters.erase("damping_rate");
  out.uncertainties.erase("damping_rate");
  out.parameters["tau_damp"] =
      rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
  out.uncertainties["tau_damp"] =
      rate > 0.0 ? rate_err / (rate * rate) : std::numeric_limits<double>::infinity();
  if (!(rate > 0.0)) out.warnings.push_back("fitted damping rate is not positive");
  const double omega = out.parameters.at("omega_c");
  if (omega > 0.0 && span < constants::kPi / omega) {
    out.warnings.push_back("samples span less than one swap time");
  }
  if (flat) {
    out.converged = false;
    out.warnings.push_back("trace is constant; exchange rate is not identifiable");
  } else if (sol.rank < static_cast<int>(std::count_if(params.begin(), params.end(),
                                                       [](const auto& p) { return !p.fixed; }))) {
    out.converged = false;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Avoided crossings
// ---------------------------------------------------------------------------

struct CrossingSample {
  double u_ax = 0.0;       // V
  double frequency = 0.0;  // Hz
  double sigma = 0.0;      // Hz
};

struct CrossingFitOptions {
  int restarts = 5;
  std::uint64_t seed = 20100503;
  std::set<std::string> frozen;
  std::map<std::string, double> initial;
};

/// Two-level hyperbola nu_{+-}(u) = nu_bar +- sqrt(slope^2 (u - u_res)^2 + s^2) / 2.
struct Hyperbola {
  double nu_bar = 0.0;
  double slope = 0.0;
  double u_res = 0.0;
  double splitting = 0.0;

  double half_gap(double u) const {
    const double du = slope * (u - u_res);
    return 0.5 * std::sqrt(du * du + splitting * splitting);
  }
  double upper(double u) const { return nu_bar + half_gap(u); }
  double lower(double u) const { return nu_bar - half_gap(u); }
};

/// Unlabelled branch points; each point is assigned to the nearer branch.
inline FitResult fit_avoided_crossing(std::span<const CrossingSample> points,
                                      const CrossingFitOptions& opts = {}) {
  if (points.size() < 4) throw std::invalid_argument("fit_avoided_crossing: need at least 4 points");
  double wsum = 0.0;
  double nu_bar0 = 0.0;
  double u_lo = points[0].u_ax;
  double u_hi = points[0].u_ax;
  for (const auto& p : points) {
    detail::require_sigma(p.sigma);
    const double w = 1.0 / (p.sigma * p.sigma);
    wsum += w;
    nu_bar0 += w * p.frequency;
    u_lo = std::min(u_lo, p.u_ax);
    u_hi = std::max(u_hi, p.u_ax);
  }
  nu_bar0 /= wsum;
  const double u_span = std::max(u_hi - u_lo, 1e-12);

  // gap(u)^2 = 4 (nu - nu_bar)^2 is quadratic in u for the two-level model.
  Eigen::MatrixXd design(points.size(), 3);
  Eigen::VectorXd rhs(points.size());
  double max_gap = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double u = (points[i].u_ax - u_lo) / u_span;
    const double g = 2.0 * std::abs(points[i].frequency - nu_bar0);
    design.row(i) << u * u, u, 1.0;
    rhs[i] = g * g;
    max_gap = std::max(max_gap, g);
  }
  const Eigen::Vector3d q = design.colPivHouseholderQr().solve(rhs);
  double slope0 = max_gap / u_span;
  double u_res0 = 0.5 * (u_lo + u_hi);
  double s0 = 0.25 * max_gap;
  if (q[0] > 0.0) {
    slope0 = std::sqrt(q[0]) / u_span;
    u_res0 = u_lo - q[1] / (2.0 * q[0]) * u_span;
    const double s2 = q[2] - q[1] * q[1] / (4.0 * q[0]);
    s0 = s2 > 0.0 ? std::sqrt(s2) : 0.1 * max_gap;
  }
  const double scale_nu = std::max(0.05 * std::max(s0, 0.1 * max_gap), 1e-9);
  std::vector<optimize::Parameter> params{
      {"nu_bar", nu_bar0, scale_nu, false},
      {"slope", slope0, 0.05 * std::max(slope0, 1e-12), false},
      {"u_res", u_res0, 0.02 * u_span, false},
      {"splitting", s0, scale_nu, false},
  };
  detail::apply_user_choices(params, opts.initial, opts.frozen);

  const auto residual = [&](const std::vector<double>& v) {
    const Hyperbola h{v[0], v[1], v[2], v[3]};
    Eigen::VectorXd r(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double up = h.upper(points[i].u_ax);
      const double lo = h.lower(points[i].u_ax);
      const double nu = points[i].frequency;
      const double nearest = std::abs(nu - up) < std::abs(nu - lo) ? up : lo;
      r[i] = (nearest - nu) / points[i].sigma;
    }
    return r;
  };
  optimize::Options o;
  o.restarts = opts.restarts;
  o.seed = opts.seed;
  const auto sol = optimize::least_squares(residual, params, o);
  FitResult out = detail::to_fit_result(sol, params);
  out.parameters["splitting"] = std::abs(out.parameters["splitting"]);
  out.parameters["slope"] = std::abs(out.parameters["slope"]);

  const Hyperbola h{out.parameters["nu_bar"], out.parameters["slope"], out.parameters["u_res"],
                    out.parameters["splitting"]};
  int upper = 0;
  int lower = 0;
  for (const auto& p : points) {
    (std::abs(p.frequency - h.upper(p.u_ax)) < std::abs(p.frequency - h.lower(p.u_ax)) ? upper
                                                                                       : lower)++;
  }
  if (upper < 2 || lower < 2) {
    out.warnings.push_back("points populate only one branch; splitting is not identifiable");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-configuration mode spectra
// ---------------------------------------------------------------------------

struct SpectraPoint {
  double u_ax = 0.0;       // V, as set on the electrode
  double frequency = 0.0;  // Hz
  double sigma = 0.0;      // Hz
  double timestamp = 0.0;  // s
};

struct SpectraSeries {
  int n_left = 0;
  int n_right = 0;
  std::vector<SpectraPoint> points;
};

struct SpectraDataset {
  std::vector<SpectraSeries> series;
};

struct SpectraFitOptions {
  AxialPotential initial;  // starting alpha2, alpha4, tune1, tune2; alpha1 is held fixed
  double u_offset = 0.0;   // V
  double drift_rate = 0.0;  // V/s
  std::set<std::string> frozen;
  int restarts = 5;
  std::uint64_t seed = 20100503;
};

inline const std::vector<std::string>& spectra_parameter_names() {
  static const std::vector<std::string> names{"alpha2", "alpha4",   "tune1",
                                              "tune2",  "u_offset", "drift_rate"};
  return names;
}

/// Control-voltage tuning guess from the data: makes the widest scanned
/// voltage span detune the two single-ion wells by ten times the smallest
/// observed two-branch gap.
inline double guess_tune1(const AxialPotential& p, const IonSpecies& species,
                          const SpectraDataset& data) {
  double span = 0.0;
  double min_gap = std::numeric_limits<double>::infinity();
  for (const auto& s : data.series) {
    std::map<double, std::pair<double, double>> by_u;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& pt : s.points) {
      lo = std::min(lo, pt.u_ax);
      hi = std::max(hi, pt.u_ax);
      auto [it, inserted] = by_u.try_emplace(pt.u_ax, pt.frequency, pt.frequency);
      if (!inserted) {
        it->second.first = std::min(it->second.first, pt.frequency);
        it->second.second = std::max(it->second.second, pt.frequency);
      }
    }
    span = std::max(span, hi - lo);
    for (const auto& [u, f] : by_u) {
      if (f.second > f.first) min_gap = std::min(min_gap, f.second - f.first);
    }
  }
  if (!std::isfinite(min_gap)) min_gap = 1e3;
  if (!(span > 0.0)) span = 1.0;
  // d(detuning)/d(alpha1) of single ions, by central difference.
  AxialPotential q = p;
  const double h = 1e-3 * std::abs(p.alpha2) * 1e-6;
  q.alpha1 = p.alpha1 + h;
  const auto gp = find_wells(q, 0.0, species);
  q.alpha1 = p.alpha1 - h;
  const auto gm = find_wells(q, 0.0, species);
  const double sens = ((gp.freq_right - gp.freq_left) - (gm.freq_right - gm.freq_left)) / (2.0 * h);
  if (sens == 0.0) return 0.0;
  return 10.0 * min_gap / (std::abs(sens) * span);
}

/// Shared-parameter fit of all configurations: the effective control voltage
/// is u_ax + u_offset + drift_rate * timestamp, and each measured frequency
/// is compared with the nearer of the two lowest computed modes.
inline FitResult fit_spectra(const SpectraDataset& data, const IonSpecies& species,
                             const SpectraFitOptions& opts) {
  std::vector<std::string> warnings;
  double t_lo = std::numeric_limits<double>::infinity();
  double t_hi = -t_lo;
  double u_lo = t_lo;
  double u_hi = -t_lo;
  std::size_t n_points = 0;
  for (const auto& s : data.series) {
    (void)IonConfiguration(species, s.n_left, s.n_right);
    if (s.n_left + s.n_right < 2) throw std::invalid_argument("fit_spectra: series needs two ions");
    if (s.points.size() < 3) throw std::invalid_argument("fit_spectra: need >= 3 points per series");
    for (const auto& pt : s.points) {
      detail::require_sigma(pt.sigma);
      t_lo = std::min(t_lo, pt.timestamp);
      t_hi = std::max(t_hi, pt.timestamp);
      u_lo = std::min(u_lo, pt.u_ax);
      u_hi = std::max(u_hi, pt.u_ax);
    }
    n_points += s.points.size();
  }
  if (data.series.empty()) throw std::invalid_argument("fit_spectra: empty dataset");
  if (data.series.size() < 2) {
    warnings.push_back(
        "identifiability: a single configuration does not separate potential and tuning");
  }

  AxialPotential start = opts.initial;
  if (start.tune1 == 0.0 && !opts.frozen.count("tune1")) start.tune1 = guess_tune1(start, species, data);
  const double u_span = std::max(u_hi - u_lo, 1e-3);
  const double t_span = t_hi - t_lo;

  std::vector<optimize::Parameter> params{
      {"alpha2", start.alpha2, 0.01 * std::abs(start.alpha2), false},
      {"alpha4", start.alpha4, 0.01 * std::abs(start.alpha4), false},
      {"tune1", start.tune1, 0.1 * std::max(std::abs(start.tune1), 1e-30), false},
      {"tune2", start.tune2,
       start.tune2 != 0.0 ? 0.1 * std::abs(start.tune2) : 1e-3 * std::abs(start.alpha2) / u_span,
       false},
      {"u_offset", opts.u_offset, 0.02 * u_span, false},
      {"drift_rate", opts.drift_rate, t_span > 0.0 ? 0.02 * u_span / t_span : 1.0, false},
  };
  detail::apply_user_choices(params, {}, opts.frozen);
  if (!(t_span > 0.0) && !params[5].fixed) {
    params[5].fixed = true;
    warnings.push_back("all timestamps equal: drift_rate held fixed");
  }
  for (const auto& p : params) {
    if (!p.fixed && !(p.scale > 0.0)) {
      throw std::invalid_argument("fit_spectra: initial " + p.name + " must be non-zero");
    }
  }

  std::vector<IonConfiguration> configs;
  for (const auto& s : data.series) configs.emplace_back(species, s.n_left, s.n_right);
  // Warm-start positions per data point, updated after every successful solve.
  std::vector<std::vector<std::vector<double>>> warm(data.series.size());
  for (std::size_t k = 0; k < data.series.size(); ++k) warm[k].resize(data.series[k].points.size());

  const auto residual = [&](const std::vector<double>& v) {
    AxialPotential pot = start;
    pot.alpha2 = v[0];
    pot.alpha4 = v[1];
    pot.tune1 = v[2];
    pot.tune2 = v[3];
    Eigen::VectorXd r(static_cast<Eigen::Index>(n_points));
    Eigen::Index row = 0;
    if (!(pot.alpha4 > 0.0)) {
      r.setConstant(std::numeric_limits<double>::quiet_NaN());
      return r;
    }
    for (std::size_t k = 0; k < data.series.size(); ++k) {
      std::map<double, std::optional<detail::LowestPair>> memo;
      const auto& pts = data.series[k].points;
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const double u_eff = pts[i].u_ax + v[4] + v[5] * pts[i].timestamp;
        auto it = memo.find(u_eff);
        if (it == memo.end()) {
          it = memo.emplace(u_eff, detail::lowest_pair(pot, u_eff, configs[k], &warm[k][i])).first;
        }
        const auto& pair = it->second;
        if (!pair) {
          r[row++] = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        warm[k][i] = pair->positions;
        const double nu = pts[i].frequency;
        const double nearest =
            std::abs(nu - pair->low) < std::abs(nu - pair->high) ? pair->low : pair->high;
        r[row++] = (nearest - nu) / pts[i].sigma;
      }
    }
    return r;
  };

  optimize::Options o;
  o.restarts = opts.restarts;
  o.seed = opts.seed;
  o.restart_spread = 0.5;
  const auto sol = optimize::least_squares(residual, params, o);
  FitResult out = detail::to_fit_result(sol, params);
  out.warnings.insert(out.warnings.begin(), warnings.begin(), warnings.end());
  if (sol.rank < static_cast<int>(std::count_if(params.begin(), params.end(),
                                                [](const auto& p) { return !p.fixed; }))) {
    out.warnings.push_back("identifiability: data do not constrain all free parameters");
  }
  return out;
}

/// Potential described by a fit_spectra result (alpha1 taken from `base`).
inline AxialPotential potential_from_fit(const FitResult& fit, const AxialPotential& base = {}) {
  AxialPotential p = base;
  p.alpha2 = fit.parameters.at("alpha2");
  p.alpha4 = fit.parameters.at("alpha4");
  p.tune1 = fit.parameters.at("tune1");
  p.tune2 = fit.parameters.at("tune2");
  return p;
}

}  // namespace ionlink
