// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ionlink/ionlink.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace ionlink;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

constexpr double kTwoPi = 2.0 * constants::kPi;

Outcome analytic_coupling() {
  const auto ca = calcium40();
  const double omega = coupling_rate(ca, ca, 537e3, 537e3, 54e-6);
  const double khz = omega / kTwoPi / 1e3;
  const double oracle = oracle::coupling_rate_si(537e3, 54e-6) / kTwoPi / 1e3;
  const bool in_band = khz >= 2.0 && khz <= 2.2;
  const bool matches_oracle = std::abs(khz / oracle - 1.0) < 1e-12;
  const bool within_sigma = std::abs(khz - 1.9) <= 0.3;
  return {in_band && matches_oracle && within_sigma,
          fmt("Omega_c/2pi = %.4f kHz (oracle %.4f kHz, measured 1.9(3) kHz)", khz, oracle)};
}

Outcome swap_consistency() {
  const double t = swap_time(kTwoPi * 2.25e3);
  const double exact = 1.0 / (2.0 * 2.25e3);
  const bool ok = std::abs(t / exact - 1.0) <= 1e-9 && std::abs(t - 222e-6) <= 10e-6;
  return {ok, fmt("T_swap = %.4f us (expected %.4f us, measured 222(10) us)", t * 1e6, exact * 1e6)};
}

Outcome hessian_vs_analytic() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pot = synthetic::reference_trap();
  const auto ca = calcium40();
  const IonConfiguration config(ca, 1, 1);
  const auto est = locate_resonance(pot, config);
  const auto spec = mode_frequencies(pot, est.u_res, config);
  const double split = spec.frequencies[1] - spec.frequencies[0];
  const double r = spec.positions[1] - spec.positions[0];
  const double f_mean = 0.5 * (spec.frequencies[0] + spec.frequencies[1]);
  const double analytic = coupling_rate(ca, ca, f_mean, f_mean, r) / kTwoPi;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double rel = split / analytic - 1.0;
  return {std::abs(rel) <= 0.05 && secs < 1.0,
          fmt("modes %.2f Hz vs analytic %.2f Hz (%+.3f%%), %.3f s", split, analytic, 100 * rel, secs)};
}

Outcome stretch_mode() {
  const auto ca = calcium40();
  const double f = 1e6;
  AxialPotential harmonic;
  harmonic.alpha2 = 0.5 * ca.mass * std::pow(kTwoPi * f, 2);
  const IonConfiguration config(ca, 2, 0);
  const auto spec = mode_frequencies(harmonic, 0.0, config);
  const double ratio = spec.frequencies[1] / spec.frequencies[0];
  // Independent route: finite-difference Hessian of the total energy.
  const auto eq = solve_equilibrium(harmonic, 0.0, config);
  const auto h = oracle::fd_hessian(
      [&](const std::vector<double>& z) { return oracle::energy(harmonic, 0.0, z, ca); },
      eq.positions, 1e-9);
  const auto brute = oracle::mode_frequencies(h, ca.mass);
  const double brute_ratio = brute[1] / brute[0];
  const bool ok = std::abs(ratio / std::sqrt(3.0) - 1.0) <= 1e-6 &&
                  std::abs(brute_ratio / std::sqrt(3.0) - 1.0) <= 1e-6 &&
                  std::abs(spec.frequencies[0] / f - 1.0) <= 1e-9;
  return {ok, fmt("nu2/nu1 = %.10f (brute force %.10f, sqrt3 = %.10f)", ratio, brute_ratio, std::sqrt(3.0))};
}

std::vector<EnhancementRow> g_rows;
double g_rows_seconds = 0.0;

const std::vector<EnhancementRow>& rows() {
  if (g_rows.empty()) {
    const auto t0 = std::chrono::steady_clock::now();
    g_rows = enhancement_report(synthetic::reference_trap(), calcium40(), 3);
    g_rows_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return g_rows;
}

double splitting_of(int nl, int nr) {
  for (const auto& r : rows()) {
    if (r.n_left == nl && r.n_right == nr) return r.splitting;
  }
  return std::nan("");
}

Outcome antenna_enhancement() {
  const double s11 = splitting_of(1, 1);
  const double s22 = splitting_of(2, 2);
  const double s33 = splitting_of(3, 3);
  const double factor = s33 / s11;
  const bool ok = factor > 3.0 && factor >= 4.5 && factor <= 9.5 && std::abs(s22 / 5.5e3 - 1.0) <= 0.3 &&
                  g_rows_seconds < 30.0;
  return {ok, fmt("3+3/1+1 = %.2f (measured ~7), 2+2 = %.2f kHz (measured 5.5 kHz), %.2f s", factor,
                  s22 / 1e3, g_rows_seconds)};
}

Outcome monotonic_enhancement() {
  const std::vector<std::pair<int, int>> order{{1, 1}, {2, 1}, {2, 2}, {3, 2}, {3, 3}};
  std::string detail;
  bool ok = true;
  double prev = 0.0;
  for (const auto& [nl, nr] : order) {
    const double s = splitting_of(nl, nr);
    ok = ok && std::isfinite(s) && s > prev;
    prev = s;
    detail += std::to_string(nl) + "+" + std::to_string(nr) + fmt(" %.1f Hz  ", s);
  }
  return {ok, detail};
}

Outcome quantum_dynamics() {
  const auto t0 = std::chrono::steady_clock::now();
  const double omega = kTwoPi * 2.25e3;
  const double t_swap = swap_time(omega);

  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<FockState::Term> terms;
  double norm = 0.0;
  for (int a = 0; a <= 5; ++a) {
    for (int b = 0; a + b <= 7; ++b) {
      terms.push_back({a, b, Complex(g(rng), g(rng))});
      norm += std::norm(terms.back().amplitude);
    }
  }
  for (auto& t : terms) t.amplitude /= std::sqrt(norm);
  const auto psi = FockState::from_terms(terms, 12);
  double worst_norm = 0.0;
  double worst_manifold = 0.0;
  for (int k = 0; k <= 1000; ++k) {
    const double t = 100.0 * t_swap * k / 1000.0 + (k % 7) * 1.3e-7;
    const auto out = evolve_fock(psi, omega, t);
    worst_norm = std::max(worst_norm, std::abs(out.norm2() - 1.0));
    for (int n = 0; n <= 24; ++n) {
      worst_manifold =
          std::max(worst_manifold, std::abs(out.manifold_probability(n) - psi.manifold_probability(n)));
    }
  }
  const double bell = bell_fidelity(evolve_fock(FockState::basis(0, 1), omega, 0.5 * t_swap));
  double worst_transfer = 1.0;
  for (int n = 1; n <= 5; ++n) {
    const auto out = evolve_fock(FockState::basis(n, 0), omega, t_swap);
    worst_transfer = std::min(worst_transfer, std::norm(out.at(0, n)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = worst_norm <= 1e-9 && worst_manifold <= 1e-9 && bell >= 1.0 - 1e-9 &&
                  worst_transfer >= 1.0 - 1e-9 && secs < 1.0;
  return {ok, fmt("norm drift %.1e, manifold drift %.1e, 1-F_bell %.1e, 1-P_transfer %.1e", worst_norm,
                  worst_manifold, 1.0 - bell, 1.0 - worst_transfer) +
                  fmt(", %.3f s", secs)};
}

Outcome exchange_trace_check() {
  const ExchangeModel m{3.9, 9.0, kTwoPi * 2.25e3, 3e-3, 1.3e3};
  const double at0 = m(0.0);
  const double at222 = m(222e-6);
  const double oracle222 = oracle::exchange_value(3.9, 9.0, kTwoPi * 2.25e3, 3e-3, 1.3e3, 222e-6);
  ExchangeModel cold = m;
  cold.gamma_h = 0.0;
  bool bounded = true;
  for (int k = 0; k <= 5000; ++k) {
    const double tau = 10e-3 * k / 5000.0;
    const double dev = std::abs(cold(tau) - 0.5 * (cold.n1_0 + cold.n2_0));
    bounded = bounded && dev <= 0.5 * std::abs(cold.n2_0 - cold.n1_0) * std::exp(-tau / cold.tau_damp) + 1e-12;
  }
  const bool ok = at0 == 3.9 && std::abs(at222 - 9.1) <= 0.05 && std::abs(at222 - oracle222) <= 1e-12 && bounded;
  return {ok, fmt("trace(0) = %.17g, trace(222 us) = %.4f (oracle %.4f), envelope bound ", at0, at222,
                  oracle222) +
                  (bounded ? "holds" : "violated")};
}

Outcome fit_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;

  // Exact-model data.
  const ExchangeModel ex{3.9, 9.0, kTwoPi * 2.25e3, 3e-3, 1.3e3};
  const auto ex_fit = fit_exchange(synthetic::synthetic_exchange(ex, 50, 1e-3, 0.0));
  const Hyperbola hyp{541e3, 60e3, 0.01, 5.5e3};
  const auto cr_fit = fit_avoided_crossing(synthetic::synthetic_crossing(hyp, 21, 0.4, 0.0, 100.0));
  const auto truth = synthetic::reference_trap();
  const auto ca = calcium40();
  synthetic::SpectraRecipe recipe;
  SpectraFitOptions so;
  so.initial = calibrate_symmetric(55e-6, 530e3, ca);
  so.initial.tune1 = 2.2e-19;
  so.initial.tune2 = 1900.0 * 2.2e-19;
  const auto sp_fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe), ca, so);
  const double worst_exact = std::max({ex_fit.residual, cr_fit.residual, sp_fit.residual});
  ok = ok && worst_exact < 1e-12 && ex_fit.converged && cr_fit.converged && sp_fit.converged;
  detail += fmt("exact residuals %.1e/%.1e/%.1e; ", ex_fit.residual, cr_fit.residual, sp_fit.residual);

  // Exchange: 5% noise, 50 points over 1 ms, 100 datasets.
  std::mt19937_64 rng(20100503);
  double worst_ex = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto fit = fit_exchange(synthetic::synthetic_exchange(ex, 50, 1e-3, 0.05, &rng));
    worst_ex = std::max(worst_ex, std::abs(fit.parameters.at("omega_c") / ex.omega_c - 1.0));
  }
  ok = ok && worst_ex <= 0.02;
  detail += fmt("Omega_c worst %.2f%%; ", 100 * worst_ex);

  // Crossing: 50 Hz noise on both branches, 21 voltages, 100 datasets.
  double worst_cr = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto fit = fit_avoided_crossing(synthetic::synthetic_crossing(hyp, 21, 0.4, 50.0, 50.0, &rng));
    worst_cr = std::max(worst_cr, std::abs(fit.parameters.at("splitting") / hyp.splitting - 1.0));
  }
  ok = ok && worst_cr <= 0.02;
  detail += fmt("splitting worst %.2f%%; ", 100 * worst_cr);

  // Spectra: injected 7 mV per hour drift. Noiseless data must give the
  // rate within 10%; with 20 Hz noise the error must stay inside three
  // reported standard deviations.
  recipe.drift_rate = 7e-3 / 3600.0;
  const auto drift_fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe), ca, so);
  const double drift_err = drift_fit.parameters.at("drift_rate") / recipe.drift_rate - 1.0;
  ok = ok && std::abs(drift_err) <= 0.10;
  recipe.noise_hz = 20.0;
  recipe.sigma_hz = 20.0;
  const auto noisy_fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe, &rng), ca, so);
  const double noisy_dev = noisy_fit.parameters.at("drift_rate") - recipe.drift_rate;
  const double noisy_sigma = noisy_fit.uncertainties.at("drift_rate");
  ok = ok && std::abs(noisy_dev) <= 3.0 * noisy_sigma;
  detail += fmt("drift %+.2f%% (noiseless), %+.1f%% = %.1f sigma (20 Hz noise); ", 100 * drift_err,
                100 * noisy_dev / recipe.drift_rate, noisy_dev / noisy_sigma);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ok = ok && secs < 120.0;
  detail += fmt("%.1f s", secs);
  return {ok, detail};
}

Outcome angular_factors() {
  const double perp = angular_factor(constants::kPi / 2.0);
  const double magic = angular_factor(std::acos(std::sqrt(1.0 / 3.0)));
  const bool ok = std::abs(perp + 0.5) <= 1e-12 && std::abs(magic) <= 1e-12 &&
                  std::abs(angular_factor(magic_angle())) <= 1e-12;
  return {ok, fmt("f(pi/2) = %.15f, f(magic) = %.2e", perp, magic)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"analytic coupling rate", analytic_coupling},
      {"swap time", swap_consistency},
      {"Hessian splitting vs analytic rate", hessian_vs_analytic},
      {"two-ion stretch mode", stretch_mode},
      {"antenna enhancement", antenna_enhancement},
      {"monotonic enhancement", monotonic_enhancement},
      {"Fock-space dynamics", quantum_dynamics},
      {"exchange trace", exchange_trace_check},
      {"fit recovery", fit_recovery},
      {"angular factors", angular_factors},
  };
  int failures = 0;
  int index = 0;
  for (const auto& [name, check] : criteria) {
    ++index;
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("[%s] %2d %s: %s\n", o.pass ? "PASS" : "FAIL", index, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
