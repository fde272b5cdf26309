#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "ionlink/ionlink.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

using namespace ionlink;

namespace {

constexpr double kOmega = 2 * oracle::pi * 2.25e3;
const ExchangeModel kTrace{3.9, 9.0, kOmega, 3e-3, 1.3e3};

double rel(double a, double b) { return std::abs(a / b - 1.0); }

SpectraFitOptions rough_start() {
  SpectraFitOptions o;
  o.initial = calibrate_symmetric(55e-6, 530e3, calcium40());
  o.initial.tune1 = 2.2e-19;
  o.initial.tune2 = 1900.0 * 2.2e-19;
  return o;
}

}  // namespace

TEST(ExchangeFit, RecoversExactModelData) {
  const auto fit = fit_exchange(synthetic::synthetic_exchange(kTrace, 50, 1e-3, 0.0));
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.residual, 1e-12);
  EXPECT_LT(fit.residual, fit.initial_residual);
  EXPECT_LT(rel(fit.parameters.at("n1_0"), 3.9), 1e-6);
  EXPECT_LT(rel(fit.parameters.at("n2_0"), 9.0), 1e-6);
  EXPECT_LT(rel(fit.parameters.at("omega_c"), kOmega), 1e-6);
  EXPECT_LT(rel(fit.parameters.at("tau_damp"), 3e-3), 1e-6);
  EXPECT_LT(rel(fit.parameters.at("gamma_h"), 1.3e3), 1e-6);
}

TEST(ExchangeFit, MonteCarloFivePercentNoise) {
  std::mt19937_64 rng(77);
  int within_two_sigma = 0;
  double mean_err = 0.0;
  const int runs = 100;
  for (int i = 0; i < runs; ++i) {
    const auto fit = fit_exchange(synthetic::synthetic_exchange(kTrace, 50, 1e-3, 0.05, &rng));
    ASSERT_TRUE(fit.converged);
    const double w = fit.parameters.at("omega_c");
    EXPECT_LT(rel(w, kOmega), 0.02);
    mean_err += (w - kOmega) / kOmega / runs;
    if (std::abs(w - kOmega) <= 2 * fit.uncertainties.at("omega_c")) ++within_two_sigma;
  }
  EXPECT_LT(std::abs(mean_err), 0.003);
  // Curvature error bars should cover the truth roughly 95% of the time.
  EXPECT_GE(within_two_sigma, 85);
}

TEST(ExchangeFit, SigmaScalingLeavesOptimumUnchanged) {
  std::mt19937_64 rng(5);
  auto data = synthetic::synthetic_exchange(kTrace, 50, 1e-3, 0.05, &rng);
  const auto a = fit_exchange(data);
  for (auto& d : data) d.sigma *= 3.0;
  const auto b = fit_exchange(data);
  for (const auto& [name, value] : a.parameters) EXPECT_LT(rel(b.parameters.at(name), value), 1e-5) << name;
  EXPECT_NEAR(b.residual, a.residual / 9.0, 1e-6 * a.residual);
}

TEST(ExchangeFit, InitialFrequencyFromSpectrum) {
  const auto data = synthetic::synthetic_exchange(kTrace, 80, 2e-3, 0.0);
  EXPECT_LT(rel(dominant_angular_frequency(data), kOmega), 0.05);
}

TEST(ExchangeFit, FrozenParametersAreHeld) {
  ExchangeFitOptions o;
  o.frozen = {"gamma_h"};
  o.initial = {{"gamma_h", 0.0}};
  const ExchangeModel no_heating{3.9, 9.0, kOmega, 3e-3, 0.0};
  const auto fit = fit_exchange(synthetic::synthetic_exchange(no_heating, 50, 1e-3, 0.0), o);
  EXPECT_EQ(fit.parameters.at("gamma_h"), 0.0);
  EXPECT_EQ(fit.uncertainties.at("gamma_h"), 0.0);
  EXPECT_LT(rel(fit.parameters.at("omega_c"), kOmega), 1e-6);
  o.initial = {{"no_such_parameter", 1.0}};
  EXPECT_THROW(fit_exchange(synthetic::synthetic_exchange(no_heating, 50, 1e-3, 0.0), o),
               std::invalid_argument);
}

TEST(ExchangeFit, DegenerateDataIsFlagged) {
  std::vector<ExchangeSample> flat;
  for (int k = 0; k < 20; ++k) flat.push_back({k * 5e-5, 4.0, 0.2});
  EXPECT_FALSE(fit_exchange(flat).converged);
  flat.resize(5);
  EXPECT_THROW(fit_exchange(flat), std::invalid_argument);
  auto bad = synthetic::synthetic_exchange(kTrace, 20, 1e-3, 0.0);
  bad[3].sigma = 0.0;
  EXPECT_THROW(fit_exchange(bad), std::invalid_argument);
}

TEST(CrossingFit, RecoversExactHyperbola) {
  const Hyperbola h{541e3, 2e4, 0.01, 5.5e3};
  const auto fit = fit_avoided_crossing(synthetic::synthetic_crossing(h, 21, 1.0, 0.0, 50.0));
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.residual, 1e-12);
  EXPECT_LT(rel(fit.parameters.at("splitting"), 5.5e3), 1e-6);
  EXPECT_LT(rel(fit.parameters.at("slope"), 2e4), 1e-6);
  EXPECT_NEAR(fit.parameters.at("u_res"), 0.01, 1e-8);
  EXPECT_LT(rel(fit.parameters.at("nu_bar"), 541e3), 1e-9);
}

TEST(CrossingFit, MatchesHessianScanSplitting) {
  const auto ca = calcium40();
  const auto p = synthetic::reference_trap();
  for (auto [nl, nr] : std::vector<std::pair<int, int>>{{1, 1}, {2, 2}}) {
    const IonConfiguration config(ca, nl, nr);
    const auto [lo, hi] = auto_scan_range(p, config);
    const auto scan = scan_crossing(p, config, lo, hi, 41);
    std::vector<CrossingSample> pts;
    for (const auto& s : scan.points) {
      pts.push_back({s.u_ax, s.nu_low, 1.0});
      pts.push_back({s.u_ax, s.nu_high, 1.0});
    }
    const auto fit = fit_avoided_crossing(pts);
    EXPECT_LT(rel(fit.parameters.at("splitting"), scan.splitting), 0.02) << nl << "+" << nr;
  }
}

TEST(CrossingFit, ZeroSplittingIsConsistentWithZero) {
  std::mt19937_64 rng(8);
  const Hyperbola h{541e3, 2e4, 0.0, 0.0};
  const auto fit = fit_avoided_crossing(synthetic::synthetic_crossing(h, 21, 1.0, 20.0, 20.0, &rng));
  EXPECT_LE(fit.parameters.at("splitting"), 2.0 * fit.uncertainties.at("splitting") + 1e-9);
}

TEST(CrossingFit, OneBranchGivesIdentifiabilityWarning) {
  const Hyperbola h{541e3, 2e4, 0.0, 5.5e3};
  std::vector<CrossingSample> pts;
  for (int k = 0; k < 15; ++k) {
    const double u = -1.0 + 2.0 * k / 14;
    pts.push_back({u, h.upper(u), 50.0});
  }
  const auto fit = fit_avoided_crossing(pts);
  EXPECT_FALSE(fit.warnings.empty());
  EXPECT_THROW(fit_avoided_crossing(std::vector<CrossingSample>(pts.begin(), pts.begin() + 3)),
               std::invalid_argument);
}

TEST(SpectraFit, RecoversPotentialFromNoiselessSpectra) {
  const auto truth = synthetic::reference_trap();
  const auto ca = calcium40();
  synthetic::SpectraRecipe recipe;
  const auto fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe), ca, rough_start());
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(fit.residual, 1e-12);
  EXPECT_LT(rel(fit.parameters.at("alpha2"), truth.alpha2), 1e-4);
  EXPECT_LT(rel(fit.parameters.at("alpha4"), truth.alpha4), 1e-4);
  const auto p = potential_from_fit(fit);
  EXPECT_LT(rel(p.tune1, truth.tune1), 1e-4);
  EXPECT_LT(rel(p.tune2, truth.tune2), 1e-4);
}

TEST(SpectraFit, RecoversInjectedDrift) {
  const auto truth = synthetic::reference_trap();
  const auto ca = calcium40();
  synthetic::SpectraRecipe recipe;
  recipe.drift_rate = 7e-3 / 3600.0;
  recipe.u_offset = 0.02;
  const auto fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe), ca, rough_start());
  ASSERT_TRUE(fit.converged);
  EXPECT_LT(rel(fit.parameters.at("drift_rate"), recipe.drift_rate), 0.10);
  EXPECT_NEAR(fit.parameters.at("u_offset"), 0.02, 1e-4);
}

TEST(SpectraFit, MonteCarloSplittingUnderFrequencyNoise) {
  const auto truth = synthetic::reference_trap();
  const auto ca = calcium40();
  const IonConfiguration one_one(ca, 1, 1);
  const double s_true = locate_resonance(truth, one_one).splitting;
  synthetic::SpectraRecipe recipe;
  recipe.noise_hz = 100.0;
  recipe.sigma_hz = 100.0;
  std::mt19937_64 rng(31);
  for (int i = 0; i < 4; ++i) {
    const auto fit = fit_spectra(synthetic::synthetic_spectra(truth, ca, recipe, &rng), ca, rough_start());
    ASSERT_TRUE(fit.converged);
    const auto p = potential_from_fit(fit);
    const double s = locate_resonance(p, one_one).splitting;
    EXPECT_LT(rel(s, s_true), 0.05) << "dataset " << i;
  }
}

TEST(SpectraFit, WarnsWhenUnderdetermined) {
  const auto truth = synthetic::reference_trap();
  const auto ca = calcium40();
  synthetic::SpectraRecipe recipe;
  recipe.configs = {{1, 1}};
  recipe.duration = 0.0;
  const auto data = synthetic::synthetic_spectra(truth, ca, recipe);
  const auto fit = fit_spectra(data, ca, rough_start());
  auto has = [&](const std::string& needle) {
    return std::any_of(fit.warnings.begin(), fit.warnings.end(),
                       [&](const std::string& w) { return w.find(needle) != std::string::npos; });
  };
  EXPECT_TRUE(has("single configuration"));
  EXPECT_TRUE(has("drift_rate held fixed"));
  EXPECT_TRUE(has("identifiability"));
}

TEST(ExchangeFit, RecoversReferenceTraceWithinQuotedBars) {
  // Reference exchange: T_swap = 222(10) us, tau_damp = 3(2) ms,
  // heating 1.3(7) quanta/ms. Medians over noisy draws must land inside.
  std::mt19937_64 rng(2010);
  std::vector<double> t_swap, tau, gamma;
  for (int i = 0; i < 21; ++i) {
    const auto fit = fit_exchange(synthetic::synthetic_exchange(kTrace, 50, 1e-3, 0.05, &rng));
    ASSERT_TRUE(fit.converged);
    t_swap.push_back(swap_time(fit.parameters.at("omega_c")));
    tau.push_back(fit.parameters.at("tau_damp"));
    gamma.push_back(fit.parameters.at("gamma_h"));
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    return v[v.size() / 2];
  };
  EXPECT_NEAR(median(t_swap), 222e-6, 10e-6);
  EXPECT_NEAR(median(tau), 3e-3, 2e-3);
  EXPECT_NEAR(median(gamma), 1.3e3, 0.7e3);
  int t_inside = 0;
  for (double t : t_swap) t_inside += std::abs(t - 222e-6) <= 10e-6;
  EXPECT_EQ(t_inside, 21);
}
