#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <initializer_list>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "ionlink/constants.hpp"
#include "ionlink/errors.hpp"

namespace ionlink {

using Complex = std::complex<double>;

/// Truncated two-mode Fock state, amplitudes c(n1, n2) with 0 <= n_i <= cutoff.
class FockState {
 public:
  struct Term {
    int n1;
    int n2;
    Complex amplitude;
  };

  /// Default cutoff is twice the highest occupied level plus four.
  static FockState from_terms(std::initializer_list<Term> terms, int cutoff = -1) {
    return from_terms(std::vector<Term>(terms), cutoff);
  }

  static FockState from_terms(const std::vector<Term>& terms, int cutoff = -1) {
    int top = 0;
    for (const auto& t : terms) {
      if (t.n1 < 0 || t.n2 < 0) throw std::invalid_argument("FockState: negative phonon number");
      top = std::max({top, t.n1, t.n2});
    }
    if (cutoff < 0) cutoff = 2 * top + 4;
    if (top > cutoff) throw CutoffTooSmall("FockState: occupied level exceeds cutoff");
    FockState s(cutoff);
    for (const auto& t : terms) s.at(t.n1, t.n2) += t.amplitude;
    s.check_normalized();
    return s;
  }

  static FockState basis(int n1, int n2, int cutoff = -1) {
    return from_terms({{n1, n2, Complex(1.0, 0.0)}}, cutoff);
  }

  int cutoff() const { return cutoff_; }
  int dim() const { return cutoff_ + 1; }

  Complex& at(int n1, int n2) { return amps_[index(n1, n2)]; }
  const Complex& at(int n1, int n2) const { return amps_[index(n1, n2)]; }

  double norm2() const {
    double s = 0.0;
    for (const auto& a : amps_) s += std::norm(a);
    return s;
  }

  /// Probability carried by the manifold n1 + n2 = total.
  double manifold_probability(int total) const {
    double s = 0.0;
    for (int n1 = std::max(0, total - cutoff_); n1 <= std::min(total, cutoff_); ++n1) {
      s += std::norm(at(n1, total - n1));
    }
    return s;
  }

  /// |<this|other>|^2; both states must share the cutoff.
  double fidelity(const FockState& other) const {
    if (other.cutoff_ != cutoff_) throw std::invalid_argument("fidelity: cutoff mismatch");
    Complex s = 0.0;
    for (std::size_t i = 0; i < amps_.size(); ++i) s += std::conj(amps_[i]) * other.amps_[i];
    return std::norm(s);
  }

  void check_normalized() const {
    if (std::abs(norm2() - 1.0) > 1e-9) {
      throw std::invalid_argument("FockState: state is not normalized");
    }
  }

 private:
  explicit FockState(int cutoff)
      : cutoff_(cutoff), amps_(static_cast<std::size_t>(cutoff + 1) * (cutoff + 1)) {}

  std::size_t index(int n1, int n2) const {
    if (n1 < 0 || n2 < 0 || n1 > cutoff_ || n2 > cutoff_) {
      throw std::out_of_range("FockState: level outside cutoff");
    }
    return static_cast<std::size_t>(n1) * dim() + n2;
  }

  int cutoff_ = 0;
  std::vector<Complex> amps_;
};

namespace detail {

inline double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

/// <m1, N-m1| U |n1, N-n1> for U = exp(i theta (a1 a2^+ + a1^+ a2)), from the
/// mode transformation a1^+ -> c a1^+ + i s a2^+, a2^+ -> i s a1^+ + c a2^+.
inline std::vector<Complex> beam_splitter_block(int total, double theta) {
  const int dim = total + 1;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const Complex i_pow[4] = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
  std::vector<double> log_fact(dim + 1, 0.0);
  for (int k = 1; k <= dim; ++k) log_fact[k] = log_fact[k - 1] + std::log(static_cast<double>(k));

  std::vector<Complex> block(static_cast<std::size_t>(dim) * dim, Complex(0.0, 0.0));
  for (int n1 = 0; n1 <= total; ++n1) {
    const int n2 = total - n1;
    for (int k = 0; k <= n1; ++k) {      // a1^+ drawn from the first factor
      for (int l = 0; l <= n2; ++l) {    // a1^+ drawn from the second factor
        const int m1 = k + l;
        const int m2 = total - m1;
        const double norm = std::exp(0.5 * (log_fact[m1] + log_fact[m2] - log_fact[n1] - log_fact[n2]));
        const int j = n1 - k + l;
        const Complex term = binomial(n1, k) * binomial(n2, l) * std::pow(c, k + n2 - l) *
                             std::pow(s, j) * norm * i_pow[j % 4];
        block[static_cast<std::size_t>(m1) * dim + n1] += term;
      }
    }
  }
  return block;
}

}  // namespace detail

/// Exact evolution under H = -hbar (Omega_c / 2)(a1 a2^+ + a1^+ a2) for time t:
/// a rotation by Omega_c t / 2 inside every manifold of fixed n1 + n2.
inline FockState evolve_fock(const FockState& state, double omega_c, double t) {
  state.check_normalized();
  const int cutoff = state.cutoff();
  for (int n1 = 0; n1 <= cutoff; ++n1) {
    for (int n2 = 0; n2 <= cutoff; ++n2) {
      if (n1 + n2 > cutoff && state.at(n1, n2) != Complex(0.0, 0.0)) {
        throw CutoffTooSmall("manifold n1+n2 = " + std::to_string(n1 + n2) +
                             " does not fit below cutoff " + std::to_string(cutoff));
      }
    }
  }
  FockState out = state;
  const double theta = 0.5 * omega_c * t;
  for (int total = 0; total <= cutoff; ++total) {
    if (state.manifold_probability(total) == 0.0) continue;
    const auto block = detail::beam_splitter_block(total, theta);
    const int dim = total + 1;
    for (int m1 = 0; m1 <= total; ++m1) {
      Complex acc = 0.0;
      for (int n1 = 0; n1 <= total; ++n1) {
        acc += block[static_cast<std::size_t>(m1) * dim + n1] * state.at(n1, total - n1);
      }
      out.at(m1, total - m1) = acc;
    }
  }
  return out;
}

inline std::pair<double, double> mean_phonons(const FockState& state) {
  double m1 = 0.0;
  double m2 = 0.0;
  for (int n1 = 0; n1 <= state.cutoff(); ++n1) {
    for (int n2 = 0; n2 <= state.cutoff(); ++n2) {
      const double p = std::norm(state.at(n1, n2));
      m1 += n1 * p;
      m2 += n2 * p;
    }
  }
  return {m1, m2};
}

/// Target (|0,1> + i|1,0>)/sqrt(2), the state reached from |0,1> at T_swap/2.
inline FockState bell_target(int cutoff = 6) {
  const double h = 1.0 / std::sqrt(2.0);
  return FockState::from_terms({{0, 1, Complex(h, 0.0)}, {1, 0, Complex(0.0, h)}}, cutoff);
}

inline double bell_fidelity(const FockState& state) {
  return bell_target(state.cutoff()).fidelity(state);
}

/// Phenomenological mean-phonon trace of the first well:
///   <n1>(tau) = nbar + (dn/2) cos(Omega_c tau) exp(-tau/tau_damp) + gamma_h tau
/// with nbar = (n1_0 + n2_0)/2 and dn = n1_0 - n2_0.
struct ExchangeModel {
  double n1_0 = 0.0;      // quanta
  double n2_0 = 0.0;      // quanta
  double omega_c = 0.0;   // rad/s
  double tau_damp = 0.0;  // s, +inf disables damping
  double gamma_h = 0.0;   // quanta/s

  void validate() const {
    if (!(n1_0 >= 0.0) || !(n2_0 >= 0.0) || !(tau_damp > 0.0) || !(gamma_h >= 0.0) ||
        !std::isfinite(omega_c)) {
      throw std::invalid_argument("ExchangeModel: need n_i >= 0, tau_damp > 0, gamma_h >= 0");
    }
  }

  // Written relative to n1_0 so that tau = 0 and full revivals return n1_0 exactly.
  double operator()(double tau) const {
    const double envelope = std::cos(omega_c * tau) * std::exp(-tau / tau_damp);
    return n1_0 + 0.5 * (n2_0 - n1_0) * (1.0 - envelope) + gamma_h * tau;
  }
};

inline std::vector<double> exchange_trace(const ExchangeModel& model, const std::vector<double>& taus) {
  model.validate();
  std::vector<double> out;
  out.reserve(taus.size());
  for (double tau : taus) {
    if (!(tau >= 0.0)) throw std::invalid_argument("exchange_trace: waiting times must be >= 0");
    out.push_back(model(tau));
  }
  return out;
}

}  // namespace ionlink
