#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

// Weighted least squares over a small named parameter set: Nelder-Mead
// simplex descent with random restarts, a Levenberg-Marquardt polish, and
// error bars from the curvature of the residual at the optimum.

namespace ionlink::optimize {

struct Parameter {
  std::string name;
  double initial = 0.0;
  double scale = 1.0;  // typical size of a meaningful change
  bool fixed = false;
};

/// Weighted residuals (model - data) / sigma for a full parameter vector in
/// physical units. Non-finite entries mark an invalid parameter point.
using ResidualFn = std::function<Eigen::VectorXd(const std::vector<double>&)>;

struct Options {
  int restarts = 5;             // extra simplex runs from randomized starts
  double restart_spread = 0.5;  // in units of Parameter::scale
  int max_simplex_evaluations = 4000;
  bool polish = true;
  std::uint64_t seed = 20100503;
};

struct Solution {
  std::vector<double> values;
  std::vector<double> uncertainties;  // 1 sigma; 0 for fixed parameters
  double residual = std::numeric_limits<double>::infinity();
  double initial_residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int rank = 0;  // numerical rank of the weighted Jacobian
  int evaluations = 0;
  std::vector<std::string> warnings;
};

struct SimplexResult {
  Eigen::VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Plain Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
/// Stops when both the spread of function values and the simplex diameter
/// fall below tolerance.
inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x0, double step, int max_evaluations,
                                 double f_abs_tol, double f_rel_tol = 1e-13,
                                 double x_tol = 1e-10) {
  const auto n = x0.size();
  std::vector<Eigen::VectorXd> pts(n + 1, x0);
  std::vector<double> vals(n + 1);
  int evals = 0;
  auto eval = [&](const Eigen::VectorXd& x) {
    ++evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  vals[0] = eval(pts[0]);
  for (Eigen::Index i = 0; i < n; ++i) {
    pts[i + 1][i] += step;
    vals[i + 1] = eval(pts[i + 1]);
  }
  std::vector<int> order(n + 1);
  bool converged = false;
  while (evals < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vals[a] < vals[b]; });
    const int best = order.front();
    const int worst = order.back();
    const int second = order[n - 1];

    double diameter = 0.0;
    for (Eigen::Index i = 0; i <= n; ++i) {
      diameter = std::max(diameter, (pts[i] - pts[best]).cwiseAbs().maxCoeff());
    }
    if (vals[worst] - vals[best] <= f_rel_tol * std::abs(vals[best]) + f_abs_tol &&
        diameter <= x_tol) {
      converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i != worst) centroid += pts[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = centroid + (centroid - pts[worst]);
    const double fr = eval(xr);
    if (fr < vals[best]) {
      const Eigen::VectorXd xe = centroid + 2.0 * (centroid - pts[worst]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    const bool outside = fr < vals[worst];
    const Eigen::VectorXd xc = outside ? Eigen::VectorXd(centroid + 0.5 * (xr - centroid))
                                       : Eigen::VectorXd(centroid + 0.5 * (pts[worst] - centroid));
    const double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (Eigen::Index i = 0; i <= n; ++i) {
      if (i == best) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  const auto it = std::min_element(vals.begin(), vals.end());
  SimplexResult out;
  out.x = pts[static_cast<std::size_t>(it - vals.begin())];
  out.f = *it;
  out.evaluations = evals;
  out.converged = converged;
  return out;
}

namespace detail {

/// Maps scaled free coordinates x to the full physical parameter vector.
class ParameterMap {
 public:
  explicit ParameterMap(const std::vector<Parameter>& params) : params_(params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!(params[i].scale > 0.0) || !std::isfinite(params[i].initial)) {
        throw std::invalid_argument("parameter '" + params[i].name + "' needs a positive scale");
      }
      if (!params[i].fixed) free_.push_back(i);
    }
  }

  Eigen::Index free_count() const { return static_cast<Eigen::Index>(free_.size()); }
  const std::vector<std::size_t>& free_indices() const { return free_; }

  std::vector<double> full(const Eigen::VectorXd& x) const {
    std::vector<double> v(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) v[i] = params_[i].initial;
    for (std::size_t k = 0; k < free_.size(); ++k) {
      const auto& p = params_[free_[k]];
      v[free_[k]] = p.initial + p.scale * x[static_cast<Eigen::Index>(k)];
    }
    return v;
  }

  double scale(Eigen::Index k) const { return params_[free_[static_cast<std::size_t>(k)]].scale; }

 private:
  const std::vector<Parameter>& params_;
  std::vector<std::size_t> free_;
};

struct LmFunctor {
  using Scalar = double;
  enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
  using InputType = Eigen::VectorXd;
  using ValueType = Eigen::VectorXd;
  using JacobianType = Eigen::MatrixXd;

  const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>* residuals;
  int n_inputs;
  int n_values;

  int inputs() const { return n_inputs; }
  int values() const { return n_values; }

  int operator()(const Eigen::VectorXd& x, Eigen::VectorXd& fvec) const {
    fvec = (*residuals)(x);
    if (!fvec.allFinite()) fvec.setConstant(1e8);
    return 0;
  }
};

}  // namespace detail

/// Minimizes sum(residuals^2) over the free parameters.
inline Solution least_squares(const ResidualFn& residual_fn, const std::vector<Parameter>& params,
                              const Options& opts = {}) {
  const detail::ParameterMap map(params);
  const Eigen::Index n = map.free_count();
  int evaluations = 0;
  const std::function<Eigen::VectorXd(const Eigen::VectorXd&)> residuals =
      [&](const Eigen::VectorXd& x) {
        ++evaluations;
        return residual_fn(map.full(x));
      };
  const std::function<double(const Eigen::VectorXd&)> chi2 = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd r = residuals(x);
    return r.allFinite() ? r.squaredNorm() : std::numeric_limits<double>::infinity();
  };

  Solution sol;
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
  sol.initial_residual = chi2(x0);
  const Eigen::Index m = residuals(x0).size();

  if (n == 0) {
    sol.values = map.full(x0);
    sol.uncertainties.assign(params.size(), 0.0);
    sol.residual = sol.initial_residual;
    sol.converged = std::isfinite(sol.residual);
    sol.evaluations = evaluations;
    return sol;
  }

  const double f_abs_tol =
      std::isfinite(sol.initial_residual) ? 1e-18 * std::max(sol.initial_residual, 1e-300) : 0.0;
  auto best = nelder_mead(chi2, x0, 1.0, opts.max_simplex_evaluations, f_abs_tol);
  bool simplex_ok = best.converged;
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int r = 0; r < opts.restarts; ++r) {
    Eigen::VectorXd start(n);
    for (Eigen::Index i = 0; i < n; ++i) start[i] = opts.restart_spread * unit(rng);
    auto trial = nelder_mead(chi2, start, 1.0, opts.max_simplex_evaluations, f_abs_tol);
    if (trial.f < best.f) {
      best = trial;
      simplex_ok = trial.converged;
    }
  }

  Eigen::VectorXd x = best.x;
  double f = best.f;
  bool polished = false;
  if (opts.polish && m >= n && std::isfinite(f)) {
    detail::LmFunctor functor{&residuals, static_cast<int>(n), static_cast<int>(m)};
    Eigen::NumericalDiff<detail::LmFunctor, Eigen::Central> numdiff(functor);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::LmFunctor, Eigen::Central>> lm(numdiff);
    lm.parameters.ftol = 1e-15;
    lm.parameters.xtol = 1e-15;
    lm.parameters.maxfev = 400 * static_cast<int>(n + 1);
    Eigen::VectorXd xl = x;
    const auto status = lm.minimize(xl);
    const double fl = chi2(xl);
    if (fl <= f) {
      x = xl;
      f = fl;
    }
    polished = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
               status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation;
  }

  const auto jacobian = [&](const Eigen::VectorXd& at) {
    Eigen::MatrixXd jac(m, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(1.0, std::abs(at[k]));
      Eigen::VectorXd xp = at;
      Eigen::VectorXd xm = at;
      xp[k] += h;
      xm[k] -= h;
      jac.col(k) = (residuals(xp) - residuals(xm)) / (2.0 * h);
    }
    return jac;
  };

  // Gauss-Newton steps resolve the optimum below the chi^2 rounding floor,
  // where the simplex and LM stopping tests can no longer see progress.
  for (int it = 0; it < 3 && std::isfinite(f) && m >= n; ++it) {
    const Eigen::VectorXd r = residuals(x);
    const Eigen::MatrixXd jac = jacobian(x);
    if (!jac.allFinite()) break;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-9);
    const Eigen::VectorXd step = svd.solve(-r);
    const Eigen::VectorXd xt = x + step;
    const double ft = chi2(xt);
    // Ties within rounding are accepted: the step is the exact linearized optimum.
    if (!(ft <= f + 1e-12 * f)) break;
    x = xt;
    f = ft;
    if (step.norm() < 1e-12) break;
  }

  sol.values = map.full(x);
  sol.residual = f;
  sol.converged = std::isfinite(f) && (simplex_ok || polished) &&
                  (f < sol.initial_residual || sol.initial_residual == 0.0);
  if (!std::isfinite(f)) sol.warnings.push_back("no finite residual reached");
  if (std::isfinite(f) && !(f < sol.initial_residual) && sol.initial_residual > 0.0) {
    sol.warnings.push_back("residual did not decrease from the initial guess");
  }

  // Curvature error bars: cov = (J^T J)^-1 in scaled coordinates.
  sol.uncertainties.assign(params.size(), 0.0);
  if (std::isfinite(f)) {
    const Eigen::MatrixXd jac = jacobian(x);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double tol = 1e-9 * (sv.size() > 0 ? sv[0] : 0.0);
    sol.rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
      if (sv[k] > tol && sv[k] > 0.0) ++sol.rank;
    }
    const Eigen::MatrixXd& v = svd.matrixV();
    for (Eigen::Index k = 0; k < n; ++k) {
      double var = 0.0;
      double null_weight = 0.0;
      for (Eigen::Index s = 0; s < sv.size(); ++s) {
        if (s < sol.rank) {
          var += v(k, s) * v(k, s) / (sv[s] * sv[s]);
        } else {
          null_weight += v(k, s) * v(k, s);
        }
      }
      double sigma = std::sqrt(var);
      if (null_weight > 1e-6) {
        // Flat direction: fall back to the width where chi^2 rises by one.
        auto crossing = [&](double dir) {
          double lo = 0.0;
          double hi = 1e-6;
          Eigen::VectorXd xt = x;
          for (;; hi *= 2.0) {
            if (hi > 1e8) return std::numeric_limits<double>::infinity();
            xt[k] = x[k] + dir * hi;
            if (chi2(xt) - f >= 1.0) break;
            lo = hi;
          }
          for (int it = 0; it < 60; ++it) {
            const double mid = 0.5 * (lo + hi);
            xt[k] = x[k] + dir * mid;
            (chi2(xt) - f >= 1.0 ? hi : lo) = mid;
          }
          return 0.5 * (lo + hi);
        };
        sigma = 0.5 * (crossing(1.0) + crossing(-1.0));
      }
      sol.uncertainties[map.free_indices()[static_cast<std::size_t>(k)]] = sigma * map.scale(k);
    }
    if (sol.rank < n) sol.warnings.push_back("weighted Jacobian is rank deficient");
  }
  sol.evaluations = evaluations;
  return sol;
}

}  // namespace ionlink::optimize
