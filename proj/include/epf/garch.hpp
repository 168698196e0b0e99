#pragma once

// Gaussian GARCH(1,1) with an exogenous linear mean equation.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epf/common.hpp"

namespace epf {

struct GarchParams {
  double omega = 0.0;
  double alpha = 0.0;
  double beta = 0.0;

  bool admissible() const {
    return std::isfinite(omega) && std::isfinite(alpha) && std::isfinite(beta) && omega > 0.0 && alpha >= 0.0 &&
           beta >= 0.0 && alpha + beta < 1.0;
  }
};

// Population variance; seeds the recursion.
inline double sample_variance(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(x.size());
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / double(x.size());
}

// sigma2[0] = sample variance, sigma2[t] = omega + alpha e[t-1]^2 + beta sigma2[t-1].
inline std::vector<double> garch_variances(const GarchParams& p, std::span<const double> residuals) {
  std::vector<double> var(residuals.size());
  if (residuals.empty()) return var;
  var[0] = sample_variance(residuals);
  for (std::size_t t = 1; t < residuals.size(); ++t)
    var[t] = p.omega + p.alpha * residuals[t - 1] * residuals[t - 1] + p.beta * var[t - 1];
  return var;
}

// Gaussian log-likelihood of mean-equation residuals. Empty for parameters
// outside the stationary region so an optimizer can reject them.
inline std::optional<double> garch_loglik(const GarchParams& p, std::span<const double> residuals) {
  if (!p.admissible() || residuals.empty()) return std::nullopt;
  constexpr double log_2pi = 1.8378770664093453;
  const auto var = garch_variances(p, residuals);
  double ll = 0.0;
  for (std::size_t t = 0; t < residuals.size(); ++t) {
    if (!(var[t] > 0.0)) return std::nullopt;
    ll -= 0.5 * (log_2pi + std::log(var[t]) + residuals[t] * residuals[t] / var[t]);
  }
  return std::isfinite(ll) ? std::optional<double>(ll) : std::nullopt;
}

// Residuals y - X coef (rows of x are observations).
inline std::optional<double> garch_loglik(const GarchParams& p, const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                          const Eigen::VectorXd& coef) {
  const Eigen::VectorXd e = y - x * coef;
  return garch_loglik(p, std::span<const double>(e.data(), std::size_t(e.size())));
}

struct NelderMeadOptions {
  double tolerance = 1e-8;  // simplex spread (max vertex distance to best, sup norm)
  int max_iterations = 5000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

// Minimizes f from x0 with an axis-aligned initial simplex of the given steps.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x0, const std::vector<double>& step,
                                    const NelderMeadOptions& options = {}) {
  const std::size_t n = x0.size();
  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step[i];
  std::vector<double> val(n + 1);
  for (std::size_t i = 0; i <= n; ++i) val[i] = f(pts[i]);

  std::vector<std::size_t> idx(n + 1);
  NelderMeadResult res;
  auto point = [&](const std::vector<double>& centroid, const std::vector<double>& from, double t) {
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k) p[k] = centroid[k] + t * (from[k] - centroid[k]);
    return p;
  };
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
    const std::size_t best = idx.front(), worst = idx.back(), second = idx[n - 1];

    double spread = 0.0;
    for (std::size_t i = 0; i <= n; ++i)
      for (std::size_t k = 0; k < n; ++k) spread = std::max(spread, std::abs(pts[i][k] - pts[best][k]));
    if (spread < options.tolerance) {
      res.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i <= n; ++i)
      if (i != worst)
        for (std::size_t k = 0; k < n; ++k) centroid[k] += pts[i][k] / double(n);

    const auto reflected = point(centroid, pts[worst], -1.0);
    const double fr = f(reflected);
    if (fr < val[best]) {
      const auto expanded = point(centroid, pts[worst], -2.0);
      const double fe = f(expanded);
      if (fe < fr) {
        pts[worst] = expanded;
        val[worst] = fe;
      } else {
        pts[worst] = reflected;
        val[worst] = fr;
      }
      continue;
    }
    if (fr < val[second]) {
      pts[worst] = reflected;
      val[worst] = fr;
      continue;
    }
    const bool outside = fr < val[worst];
    const auto contracted = point(centroid, outside ? reflected : pts[worst], 0.5);
    const double fc = f(contracted);
    if (fc < (outside ? fr : val[worst])) {
      pts[worst] = contracted;
      val[worst] = fc;
      continue;
    }
    for (std::size_t i = 0; i <= n; ++i) {
      if (i == best) continue;
      pts[i] = point(pts[best], pts[i], 0.5);
      val[i] = f(pts[i]);
    }
  }
  const auto best = std::size_t(std::min_element(val.begin(), val.end()) - val.begin());
  res.x = pts[best];
  res.value = val[best];
  return res;
}

struct GarchFitOptions {
  NelderMeadOptions optimizer;
};

struct GarchFit {
  GarchParams params;
  double loglik = 0.0;
  int iterations = 0;
};

struct GarchFitError : ModelError {
  explicit GarchFitError(const std::string& what) : ModelError("GARCH fit failed: " + what) {}
};

// Maximum likelihood for (omega, alpha, beta) by Nelder-Mead on
// (omega / s^2, alpha, beta), s^2 the residual variance. Inadmissible points
// get an infinite objective. Three fixed starting points; best wins.
inline GarchFit fit_garch(std::span<const double> residuals, const GarchFitOptions& options = {}) {
  if (residuals.size() < 3) throw GarchFitError("need at least 3 residuals");
  const double s2 = sample_variance(residuals);
  if (!(s2 > 0.0)) throw GarchFitError("residual variance is zero");
  auto unscale = [&](const std::vector<double>& th) { return GarchParams{th[0] * s2, th[1], th[2]}; };
  auto objective = [&](const std::vector<double>& th) {
    const auto ll = garch_loglik(unscale(th), residuals);
    return ll ? -*ll : std::numeric_limits<double>::infinity();
  };
  static constexpr double starts[3][2] = {{0.05, 0.90}, {0.10, 0.80}, {0.20, 0.50}};
  std::optional<GarchFit> best;
  for (const auto& s : starts) {
    const std::vector<double> x0{1.0 - s[0] - s[1], s[0], s[1]};
    const auto nm = nelder_mead(objective, x0, {0.5 * x0[0], 0.05, 0.05}, options.optimizer);
    if (!std::isfinite(nm.value)) continue;
    if (!best || -nm.value > best->loglik) best = GarchFit{unscale(nm.x), -nm.value, nm.iterations};
  }
  if (!best) throw GarchFitError("no starting point produced an admissible fit");
  return *best;
}

// Linear mean equation plus GARCH(1,1) errors, estimated in two steps: least
// squares for the mean, then likelihood for the variance.
struct GarchxFit {
  Eigen::VectorXd coef;  // includes the intercept column of the design
  GarchParams garch;
  double loglik = 0.0;
  double last_residual = 0.0;
  double last_variance = 0.0;

  // One-step-ahead conditional variance after the last observed residual.
  double next_variance() const {
    return garch.omega + garch.alpha * last_residual * last_residual + garch.beta * last_variance;
  }
  // Advances the variance recursion with a newly observed residual.
  void update(double residual) {
    last_variance = next_variance();
    last_residual = residual;
  }
};

inline Eigen::VectorXd least_squares(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  return x.colPivHouseholderQr().solve(y);
}

// x: n x k design (first column ones), y: n responses in time order.
inline GarchxFit fit_garchx(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GarchFitOptions& options = {}) {
  if (x.rows() != y.size()) throw DataError("GARCHX design and response lengths differ");
  GarchxFit out;
  out.coef = least_squares(x, y);
  const Eigen::VectorXd e = y - x * out.coef;
  const std::span<const double> res(e.data(), std::size_t(e.size()));
  const GarchFit g = fit_garch(res, options);
  out.garch = g.params;
  out.loglik = g.loglik;
  const auto var = garch_variances(out.garch, res);
  out.last_residual = e[e.size() - 1];
  out.last_variance = var.back();
  return out;
}

}  // namespace epf
