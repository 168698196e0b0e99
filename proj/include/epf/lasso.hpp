#pragma once

// L1-penalized least squares by cyclic coordinate descent.
//
// Minimizes (1/2n)||y - b0 - X b||^2 + lambda ||b||_1 with an unpenalized
// intercept. Coordinate updates use the Gram form: with centered data,
// G = Xc'Xc/n and c = Xc'yc/n, the update for b_j is
// S(c_j - (G b)_j + G_jj b_j, lambda) / G_jj.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "epf/common.hpp"

namespace epf {

struct LassoOptions {
  double tolerance = 1e-7;  // on the largest coefficient change in a sweep
  int max_sweeps = 100000;
  bool track_objective = false;
};

struct LassoFit {
  double intercept = 0.0;
  Eigen::VectorXd coef;
  double lambda = 0.0;
  int sweeps = 0;
  std::vector<double> objective;  // after each sweep, when tracked
};

struct LassoConvergenceError : ModelError {
  explicit LassoConvergenceError(const std::string& what) : ModelError("lasso did not converge: " + what) {}
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

// Design-dependent quantities shared by every response and every lambda.
class LassoProblem {
 public:
  explicit LassoProblem(const Eigen::MatrixXd& x) : n_(double(x.rows())) {
    if (x.rows() < 2) throw DataError("lasso needs at least 2 observations");
    x_mean_ = x.colwise().mean().transpose();
    xc_ = x.rowwise() - x_mean_.transpose();
    gram_ = (xc_.transpose() * xc_) / n_;
  }

  Eigen::Index features() const { return xc_.cols(); }

  // Smallest lambda at which every coefficient is zero.
  double lambda_max(const Eigen::VectorXd& y) const {
    return correlations(y).cwiseAbs().maxCoeff();
  }

  LassoFit fit(const Eigen::VectorXd& y, double lambda, const LassoOptions& options = {},
               const Eigen::VectorXd* warm_start = nullptr) const {
    if (y.size() != xc_.rows()) throw DataError("lasso response length does not match design");
    if (!(lambda >= 0.0)) throw ConfigError("lasso penalty must be nonnegative");
    const double y_mean = y.mean();
    const Eigen::VectorXd c = correlations(y);
    const double yy = (y.array() - y_mean).square().sum() / n_;
    const Eigen::Index p = features();

    LassoFit out;
    out.lambda = lambda;
    out.coef = warm_start ? *warm_start : Eigen::VectorXd::Zero(p);
    Eigen::VectorXd q = gram_ * out.coef;
    auto objective = [&] {
      return 0.5 * yy - out.coef.dot(c) + 0.5 * out.coef.dot(q) + lambda * out.coef.lpNorm<1>();
    };

    // One coordinate pass over every feature, or over the nonzero ones only.
    auto sweep = [&](bool active_only) {
      double change = 0.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        if (active_only && out.coef[j] == 0.0) continue;
        const double gjj = gram_(j, j);
        const double old = out.coef[j];
        const double updated = gjj > 0.0 ? soft_threshold(c[j] - q[j] + gjj * old, lambda) / gjj : 0.0;
        const double delta = updated - old;
        if (delta != 0.0) {
          out.coef[j] = updated;
          q += gram_.col(j) * delta;
          change = std::max(change, std::abs(delta));
        }
      }
      if (options.track_objective) out.objective.push_back(objective());
      return change;
    };

    // Full sweeps decide convergence; between them, iterate on the active set
    // until it settles.
    double max_change = 0.0;
    out.sweeps = 0;
    bool converged = false;
    while (out.sweeps < options.max_sweeps) {
      ++out.sweeps;
      max_change = sweep(false);
      if (max_change < options.tolerance) {
        converged = true;
        break;
      }
      while (out.sweeps < options.max_sweeps) {
        ++out.sweeps;
        if (sweep(true) < options.tolerance) break;
      }
    }
    if (!converged)
      throw LassoConvergenceError("max coefficient change " + format_double(max_change, 6) + " after " +
                                  std::to_string(options.max_sweeps) + " sweeps at lambda " + format_double(lambda, 6));
    out.intercept = y_mean - x_mean_.dot(out.coef);
    return out;
  }

  // Gradient of the smooth part at `coef`, i.e. Xc'(yc - Xc coef)/n.
  Eigen::VectorXd smooth_gradient(const Eigen::VectorXd& y, const Eigen::VectorXd& coef) const {
    return correlations(y) - gram_ * coef;
  }

 private:
  Eigen::VectorXd correlations(const Eigen::VectorXd& y) const {
    return xc_.transpose() * (y.array() - y.mean()).matrix() / n_;
  }

  double n_;
  Eigen::VectorXd x_mean_;
  Eigen::MatrixXd xc_;
  Eigen::MatrixXd gram_;
};

// x is n x p with one observation per row.
inline LassoFit lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                          const LassoOptions& options = {}) {
  return LassoProblem(x).fit(y, lambda, options);
}

// `count` log-spaced values from lo*scale up to hi*scale, returned descending.
inline std::vector<double> lambda_grid(double scale, int count = 50, double lo = 1e-4, double hi = 1e1) {
  std::vector<double> out;
  if (count < 1 || !(scale > 0.0)) return out;
  const double a = std::log(lo), b = std::log(hi);
  for (int i = count - 1; i >= 0; --i) {
    const double t = count == 1 ? 1.0 : double(i) / double(count - 1);
    out.push_back(scale * std::exp(a + t * (b - a)));
  }
  return out;
}

}  // namespace epf
