#pragma once

// Benchmark models.
//
// LEAR: 24 independent LASSO regressions (one per delivery hour) on the full
// regressor, penalty picked per hour on the validation days, intervals from
// training residual quantiles.
//
// GARCHX: per hour, a linear mean equation on that hour's lagged prices
// (1, 2, 3, 7 days) and same-day load and TRP, with GARCH(1,1) Gaussian errors.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "epf/features.hpp"
#include "epf/forecast.hpp"
#include "epf/garch.hpp"
#include "epf/lasso.hpp"

namespace epf {

struct LearOptions {
  int lambda_count = 50;
  double lambda_lo = 1e-4;  // relative to the per-hour lambda_max
  double lambda_hi = 1e1;
  // The path stops early once a fit saturates (as many nonzeros as training
  // rows allow, or a training R^2 at this level) or after `patience`
  // consecutive penalties without a better validation MSE. 0 disables the latter.
  double saturation_r2 = 0.999;
  int patience = 10;
  // "min": lowest validation MSE. "one_se": the largest penalty whose validation
  // MSE is within one standard error of the lowest (sparser, opt-in).
  std::string lambda_rule = "min";
  LassoOptions lasso;

  void validate() const {
    if (lambda_rule != "min" && lambda_rule != "one_se") throw ConfigError("unknown lambda_rule: " + lambda_rule);
  }
};

struct LearHour {
  double intercept = 0.0;
  Eigen::VectorXd coef;  // on scaled columns
  double lambda = 0.0;
  std::vector<double> residuals;  // training residuals, sorted ascending
};

struct LearModel {
  Eigen::VectorXd column_mean;
  Eigen::VectorXd column_scale;
  std::array<LearHour, kHours> hours;

  Eigen::VectorXd scale(const Eigen::VectorXd& x) const {
    return (x - column_mean).cwiseQuotient(column_scale);
  }
};

namespace detail {
// Observation-per-row design, each column z-scored with training moments.
inline Eigen::MatrixXd scaled_rows(std::span<const SupervisedPair> pairs, const Eigen::VectorXd& mean,
                                   const Eigen::VectorXd& scale) {
  Eigen::MatrixXd x = feature_matrix(pairs).transpose();
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}
}  // namespace detail

inline LearModel lear_train(const WindowSplit& split, const LearOptions& options = {}) {
  options.validate();
  if (split.train.size() < 2 || split.validation.empty()) throw DataError("LEAR needs training and validation days");
  LearModel model;
  const Eigen::MatrixXd raw = feature_matrix(split.train).transpose();
  model.column_mean = raw.colwise().mean().transpose();
  model.column_scale =
      ((raw.rowwise() - model.column_mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
  for (Eigen::Index j = 0; j < model.column_scale.size(); ++j)
    if (!(model.column_scale[j] >= Standardizer::kStdFloor)) model.column_scale[j] = 1.0;

  const Eigen::MatrixXd x_train = detail::scaled_rows(split.train, model.column_mean, model.column_scale);
  const Eigen::MatrixXd x_val = detail::scaled_rows(split.validation, model.column_mean, model.column_scale);
  const Eigen::MatrixXd y_train = target_matrix(split.train).transpose();
  const Eigen::MatrixXd y_val = target_matrix(split.validation).transpose();
  const LassoProblem problem(x_train);

  for (int h = 0; h < kHours; ++h) {
    const Eigen::VectorXd y = y_train.col(h);
    const Eigen::VectorXd yv = y_val.col(h);
    const double lmax = problem.lambda_max(y);
    auto grid = lambda_grid(lmax > 0.0 ? lmax : 1.0, options.lambda_count, options.lambda_lo, options.lambda_hi);
    std::vector<LassoFit> path;
    std::vector<double> mse, se;
    std::size_t best = 0;
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(problem.features());
    int since_best = 0;
    for (double lambda : grid) {  // descending: ties keep the sparser model
      LassoFit fit = problem.fit(y, lambda, options.lasso, &warm);
      warm = fit.coef;
      const Eigen::ArrayXd sq = ((x_val * fit.coef).array() + fit.intercept - yv.array()).square();
      const auto nonzero = (fit.coef.array() != 0.0).count();
      const double r2 =
          1.0 - ((x_train * fit.coef).array() + fit.intercept - y.array()).square().mean() / (y.array() - y.mean()).square().mean();
      mse.push_back(sq.mean());
      se.push_back(std::sqrt((sq - sq.mean()).square().mean() / double(sq.size())));
      path.push_back(std::move(fit));
      if (path.size() == 1 || mse.back() < mse[best]) {
        best = path.size() - 1;
        since_best = 0;
      } else if (options.patience > 0 && ++since_best >= options.patience) {
        break;
      }
      if (nonzero >= x_train.rows() - 1 || r2 >= options.saturation_r2) break;
    }
    std::size_t chosen = best;
    if (options.lambda_rule == "one_se")
      for (std::size_t i = 0; i < best; ++i)
        if (mse[i] <= mse[best] + se[best]) {
          chosen = i;
          break;
        }
    const LassoFit& fit = path[chosen];
    auto& hour = model.hours[std::size_t(h)];
    hour.intercept = fit.intercept;
    hour.coef = fit.coef;
    hour.lambda = fit.lambda;
    const Eigen::VectorXd res = y - ((x_train * fit.coef).array() + fit.intercept).matrix();
    hour.residuals.assign(res.data(), res.data() + res.size());
    std::sort(hour.residuals.begin(), hour.residuals.end());
  }
  return model;
}

inline Eigen::VectorXd lear_point(const LearModel& model, const FeatureVector& x) {
  const Eigen::VectorXd z = model.scale(x.values);
  Eigen::VectorXd point(kHours);
  for (int h = 0; h < kHours; ++h) {
    const auto& hour = model.hours[std::size_t(h)];
    point[h] = hour.intercept + hour.coef.dot(z);
  }
  return point;
}

inline DayForecast lear_predict(const LearModel& model, const FeatureVector& x, const ForecastSettings& settings = {}) {
  std::vector<std::vector<double>> residuals;
  for (const auto& h : model.hours) residuals.push_back(h.residuals);
  return residual_quantile_forecast(lear_point(model, x), residuals, settings);
}

// Mean-equation regressors for one hour: [1, P(d-1), P(d-2), P(d-3), P(d-7), L(d), R(d)].
inline constexpr int kGarchxRegressors = 7;

inline Eigen::VectorXd garchx_regressors(const FeatureVector& x, int hour) {
  using namespace layout;
  Eigen::VectorXd r(kGarchxRegressors);
  const auto& v = x.values;
  r << 1.0, v[kPriceLag1 + hour], v[kPriceLag2 + hour], v[kPriceLag3 + hour], v[kPriceLag7 + hour],
      v[kLoad0 + hour], v[kTrp0 + hour];
  return r;
}

struct GarchxModel {
  std::array<GarchxFit, kHours> hours;
};

// Fitted on every day of the window in time order, so the variance recursion
// ends on the day before the target.
inline GarchxModel garchx_train(const WindowSplit& split, const GarchFitOptions& options = {}) {
  std::vector<const SupervisedPair*> days;
  for (const auto& p : split.train) days.push_back(&p);
  for (const auto& p : split.validation) days.push_back(&p);
  if (days.size() < 10) throw DataError("GARCHX needs at least 10 days");
  GarchxModel model;
  const auto n = Eigen::Index(days.size());
  Eigen::MatrixXd x(n, kGarchxRegressors);
  Eigen::VectorXd y(n);
  for (int h = 0; h < kHours; ++h) {
    for (Eigen::Index i = 0; i < n; ++i) {
      x.row(i) = garchx_regressors(days[std::size_t(i)]->x, h).transpose();
      y[i] = days[std::size_t(i)]->y[h];
    }
    model.hours[std::size_t(h)] = fit_garchx(x, y, options);
  }
  return model;
}

inline DayForecast garchx_predict(const GarchxModel& model, const FeatureVector& x,
                                  const ForecastSettings& settings = {}) {
  DayForecast f;
  const auto q = Eigen::Index(settings.quantile_grid.size());
  f.point.resize(kHours);
  f.spread.resize(kHours);
  f.lower.resize(kHours);
  f.upper.resize(kHours);
  f.quantiles.resize(kHours, q);
  const double z = normal_quantile(0.5 * (1.0 + settings.coverage));
  std::vector<double> zq(static_cast<std::size_t>(q));
  for (Eigen::Index j = 0; j < q; ++j) zq[std::size_t(j)] = normal_quantile(settings.quantile_grid[std::size_t(j)]);
  for (int h = 0; h < kHours; ++h) {
    const auto& fit = model.hours[std::size_t(h)];
    const double mu = fit.coef.dot(garchx_regressors(x, h));
    const double sigma = std::sqrt(fit.next_variance());
    f.point[h] = mu;
    f.spread[h] = sigma;
    f.lower[h] = mu - z * sigma;
    f.upper[h] = mu + z * sigma;
    for (Eigen::Index j = 0; j < q; ++j) f.quantiles(h, j) = mu + zq[std::size_t(j)] * sigma;
  }
  return f;
}

}  // namespace epf
