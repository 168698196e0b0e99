#pragma once

#include <Eigen/Dense>
#include <vector>

#include "epf/common.hpp"
#include "epf/inference.hpp"
#include "epf/ingest.hpp"
#include "epf/metrics.hpp"

namespace epf {

// One model's forecast for the 24 hours of one day.
struct DayForecast {
  Eigen::VectorXd point;      // 24
  Eigen::VectorXd spread;     // 24, model's predictive std (0 when not applicable)
  Eigen::VectorXd lower;      // 24
  Eigen::VectorXd upper;      // 24
  Eigen::MatrixXd quantiles;  // 24 x grid
};

struct ForecastSettings {
  double coverage = 0.9;
  std::vector<double> quantile_grid = default_quantile_grid();
  int mc_samples = kDefaultMcSamples;
  IntervalMethod interval = IntervalMethod::quantile;
};

// Checks the shared record invariants: ordered interval, monotone quantiles.
inline void validate(const DayForecast& f, std::size_t grid_size) {
  if (f.point.size() != kHours || f.lower.size() != kHours || f.upper.size() != kHours ||
      f.quantiles.rows() != kHours || f.quantiles.cols() != Eigen::Index(grid_size))
    throw ModelError("forecast has wrong shape");
  if (!f.point.allFinite() || !f.lower.allFinite() || !f.upper.allFinite() || !f.quantiles.allFinite())
    throw ModelError("forecast contains non-finite values");
  for (int h = 0; h < kHours; ++h) {
    if (f.lower[h] > f.upper[h]) throw ModelError("interval bounds out of order at hour " + std::to_string(h));
    for (Eigen::Index j = 1; j < f.quantiles.cols(); ++j)
      if (f.quantiles(h, j) < f.quantiles(h, j - 1))
        throw ModelError("quantiles not monotone at hour " + std::to_string(h));
  }
}

inline std::vector<ForecastRecord> to_records(Date date, const DayForecast& f, const HourValues& observed) {
  std::vector<ForecastRecord> out;
  out.reserve(kHours);
  for (int h = 0; h < kHours; ++h) {
    ForecastRecord r{date, h, observed[std::size_t(h)], f.point[h], f.lower[h], f.upper[h], {}, 0.0};
    if (f.spread.size() == kHours) r.spread = f.spread[h];
    r.quantiles.resize(std::size_t(f.quantiles.cols()));
    for (Eigen::Index j = 0; j < f.quantiles.cols(); ++j) r.quantiles[std::size_t(j)] = f.quantiles(h, j);
    out.push_back(std::move(r));
  }
  return out;
}

// Point plus empirical error quantiles: the historical-simulation interval.
inline DayForecast residual_quantile_forecast(const Eigen::VectorXd& point,
                                              const std::vector<std::vector<double>>& sorted_residuals,
                                              const ForecastSettings& s) {
  DayForecast f;
  const auto q = Eigen::Index(s.quantile_grid.size());
  f.point = point;
  f.spread.resize(kHours);
  f.lower.resize(kHours);
  f.upper.resize(kHours);
  f.quantiles.resize(kHours, q);
  const double tail = 0.5 * (1.0 - s.coverage);
  for (int h = 0; h < kHours; ++h) {
    const auto& res = sorted_residuals[std::size_t(h)];
    double m = 0.0, m2 = 0.0;
    for (double r : res) {
      m += r;
      m2 += r * r;
    }
    m /= double(res.size());
    f.spread[h] = std::sqrt(std::max(0.0, m2 / double(res.size()) - m * m));
    f.lower[h] = point[h] + empirical_quantile(res, tail);
    f.upper[h] = point[h] + empirical_quantile(res, 1.0 - tail);
    for (Eigen::Index j = 0; j < q; ++j)
      f.quantiles(h, j) = point[h] + empirical_quantile(res, s.quantile_grid[std::size_t(j)]);
  }
  return f;
}

}  // namespace epf
