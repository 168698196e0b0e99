#pragma once

// Scoring rules for point and probabilistic day-ahead forecasts.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "epf/common.hpp"

namespace epf {

struct ForecastRecord {
  Date date{};
  int hour = 0;
  double observed = 0.0;
  double point = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::vector<double> quantiles;  // on the report's quantile grid
  double spread = 0.0;            // predictive std, informational
};

struct MetricsOptions {
  double crps_factor = 2.0;  // CRPS = factor * mean quantile score over the grid
  double mape_floor = 1.0;   // |P| below this (EUR/MWh) is left out of MAPE
};

// Over-forecasts are charged q, under-forecasts 1 - q.
inline double pinball(double q, double forecast, double observed) {
  return forecast >= observed ? q * (forecast - observed) : (1.0 - q) * (observed - forecast);
}

// Check loss in the orientation whose expectation is minimised by the
// q-quantile, i.e. pinball at level 1 - q. CRPS is built from this one; with
// pinball itself the average over a symmetric grid rewards mirrored quantiles.
inline double quantile_score(double q, double forecast, double observed) {
  return forecast >= observed ? (1.0 - q) * (forecast - observed) : q * (observed - forecast);
}

inline double crps_from_quantiles(std::span<const double> forecasts, std::span<const double> grid, double observed,
                                  double factor = 2.0) {
  if (forecasts.size() != grid.size() || grid.empty())
    throw DataError("quantile forecasts do not match the quantile grid");
  double sum = 0.0;
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (j > 0 && forecasts[j] < forecasts[j - 1]) throw DataError("quantile forecasts are not monotone");
    sum += quantile_score(grid[j], forecasts[j], observed);
  }
  return factor * sum / double(grid.size());
}

inline void require_nonempty(std::span<const ForecastRecord> records, const char* what) {
  if (records.empty()) throw DataError(std::string(what) + " of empty record set");
}

// Inclusive bounds.
inline double picp(std::span<const ForecastRecord> records) {
  require_nonempty(records, "PICP");
  std::size_t hit = 0;
  for (const auto& r : records)
    if (r.lower <= r.observed && r.observed <= r.upper) ++hit;
  return double(hit) / double(records.size());
}

inline double mpiw(std::span<const ForecastRecord> records) {
  require_nonempty(records, "MPIW");
  double sum = 0.0;
  for (const auto& r : records) sum += r.upper - r.lower;
  return sum / double(records.size());
}

struct PointMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;   // percent; NaN when every observation is below the floor
  double smape = 0.0;  // ratio
  std::size_t mape_excluded = 0;
};

inline PointMetrics point_metrics(std::span<const ForecastRecord> records, double mape_floor = 1.0) {
  require_nonempty(records, "point metrics");
  PointMetrics m;
  double abs_sum = 0.0, sq_sum = 0.0, ape_sum = 0.0, sape_sum = 0.0;
  std::size_t ape_n = 0;
  for (const auto& r : records) {
    const double err = r.point - r.observed;
    abs_sum += std::abs(err);
    sq_sum += err * err;
    if (std::abs(r.observed) >= mape_floor) {
      ape_sum += std::abs(err) / std::abs(r.observed);
      ++ape_n;
    }
    const double denom = std::abs(r.point) + std::abs(r.observed);
    if (denom > 0.0) sape_sum += 2.0 * std::abs(err) / denom;
  }
  const double n = double(records.size());
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(sq_sum / n);
  m.mape = ape_n ? 100.0 * ape_sum / double(ape_n) : std::numeric_limits<double>::quiet_NaN();
  m.smape = sape_sum / n;
  m.mape_excluded = records.size() - ape_n;
  return m;
}

struct MetricValues {
  double mae = 0.0, rmse = 0.0, mape = 0.0, smape = 0.0, crps = 0.0, picp = 0.0, mpiw = 0.0;
};

// Order matches the published tables.
inline constexpr std::array<const char*, 7> kMetricNames{"MAE", "RMSE", "MAPE", "sMAPE", "CRPS", "PICP", "MPIW"};

inline double metric_value(const MetricValues& v, std::string_view name) {
  if (name == "MAE") return v.mae;
  if (name == "RMSE") return v.rmse;
  if (name == "MAPE") return v.mape;
  if (name == "sMAPE") return v.smape;
  if (name == "CRPS") return v.crps;
  if (name == "PICP") return v.picp;
  if (name == "MPIW") return v.mpiw;
  throw std::invalid_argument("unknown metric " + std::string(name));
}

struct MetricsReport {
  std::string model;
  std::size_t days = 0;
  MetricValues aggregate;
  std::size_t mape_excluded = 0;
  std::vector<double> quantile_grid;
  std::vector<double> mean_quantile_score;    // per grid level
  std::array<MetricValues, kHours> per_hour;  // 1/N mean per hour slot
};

inline MetricValues compute_values(std::span<const ForecastRecord> records, std::span<const double> grid,
                                   const MetricsOptions& options, std::size_t* mape_excluded = nullptr) {
  MetricValues v;
  const PointMetrics pm = point_metrics(records, options.mape_floor);
  v.mae = pm.mae;
  v.rmse = pm.rmse;
  v.mape = pm.mape;
  v.smape = pm.smape;
  v.picp = picp(records);
  v.mpiw = mpiw(records);
  double crps = 0.0;
  for (const auto& r : records) crps += crps_from_quantiles(r.quantiles, grid, r.observed, options.crps_factor);
  v.crps = crps / double(records.size());
  if (mape_excluded) *mape_excluded = pm.mape_excluded;
  return v;
}

struct IncompleteDay : DataError {
  explicit IncompleteDay(const std::string& what) : DataError("incomplete day: " + what) {}
};

// Aggregates are the double mean over days and hours; every day must carry
// exactly hours 0..23.
inline MetricsReport aggregate_report(std::span<const ForecastRecord> records, std::span<const double> grid,
                                      const std::string& model, const MetricsOptions& options = {}) {
  require_nonempty(records, "report");
  std::map<Date, std::array<int, kHours>> seen;
  for (const auto& r : records) {
    if (r.hour < 0 || r.hour >= kHours) throw IncompleteDay(to_string(r.date) + " has hour " + std::to_string(r.hour));
    ++seen[r.date][std::size_t(r.hour)];
  }
  for (const auto& [date, hours] : seen)
    for (int h = 0; h < kHours; ++h)
      if (hours[std::size_t(h)] != 1)
        throw IncompleteDay(to_string(date) + " hour " + std::to_string(h) + " appears " +
                            std::to_string(hours[std::size_t(h)]) + " times");

  MetricsReport rep;
  rep.model = model;
  rep.days = seen.size();
  rep.quantile_grid.assign(grid.begin(), grid.end());
  rep.aggregate = compute_values(records, grid, options, &rep.mape_excluded);
  rep.mean_quantile_score.assign(grid.size(), 0.0);
  for (const auto& r : records)
    for (std::size_t j = 0; j < grid.size(); ++j) rep.mean_quantile_score[j] += quantile_score(grid[j], r.quantiles[j], r.observed);
  for (auto& p : rep.mean_quantile_score) p /= double(records.size());

  std::array<std::vector<ForecastRecord>, kHours> by_hour;
  for (const auto& r : records) by_hour[std::size_t(r.hour)].push_back(r);
  for (int h = 0; h < kHours; ++h) rep.per_hour[std::size_t(h)] = compute_values(by_hour[std::size_t(h)], grid, options);
  return rep;
}

// Mean absolute error of each day, in date order.
inline std::vector<std::pair<Date, double>> daily_mae(std::span<const ForecastRecord> records) {
  std::map<Date, std::pair<double, int>> acc;
  for (const auto& r : records) {
    auto& a = acc[r.date];
    a.first += std::abs(r.point - r.observed);
    ++a.second;
  }
  std::vector<std::pair<Date, double>> out;
  for (const auto& [d, a] : acc) out.emplace_back(d, a.first / a.second);
  return out;
}

}  // namespace epf
