#pragma once

// Monte-Carlo dropout predictive sampling and interval construction.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "epf/common.hpp"
#include "epf/features.hpp"
#include "epf/network.hpp"

namespace epf {

// A trained network together with the scaling it was trained under.
struct BnnModel {
  MlpConfig config;
  Standardizer standardizer;
  MlpParams params;
};

struct PredictiveSamples {
  Eigen::MatrixXd samples;  // M x 24, EUR/MWh
  Eigen::Index count() const { return samples.rows(); }
};

enum class IntervalMethod { quantile, gaussian };

struct PredictiveSummary {
  Eigen::VectorXd mean;   // 24
  Eigen::VectorXd std;    // 24, divisor M
  Eigen::VectorXd lower;  // 24
  Eigen::VectorXd upper;  // 24
  double coverage = 0.9;
};

inline constexpr int kDefaultMcSamples = 1000;
inline constexpr double kZ90 = 1.6448536269514722;  // standard normal 95th percentile

// M forward passes with independent last-layer masks. Layers below the dropout
// site are deterministic, so they are evaluated once.
inline PredictiveSamples mc_sample(const BnnModel& model, const FeatureVector& x, int samples, std::uint64_t seed) {
  if (samples < 2) throw ConfigError("MC sample count must be at least 2");
  const Eigen::MatrixXd z = model.standardizer.apply(x.values);
  const ForwardPass det = forward(model.params, z);
  const Eigen::VectorXd h_last = det.cache.hidden.back().col(0);

  std::mt19937_64 rng(seed);
  const DropoutMask mask = sample_mask(int(h_last.size()), samples, model.config.dropout_rate, rng);
  Eigen::MatrixXd out = model.params.output.weight * (mask.keep.array().colwise() * h_last.array()).matrix() * mask.scale;
  out.colwise() += model.params.output.bias;
  out = model.standardizer.invert_targets(out);
  for (Eigen::Index k = 0; k < out.cols(); ++k)
    if (!out.col(k).allFinite()) throw ModelError("non-finite MC sample at index " + std::to_string(k));
  return {out.transpose()};
}

// Deterministic (all units kept) prediction in EUR/MWh.
inline Eigen::VectorXd predict_mean_pass(const BnnModel& model, const FeatureVector& x) {
  const ForwardPass det = forward(model.params, model.standardizer.apply(x.values));
  return model.standardizer.invert_targets(det.output).col(0);
}

// Linear interpolation between order statistics ("type 7"). `sorted` ascending.
inline double empirical_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DataError("quantile of empty sample");
  const double h = (double(sorted.size()) - 1.0) * p;
  const auto lo = std::size_t(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - double(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline std::vector<double> default_quantile_grid() {
  std::vector<double> q;
  for (int k = 1; k <= 99; ++k) q.push_back(k / 100.0);
  return q;
}

inline void check_quantile_grid(std::span<const double> grid) {
  if (grid.empty()) throw ConfigError("quantile grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0 && grid[i] < 1.0)) throw ConfigError("quantile levels must lie in (0, 1)");
    if (i > 0 && !(grid[i] > grid[i - 1])) throw ConfigError("quantile grid must be strictly ascending");
  }
}

namespace detail {
inline std::vector<double> sorted_column(const Eigen::MatrixXd& m, Eigen::Index c) {
  std::vector<double> v(std::size_t(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) v[std::size_t(r)] = m(r, c);
  std::sort(v.begin(), v.end());
  return v;
}
}  // namespace detail

// Per-hour empirical quantiles; result is hours x grid.
inline Eigen::MatrixXd quantile_curve(const PredictiveSamples& s, std::span<const double> grid) {
  check_quantile_grid(grid);
  Eigen::MatrixXd out(s.samples.cols(), Eigen::Index(grid.size()));
  for (Eigen::Index h = 0; h < s.samples.cols(); ++h) {
    const auto col = detail::sorted_column(s.samples, h);
    for (std::size_t j = 0; j < grid.size(); ++j) out(h, Eigen::Index(j)) = empirical_quantile(col, grid[j]);
  }
  return out;
}

inline PredictiveSummary summarize(const PredictiveSamples& s, double coverage = 0.9,
                                   IntervalMethod method = IntervalMethod::quantile) {
  if (!(coverage > 0.0 && coverage < 1.0)) throw ConfigError("coverage must lie in (0, 1)");
  if (s.count() < 2) throw DataError("at least two samples required");
  PredictiveSummary out;
  out.coverage = coverage;
  const double m = double(s.count());
  out.mean = s.samples.colwise().mean().transpose();
  out.std = ((s.samples.rowwise() - out.mean.transpose()).array().square().colwise().sum() / m).sqrt().transpose();
  const Eigen::Index hours = s.samples.cols();
  out.lower.resize(hours);
  out.upper.resize(hours);
  const double tail = 0.5 * (1.0 - coverage);
  if (method == IntervalMethod::quantile) {
    for (Eigen::Index h = 0; h < hours; ++h) {
      const auto col = detail::sorted_column(s.samples, h);
      out.lower[h] = empirical_quantile(col, tail);
      out.upper[h] = empirical_quantile(col, 1.0 - tail);
    }
  } else {
    const double z = normal_quantile(1.0 - tail);
    out.lower = out.mean - z * out.std;
    out.upper = out.mean + z * out.std;
  }
  return out;
}

}  // namespace epf
