#pragma once

// Regressor assembly, rolling windows and z-score standardization.

#include <Eigen/Dense>
#include <cmath>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "epf/common.hpp"
#include "epf/ingest.hpp"

namespace epf {

// Layout of the 248-entry regressor:
// [t, P(d-1), P(d-2), P(d-3), P(d-7), L(d), L(d-1), L(d-7), R(d), R(d-1), R(d-7), weekday one-hot]
namespace layout {
inline constexpr int kDim = 248;
inline constexpr int kDayIndex = 0;
inline constexpr int kPriceLag1 = 1;
inline constexpr int kPriceLag2 = kPriceLag1 + kHours;
inline constexpr int kPriceLag3 = kPriceLag2 + kHours;
inline constexpr int kPriceLag7 = kPriceLag3 + kHours;
inline constexpr int kLoad0 = kPriceLag7 + kHours;
inline constexpr int kLoadLag1 = kLoad0 + kHours;
inline constexpr int kLoadLag7 = kLoadLag1 + kHours;
inline constexpr int kTrp0 = kLoadLag7 + kHours;
inline constexpr int kTrpLag1 = kTrp0 + kHours;
inline constexpr int kTrpLag7 = kTrpLag1 + kHours;
inline constexpr int kWeekday = kTrpLag7 + kHours;
static_assert(kWeekday + 7 == kDim);

struct Block {
  const char* name;
  int offset;
  Channel channel;
  int lag;  // days before the target
};

inline constexpr std::array<Block, 10> kHourBlocks{{
    {"P_lag1", kPriceLag1, Channel::price, 1},
    {"P_lag2", kPriceLag2, Channel::price, 2},
    {"P_lag3", kPriceLag3, Channel::price, 3},
    {"P_lag7", kPriceLag7, Channel::price, 7},
    {"L_lag0", kLoad0, Channel::load, 0},
    {"L_lag1", kLoadLag1, Channel::load, 1},
    {"L_lag7", kLoadLag7, Channel::load, 7},
    {"R_lag0", kTrp0, Channel::trp, 0},
    {"R_lag1", kTrpLag1, Channel::trp, 1},
    {"R_lag7", kTrpLag7, Channel::trp, 7},
}};

inline constexpr int kMaxLag = 7;
}  // namespace layout

struct FeatureVector {
  int day_index = 0;
  Eigen::VectorXd values = Eigen::VectorXd::Zero(layout::kDim);
};

struct SupervisedPair {
  Date date{};
  FeatureVector x;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(kHours);
};

// Regressor for `target`. The target day's own load and TRP are day-ahead
// forecasts, so they are the only same-day inputs; its prices are used as y only.
inline SupervisedPair assemble_features(const DayTable& table, Date target, int day_index) {
  using namespace layout;
  if (!table.contains(target)) throw DataError("target date " + to_string(target) + " not in table");
  for (int lag : {1, 2, 3, 7}) {
    if (!table.contains(target - std::chrono::days{lag}))
      throw DataError("insufficient history for " + to_string(target) + ": lag " + std::to_string(lag) +
                      " day (" + to_string(target - std::chrono::days{lag}) + ") missing");
  }
  SupervisedPair pair;
  pair.date = target;
  pair.x.day_index = day_index;
  auto& v = pair.x.values;
  v[kDayIndex] = double(day_index);
  for (const auto& block : kHourBlocks) {
    const auto& src = table.at(target - std::chrono::days{block.lag}).values(block.channel);
    for (int h = 0; h < kHours; ++h) v[block.offset + h] = src[h];
  }
  v[kWeekday + weekday_index(target)] = 1.0;
  const auto& prices = table.at(target).price;
  for (int h = 0; h < kHours; ++h) pair.y[h] = prices[h];
  return pair;
}

struct WindowSplit {
  std::vector<SupervisedPair> train;
  std::vector<SupervisedPair> validation;
  Date window_start{};
  Date window_end{};
  Date target{};

  std::size_t eligible() const { return train.size() + validation.size(); }
  // Day index the target continues with.
  int target_index() const { return int(eligible()); }
};

// Every day in [window_start, target) becomes a pair; the earlier 80% train,
// the last floor(20%) validate.
inline WindowSplit make_window_from(const DayTable& table, Date window_start, Date target) {
  if (window_start >= target) throw DataError("window error: empty window before " + to_string(target));
  const Date needed = window_start - std::chrono::days{layout::kMaxLag};
  const Date window_end = target - std::chrono::days{1};
  if (table.empty() || needed < table.start_date() || window_end > table.end_date())
    throw DataError("window error: data must span " + to_string(needed) + " to " + to_string(window_end));
  const int n = int((target - window_start).count());
  const int n_val = n / 5;
  const int n_train = n - n_val;
  if (n_train < 2 || n_val < 1) throw DataError("window error: too few days (" + std::to_string(n) + ")");
  WindowSplit split;
  split.window_start = window_start;
  split.window_end = window_end;
  split.target = target;
  split.train.reserve(std::size_t(n_train));
  split.validation.reserve(std::size_t(n_val));
  for (int i = 0; i < n; ++i) {
    auto pair = assemble_features(table, window_start + std::chrono::days{i}, i);
    (i < n_train ? split.train : split.validation).push_back(std::move(pair));
  }
  return split;
}

inline WindowSplit make_window(const DayTable& table, Date target, int window_years) {
  if (window_years < 1) throw ConfigError("window_years must be >= 1");
  return make_window_from(table, years_before(target, window_years), target);
}

// Column-per-example matrices.
inline Eigen::MatrixXd feature_matrix(std::span<const SupervisedPair> pairs) {
  Eigen::MatrixXd m(layout::kDim, Eigen::Index(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) m.col(Eigen::Index(i)) = pairs[i].x.values;
  return m;
}

inline Eigen::MatrixXd target_matrix(std::span<const SupervisedPair> pairs) {
  Eigen::MatrixXd m(kHours, Eigen::Index(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) m.col(Eigen::Index(i)) = pairs[i].y;
  return m;
}

class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-8;

  Standardizer() = default;
  Standardizer(Eigen::VectorXd feature_mean, Eigen::VectorXd feature_std, Eigen::VectorXd target_mean,
               Eigen::VectorXd target_std)
      : feature_mean_(std::move(feature_mean)),
        feature_std_(std::move(feature_std)),
        target_mean_(std::move(target_mean)),
        target_std_(std::move(target_std)) {}

  // Population moments over the training pairs. The weekday one-hot block is
  // passed through; every other column is z-scored.
  static Standardizer fit(std::span<const SupervisedPair> train) {
    if (train.size() < 2) throw DataError("standardizer needs at least 2 training pairs");
    const Eigen::MatrixXd x = feature_matrix(train);
    const Eigen::MatrixXd y = target_matrix(train);
    Standardizer s;
    moments(x, s.feature_mean_, s.feature_std_);
    moments(y, s.target_mean_, s.target_std_);
    s.feature_mean_.segment(layout::kWeekday, 7).setZero();
    s.feature_std_.segment(layout::kWeekday, 7).setOnes();
    return s;
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    check(x.rows(), feature_mean_.rows(), "feature");
    return (x - feature_mean_).cwiseQuotient(feature_std_);
  }
  Eigen::VectorXd invert(const Eigen::VectorXd& z) const {
    check(z.rows(), feature_mean_.rows(), "feature");
    return z.cwiseProduct(feature_std_) + feature_mean_;
  }
  Eigen::MatrixXd apply_features(const Eigen::MatrixXd& x) const {
    check(x.rows(), feature_mean_.rows(), "feature");
    return (x.colwise() - feature_mean_).array().colwise() / feature_std_.array();
  }
  Eigen::MatrixXd apply_targets(const Eigen::MatrixXd& y) const {
    check(y.rows(), target_mean_.rows(), "target");
    return (y.colwise() - target_mean_).array().colwise() / target_std_.array();
  }
  // Network-space predictions back to EUR/MWh.
  Eigen::MatrixXd invert_targets(const Eigen::MatrixXd& z) const {
    check(z.rows(), target_mean_.rows(), "target");
    return (z.array().colwise() * target_std_.array()).matrix().colwise() + target_mean_;
  }

  const Eigen::VectorXd& feature_mean() const { return feature_mean_; }
  const Eigen::VectorXd& feature_std() const { return feature_std_; }
  const Eigen::VectorXd& target_mean() const { return target_mean_; }
  const Eigen::VectorXd& target_std() const { return target_std_; }

  bool operator==(const Standardizer& o) const {
    return feature_mean_ == o.feature_mean_ && feature_std_ == o.feature_std_ &&
           target_mean_ == o.target_mean_ && target_std_ == o.target_std_;
  }

 private:
  static void moments(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& std) {
    const double n = double(m.cols());
    mean = m.rowwise().mean();
    std = ((m.colwise() - mean).array().square().rowwise().sum() / n).sqrt().matrix();
    for (Eigen::Index i = 0; i < std.size(); ++i)
      if (!(std[i] >= kStdFloor)) std[i] = 1.0;
  }
  static void check(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want)
      throw DataError(std::string(what) + " dimension mismatch: got " + std::to_string(got) + ", expected " +
                      std::to_string(want));
  }

  Eigen::VectorXd feature_mean_, feature_std_, target_mean_, target_std_;
};

// Standardized training/validation matrices for one window.
struct StandardizedSplit {
  Eigen::MatrixXd train_x, train_y, val_x, val_y;
};

inline StandardizedSplit standardize(const WindowSplit& split, const Standardizer& s) {
  return {s.apply_features(feature_matrix(split.train)), s.apply_targets(target_matrix(split.train)),
          s.apply_features(feature_matrix(split.validation)), s.apply_targets(target_matrix(split.validation))};
}

inline std::vector<std::string> feature_names() {
  std::vector<std::string> names(layout::kDim);
  names[layout::kDayIndex] = "t";
  char buf[32];
  for (const auto& block : layout::kHourBlocks)
    for (int h = 0; h < kHours; ++h) {
      std::snprintf(buf, sizeof buf, "%s_h%02d", block.name, h);
      names[std::size_t(block.offset + h)] = buf;
    }
  static constexpr const char* days[] = {"mon", "tue", "wed", "thu", "fri", "sat", "sun"};
  for (int d = 0; d < 7; ++d) names[std::size_t(layout::kWeekday + d)] = std::string("weekday_") + days[d];
  return names;
}

// Debug dump: date column followed by the 248 named feature columns.
inline void write_feature_csv(std::ostream& out, std::span<const SupervisedPair> pairs) {
  out << "date";
  for (const auto& n : feature_names()) out << ',' << n;
  out << '\n';
  for (const auto& p : pairs) {
    out << to_string(p.date);
    for (Eigen::Index i = 0; i < p.x.values.size(); ++i) out << ',' << format_double(p.x.values[i]);
    out << '\n';
  }
}

}  // namespace epf
