#pragma once

// Adam, mini-batch training with checkpoint-restore, and hyperparameter grid search.

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "epf/common.hpp"
#include "epf/features.hpp"
#include "epf/network.hpp"

namespace epf {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  MlpParams first_moment;
  MlpParams second_moment;
  long step = 0;
  AdamOptions options;

  static AdamState for_params(const MlpParams& params, const AdamOptions& options = {}) {
    return {params.zeros_like(), params.zeros_like(), 0, options};
  }
};

struct NonFiniteGradient : ModelError {
  std::string parameter;
  explicit NonFiniteGradient(const std::string& name)
      : ModelError("non-finite gradient in parameter " + name), parameter(name) {}
};

// One bias-corrected Adam update of a single tensor; `step` is the 1-based count.
template <typename P, typename G, typename M, typename V>
void adam_update(P&& param, const G& grad, M&& m, V&& v, long step, const AdamOptions& o) {
  m = o.beta1 * m + (1.0 - o.beta1) * grad;
  v = o.beta2 * v + (1.0 - o.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(o.beta1, double(step));
  const double c2 = 1.0 - std::pow(o.beta2, double(step));
  param.array() -= o.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + o.epsilon);
}

inline void adam_step(MlpParams& params, const Gradients& grads, AdamState& state) {
  for_each_tensor([](const std::string& name, auto&, auto& gt, auto&, auto&) {
    if (!gt.allFinite()) throw NonFiniteGradient(name);
  }, params, grads, state.first_moment, state.second_moment);
  ++state.step;
  for_each_tensor([&](const std::string&, auto& p, auto& gt, auto& m, auto& v) {
    adam_update(p, gt, m, v, state.step, state.options);
  }, params, grads, state.first_moment, state.second_moment);
}

struct TrainOptions {
  AdamOptions adam;
  int batch_size = 32;
  int max_epochs = 300;
  int patience = 25;
};

struct TrainReport {
  double best_val_mse = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
  int best_epoch = 0;  // 1-based
  std::vector<double> train_loss;
  std::vector<double> val_mse;
  bool operator==(const TrainReport&) const = default;
};

struct TrainedNetwork {
  MlpParams params;
  TrainReport report;
};

struct TrainingDiverged : ModelError {
  explicit TrainingDiverged(const std::string& what) : ModelError("training diverged: " + what) {}
};

// Validation loss only ever reads validation targets through this function.
inline double validation_mse(const MlpParams& params, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return mse_loss(forward(params, x).output, y);
}

// Mini-batch Adam on standardized data. A fresh dropout mask is drawn for every
// example at every step; the parameters from the best validation epoch are returned.
inline TrainedNetwork train_model(const MlpConfig& config, const StandardizedSplit& data,
                                  const TrainOptions& options = {}) {
  config.validate();
  const Eigen::Index n = data.train_x.cols();
  if (n == 0 || data.val_x.cols() == 0) throw DataError("training and validation sets must be nonempty");
  if (options.batch_size < 1 || options.max_epochs < 1) throw ConfigError("batch size and epochs must be positive");

  std::mt19937_64 init_rng(derive_seed(config.seed, "init"));
  std::mt19937_64 rng(derive_seed(config.seed, "train"));
  MlpParams params = init_params(config, init_rng);
  AdamState adam = AdamState::for_params(params, options.adam);

  TrainedNetwork best{params, {}};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Eigen::MatrixXd bx, by;
  int since_best = 0;
  for (int epoch = 1; epoch <= options.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Eigen::Index seen = 0;
    for (Eigen::Index start = 0; start < n; start += options.batch_size) {
      const Eigen::Index b = std::min<Eigen::Index>(options.batch_size, n - start);
      bx.resize(data.train_x.rows(), b);
      by.resize(data.train_y.rows(), b);
      for (Eigen::Index j = 0; j < b; ++j) {
        bx.col(j) = data.train_x.col(order[std::size_t(start + j)]);
        by.col(j) = data.train_y.col(order[std::size_t(start + j)]);
      }
      const DropoutMask mask = sample_mask(config.hidden_dim, b, config.dropout_rate, rng);
      const ForwardPass pass = forward(params, bx, mask);
      loss_sum += mse_loss(pass.output, by) * double(b);
      seen += b;
      try {
        adam_step(params, backward(params, pass, by, mask), adam);
      } catch (const NonFiniteGradient& e) {
        throw TrainingDiverged(std::string(e.what()) + " at epoch " + std::to_string(epoch));
      }
    }
    const double val = validation_mse(params, data.val_x, data.val_y);
    if (!std::isfinite(val)) throw TrainingDiverged("validation MSE non-finite at epoch " + std::to_string(epoch));
    best.report.train_loss.push_back(loss_sum / double(seen));
    best.report.val_mse.push_back(val);
    best.report.epochs_run = epoch;
    if (val < best.report.best_val_mse) {
      best.report.best_val_mse = val;
      best.report.best_epoch = epoch;
      best.params = params;
      since_best = 0;
    } else if (++since_best >= options.patience) {
      break;
    }
  }
  return best;
}

struct GridPoint {
  int hidden_dim = 64;
  int hidden_layers = 2;
  double dropout_rate = 0.2;
  bool operator==(const GridPoint&) const = default;
};

struct HyperGrid {
  std::vector<int> hidden_dims{64, 128, 256};
  std::vector<int> hidden_layers{2, 3};
  std::vector<double> dropout_rates{0.2, 0.3, 0.4};

  std::vector<GridPoint> points() const {
    std::vector<GridPoint> out;
    for (int d : hidden_dims)
      for (int l : hidden_layers)
        for (double g : dropout_rates) out.push_back({d, l, g});
    return out;
  }
};

struct GridEntry {
  GridPoint point;
  std::uint64_t seed = 0;
  std::optional<TrainReport> report;  // empty when training diverged
  std::string failure;
};

struct GridResult {
  std::vector<GridEntry> entries;
  std::size_t selected = 0;
  MlpConfig selected_config;
  MlpParams selected_params;
};

struct GridFailure : ModelError {
  explicit GridFailure(const std::string& what) : ModelError("grid search failed: " + what) {}
};

// argmin of validation MSE; ties go to smaller d, then smaller L, then smaller dropout.
inline std::size_t select_configuration(const std::vector<GridEntry>& entries) {
  std::optional<std::size_t> best;
  auto key = [&](std::size_t i) {
    const auto& e = entries[i];
    return std::make_tuple(e.report->best_val_mse, e.point.hidden_dim, e.point.hidden_layers, e.point.dropout_rate);
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].report) continue;
    if (!best || key(i) < key(*best)) best = i;
  }
  if (!best) throw GridFailure("every configuration diverged");
  return *best;
}

struct GridOptions {
  TrainOptions train;
  unsigned threads = 1;
};

// Trains every grid point with its own seed derived from `master_seed` and the
// point's position in the grid. Results are keyed by position, so thread count
// does not affect the outcome.
template <typename Trainer = decltype(&train_model)>
GridResult grid_search(const StandardizedSplit& data, const HyperGrid& grid, std::uint64_t master_seed,
                       const GridOptions& options = {}, Trainer trainer = &train_model) {
  const auto points = grid.points();
  if (points.empty()) throw ConfigError("empty hyperparameter grid");
  GridResult result;
  result.entries.resize(points.size());
  std::vector<std::optional<MlpParams>> params(points.size());

  auto run = [&](std::size_t i) {
    auto& e = result.entries[i];
    e.point = points[i];
    e.seed = derive_seed(master_seed, "grid", i);
    MlpConfig cfg;
    cfg.hidden_dim = e.point.hidden_dim;
    cfg.hidden_layers = e.point.hidden_layers;
    cfg.dropout_rate = e.point.dropout_rate;
    cfg.seed = e.seed;
    try {
      TrainedNetwork t = trainer(cfg, data, options.train);
      e.report = std::move(t.report);
      params[i] = std::move(t.params);
    } catch (const TrainingDiverged& err) {
      e.failure = err.what();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads, unsigned(points.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < points.size(); ++i) run(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i; (i = next.fetch_add(1)) < points.size();) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  result.selected = select_configuration(result.entries);
  const auto& chosen = result.entries[result.selected];
  result.selected_config.hidden_dim = chosen.point.hidden_dim;
  result.selected_config.hidden_layers = chosen.point.hidden_layers;
  result.selected_config.dropout_rate = chosen.point.dropout_rate;
  result.selected_config.seed = chosen.seed;
  result.selected_params = std::move(*params[result.selected]);
  return result;
}

}  // namespace epf
