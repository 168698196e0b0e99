#pragma once

// Common interface over every model the backtest can run.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "epf/baselines.hpp"
#include "epf/forecast.hpp"
#include "epf/inference.hpp"
#include "epf/train.hpp"

namespace epf {

class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::string name() const = 0;
  // Refit on a rolling window.
  virtual void fit(const WindowSplit& split, std::uint64_t seed) = 0;
  virtual DayForecast forecast(Date target, const FeatureVector& x, const ForecastSettings& settings,
                               std::uint64_t seed) const = 0;
  virtual std::unique_ptr<Forecaster> clone() const = 0;
};

enum class GridFrequency { once, every_refit, never };

struct BnnOptions {
  HyperGrid grid;
  GridOptions search;  // includes the per-model training options
  GridFrequency grid_frequency = GridFrequency::once;
  GridPoint architecture;  // used as-is when grid_frequency is never
};

class BnnForecaster final : public Forecaster {
 public:
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<BnnForecaster>(*this); }
  explicit BnnForecaster(BnnOptions options = {}) : options_(std::move(options)) {
    if (options_.grid_frequency == GridFrequency::never) architecture_ = options_.architecture;
  }

  std::string name() const override { return "bnn"; }

  void fit(const WindowSplit& split, std::uint64_t seed) override {
    const Standardizer standardizer = Standardizer::fit(split.train);
    const StandardizedSplit data = standardize(split, standardizer);
    const bool search = options_.grid_frequency == GridFrequency::every_refit ||
                        (options_.grid_frequency == GridFrequency::once && !architecture_);
    if (search) {
      GridResult grid = grid_search(data, options_.grid, seed, options_.search);
      model_ = BnnModel{grid.selected_config, standardizer, std::move(grid.selected_params)};
      architecture_ = grid.entries[grid.selected].point;
      last_grid_ = std::move(grid);
      last_grid_->selected_params = {};
      report_ = last_grid_->entries[last_grid_->selected].report;
      return;
    }
    MlpConfig cfg;
    cfg.hidden_dim = architecture_->hidden_dim;
    cfg.hidden_layers = architecture_->hidden_layers;
    cfg.dropout_rate = architecture_->dropout_rate;
    cfg.seed = seed;
    TrainedNetwork trained = train_model(cfg, data, options_.search.train);
    model_ = BnnModel{cfg, standardizer, std::move(trained.params)};
    report_ = std::move(trained.report);
  }

  DayForecast forecast(Date, const FeatureVector& x, const ForecastSettings& settings,
                       std::uint64_t seed) const override {
    if (!model_) throw ModelError("bnn forecast requested before fit");
    const PredictiveSamples samples = mc_sample(*model_, x, settings.mc_samples, seed);
    const PredictiveSummary summary = summarize(samples, settings.coverage, settings.interval);
    return {summary.mean, summary.std, summary.lower, summary.upper, quantile_curve(samples, settings.quantile_grid)};
  }

  const std::optional<BnnModel>& model() const { return model_; }
  void set_model(BnnModel model) { model_ = std::move(model); }
  const std::optional<GridResult>& last_grid() const { return last_grid_; }
  const std::optional<GridPoint>& architecture() const { return architecture_; }
  const std::optional<TrainReport>& last_report() const { return report_; }

 private:
  BnnOptions options_;
  std::optional<GridPoint> architecture_;
  std::optional<BnnModel> model_;
  std::optional<GridResult> last_grid_;
  std::optional<TrainReport> report_;
};

class LearForecaster final : public Forecaster {
 public:
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<LearForecaster>(*this); }
  explicit LearForecaster(LearOptions options = {}) : options_(options) {}
  std::string name() const override { return "lear"; }
  void fit(const WindowSplit& split, std::uint64_t) override { model_ = lear_train(split, options_); }
  DayForecast forecast(Date, const FeatureVector& x, const ForecastSettings& s, std::uint64_t) const override {
    if (!model_) throw ModelError("lear forecast requested before fit");
    return lear_predict(*model_, x, s);
  }
  const std::optional<LearModel>& model() const { return model_; }
  void set_model(LearModel model) { model_ = std::move(model); }

 private:
  LearOptions options_;
  std::optional<LearModel> model_;
};

class GarchxForecaster final : public Forecaster {
 public:
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<GarchxForecaster>(*this); }
  explicit GarchxForecaster(GarchFitOptions options = {}) : options_(options) {}
  std::string name() const override { return "garchx"; }
  void fit(const WindowSplit& split, std::uint64_t) override { model_ = garchx_train(split, options_); }
  DayForecast forecast(Date, const FeatureVector& x, const ForecastSettings& s, std::uint64_t) const override {
    if (!model_) throw ModelError("garchx forecast requested before fit");
    return garchx_predict(*model_, x, s);
  }
  const std::optional<GarchxModel>& model() const { return model_; }
  void set_model(GarchxModel model) { model_ = std::move(model); }

 private:
  GarchFitOptions options_;
  std::optional<GarchxModel> model_;
};

// Yesterday's price for every hour, with historical-simulation intervals.
class PersistenceForecaster final : public Forecaster {
 public:
  std::unique_ptr<Forecaster> clone() const override { return std::make_unique<PersistenceForecaster>(*this); }
  std::string name() const override { return "naive"; }
  void fit(const WindowSplit& split, std::uint64_t) override {
    residuals_.assign(kHours, {});
    for (const auto* set : {&split.train, &split.validation})
      for (const auto& p : *set)
        for (int h = 0; h < kHours; ++h)
          residuals_[std::size_t(h)].push_back(p.y[h] - p.x.values[layout::kPriceLag1 + h]);
    for (auto& r : residuals_) std::sort(r.begin(), r.end());
  }
  DayForecast forecast(Date, const FeatureVector& x, const ForecastSettings& s, std::uint64_t) const override {
    if (residuals_.empty()) throw ModelError("naive forecast requested before fit");
    return residual_quantile_forecast(x.values.segment(layout::kPriceLag1, kHours), residuals_, s);
  }

 private:
  std::vector<std::vector<double>> residuals_;
};

}  // namespace epf
