#pragma once

// Rolling-window backtest: refit each model on the trailing window, forecast
// the next day, score everything at the end.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "epf/features.hpp"
#include "epf/forecasters.hpp"
#include "epf/ingest.hpp"
#include "epf/metrics.hpp"
#include "epf/serialization.hpp"

namespace epf {

struct BacktestConfig {
  std::string data_path;
  CsvSchema schema;
  BuildOptions build;
  Date test_start{};
  Date test_end{};
  int window_years = 4;
  std::vector<std::string> models{"bnn", "lear", "garchx"};
  ForecastSettings forecast;
  std::uint64_t seed = 0;
  int cadence = 1;  // days between refits
  bool parallel_days = false;
  unsigned threads = 1;
  BnnOptions bnn;
  LearOptions lear;
  GarchFitOptions garch;
  MetricsOptions metrics;
  std::string output_dir;  // partial results land here on failure
};

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version = kVersion;
  std::vector<std::string> refit_dates;
  std::optional<Json> grid;  // first BNN grid search, when one ran
};

struct BacktestRun {
  std::vector<std::string> models;
  std::map<std::string, std::vector<ForecastRecord>> records;
  std::vector<MetricsReport> reports;  // in model order
  std::vector<double> quantile_grid;
  Provenance provenance;
};

struct BacktestError : Error {
  BacktestError(ErrorKind kind, const std::string& what) : Error(kind, what) {}
};

inline std::unique_ptr<Forecaster> make_forecaster(const std::string& name, const BacktestConfig& c) {
  if (name == "bnn") {
    BnnOptions o = c.bnn;
    o.search.threads = std::max(1u, c.threads);
    return std::make_unique<BnnForecaster>(o);
  }
  if (name == "lear") return std::make_unique<LearForecaster>(c.lear);
  if (name == "garchx") return std::make_unique<GarchxForecaster>(c.garch);
  if (name == "naive") return std::make_unique<PersistenceForecaster>();
  throw ConfigError("unknown model '" + name + "'");
}

// Canonical JSON of every setting that influences results.
inline Json config_to_json(const BacktestConfig& c) {
  Json grid = {{"hidden_dims", c.bnn.grid.hidden_dims},
               {"hidden_layers", c.bnn.grid.hidden_layers},
               {"dropout_rates", c.bnn.grid.dropout_rates}};
  const auto& t = c.bnn.search.train;
  const char* freq = c.bnn.grid_frequency == GridFrequency::once          ? "once"
                     : c.bnn.grid_frequency == GridFrequency::every_refit ? "every_refit"
                                                                           : "never";
  return {
      {"data", c.data_path},
      {"csv", {{"delimiter", std::string(1, c.schema.delimiter)},
               {"timestamp", c.schema.timestamp},
               {"price", c.schema.price},
               {"residual_load", c.schema.residual_load},
               {"trp", c.schema.trp},
               {"merge_duplicate_hours", c.build.merge_duplicate_hours}}},
      {"test_start", to_string(c.test_start)},
      {"test_end", to_string(c.test_end)},
      {"window_years", c.window_years},
      {"models", c.models},
      {"mc_samples", c.forecast.mc_samples},
      {"coverage", c.forecast.coverage},
      {"interval", c.forecast.interval == IntervalMethod::quantile ? "quantile" : "gaussian"},
      {"quantile_grid", c.forecast.quantile_grid},
      {"seed", c.seed},
      {"cadence", c.cadence},
      {"parallel_days", c.parallel_days},
      {"threads", c.threads},
      {"bnn",
       {{"grid", grid},
        {"grid_frequency", freq},
        {"architecture",
         {{"hidden_dim", c.bnn.architecture.hidden_dim},
          {"hidden_layers", c.bnn.architecture.hidden_layers},
          {"dropout_rate", c.bnn.architecture.dropout_rate}}},
        {"learning_rate", t.adam.learning_rate},
        {"beta1", t.adam.beta1},
        {"beta2", t.adam.beta2},
        {"epsilon", t.adam.epsilon},
        {"batch_size", t.batch_size},
        {"max_epochs", t.max_epochs},
        {"patience", t.patience}}},
      {"lear",
       {{"lambda_count", c.lear.lambda_count},
        {"lambda_lo", c.lear.lambda_lo},
        {"lambda_hi", c.lear.lambda_hi},
        {"patience", c.lear.patience},
        {"saturation_r2", c.lear.saturation_r2},
        {"lambda_rule", c.lear.lambda_rule},
        {"tolerance", c.lear.lasso.tolerance},
        {"max_sweeps", c.lear.lasso.max_sweeps}}},
      {"garchx",
       {{"tolerance", c.garch.optimizer.tolerance}, {"max_iterations", c.garch.optimizer.max_iterations}}},
      {"metrics", {{"crps_factor", c.metrics.crps_factor}, {"mape_floor", c.metrics.mape_floor}}},
  };
}

// Reads a config document; keys left out keep their defaults.
inline BacktestConfig config_from_json(const Json& j) {
  BacktestConfig c;
  try {
    c.data_path = j.value("data", c.data_path);
    if (j.contains("csv")) {
      const auto& s = j.at("csv");
      const auto delim = s.value("delimiter", std::string(";"));
      if (delim.size() != 1) throw ConfigError("csv.delimiter must be one character");
      c.schema.delimiter = delim[0];
      c.schema.timestamp = s.value("timestamp", c.schema.timestamp);
      c.schema.price = s.value("price", c.schema.price);
      c.schema.residual_load = s.value("residual_load", c.schema.residual_load);
      c.schema.trp = s.value("trp", c.schema.trp);
      c.build.merge_duplicate_hours = s.value("merge_duplicate_hours", false);
    }
    if (j.contains("test_start")) c.test_start = parse_date_or_throw(j.at("test_start").get<std::string>());
    if (j.contains("test_end")) c.test_end = parse_date_or_throw(j.at("test_end").get<std::string>());
    c.window_years = j.value("window_years", c.window_years);
    c.models = j.value("models", c.models);
    c.forecast.mc_samples = j.value("mc_samples", c.forecast.mc_samples);
    c.forecast.coverage = j.value("coverage", c.forecast.coverage);
    const auto interval = j.value("interval", std::string("quantile"));
    if (interval != "quantile" && interval != "gaussian") throw ConfigError("interval must be quantile or gaussian");
    c.forecast.interval = interval == "quantile" ? IntervalMethod::quantile : IntervalMethod::gaussian;
    c.forecast.quantile_grid = j.value("quantile_grid", c.forecast.quantile_grid);
    c.seed = j.value("seed", c.seed);
    c.cadence = j.value("cadence", c.cadence);
    c.parallel_days = j.value("parallel_days", c.parallel_days);
    c.threads = j.value("threads", c.threads);
    if (j.contains("bnn")) {
      const auto& b = j.at("bnn");
      if (b.contains("grid")) {
        const auto& g = b.at("grid");
        c.bnn.grid.hidden_dims = g.value("hidden_dims", c.bnn.grid.hidden_dims);
        c.bnn.grid.hidden_layers = g.value("hidden_layers", c.bnn.grid.hidden_layers);
        c.bnn.grid.dropout_rates = g.value("dropout_rates", c.bnn.grid.dropout_rates);
      }
      const auto freq = b.value("grid_frequency", std::string("once"));
      if (freq == "once") c.bnn.grid_frequency = GridFrequency::once;
      else if (freq == "every_refit") c.bnn.grid_frequency = GridFrequency::every_refit;
      else if (freq == "never") c.bnn.grid_frequency = GridFrequency::never;
      else throw ConfigError("bnn.grid_frequency must be once, every_refit or never");
      if (b.contains("architecture")) {
        const auto& a = b.at("architecture");
        c.bnn.architecture.hidden_dim = a.value("hidden_dim", c.bnn.architecture.hidden_dim);
        c.bnn.architecture.hidden_layers = a.value("hidden_layers", c.bnn.architecture.hidden_layers);
        c.bnn.architecture.dropout_rate = a.value("dropout_rate", c.bnn.architecture.dropout_rate);
      }
      auto& t = c.bnn.search.train;
      t.adam.learning_rate = b.value("learning_rate", t.adam.learning_rate);
      t.adam.beta1 = b.value("beta1", t.adam.beta1);
      t.adam.beta2 = b.value("beta2", t.adam.beta2);
      t.adam.epsilon = b.value("epsilon", t.adam.epsilon);
      t.batch_size = b.value("batch_size", t.batch_size);
      t.max_epochs = b.value("max_epochs", t.max_epochs);
      t.patience = b.value("patience", t.patience);
    }
    if (j.contains("lear")) {
      const auto& l = j.at("lear");
      c.lear.lambda_count = l.value("lambda_count", c.lear.lambda_count);
      c.lear.lambda_lo = l.value("lambda_lo", c.lear.lambda_lo);
      c.lear.lambda_hi = l.value("lambda_hi", c.lear.lambda_hi);
      c.lear.patience = l.value("patience", c.lear.patience);
      c.lear.saturation_r2 = l.value("saturation_r2", c.lear.saturation_r2);
      c.lear.lambda_rule = l.value("lambda_rule", c.lear.lambda_rule);
      c.lear.lasso.tolerance = l.value("tolerance", c.lear.lasso.tolerance);
      c.lear.lasso.max_sweeps = l.value("max_sweeps", c.lear.lasso.max_sweeps);
    }
    if (j.contains("garchx")) {
      const auto& g = j.at("garchx");
      c.garch.optimizer.tolerance = g.value("tolerance", c.garch.optimizer.tolerance);
      c.garch.optimizer.max_iterations = g.value("max_iterations", c.garch.optimizer.max_iterations);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      c.metrics.crps_factor = m.value("crps_factor", c.metrics.crps_factor);
      c.metrics.mape_floor = m.value("mape_floor", c.metrics.mape_floor);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

inline std::string config_hash(const BacktestConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

// Unset test dates default to the final year of the data.
inline void default_test_period(BacktestConfig& c, const DayTable& table) {
  if (table.empty()) throw DataError("no data");
  if (c.test_end == Date{}) c.test_end = table.end_date();
  if (c.test_start == Date{}) c.test_start = c.test_end - std::chrono::days{364};
}

inline void validate(const BacktestConfig& c, const DayTable& table) {
  if (c.cadence < 1) throw ConfigError("cadence must be >= 1");
  if (c.window_years < 1) throw ConfigError("window_years must be >= 1");
  if (c.test_end < c.test_start) throw ConfigError("test_end precedes test_start");
  if (c.models.empty()) throw ConfigError("no models enabled");
  for (const auto& m : c.models) make_forecaster(m, c);
  if (!(c.forecast.coverage > 0.0 && c.forecast.coverage < 1.0)) throw ConfigError("coverage must lie in (0, 1)");
  if (c.forecast.mc_samples < 2) throw ConfigError("mc_samples must be >= 2");
  c.lear.validate();
  check_quantile_grid(c.forecast.quantile_grid);
  if (table.empty()) throw DataError("no data");
  const Date earliest = years_before(c.test_start, c.window_years) - std::chrono::days{layout::kMaxLag};
  if (earliest < table.start_date())
    throw DataError("test_start " + to_string(c.test_start) + " needs data from " + to_string(earliest) +
                      " but data starts " + to_string(table.start_date()));
  if (c.test_end > table.end_date())
    throw DataError("data ends " + to_string(table.end_date()) + ", before test_end " + to_string(c.test_end));
}

inline DayTable load_table(const std::string& path, const CsvSchema& schema, const BuildOptions& build = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path);
  const auto records = parse_csv(in, schema);
  return build_day_table(records, build);
}

namespace detail {

inline void write_forecast_rows(std::ostream& out, const std::vector<std::string>& models,
                                const std::map<std::string, std::vector<ForecastRecord>>& records,
                                const std::vector<double>& grid);

struct RefitGroup {
  std::size_t index = 0;  // refit ordinal
  Date fit_day{};
  std::vector<Date> days;
};

}  // namespace detail

// Runs every enabled model. `models` overrides the config's model list when
// nonempty (custom forecasters for experiments and tests).
inline BacktestRun run_backtest(const BacktestConfig& config, const DayTable& table,
                                std::vector<std::unique_ptr<Forecaster>> models = {}) {
  validate(config, table);
  if (models.empty())
    for (const auto& name : config.models) models.push_back(make_forecaster(name, config));

  BacktestRun run;
  run.quantile_grid = config.forecast.quantile_grid;
  run.provenance.config_hash = config_hash(config);
  run.provenance.seed = config.seed;
  for (const auto& m : models) {
    run.models.push_back(m->name());
    run.records[m->name()];
  }

  std::vector<detail::RefitGroup> groups;
  int offset = 0;
  for (Date d = config.test_start; d <= config.test_end; d += std::chrono::days{1}, ++offset) {
    if (offset % config.cadence == 0) groups.push_back({groups.size(), d, {}});
    groups.back().days.push_back(d);
  }
  for (const auto& g : groups) run.provenance.refit_dates.push_back(to_string(g.fit_day));

  std::string current_model = "-";
  Date current_day = config.test_start;
  auto process = [&](const detail::RefitGroup& g, std::vector<std::unique_ptr<Forecaster>>& fs,
                     std::map<std::string, std::vector<ForecastRecord>>& out, std::string& model_name, Date& day) {
    day = g.fit_day;
    model_name = "-";
    const WindowSplit split = make_window(table, g.fit_day, config.window_years);
    if (!(split.window_end < g.fit_day)) throw ModelError("look-ahead: window reaches the target day");
    for (auto& f : fs) {
      model_name = f->name();
      f->fit(split, derive_seed(config.seed, "fit/" + f->name(), g.index));
    }
    for (Date d : g.days) {
      day = d;
      model_name = "-";
      const int index = split.target_index() + int((d - split.target).count());
      const SupervisedPair pair = assemble_features(table, d, index);
      const auto day_offset = std::uint64_t((d - config.test_start).count());
      for (auto& f : fs) {
        model_name = f->name();
        const DayForecast fc = f->forecast(d, pair.x, config.forecast, derive_seed(config.seed, "mc/" + f->name(), day_offset));
        validate(fc, config.forecast.quantile_grid.size());
        auto recs = to_records(d, fc, table.at(d).price);
        auto& dst = out[f->name()];
        dst.insert(dst.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
      }
    }
  };

  auto fail = [&](const Error& e, ErrorKind kind) {
    if (!config.output_dir.empty()) {
      std::filesystem::create_directories(config.output_dir);
      std::ofstream partial(std::filesystem::path(config.output_dir) / "partial_forecasts.csv");
      detail::write_forecast_rows(partial, run.models, run.records, run.quantile_grid);
    }
    throw BacktestError(kind, "backtest failed on " + to_string(current_day) + " (model " + current_model +
                                  "): " + e.what());
  };

  try {
    const bool parallel = config.parallel_days && config.threads > 1 && groups.size() > 1;
    if (!parallel) {
      for (const auto& g : groups) process(g, models, run.records, current_model, current_day);
    } else {
      // The first group runs alone so a once-only grid search settles the
      // architecture; later groups each work on a copy of the fitted models.
      process(groups.front(), models, run.records, current_model, current_day);
      std::vector<std::map<std::string, std::vector<ForecastRecord>>> partial(groups.size());
      std::vector<std::exception_ptr> errors(groups.size());
      std::atomic<std::size_t> next{1};
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < std::min<std::size_t>(config.threads, groups.size() - 1); ++w)
        pool.emplace_back([&] {
          for (std::size_t i; (i = next.fetch_add(1)) < groups.size();) {
            std::string name;
            Date day;
            try {
              std::vector<std::unique_ptr<Forecaster>> fs;
              for (const auto& m : models) fs.push_back(m->clone());
              process(groups[i], fs, partial[i], name, day);
            } catch (const Error& e) {
              errors[i] = std::make_exception_ptr(
                  BacktestError(e.kind(), "backtest failed on " + to_string(day) + " (model " + name + "): " + e.what()));
            }
          }
        });
      for (auto& t : pool) t.join();
      for (std::size_t i = 1; i < groups.size(); ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
        for (auto& [name, recs] : partial[i]) {
          auto& dst = run.records[name];
          dst.insert(dst.end(), recs.begin(), recs.end());
        }
      }
    }
  } catch (const BacktestError&) {
    throw;
  } catch (const Error& e) {
    fail(e, e.kind());
  }

  for (const auto& m : models)
    if (const auto* bnn = dynamic_cast<const BnnForecaster*>(m.get()); bnn && bnn->last_grid())
      run.provenance.grid = to_json(*bnn->last_grid());

  for (const auto& name : run.models)
    run.reports.push_back(aggregate_report(run.records[name], run.quantile_grid, name, config.metrics));
  return run;
}

// ---------------------------------------------------------------------------
// Report files

namespace detail {

inline void write_forecast_header(std::ostream& out, const std::vector<double>& grid) {
  out << "date,hour,model,actual,mean,std,lower,upper";
  for (double q : grid) out << ",q" << format_double(q, 6);
  out << '\n';
}

inline void write_forecast_rows(std::ostream& out, const std::vector<std::string>& models,
                                const std::map<std::string, std::vector<ForecastRecord>>& records,
                                const std::vector<double>& grid) {
  write_forecast_header(out, grid);
  struct Row {
    Date date;
    int hour;
    std::size_t model;
    const ForecastRecord* rec;
  };
  std::vector<Row> rows;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto it = records.find(models[m]);
    if (it == records.end()) continue;
    for (const auto& r : it->second) rows.push_back({r.date, r.hour, m, &r});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return std::tie(a.date, a.hour, a.model) < std::tie(b.date, b.hour, b.model);
  });
  for (const auto& row : rows) {
    const auto& r = *row.rec;
    out << to_string(r.date) << ',' << r.hour << ',' << models[row.model] << ',' << format_fixed(r.observed, 6) << ','
        << format_fixed(r.point, 6) << ',' << format_fixed(r.spread, 6) << ',' << format_fixed(r.lower, 6) << ','
        << format_fixed(r.upper, 6);
    for (double q : r.quantiles) out << ',' << format_fixed(q, 6);
    out << '\n';
  }
}

inline std::string metric_cell(double v) { return std::isfinite(v) ? format_fixed(v, 6) : std::string("NA"); }

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

}  // namespace detail

struct ReportInput {
  std::vector<std::string> models;
  std::map<std::string, std::vector<ForecastRecord>> records;
  std::vector<MetricsReport> reports;
  std::vector<double> quantile_grid;
  Json provenance = Json::object();
};

inline Json to_json(const Provenance& p) {
  Json j = {{"config_hash", p.config_hash}, {"seed", p.seed}, {"version", p.version}, {"refit_dates", p.refit_dates}};
  if (p.grid) j["bnn_grid"] = *p.grid;
  return j;
}

inline ReportInput report_input(const BacktestRun& run) {
  return {run.models, run.records, run.reports, run.quantile_grid, to_json(run.provenance)};
}

// metrics.csv (long), metrics_table.csv (metric x model), metrics.json,
// forecasts.csv and daily_mae.csv. Output depends only on the input.
inline void emit_reports(const ReportInput& in, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());

  {
    auto out = detail::open_output(dir / "metrics.csv");
    out << "metric,model,value\n";
    for (const char* metric : kMetricNames)
      for (const auto& r : in.reports)
        out << metric << ',' << r.model << ',' << detail::metric_cell(metric_value(r.aggregate, metric)) << '\n';
  }
  {
    auto out = detail::open_output(dir / "metrics_table.csv");
    out << "metric";
    for (const auto& r : in.reports) out << ',' << r.model;
    out << '\n';
    for (const char* metric : kMetricNames) {
      out << metric;
      for (const auto& r : in.reports) out << ',' << detail::metric_cell(metric_value(r.aggregate, metric));
      out << '\n';
    }
  }
  {
    Json models = Json::object();
    for (const auto& r : in.reports) models[r.model] = to_json(r);
    write_json_file((dir / "metrics.json").string(), {{"provenance", in.provenance}, {"models", std::move(models)}});
  }
  {
    auto out = detail::open_output(dir / "forecasts.csv");
    detail::write_forecast_rows(out, in.models, in.records, in.quantile_grid);
  }
  {
    auto out = detail::open_output(dir / "daily_mae.csv");
    out << "date,model,mae\n";
    std::map<Date, std::vector<std::pair<std::size_t, double>>> rows;
    for (std::size_t m = 0; m < in.models.size(); ++m) {
      const auto it = in.records.find(in.models[m]);
      if (it == in.records.end()) continue;
      for (const auto& [d, mae] : daily_mae(it->second)) rows[d].emplace_back(m, mae);
    }
    for (const auto& [d, list] : rows)
      for (const auto& [m, mae] : list) out << to_string(d) << ',' << in.models[m] << ',' << format_fixed(mae, 6) << '\n';
  }
}

inline void emit_reports(const BacktestRun& run, const std::filesystem::path& dir) {
  emit_reports(report_input(run), dir);
}

// Reads forecasts.csv and joins it with observed prices from `actual`
// (the actual column in the file is ignored). Records are grouped per model
// in file order of first appearance.
inline ReportInput read_forecasts(std::istream& in, const DayTable& actual) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("forecast file is empty");
  const auto header = detail::split(line, ',');
  const std::vector<std::string_view> fixed{"date", "hour", "model", "actual", "mean", "std", "lower", "upper"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin()))
    throw DataError("forecast file header must start with " + std::string("date,hour,model,actual,mean,std,lower,upper"));
  ReportInput out;
  for (std::size_t i = fixed.size(); i < header.size(); ++i) {
    if (header[i].empty() || header[i][0] != 'q') throw DataError("unexpected forecast column " + std::string(header[i]));
    const auto q = detail::parse_number(header[i].substr(1));
    if (!q) throw DataError("bad quantile column " + std::string(header[i]));
    out.quantile_grid.push_back(*q);
  }
  check_quantile_grid(out.quantile_grid);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    auto bad = [&](const char* what) {
      return DataError("forecast file line " + std::to_string(line_no) + ": " + what);
    };
    if (cells.size() != header.size()) throw bad("wrong number of columns");
    ForecastRecord r;
    unsigned hour;
    if (!parse_date(cells[0], r.date)) throw bad("bad date");
    if (!detail::parse_uint(cells[1], hour) || hour >= kHours) throw bad("bad hour");
    r.hour = int(hour);
    const std::string model(cells[2]);
    auto num = [&](std::size_t i) {
      const auto v = detail::parse_number(cells[i]);
      if (!v) throw bad("non-numeric value");
      return *v;
    };
    r.point = num(4);
    r.spread = num(5);
    r.lower = num(6);
    r.upper = num(7);
    for (std::size_t i = fixed.size(); i < cells.size(); ++i) r.quantiles.push_back(num(i));
    if (!actual.contains(r.date)) throw bad("date not covered by the actual data");
    r.observed = actual.at(r.date).price[std::size_t(r.hour)];
    if (!out.records.count(model)) out.models.push_back(model);
    out.records[model].push_back(std::move(r));
  }
  return out;
}

inline void score(ReportInput& in, const MetricsOptions& options = {}) {
  in.reports.clear();
  for (const auto& m : in.models) in.reports.push_back(aggregate_report(in.records.at(m), in.quantile_grid, m, options));
}

}  // namespace epf
