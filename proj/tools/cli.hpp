#pragma once

// Command-line front end. Kept in a header so tests can drive the verbs
// without spawning processes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "epf/epf.hpp"

namespace epf::cli {

struct Overrides {
  std::string config_path;
  std::string data;
  std::string test_start, test_end;
  std::vector<std::string> models;
  std::optional<int> window_years, cadence, mc_samples, epochs;
  std::optional<unsigned> threads;
  std::optional<double> coverage;
  std::string grid_frequency;
  bool parallel_days = false;
};

inline BacktestConfig resolve_config(const Overrides& o) {
  BacktestConfig c = o.config_path.empty() ? BacktestConfig{} : config_from_json(read_json_file(o.config_path));
  if (!o.data.empty()) c.data_path = o.data;
  if (!o.test_start.empty()) c.test_start = parse_date_or_throw(o.test_start);
  if (!o.test_end.empty()) c.test_end = parse_date_or_throw(o.test_end);
  if (!o.models.empty()) c.models = o.models;
  if (o.window_years) c.window_years = *o.window_years;
  if (o.cadence) c.cadence = *o.cadence;
  if (o.mc_samples) c.forecast.mc_samples = *o.mc_samples;
  if (o.epochs) c.bnn.search.train.max_epochs = *o.epochs;
  if (o.threads) c.threads = *o.threads;
  if (o.coverage) c.forecast.coverage = *o.coverage;
  if (o.parallel_days) c.parallel_days = true;
  if (!o.grid_frequency.empty()) {
    Json j = config_to_json(c);
    j["bnn"]["grid_frequency"] = o.grid_frequency;
    c = config_from_json(j);
  }
  if (c.data_path.empty()) throw ConfigError("no data file given (--data or \"data\" in the config)");
  return c;
}

inline void add_config_options(CLI::App& app, Overrides& o) {
  app.add_option("-c,--config", o.config_path, "JSON config file");
  app.add_option("--data", o.data, "hourly CSV (timestamp;price;residual_load;trp)");
  app.add_option("--models", o.models, "subset of bnn lear garchx naive");
  app.add_option("--window-years", o.window_years, "rolling window length");
  app.add_option("--mc-samples", o.mc_samples, "MC dropout passes per forecast");
  app.add_option("--epochs", o.epochs, "maximum BNN training epochs");
  app.add_option("--threads", o.threads, "worker threads");
  app.add_option("--coverage", o.coverage, "nominal interval coverage");
  app.add_option("--grid-frequency", o.grid_frequency, "once, every_refit or never");
}

// Model artifact with the context needed to forecast later days.
inline Json wrap_model(Json model, const WindowSplit& split, const BacktestConfig& c) {
  return {{"trained_for", to_string(split.target)},
          {"window_start", to_string(split.window_start)},
          {"target_index", split.target_index()},
          {"config_hash", config_hash(c)},
          {"model", std::move(model)}};
}

inline std::unique_ptr<Forecaster> forecaster_from_artifact(const Json& model) {
  const auto kind = model.value("kind", std::string{});
  if (kind == "bnn") {
    auto f = std::make_unique<BnnForecaster>();
    f->set_model(bnn_model_from_json(model));
    return f;
  }
  if (kind == "lear") {
    auto f = std::make_unique<LearForecaster>();
    f->set_model(lear_model_from_json(model));
    return f;
  }
  if (kind == "garchx") {
    auto f = std::make_unique<GarchxForecaster>();
    f->set_model(garchx_model_from_json(model));
    return f;
  }
  throw DataError("unknown model kind '" + kind + "'");
}

inline int cmd_synth(const std::string& out, const SyntheticSpec& spec) {
  const DayTable table = generate_synthetic(spec);
  std::ofstream f(out);
  if (!f) throw DataError("cannot write " + out);
  write_csv(f, table);
  std::cout << "wrote " << table.size() << " days (" << to_string(table.start_date()) << " .. "
            << to_string(table.end_date()) << ") to " << out << '\n';
  return 0;
}

inline int cmd_backtest(BacktestConfig c, const std::string& out_dir) {
  c.output_dir = out_dir;
  const DayTable table = load_table(c.data_path, c.schema, c.build);
  default_test_period(c, table);
  const BacktestRun run = run_backtest(c, table);
  emit_reports(run, out_dir);
  write_json_file((std::filesystem::path(out_dir) / "provenance.json").string(), to_json(run.provenance));
  for (const auto& r : run.reports)
    std::cout << r.model << ": MAE " << format_fixed(r.aggregate.mae, 3) << "  CRPS " << format_fixed(r.aggregate.crps, 3)
              << "  PICP " << format_fixed(r.aggregate.picp, 3) << '\n';
  return 0;
}

inline int cmd_train(const BacktestConfig& c, const std::string& model, const std::string& target,
                     const std::string& out) {
  if (model == "naive") throw ConfigError("the naive model has no artifact");
  const DayTable table = load_table(c.data_path, c.schema, c.build);
  const Date day = parse_date_or_throw(target);
  const WindowSplit split = make_window(table, day, c.window_years);
  auto f = make_forecaster(model, c);
  f->fit(split, derive_seed(c.seed, "fit/" + model, 0));
  Json artifact;
  if (const auto* b = dynamic_cast<const BnnForecaster*>(f.get())) {
    artifact = to_json(*b->model());
    if (b->last_grid()) artifact["grid"] = to_json(*b->last_grid());
  } else if (const auto* l = dynamic_cast<const LearForecaster*>(f.get())) {
    artifact = to_json(*l->model());
  } else if (const auto* g = dynamic_cast<const GarchxForecaster*>(f.get())) {
    artifact = to_json(*g->model());
  }
  write_json_file(out, wrap_model(std::move(artifact), split, c));
  std::cout << "trained " << model << " on " << to_string(split.window_start) << " .. " << to_string(split.window_end)
            << " (" << split.train.size() << " train, " << split.validation.size() << " validation days) -> " << out
            << '\n';
  return 0;
}

inline int cmd_predict(const BacktestConfig& c, const std::string& model_path, const std::string& date,
                       const std::string& out) {
  const Json artifact = read_json_file(model_path);
  Date trained_for{};
  int target_index = 0;
  Json model;
  try {
    trained_for = parse_date_or_throw(artifact.at("trained_for").get<std::string>());
    target_index = artifact.at("target_index").get<int>();
    model = artifact.at("model");
  } catch (const Json::exception& e) {
    throw DataError(std::string("malformed model artifact: ") + e.what());
  }
  const auto forecaster = forecaster_from_artifact(model);
  const DayTable table = load_table(c.data_path, c.schema, c.build);
  const Date day = date.empty() ? trained_for : parse_date_or_throw(date);
  if (day < trained_for) throw ConfigError("model was trained for " + to_string(trained_for) + "; cannot forecast earlier days");
  const SupervisedPair pair = assemble_features(table, day, target_index + int((day - trained_for).count()));
  const DayForecast fc = forecaster->forecast(day, pair.x, c.forecast, derive_seed(c.seed, "predict"));
  validate(fc, c.forecast.quantile_grid.size());
  std::map<std::string, std::vector<ForecastRecord>> recs;
  recs[forecaster->name()] = to_records(day, fc, table.at(day).price);
  std::ofstream f(out);
  if (!f) throw DataError("cannot write " + out);
  detail::write_forecast_rows(f, {forecaster->name()}, recs, c.forecast.quantile_grid);
  std::cout << "wrote 24 hourly forecasts for " << to_string(day) << " to " << out << '\n';
  return 0;
}

inline ReportInput scored_input(const std::string& forecasts, const std::string& actual, const CsvSchema& schema,
                                const MetricsOptions& metrics) {
  const DayTable table = load_table(actual, schema);
  std::ifstream in(forecasts);
  if (!in) throw DataError("cannot open " + forecasts);
  ReportInput input = read_forecasts(in, table);
  score(input, metrics);
  return input;
}

inline int cmd_score(const std::string& forecasts, const std::string& actual, const std::string& out) {
  const ReportInput input = scored_input(forecasts, actual, {}, {});
  Json models = Json::object();
  for (const auto& r : input.reports) models[r.model] = to_json(r.aggregate);
  if (out.empty()) {
    std::cout << models.dump(2) << '\n';
  } else {
    write_json_file(out, models);
  }
  return 0;
}

inline int cmd_report(const std::string& forecasts, const std::string& actual, const std::string& out_dir) {
  ReportInput input = scored_input(forecasts, actual, {}, {});
  input.provenance = {{"source", std::filesystem::path(forecasts).filename().string()}, {"version", kVersion}};
  emit_reports(input, out_dir);
  std::ifstream table(std::filesystem::path(out_dir) / "metrics_table.csv");
  std::cout << table.rdbuf();
  return 0;
}

inline int exit_code(ErrorKind k) { return int(k); }

inline int run(int argc, char** argv) {
  CLI::App app{"Probabilistic day-ahead electricity price forecasting"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string synth_out = "synthetic.csv", start_date;
  auto* synth = app.add_subcommand("synth", "generate a synthetic hourly data file");
  synth->add_option("-o,--out", synth_out, "output CSV");
  synth->add_option("--days", spec.days, "number of days");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--start", start_date, "first date (YYYY-MM-DD)");
  synth->add_option("--noise", spec.noise_std, "price innovation std");
  synth->add_option("--spike-probability", spec.spike_probability, "hourly spike probability");

  Overrides bt;
  std::uint64_t bt_seed = 0;
  std::string bt_out = "results";
  auto* backtest = app.add_subcommand("backtest", "rolling-window backtest over the test period");
  add_config_options(*backtest, bt);
  backtest->add_option("--seed", bt_seed, "master seed")->required();
  backtest->add_option("--start", bt.test_start, "first test day");
  backtest->add_option("--end", bt.test_end, "last test day");
  backtest->add_option("--cadence", bt.cadence, "days between refits");
  backtest->add_flag("--parallel-days", bt.parallel_days, "run refit groups concurrently");
  backtest->add_option("-o,--out", bt_out, "output directory");

  Overrides tr;
  std::optional<std::uint64_t> tr_seed;
  std::string tr_model = "bnn", tr_target, tr_out = "model.json";
  auto* train = app.add_subcommand("train", "fit one model on the window before a target day");
  add_config_options(*train, tr);
  train->add_option("--seed", tr_seed, "master seed");
  train->add_option("--model", tr_model, "bnn, lear or garchx");
  train->add_option("--target", tr_target, "day the window precedes")->required();
  train->add_option("-o,--out", tr_out, "model artifact (JSON)");

  Overrides pr;
  std::optional<std::uint64_t> pr_seed;
  std::string pr_model, pr_date, pr_out = "forecast.csv";
  auto* predict = app.add_subcommand("predict", "forecast one day from a saved model");
  add_config_options(*predict, pr);
  predict->add_option("--seed", pr_seed, "MC dropout seed");
  predict->add_option("--model", pr_model, "model artifact from train")->required();
  predict->add_option("--date", pr_date, "day to forecast (defaults to the trained target)");
  predict->add_option("-o,--out", pr_out, "forecast CSV");

  std::string sc_forecasts, sc_actual, sc_out;
  auto* sc = app.add_subcommand("score", "metrics from a forecast CSV and the actual data");
  sc->add_option("--forecasts", sc_forecasts, "forecast CSV")->required();
  sc->add_option("--actual", sc_actual, "hourly data CSV")->required();
  sc->add_option("-o,--out", sc_out, "metrics JSON (stdout if omitted)");

  std::string rp_forecasts, rp_actual, rp_out = "report";
  auto* rp = app.add_subcommand("report", "metric tables and plot data from a forecast CSV");
  rp->add_option("--forecasts", rp_forecasts, "forecast CSV")->required();
  rp->add_option("--actual", rp_actual, "hourly data CSV")->required();
  rp->add_option("-o,--out", rp_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*synth) {
      if (!start_date.empty()) spec.start = parse_date_or_throw(start_date);
      return cmd_synth(synth_out, spec);
    }
    if (*backtest) {
      BacktestConfig c = resolve_config(bt);
      c.seed = bt_seed;
      return cmd_backtest(std::move(c), bt_out);
    }
    if (*train) {
      BacktestConfig c = resolve_config(tr);
      if (tr_seed) c.seed = *tr_seed;
      return cmd_train(c, tr_model, tr_target, tr_out);
    }
    if (*predict) {
      BacktestConfig c = resolve_config(pr);
      if (pr_seed) c.seed = *pr_seed;
      return cmd_predict(c, pr_model, pr_date, pr_out);
    }
    if (*sc) return cmd_score(sc_forecasts, sc_actual, sc_out);
    if (*rp) return cmd_report(rp_forecasts, rp_actual, rp_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorKind::data);
  }
  return 0;
}

}  // namespace epf::cli
