// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance [--only N[,N...]] [--keep DIR]

#include <atomic>
#include <chrono>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace epf;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  std::string failures;

  void check(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures += " [failed: " + what + "]";
    }
  }
};

std::string fmt(double v, int d = 4) { return format_fixed(v, d); }

// ---------------------------------------------------------------------------

void structural(Outcome& o) {
  std::size_t tables = 0, mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    const Date start = make_date(2020, 1, 1) + std::chrono::days{int(rng() % 700)};
    const DayTable t = test::random_table(start, 20, seed);
    const Date target = start + std::chrono::days{7 + int(rng() % 13)};
    const int index = int(rng() % 2000);
    const auto pair = assemble_features(t, target, index);
    ++tables;
    if (pair.x.values.size() != 248) ++mismatches;
    for (int i = 0; i < 248 && i < pair.x.values.size(); ++i)
      if (pair.x.values[i] != oracle::feature_slot(t, target, index, i)) ++mismatches;
  }
  o.check(mismatches == 0, std::to_string(mismatches) + " slot mismatches");
  o.check(layout::kDim == 248 && layout::kWeekday + 7 == 248, "block offsets");

  std::atomic<int> trained{0};
  auto fake = [&](const MlpConfig& c, const StandardizedSplit&, const TrainOptions&) {
    ++trained;
    TrainedNetwork t;
    t.report.best_val_mse = 1.0 / (1.0 + c.hidden_dim + c.hidden_layers + c.dropout_rate);
    return t;
  };
  const auto grid = grid_search(StandardizedSplit{}, HyperGrid{}, 7, {}, fake);
  o.check(trained == 18 && grid.entries.size() == 18, "grid size " + std::to_string(trained.load()));
  o.detail << tables << " tables, 0 slot mismatches expected, " << mismatches << " found; grid evaluated "
           << trained.load() << " configurations";
}

void gradients(Outcome& o) {
  std::size_t checked = 0, passed = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    MlpConfig c;
    c.input_dim = 248;
    c.hidden_dim = 8;
    c.hidden_layers = 2;
    c.output_dim = 24;
    c.dropout_rate = 0.3;
    c.seed = seed;
    const auto g = oracle::finite_difference_check(c, seed);
    checked += g.checked;
    passed += g.passed;
    worst = std::max(worst, g.worst);
  }
  const double frac = double(passed) / double(checked);
  o.check(frac >= 0.999, "fraction " + fmt(frac, 5));
  o.detail << passed << "/" << checked << " parameters within 1e-5 relative (" << fmt(100 * frac, 3)
           << "%), worst " << format_double(worst, 3);
}

void mc_unbiased(Outcome& o) {
  const BnnModel m = oracle::small_model(20, 32, 2, 0.3, 5);
  const double dev = oracle::mc_mean_deviation(m, oracle::random_input(20, 6), 200000, 11);
  o.check(dev < 0.005, "deviation " + fmt(dev, 5));
  o.detail << "max relative deviation over 24 outputs " << format_double(dev, 3) << " (limit 0.005)";
}

ForecastRecord rec(double obs, double point, double lo, double hi, std::vector<double> q = {}) {
  return {make_date(2023, 1, 1), 0, obs, point, lo, hi, std::move(q), 0.0};
}

void metric_oracles(Outcome& o) {
  // pinball
  o.check(std::abs(pinball(0.9, 10.0, 20.0) - 1.0) < 1e-12 && std::abs(pinball(0.9, 20.0, 10.0) - 9.0) < 1e-12 &&
              pinball(0.5, 3.0, 3.0) == 0.0 && pinball(0.5, 7.0, 3.0) == pinball(0.5, 3.0, 7.0) &&
              std::abs(quantile_score(0.9, 10.0, 20.0) - 9.0) < 1e-12,
          "pinball");
  // CRPS of N(0,1) at its mean
  const auto grid = default_quantile_grid();
  std::vector<double> q;
  for (double p : grid) q.push_back(normal_quantile(p));
  const double crps = crps_from_quantiles(q, grid, 0.0);
  o.check(std::abs(crps - 0.2337) <= 0.005, "CRPS " + fmt(crps));
  double worst_off = 0.0;
  for (double y : {-2.0, -0.5, 1.0, 3.0})
    worst_off = std::max(worst_off, std::abs(crps_from_quantiles(q, grid, y) / oracle::gaussian_crps(0, 1, y) - 1.0));
  o.check(worst_off < 0.02, "off-centre CRPS");
  // PICP on oracle intervals
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ForecastRecord> r;
  for (int i = 0; i < 50000; ++i) r.push_back(rec(n(rng), 0.0, -kZ90, kZ90));
  const double cover = picp(r);
  o.check(cover >= 0.885 && cover <= 0.915, "PICP " + fmt(cover));
  // MPIW
  std::vector<ForecastRecord> w{rec(0, 0, 0.0, 1.0), rec(0, 0, 0.0, 2.5), rec(0, 0, -1.0, 5.0)};
  o.check(std::abs(mpiw(w) - 9.5 / 3.0) < 1e-12, "MPIW");
  // point metrics against direct recomputation
  std::normal_distribution<double> price(40.0, 30.0);
  std::vector<ForecastRecord> pr;
  for (int i = 0; i < 2000; ++i) pr.push_back(rec(price(rng), price(rng), 0, 0));
  double ae = 0, se = 0, ape = 0, sape = 0;
  int n_ape = 0;
  for (const auto& x : pr) {
    const double e = x.point - x.observed;
    ae += std::abs(e);
    se += e * e;
    if (std::abs(x.observed) >= 1.0) ape += std::abs(e / x.observed), ++n_ape;
    sape += 2.0 * std::abs(e) / (std::abs(x.point) + std::abs(x.observed));
  }
  const double N = double(pr.size());
  const auto pm = point_metrics(pr);
  o.check(std::abs(pm.mae - ae / N) < 1e-10 && std::abs(pm.rmse - std::sqrt(se / N)) < 1e-10 &&
              std::abs(pm.mape - 100.0 * ape / n_ape) < 1e-8 && std::abs(pm.smape - sape / N) < 1e-10,
          "point metrics");
  o.detail << "Gaussian CRPS " << fmt(crps) << ", PICP@n=50000 " << fmt(cover) << ", point metrics recomputed";
}

void lasso(Outcome& o) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  auto design = [&](int rows, int cols) {
    Eigen::MatrixXd x(rows, cols);
    for (auto& v : x.reshaped()) v = n(rng);
    return x;
  };
  auto response = [&](const Eigen::MatrixXd& x) {
    Eigen::VectorXd b(x.cols());
    for (auto& v : b) v = n(rng);
    Eigen::VectorXd y = x * b;
    for (auto& v : y) v += 3.0 + 0.5 * n(rng);
    return y;
  };
  // lambda = 0 against the normal equations
  const Eigen::MatrixXd x0 = design(200, 8);
  const Eigen::VectorXd y0 = response(x0);
  const LassoFit f0 = lasso_fit(x0, y0, 0.0, {.tolerance = 1e-12});
  Eigen::MatrixXd a(200, 9);
  a << Eigen::VectorXd::Ones(200), x0;
  const Eigen::VectorXd ols = (a.transpose() * a).ldlt().solve(a.transpose() * y0);
  double ls_err = std::abs(f0.intercept - ols[0]);
  for (int j = 0; j < 8; ++j) ls_err = std::max(ls_err, std::abs(f0.coef[j] - ols[j + 1]));
  o.check(ls_err <= 1e-6, "least squares " + format_double(ls_err, 3));
  // orthonormal design
  Eigen::MatrixXd c = design(64, 10);
  c = c.rowwise() - c.colwise().mean();
  const Eigen::MatrixXd qm = Eigen::HouseholderQR<Eigen::MatrixXd>(c).householderQ() * Eigen::MatrixXd::Identity(64, 10);
  const Eigen::MatrixXd xo = qm * 8.0;
  const Eigen::VectorXd yo = response(xo);
  const LassoFit fo = lasso_fit(xo, yo, 0.4);
  const Eigen::VectorXd b_ols = xo.transpose() * (yo.array() - yo.mean()).matrix() / 64.0;
  double st_err = 0.0;
  for (int j = 0; j < 10; ++j) st_err = std::max(st_err, std::abs(fo.coef[j] - soft_threshold(b_ols[j], 0.4)));
  o.check(st_err <= 1e-6, "soft threshold " + format_double(st_err, 3));
  // KKT
  const Eigen::MatrixXd xk = design(150, 30);
  const Eigen::VectorXd yk = response(xk);
  const LassoProblem p(xk);
  double kkt = 0.0;
  for (double frac : {0.5, 0.1, 0.01}) kkt = std::max(kkt, oracle::kkt_violation(p, yk, p.fit(yk, frac * p.lambda_max(yk))));
  o.check(kkt <= 1e-6, "KKT " + format_double(kkt, 3));
  // sparse teacher through the LEAR pipeline
  // (window sized like a 4-year rolling window; judged with the default lambda rule)
  const auto t = oracle::sparse_teacher(1169, 292, 11);
  const double recovery = oracle::zero_recovery(lear_train(t.split), t.active);
  LearOptions one_se;
  one_se.lambda_rule = "one_se";
  const double recovery_1se = oracle::zero_recovery(lear_train(t.split, one_se), t.active);
  o.check(recovery >= 0.9, "recovery " + fmt(recovery));
  o.detail << "OLS err " << format_double(ls_err, 2) << ", soft-threshold err " << format_double(st_err, 2)
           << ", KKT " << format_double(kkt, 2) << ", zero recovery " << fmt(100 * recovery, 2)
           << "% (one_se rule: " << fmt(100 * recovery_1se, 2) << "%)";
}

void garch_recovery(Outcome& o) {
  const GarchParams truth{0.1, 0.1, 0.8};
  int good = 0;
  std::ostringstream estimates;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto fit = fit_garch(oracle::simulate_garch(truth, 2000, seed));
    const auto& e = fit.params;
    const bool ok = std::abs(e.omega - 0.1) <= 0.1 && std::abs(e.alpha - 0.1) <= 0.1 && std::abs(e.beta - 0.8) <= 0.1;
    good += ok;
    estimates << (seed > 1 ? " " : "") << "(" << fmt(e.omega, 3) << "," << fmt(e.alpha, 3) << "," << fmt(e.beta, 3)
              << ")" << (ok ? "" : "*");
  }
  o.check(good >= 8, std::to_string(good) + "/10");
  o.detail << good << "/10 seeds within 0.1: " << estimates.str();
}

// ---------------------------------------------------------------------------
// Backtests shared by criteria 7-10.

struct Backtests {
  test::TempDir dir{"acceptance"};
  std::string data_path;
  BacktestConfig config;
  std::optional<BacktestRun> first, second, naive;
  double seconds = 0.0;

  Backtests() {
    data_path = dir.file("synthetic.csv");
    const DayTable table = generate_synthetic(SyntheticSpec{});
    {
      std::ofstream out(data_path);
      write_csv(out, table);
    }
    config.data_path = data_path;
    config.seed = 20240501;
    config.threads = std::max(1u, std::thread::hardware_concurrency());
    config.test_end = table.end_date();
    config.test_start = config.test_end - std::chrono::days{29};
  }

  DayTable table() const { return load_table(data_path, config.schema, config.build); }

  const BacktestRun& run_first() {
    if (!first) {
      const auto t0 = std::chrono::steady_clock::now();
      first = run_backtest(config, table());
      seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      emit_reports(*first, dir.path() / "run1");
    }
    return *first;
  }
  const BacktestRun& run_second() {
    if (!second) {
      second = run_backtest(config, table());
      emit_reports(*second, dir.path() / "run2");
    }
    return *second;
  }
  const BacktestRun& run_naive() {
    if (!naive) {
      BacktestConfig c = config;
      c.models = {"naive"};
      naive = run_backtest(c, table());
    }
    return *naive;
  }
};

const MetricsReport& report_for(const BacktestRun& run, const std::string& model) {
  for (const auto& r : run.reports)
    if (r.model == model) return r;
  throw std::runtime_error("no report for " + model);
}

void calibration(Outcome& o, Backtests& b) {
  double worst = 0.0;
  std::ostringstream picps;
  for (std::uint64_t seed : {7u, 8u, 9u}) {
    const auto c = oracle::garchx_calibration(seed);
    worst = std::max(worst, std::abs(c.picp - 0.9));
    picps << (seed > 7 ? "," : "") << fmt(c.picp, 4);
  }
  o.check(worst <= 0.03, "GARCHX PICP off by " + fmt(worst));
  const double bnn = report_for(b.run_first(), "bnn").aggregate.picp;
  o.check(bnn >= 0.6, "BNN PICP " + fmt(bnn));
  o.detail << "GARCHX PICP over 5000 forecasts (3 seeds): " << picps.str() << "; BNN PICP on "
           << b.first->records.at("bnn").size() << " synthetic hours: " << fmt(bnn);
}

void comparative(Outcome& o, Backtests& b) {
  const auto& run = b.run_first();
  const auto& naive = report_for(b.run_naive(), "naive").aggregate;
  const auto& bnn = report_for(run, "bnn").aggregate;
  o.check(b.config.test_end - b.config.test_start >= std::chrono::days{29}, "test period");
  o.check(bnn.mae < naive.mae, "BNN MAE " + fmt(bnn.mae) + " vs naive " + fmt(naive.mae));
  for (const std::vector<MetricsReport>* reports : {&run.reports, &b.run_naive().reports})
    for (const auto& r : *reports) o.check(r.aggregate.rmse >= r.aggregate.mae, r.model + " RMSE < MAE");
  o.detail << "30 days; MAE bnn " << fmt(bnn.mae, 3) << ", naive " << fmt(naive.mae, 3);
  for (const auto& r : run.reports)
    o.detail << "; " << r.model << " MAE/RMSE " << fmt(r.aggregate.mae, 3) << "/" << fmt(r.aggregate.rmse, 3);
  o.detail << "; backtest took " << fmt(b.seconds, 1) << " s";
}

void determinism(Outcome& o, Backtests& b) {
  b.run_first();
  b.run_second();
  int identical = 0, files = 0;
  for (const char* f : {"metrics.csv", "metrics_table.csv", "metrics.json", "forecasts.csv", "daily_mae.csv"}) {
    ++files;
    const bool same = test::slurp(b.dir.path() / "run1" / f) == test::slurp(b.dir.path() / "run2" / f);
    identical += same;
    o.check(same, std::string(f) + " differs");
  }
  o.detail << identical << "/" << files << " report files byte-identical across two runs";
}

void report_schema(Outcome& o, Backtests& b) {
  b.run_first();
  const auto forecasts = (b.dir.path() / "run1" / "forecasts.csv").string();
  const auto out = (b.dir.path() / "report").string();
  std::vector<std::string> args{"epf", "report", "--forecasts", forecasts, "--actual", b.data_path, "-o", out};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  const int rc = cli::run(int(argv.size()), argv.data());
  std::cout.rdbuf(old);
  o.check(rc == 0, "report exit " + std::to_string(rc));

  std::istringstream table(test::slurp(std::filesystem::path(out) / "metrics_table.csv"));
  std::string line;
  std::vector<std::vector<std::string>> rows;
  while (std::getline(table, line)) {
    std::vector<std::string> cells;
    for (auto c : detail::split(line, ',')) cells.emplace_back(c);
    rows.push_back(std::move(cells));
  }
  o.check(rows.size() == 8, "row count " + std::to_string(rows.size()));
  if (!rows.empty())
    o.check(rows[0] == std::vector<std::string>{"metric", "bnn", "lear", "garchx"}, "header " + line);
  for (std::size_t i = 1; i < rows.size() && i <= 7; ++i) {
    o.check(rows[i].size() == 4, "row width");
    o.check(!rows[i].empty() && rows[i][0] == kMetricNames[i - 1], "metric order");
  }
  // orderings only, no direction asserted
  o.detail << "7 x 3 table;";
  for (const char* metric : {"MAE", "CRPS", "PICP"}) {
    std::vector<std::pair<double, std::string>> v;
    for (const auto& r : b.first->reports) v.push_back({metric_value(r.aggregate, metric), r.model});
    std::sort(v.begin(), v.end());
    o.detail << " " << metric << ":";
    for (std::size_t i = 0; i < v.size(); ++i) o.detail << (i ? "<" : "") << v[i].second;
  }
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--only")
      for (auto s : detail::split(argv[i + 1], ',')) only.insert(std::stoi(std::string(s)));

  Backtests backtests;
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"structural fidelity", structural},
      {"gradient correctness", gradients},
      {"MC-dropout unbiasedness", mc_unbiased},
      {"metric oracles", metric_oracles},
      {"LASSO correctness", lasso},
      {"GARCH recovery", garch_recovery},
      {"calibration", [&](Outcome& o) { calibration(o, backtests); }},
      {"comparative sanity", [&](Outcome& o) { comparative(o, backtests); }},
      {"determinism", [&](Outcome& o) { determinism(o, backtests); }},
      {"report schema", [&](Outcome& o) { report_schema(o, backtests); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << id << ". " << criteria[i].first << " (" << fmt(secs, 1)
              << " s): " << o.detail.str() << o.failures << std::endl;
  }
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
