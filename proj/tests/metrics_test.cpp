#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "support.hpp"

using namespace epf;

namespace {

ForecastRecord rec(Date d, int h, double obs, double point, double lo, double hi, std::vector<double> q = {}) {
  return {d, h, obs, point, lo, hi, std::move(q), 0.0};
}

std::vector<double> gaussian_quantiles(const std::vector<double>& grid, double mu, double sigma) {
  std::vector<double> q;
  for (double p : grid) q.push_back(mu + sigma * normal_quantile(p));
  return q;
}

std::vector<ForecastRecord> full_day(Date d, double obs, double point, double width, const std::vector<double>& grid) {
  std::vector<ForecastRecord> out;
  for (int h = 0; h < kHours; ++h)
    out.push_back(rec(d, h, obs + h, point + h, point + h - width / 2, point + h + width / 2,
                      gaussian_quantiles(grid, point + h, 1.0)));
  return out;
}

const Date d0 = make_date(2023, 3, 1);

}  // namespace

TEST(Pinball, Cases) {
  EXPECT_EQ(pinball(0.3, 5.0, 5.0), 0.0);
  EXPECT_DOUBLE_EQ(pinball(0.9, 10.0, 20.0), 1.0);
  EXPECT_DOUBLE_EQ(pinball(0.9, 20.0, 10.0), 9.0);
  EXPECT_DOUBLE_EQ(pinball(0.5, 7.0, 3.0), 2.0);
  EXPECT_DOUBLE_EQ(pinball(0.5, 3.0, 7.0), 2.0);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50, 50), q(0.01, 0.99);
  for (int i = 0; i < 1000; ++i) EXPECT_GE(pinball(q(rng), u(rng), u(rng)), 0.0);
}

TEST(QuantileScore, MirrorsPinball) {
  EXPECT_DOUBLE_EQ(quantile_score(0.9, 10.0, 20.0), 9.0);
  EXPECT_DOUBLE_EQ(quantile_score(0.9, 20.0, 10.0), 1.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-50, 50), q(0.01, 0.99);
  for (int i = 0; i < 200; ++i) {
    const double level = q(rng), f = u(rng), y = u(rng);
    EXPECT_NEAR(quantile_score(level, f, y), pinball(1.0 - level, f, y), 1e-12);
  }
}

TEST(QuantileScore, MinimisedByTrueQuantile) {
  // expected score over N(0,1) draws is smallest at the 0.8 quantile
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> y(20000);
  for (auto& v : y) v = n(rng);
  auto risk = [&](double f) {
    double s = 0.0;
    for (double v : y) s += quantile_score(0.8, f, v);
    return s / double(y.size());
  };
  const double z = normal_quantile(0.8);
  EXPECT_LT(risk(z), risk(z - 0.2));
  EXPECT_LT(risk(z), risk(z + 0.2));
  EXPECT_LT(risk(z), risk(-z));
}

TEST(Crps, DegenerateForecastIsZero) {
  const auto grid = default_quantile_grid();
  const std::vector<double> q(grid.size(), 42.0);
  EXPECT_EQ(crps_from_quantiles(q, grid, 42.0), 0.0);
}

TEST(Crps, StandardNormalClosedForm) {
  const auto grid = default_quantile_grid();
  const double v = crps_from_quantiles(gaussian_quantiles(grid, 0.0, 1.0), grid, 0.0);
  const double closed = (std::sqrt(2.0) - 1.0) / std::sqrt(M_PI);
  EXPECT_NEAR(closed, 0.2337, 5e-5);
  EXPECT_NEAR(oracle::gaussian_crps(0.0, 1.0, 0.0), closed, 1e-12);
  EXPECT_NEAR(v, 0.2337, 0.005);
}

TEST(Crps, OffCentreAgainstClosedForm) {
  const auto grid = default_quantile_grid();
  for (double y : {-2.0, -0.5, 1.0, 3.0})
    // the grid stops at 0.01/0.99, which costs about 1% in the tails
    EXPECT_NEAR(crps_from_quantiles(gaussian_quantiles(grid, 0.0, 1.0), grid, y), oracle::gaussian_crps(0.0, 1.0, y),
                0.02 * oracle::gaussian_crps(0.0, 1.0, y));
}

TEST(Crps, TranslationInvariant) {
  const auto grid = default_quantile_grid();
  auto q = gaussian_quantiles(grid, 3.0, 2.0);
  const double base = crps_from_quantiles(q, grid, 4.5);
  for (auto& v : q) v += 100.0;
  EXPECT_NEAR(crps_from_quantiles(q, grid, 104.5), base, 1e-10);
}

TEST(Crps, RejectsMismatchAndNonMonotone) {
  const std::vector<double> grid{0.1, 0.5, 0.9};
  EXPECT_THROW(crps_from_quantiles(std::vector<double>{1.0, 2.0}, grid, 0.0), DataError);
  EXPECT_THROW(crps_from_quantiles(std::vector<double>{1.0, 3.0, 2.0}, grid, 0.0), DataError);
}

TEST(Picp, InclusiveBounds) {
  std::vector<ForecastRecord> r{rec(d0, 0, 1.0, 1.0, 0.0, 2.0), rec(d0, 1, 2.0, 1.0, 0.0, 2.0),
                                rec(d0, 2, 0.0, 1.0, 0.0, 2.0)};
  EXPECT_EQ(picp(r), 1.0);
  r.push_back(rec(d0, 3, 2.0000001, 1.0, 0.0, 2.0));
  EXPECT_EQ(picp(r), 0.75);
  EXPECT_THROW(picp(std::vector<ForecastRecord>{}), DataError);
}

TEST(Picp, BinomialBandForOracleIntervals) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<ForecastRecord> r;
  for (int i = 0; i < 50000; ++i) r.push_back(rec(d0, 0, n(rng), 0.0, -kZ90, kZ90));
  const double p = picp(r);
  EXPECT_GE(p, 0.885);
  EXPECT_LE(p, 0.915);
}

TEST(Mpiw, Cases) {
  std::vector<ForecastRecord> r{rec(d0, 0, 0, 0, 1.0, 1.0), rec(d0, 1, 0, 0, -2.0, -2.0)};
  EXPECT_EQ(mpiw(r), 0.0);
  std::vector<ForecastRecord> c{rec(d0, 0, 0, 0, 1.0, 4.0), rec(d0, 1, 0, 0, -5.0, -2.0)};
  EXPECT_DOUBLE_EQ(mpiw(c), 3.0);
  std::vector<ForecastRecord> mixed{rec(d0, 0, 0, 0, 0.0, 1.0), rec(d0, 1, 0, 0, 0.0, 2.5), rec(d0, 2, 0, 0, -1.0, 5.0)};
  EXPECT_DOUBLE_EQ(mpiw(mixed), (1.0 + 2.5 + 6.0) / 3.0);
}

TEST(PointMetrics, PerfectForecast) {
  std::vector<ForecastRecord> r{rec(d0, 0, 50, 50, 0, 0), rec(d0, 1, -3, -3, 0, 0)};
  const auto m = point_metrics(r);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.mape, 0.0);
  EXPECT_EQ(m.smape, 0.0);
}

TEST(PointMetrics, ConstantError) {
  std::vector<ForecastRecord> r;
  for (int h = 0; h < 24; ++h) r.push_back(rec(d0, h, 100.0, 110.0, 0, 0));
  const auto m = point_metrics(r);
  EXPECT_DOUBLE_EQ(m.mae, 10.0);
  EXPECT_DOUBLE_EQ(m.rmse, 10.0);
  EXPECT_DOUBLE_EQ(m.mape, 10.0);
  EXPECT_DOUBLE_EQ(m.smape, 20.0 / 210.0);
}

TEST(PointMetrics, RandomFixtureMatchesRecomputation) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(40.0, 30.0);
  std::vector<ForecastRecord> r;
  for (int i = 0; i < 500; ++i) r.push_back(rec(d0, 0, n(rng), n(rng), 0, 0));
  r.push_back(rec(d0, 0, 0.5, 3.0, 0, 0));  // below the MAPE floor
  double ae = 0, se = 0, ape = 0, sape = 0;
  int n_ape = 0;
  for (const auto& x : r) {
    const double e = x.point - x.observed;
    ae += std::abs(e);
    se += e * e;
    if (std::abs(x.observed) >= 1.0) {
      ape += std::abs(e / x.observed);
      ++n_ape;
    }
    sape += 2.0 * std::abs(e) / (std::abs(x.point) + std::abs(x.observed));
  }
  const double N = double(r.size());
  const auto m = point_metrics(r);
  EXPECT_NEAR(m.mae, ae / N, 1e-12);
  EXPECT_NEAR(m.rmse, std::sqrt(se / N), 1e-12);
  EXPECT_NEAR(m.mape, 100.0 * ape / n_ape, 1e-10);
  EXPECT_NEAR(m.smape, sape / N, 1e-12);
  EXPECT_GE(m.mape_excluded, 1u);
}

TEST(PointMetrics, MapeUndefinedWhenAllBelowFloor) {
  std::vector<ForecastRecord> r{rec(d0, 0, 0.1, 1.0, 0, 0)};
  EXPECT_TRUE(std::isnan(point_metrics(r).mape));
}

TEST(AggregateReport, SingleDayEqualsDayValues) {
  const auto grid = default_quantile_grid();
  const auto day = full_day(d0, 50.0, 52.0, 6.0, grid);
  const auto rep = aggregate_report(day, grid, "m");
  EXPECT_EQ(rep.days, 1u);
  EXPECT_DOUBLE_EQ(rep.aggregate.mae, 2.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.rmse, 2.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.mpiw, 6.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.picp, 1.0);
  EXPECT_NEAR(rep.aggregate.crps, crps_from_quantiles(day[0].quantiles, grid, day[0].observed), 1e-12);
  EXPECT_NEAR(rep.aggregate.crps, oracle::gaussian_crps(0.0, 1.0, 2.0), 0.02 * oracle::gaussian_crps(0.0, 1.0, 2.0));
  for (int h = 0; h < kHours; ++h) EXPECT_DOUBLE_EQ(rep.per_hour[std::size_t(h)].mae, 2.0);
}

TEST(AggregateReport, TwoDaysAverage) {
  const auto grid = default_quantile_grid();
  auto a = full_day(d0, 50.0, 52.0, 6.0, grid);
  const auto b = full_day(d0 + std::chrono::days{1}, 50.0, 46.0, 2.0, grid);
  a.insert(a.end(), b.begin(), b.end());
  const auto rep = aggregate_report(a, grid, "m");
  EXPECT_EQ(rep.days, 2u);
  EXPECT_DOUBLE_EQ(rep.aggregate.mae, 3.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.mpiw, 4.0);
  EXPECT_DOUBLE_EQ(rep.aggregate.picp, 0.5);
  const auto daily = daily_mae(a);
  ASSERT_EQ(daily.size(), 2u);
  EXPECT_DOUBLE_EQ(daily[0].second, 2.0);
  EXPECT_DOUBLE_EQ(daily[1].second, 4.0);
}

TEST(AggregateReport, PooledEqualsMeanOfDays) {
  const auto grid = default_quantile_grid();
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 5.0);
  std::vector<ForecastRecord> all;
  std::vector<double> day_crps;
  for (int k = 0; k < 20; ++k) {
    std::vector<ForecastRecord> day;
    for (int h = 0; h < kHours; ++h) {
      const double mu = n(rng);
      day.push_back(rec(d0 + std::chrono::days{k}, h, n(rng), mu, mu - 3, mu + 3, gaussian_quantiles(grid, mu, 2.0)));
    }
    day_crps.push_back(aggregate_report(day, grid, "m").aggregate.crps);
    all.insert(all.end(), day.begin(), day.end());
  }
  const auto rep = aggregate_report(all, grid, "m");
  double mean = 0.0;
  for (double c : day_crps) mean += c / 20.0;
  EXPECT_NEAR(rep.aggregate.crps, mean, 1e-12);
  double pin = 0.0;
  for (double p : rep.mean_quantile_score) pin += p;
  EXPECT_NEAR(rep.aggregate.crps, 2.0 * pin / double(grid.size()), 1e-12);
}

TEST(AggregateReport, IncompleteDayRejected) {
  const auto grid = default_quantile_grid();
  auto day = full_day(d0, 1, 1, 1, grid);
  day.pop_back();
  EXPECT_THROW(aggregate_report(day, grid, "m"), IncompleteDay);
  auto dup = full_day(d0, 1, 1, 1, grid);
  dup.back().hour = 0;
  EXPECT_THROW(aggregate_report(dup, grid, "m"), IncompleteDay);
}

TEST(MetricNames, TableOrder) {
  EXPECT_EQ(kMetricNames.size(), 7u);
  EXPECT_STREQ(kMetricNames[0], "MAE");
  EXPECT_STREQ(kMetricNames[6], "MPIW");
  EXPECT_THROW(metric_value({}, "R2"), std::invalid_argument);
}
