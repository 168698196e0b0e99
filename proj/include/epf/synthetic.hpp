#pragma once

// Synthetic hourly market data standing in for the non-redistributable
// exchange export. Output uses the same CSV layout the reader expects.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "epf/common.hpp"
#include "epf/ingest.hpp"

namespace epf {

struct SyntheticSpec {
  int days = 5 * 365;
  std::uint64_t seed = 1;
  Date start = make_date(2017, 1, 1);

  double base_price = 60.0;      // EUR/MWh
  double trend_per_year = 0.0;   // EUR/MWh per 365 days
  double daily_amplitude = 15.0;
  double weekly_amplitude = 10.0;
  double ar_coefficient = 0.9;   // hourly AR(1) on the price disturbance
  double noise_std = 4.0;        // innovation std of that disturbance
  double spike_probability = 0.005;
  double spike_magnitude = 60.0;

  double load_base = 45000.0;  // MW
  double load_daily_amplitude = 8000.0;
  double load_weekly_amplitude = 6000.0;
  double load_noise_std = 800.0;
  double trp_base = 15000.0;
  double trp_solar_amplitude = 12000.0;
  double trp_noise_std = 1500.0;

  double load_coupling = 0.0015;  // EUR/MWh per MW of residual load
  double trp_coupling = -0.001;   // EUR/MWh per MW of renewables

  void validate() const {
    if (days < 1) throw ConfigError("synthetic days must be positive");
    if (!(spike_probability >= 0.0 && spike_probability <= 1.0))
      throw ConfigError("spike probability must lie in [0, 1]");
    if (noise_std < 0.0 || load_noise_std < 0.0 || trp_noise_std < 0.0)
      throw ConfigError("noise standard deviations must be nonnegative");
    if (!(std::abs(ar_coefficient) < 1.0)) throw ConfigError("AR coefficient must lie in (-1, 1)");
  }
};

// Monday..Sunday offsets, scaled by the weekly amplitude.
inline constexpr std::array<double, 7> kWeeklyShape{0.3, 0.4, 0.4, 0.4, 0.2, -0.6, -1.1};

inline DayTable generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  constexpr double two_pi = 6.283185307179586;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double price_ar = 0.0, load_ar = 0.0, wind_ar = 0.0;
  std::vector<DaySeries> days(std::size_t(spec.days));
  for (int k = 0; k < spec.days; ++k) {
    auto& day = days[std::size_t(k)];
    day.date = spec.start + std::chrono::days{k};
    const int wd = weekday_index(day.date);
    const double weekly = kWeeklyShape[std::size_t(wd)];
    for (int h = 0; h < kHours; ++h) {
      const double phase = two_pi * double(h) / kHours;
      load_ar = 0.95 * load_ar + spec.load_noise_std * normal(rng);
      wind_ar = 0.97 * wind_ar + spec.trp_noise_std * normal(rng);
      price_ar = spec.ar_coefficient * price_ar + spec.noise_std * normal(rng);
      const bool spike = unit(rng) < spec.spike_probability;
      const double spike_size = spec.spike_magnitude * (0.5 + unit(rng));

      const double load_shape = -std::cos(phase) + 0.3 * std::sin(2.0 * phase);
      const double load = std::max(0.0, spec.load_base + spec.load_daily_amplitude * load_shape +
                                            spec.load_weekly_amplitude * weekly + load_ar);
      const double solar = std::max(0.0, std::sin(two_pi * (double(h) - 6.0) / 24.0));
      const double trp = std::max(0.0, spec.trp_base + spec.trp_solar_amplitude * solar + wind_ar);

      const double years = double(k) / 365.0;
      day.price[h] = spec.base_price + spec.trend_per_year * years + spec.daily_amplitude * std::sin(phase - two_pi / 4.0) +
                     spec.weekly_amplitude * weekly + price_ar + (spike ? spike_size : 0.0) +
                     spec.load_coupling * (load - spec.load_base) + spec.trp_coupling * (trp - spec.trp_base);
      day.load[h] = load;
      day.trp[h] = trp;
    }
  }
  return DayTable(std::move(days));
}

// Sample autocorrelation of the flattened hourly price series.
inline double price_autocorrelation(const DayTable& table, int lag) {
  std::vector<double> x;
  for (const auto& d : table) x.insert(x.end(), d.price.begin(), d.price.end());
  if (lag < 0 || std::size_t(lag) >= x.size()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    den += (x[t] - mean) * (x[t] - mean);
    if (t >= std::size_t(lag)) num += (x[t] - mean) * (x[t - std::size_t(lag)] - mean);
  }
  return num / den;
}

}  // namespace epf
