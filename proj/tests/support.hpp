#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "epf/epf.hpp"

namespace epf::test {

inline DayTable constant_table(Date start, int days, double price, double load, double trp) {
  std::vector<DaySeries> out(static_cast<std::size_t>(days));
  for (int k = 0; k < days; ++k) {
    auto& d = out[std::size_t(k)];
    d.date = start + std::chrono::days{k};
    d.price.fill(price);
    d.load.fill(load);
    d.trp.fill(trp);
  }
  return DayTable(std::move(out));
}

// Every cell encodes where it came from: channel base + 100 * day + hour.
inline double ramp_value(Channel c, int day, int hour) {
  const double base = c == Channel::price ? 0.0 : c == Channel::load ? 1e6 : 2e6;
  return base + 100.0 * day + hour;
}

inline DayTable ramp_table(Date start, int days) {
  std::vector<DaySeries> out(static_cast<std::size_t>(days));
  for (int k = 0; k < days; ++k) {
    auto& d = out[std::size_t(k)];
    d.date = start + std::chrono::days{k};
    for (Channel c : kChannels)
      for (int h = 0; h < kHours; ++h) d.values(c)[h] = ramp_value(c, k, h);
  }
  return DayTable(std::move(out));
}

inline DayTable random_table(Date start, int days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<DaySeries> out(static_cast<std::size_t>(days));
  for (int k = 0; k < days; ++k) {
    auto& d = out[std::size_t(k)];
    d.date = start + std::chrono::days{k};
    for (int h = 0; h < kHours; ++h) {
      d.price[h] = 50.0 + 10.0 * n(rng);
      d.load[h] = 40000.0 + 5000.0 * n(rng);
      d.trp[h] = 15000.0 + 3000.0 * n(rng);
    }
  }
  return DayTable(std::move(out));
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("epf_" + tag + "_" + hex64(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace epf::test
