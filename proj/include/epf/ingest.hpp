#pragma once

// Hourly market data: CSV parsing, gap repair and the calendar-day table.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "epf/common.hpp"

namespace epf {

enum class Channel { price = 0, load = 1, trp = 2 };
inline constexpr std::array<Channel, 3> kChannels{Channel::price, Channel::load, Channel::trp};

inline const char* channel_name(Channel c) {
  switch (c) {
    case Channel::price: return "price";
    case Channel::load: return "residual_load";
    case Channel::trp: return "trp";
  }
  return "?";
}

using HourValues = std::array<double, kHours>;
using HourMask = std::array<bool, kHours>;
using OptionalHours = std::array<std::optional<double>, kHours>;

struct HourlyRecord {
  Date date{};
  int hour = 0;  // 0..23, naive local market time
  std::optional<double> price;
  std::optional<double> residual_load;
  std::optional<double> trp;
  std::size_t line = 0;  // 1-based source line, 0 when synthesized

  const std::optional<double>& value(Channel c) const {
    return c == Channel::price ? price : c == Channel::load ? residual_load : trp;
  }
};

// One complete calendar day. imputed_* flags mark values that were filled in.
struct DaySeries {
  Date date{};
  HourValues price{};
  HourValues load{};
  HourValues trp{};
  HourMask price_imputed{};
  HourMask load_imputed{};
  HourMask trp_imputed{};

  HourValues& values(Channel c) { return c == Channel::price ? price : c == Channel::load ? load : trp; }
  const HourValues& values(Channel c) const {
    return c == Channel::price ? price : c == Channel::load ? load : trp;
  }
  HourMask& imputed(Channel c) {
    return c == Channel::price ? price_imputed : c == Channel::load ? load_imputed : trp_imputed;
  }
  const HourMask& imputed(Channel c) const {
    return c == Channel::price ? price_imputed : c == Channel::load ? load_imputed : trp_imputed;
  }
  bool any_imputed() const {
    for (Channel c : kChannels)
      for (bool b : imputed(c))
        if (b) return true;
    return false;
  }
};

// A day that may still contain gaps.
struct PartialDay {
  Date date{};
  std::array<OptionalHours, 3> values{};
  std::array<HourMask, 3> imputed{};

  OptionalHours& channel(Channel c) { return values[std::size_t(c)]; }
  const OptionalHours& channel(Channel c) const { return values[std::size_t(c)]; }
  HourMask& mask(Channel c) { return imputed[std::size_t(c)]; }
};

// Gapless run of consecutive days.
class DayTable {
 public:
  DayTable() = default;
  explicit DayTable(std::vector<DaySeries> days) : days_(std::move(days)) {
    for (std::size_t i = 1; i < days_.size(); ++i) {
      if (days_[i].date != days_[i - 1].date + std::chrono::days{1})
        throw DataError("day table not consecutive at " + to_string(days_[i].date));
    }
    for (const auto& d : days_)
      for (Channel c : kChannels)
        for (double v : d.values(c))
          if (!std::isfinite(v)) throw DataError("non-finite value on " + to_string(d.date));
  }

  bool empty() const { return days_.empty(); }
  std::size_t size() const { return days_.size(); }
  Date start_date() const { return days_.front().date; }
  Date end_date() const { return days_.back().date; }
  const std::vector<DaySeries>& days() const { return days_; }

  bool contains(Date d) const { return !days_.empty() && d >= start_date() && d <= end_date(); }

  const DaySeries& at(Date d) const {
    if (!contains(d)) throw DataError("date " + to_string(d) + " not in table");
    return days_[std::size_t((d - start_date()).count())];
  }

  auto begin() const { return days_.begin(); }
  auto end() const { return days_.end(); }

 private:
  std::vector<DaySeries> days_;
};

// Column mapping for the CSV reader. The same schema is used by the writer.
struct CsvSchema {
  char delimiter = ';';
  std::string timestamp = "timestamp";
  std::string price = "price";
  std::string residual_load = "residual_load";
  std::string trp = "trp";
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(delim, pos);
    out.push_back(trim(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// "YYYY-MM-DD[T| ]HH:MM[:SS]" on the hour.
inline bool parse_timestamp(std::string_view s, Date& date, int& hour) {
  if (s.size() < 16 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') return false;
  if (!parse_date(s.substr(0, 10), date)) return false;
  unsigned h, m;
  if (!parse_uint(s.substr(11, 2), h) || !parse_uint(s.substr(14, 2), m)) return false;
  if (s.size() > 16) {
    unsigned sec;
    if (s.size() != 19 || s[16] != ':' || !parse_uint(s.substr(17, 2), sec) || sec != 0) return false;
  }
  if (h > 23 || m != 0) return false;
  hour = int(h);
  return true;
}

}  // namespace detail

// Reads one record per data row. Bad numeric cells become missing values.
inline std::vector<HourlyRecord> parse_csv(std::istream& in, const CsvSchema& schema = {}) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("schema error: empty input, header row expected");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  const auto header = detail::split(line, schema.delimiter);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), std::string_view(name));
    if (it == header.end()) throw DataError("schema error: column '" + name + "' not found in header");
    return std::size_t(it - header.begin());
  };
  const std::size_t ts_col = column(schema.timestamp);
  const std::size_t price_col = column(schema.price);
  const std::size_t load_col = column(schema.residual_load);
  const std::size_t trp_col = column(schema.trp);
  const std::size_t needed = std::max({ts_col, price_col, load_col, trp_col}) + 1;

  std::vector<HourlyRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, schema.delimiter);
    HourlyRecord rec;
    rec.line = line_no;
    if (cells.size() < needed || !detail::parse_timestamp(cells[ts_col], rec.date, rec.hour))
      throw DataError("row error at line " + std::to_string(line_no) + ": unparseable timestamp");
    rec.price = detail::parse_number(cells[price_col]);
    rec.residual_load = detail::parse_number(cells[load_col]);
    rec.trp = detail::parse_number(cells[trp_col]);
    // Load and renewable production cannot be negative; treat as missing.
    if (rec.residual_load && *rec.residual_load < 0.0) rec.residual_load.reset();
    if (rec.trp && *rec.trp < 0.0) rec.trp.reset();
    records.push_back(rec);
  }
  return records;
}

inline std::vector<HourlyRecord> parse_csv_string(const std::string& text, const CsvSchema& schema = {}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

// Fills position i of a flattened hourly series with the mean of its temporal
// neighbours. Returns false when a neighbour is missing (escalate to day level).
inline bool impute_hour(std::span<std::optional<double>> series, std::size_t i) {
  if (i == 0 || i + 1 >= series.size() || !series[i - 1] || !series[i + 1]) return false;
  series[i] = 0.5 * (*series[i - 1] + *series[i + 1]);
  return true;
}

// Hour-level pass over every day of one channel. Neighbours are read from the
// state before the pass, so only isolated gaps are filled.
inline void impute_hours(std::span<PartialDay> days, Channel c) {
  std::vector<std::optional<double>> flat;
  flat.reserve(days.size() * kHours);
  for (const auto& d : days)
    for (const auto& v : d.channel(c)) flat.push_back(v);
  const auto original = flat;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (original[i]) continue;
    std::span<std::optional<double>> view(flat);
    if (i > 0 && i + 1 < flat.size() && original[i - 1] && original[i + 1]) {
      impute_hour(view, i);
      days[i / kHours].channel(c)[i % kHours] = flat[i];
      days[i / kHours].mask(c)[i % kHours] = true;
    }
  }
}

// Day-level pass: every hour still missing on day d becomes the mean of the same
// hour on days d-1 and d+1. Throws when a neighbouring value is also missing.
inline void impute_days(std::span<PartialDay> days, Channel c) {
  const std::vector<PartialDay> before(days.begin(), days.end());
  auto day_complete = [&](std::size_t k) {
    for (const auto& v : before[k].channel(c))
      if (!v) return false;
    return true;
  };
  for (std::size_t k = 0; k < days.size(); ++k) {
    for (int h = 0; h < kHours; ++h) {
      if (before[k].channel(c)[h]) continue;
      const bool ok = k > 0 && k + 1 < days.size() && before[k - 1].channel(c)[h] && before[k + 1].channel(c)[h];
      if (!ok) {
        std::size_t lo = k, hi = k;
        while (lo > 0 && !day_complete(lo - 1)) --lo;
        while (hi + 1 < days.size() && !day_complete(hi + 1)) ++hi;
        throw DataError("unrecoverable gap in " + std::string(channel_name(c)) + " from " +
                        to_string(before[lo].date) + " to " + to_string(before[hi].date));
      }
      days[k].channel(c)[h] = 0.5 * (*before[k - 1].channel(c)[h] + *before[k + 1].channel(c)[h]);
      days[k].mask(c)[h] = true;
    }
  }
}

struct BuildOptions {
  // Daylight-saving fall-back produces the same local hour twice. When set,
  // duplicates are averaged instead of rejected.
  bool merge_duplicate_hours = false;
};

// Groups records by calendar day, then repairs gaps: hour-level first, then
// day-level, each channel independently.
inline DayTable build_day_table(std::span<const HourlyRecord> records, const BuildOptions& options = {}) {
  if (records.empty()) throw DataError("no records");
  Date first = records.front().date, last = records.front().date;
  for (const auto& r : records) {
    if (r.hour < 0 || r.hour >= kHours) throw DataError("hour out of range at line " + std::to_string(r.line));
    first = std::min(first, r.date);
    last = std::max(last, r.date);
  }
  const std::size_t n_days = std::size_t((last - first).count()) + 1;
  std::vector<PartialDay> days(n_days);
  for (std::size_t k = 0; k < n_days; ++k) days[k].date = first + std::chrono::days{k};

  struct Acc {
    int rows = 0;
    std::array<double, 3> sum{};
    std::array<int, 3> count{};
  };
  std::vector<Acc> acc(n_days * kHours);
  for (const auto& r : records) {
    auto& a = acc[std::size_t((r.date - first).count()) * kHours + std::size_t(r.hour)];
    if (a.rows > 0 && !options.merge_duplicate_hours)
      throw DataError("duplicate record for " + to_string(r.date) + " hour " + std::to_string(r.hour) +
                      (r.line ? " at line " + std::to_string(r.line) : std::string{}));
    ++a.rows;
    for (Channel c : kChannels) {
      if (const auto& v = r.value(c)) {
        a.sum[std::size_t(c)] += *v;
        ++a.count[std::size_t(c)];
      }
    }
  }
  for (std::size_t k = 0; k < n_days; ++k)
    for (int h = 0; h < kHours; ++h) {
      const auto& a = acc[k * kHours + std::size_t(h)];
      for (Channel c : kChannels)
        if (a.count[std::size_t(c)] > 0) days[k].channel(c)[h] = a.sum[std::size_t(c)] / a.count[std::size_t(c)];
    }

  for (Channel c : kChannels) {
    impute_hours(days, c);
    impute_days(days, c);
  }

  std::vector<DaySeries> out(n_days);
  for (std::size_t k = 0; k < n_days; ++k) {
    out[k].date = days[k].date;
    for (Channel c : kChannels) {
      for (int h = 0; h < kHours; ++h) out[k].values(c)[h] = *days[k].channel(c)[h];
      out[k].imputed(c) = days[k].mask(c);
    }
  }
  return DayTable(std::move(out));
}

// Flattens a table back to records (no missing values).
inline std::vector<HourlyRecord> to_records(const DayTable& table) {
  std::vector<HourlyRecord> out;
  out.reserve(table.size() * kHours);
  for (const auto& d : table)
    for (int h = 0; h < kHours; ++h) out.push_back({d.date, h, d.price[h], d.load[h], d.trp[h], 0});
  return out;
}

inline void write_csv(std::ostream& out, const DayTable& table, const CsvSchema& schema = {}, int decimals = 4) {
  const char sep = schema.delimiter;
  out << schema.timestamp << sep << schema.price << sep << schema.residual_load << sep << schema.trp << '\n';
  char hour[8];
  for (const auto& d : table) {
    const std::string date = to_string(d.date);
    for (int h = 0; h < kHours; ++h) {
      std::snprintf(hour, sizeof hour, "T%02d:00", h);
      out << date << hour << sep << format_fixed(d.price[h], decimals) << sep << format_fixed(d.load[h], decimals)
          << sep << format_fixed(d.trp[h], decimals) << '\n';
    }
  }
}

}  // namespace epf
