#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "windcast/error.hpp"
#include "windcast/metrics.hpp"
#include "windcast/series.hpp"

namespace windcast {

namespace csv_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t comma = line.find(',', pos);
    cells.push_back(trim(line.substr(pos, comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return cells;
}

inline bool parse_double(std::string_view cell, double& out) {
  if (cell.empty()) return false;
  const std::string buf(cell);
  char* end = nullptr;
  out = std::strtod(buf.c_str(), &end);
  return end == buf.c_str() + buf.size();
}

}  // namespace csv_detail

/// Parses "YYYY-MM-DDTHH:MM:SS" (optionally with a trailing 'Z' or a space
/// instead of 'T') into seconds since the Unix epoch, UTC.
inline bool parse_iso8601(std::string_view text, std::int64_t& seconds) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  const std::string buf(text);
  int consumed = 0;
  if (std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d%n", &y, &mo, &d, &sep, &h,
                  &mi, &s, &consumed) != 7)
    return false;
  if (sep != 'T' && sep != ' ') return false;
  const std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!(rest.empty() || rest == "Z")) return false;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return false;
  seconds = sys_days{ymd}.time_since_epoch() / std::chrono::seconds(1) +
            h * 3600LL + mi * 60LL + s;
  return true;
}

inline std::string format_iso8601(std::int64_t seconds) {
  using namespace std::chrono;
  const sys_seconds tp{std::chrono::seconds{seconds}};
  const auto day_point = floor<days>(tp);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{tp - day_point};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()),
                static_cast<int>(hms.seconds().count()));
  return buf;
}

/// Fixed 16-significant-digit rendering used by every CSV writer.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16g", v);
  return buf;
}

/// Loads one numeric column of a `timestamp,<column>` CSV.
///
/// The step is taken from the first two timestamps; any later spacing that
/// deviates from it by more than 1% is rejected. Data rows are numbered from
/// 1 (the header is not counted) in error messages.
inline TimeSeries load_csv(const std::filesystem::path& path,
                           std::string_view column = "wind_speed") {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line))
    throw DataError("'" + path.string() + "' has no header row");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB &&
      static_cast<unsigned char>(line[2]) == 0xBF)
    line.erase(0, 3);

  const auto header = csv_detail::split_row(line);
  std::size_t time_col = header.size(), value_col = header.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "timestamp") time_col = c;
    if (header[c] == column) value_col = c;
  }
  if (time_col == header.size())
    throw DataError("'" + path.string() + "' has no 'timestamp' column");
  if (value_col == header.size())
    throw DataError("'" + path.string() + "' has no '" + std::string(column) +
                    "' column");

  TimeSeries series;
  series.name = std::string(column);
  std::vector<std::int64_t> stamps;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (csv_detail::trim(line).empty()) continue;
    ++row;
    const auto cells = csv_detail::split_row(line);
    const std::string where = "'" + path.string() + "' row " + std::to_string(row);
    if (cells.size() != header.size())
      throw DataError(where + ": expected " + std::to_string(header.size()) +
                      " cells, found " + std::to_string(cells.size()));
    std::int64_t t = 0;
    if (!parse_iso8601(cells[time_col], t))
      throw DataError(where + ": bad timestamp '" + std::string(cells[time_col]) + "'");
    double v = 0.0;
    if (!csv_detail::parse_double(cells[value_col], v))
      throw DataError(where + ": non-numeric value '" +
                      std::string(cells[value_col]) + "'");
    if (!std::isfinite(v)) throw DataError(where + ": value is NaN or infinite");
    stamps.push_back(t);
    series.values.push_back(v);
  }
  if (series.values.empty())
    throw DataError("'" + path.string() + "' has no data rows");

  series.start_time = stamps.front();
  if (stamps.size() >= 2) {
    series.step = static_cast<double>(stamps[1] - stamps[0]);
    if (!(series.step > 0.0))
      throw DataError("'" + path.string() + "' rows 1-2: timestamps not increasing");
    for (std::size_t i = 2; i < stamps.size(); ++i) {
      const double gap = static_cast<double>(stamps[i] - stamps[i - 1]);
      if (std::abs(gap - series.step) > 0.01 * series.step)
        throw DataError("'" + path.string() + "' row " + std::to_string(i + 1) +
                        ": irregular timestamp spacing (" + format_number(gap) +
                        " s vs step " + format_number(series.step) + " s)");
    }
  }
  return series;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

/// Writes a `timestamp,<name>` CSV readable by load_csv.
inline void write_series_csv(const std::filesystem::path& path,
                             const TimeSeries& series,
                             std::string_view column = "wind_speed") {
  auto out = open_output(path);
  out << "timestamp," << column << '\n';
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto t = series.start_time +
                   static_cast<std::int64_t>(std::llround(series.step * static_cast<double>(i)));
    out << format_iso8601(t) << ',' << format_number(series.values[i]) << '\n';
  }
}

/// `metric,value` rows.
inline void write_metrics_csv(std::ostream& out, const ErrorMetrics& m) {
  out << "metric,value\n";
  out << "MAE," << format_number(m.mae) << '\n';
  out << "MAPE," << format_number(m.mape) << '\n';
  out << "MRE," << format_number(m.mre) << '\n';
  out << "MSE," << format_number(m.mse) << '\n';
  out << "RMSE," << format_number(m.rmse) << '\n';
}

}  // namespace windcast
