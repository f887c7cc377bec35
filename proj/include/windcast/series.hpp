#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "windcast/error.hpp"

namespace windcast {

/// Uniformly sampled scalar series.
struct TimeSeries {
  std::vector<double> values;
  std::int64_t start_time = 0;  // seconds since the Unix epoch (UTC)
  double step = 600.0;          // seconds between samples
  std::string name;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  std::span<const double> view() const noexcept { return values; }

  /// Throws DataError unless the series is non-empty, finite and has step > 0.
  void validate() const {
    if (values.empty()) throw DataError("series '" + name + "' is empty");
    if (!(step > 0.0) || !std::isfinite(step))
      throw DataError("series '" + name + "' has non-positive step");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i]))
        throw DataError("series '" + name + "' has a non-finite value at index " +
                        std::to_string(i));
    }
  }
};

inline void require_finite(std::span<const double> x, const char* what) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]))
      throw DataError(std::string(what) + ": non-finite value at index " +
                      std::to_string(i));
  }
}

inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw DataError(std::string(what) + ": length mismatch (" + std::to_string(a) +
                    " vs " + std::to_string(b) + ")");
}

/// Splits at `boundary`: first = [0, boundary), second = [boundary, n).
inline std::pair<TimeSeries, TimeSeries> split(const TimeSeries& series,
                                               std::size_t boundary) {
  if (boundary == 0 || boundary >= series.size())
    throw DataError("split boundary " + std::to_string(boundary) +
                    " outside (0, " + std::to_string(series.size()) + ")");
  TimeSeries head{{series.values.begin(), series.values.begin() + boundary},
                  series.start_time,
                  series.step,
                  series.name};
  TimeSeries tail{{series.values.begin() + boundary, series.values.end()},
                  series.start_time + static_cast<std::int64_t>(std::llround(
                                          series.step * static_cast<double>(boundary))),
                  series.step,
                  series.name};
  return {std::move(head), std::move(tail)};
}

/// Affine map from [min, max] of the fitted data onto [lo, hi].
struct ScaleParams {
  double min = 0.0;
  double max = 1.0;
  double lo = 0.0;
  double hi = 1.0;

  double forward(double x) const { return lo + (x - min) / (max - min) * (hi - lo); }
  double inverse(double y) const { return min + (y - lo) / (hi - lo) * (max - min); }
};

/// Fits a min-max scaler onto [lo, hi]. Throws on constant input.
inline ScaleParams fit_scale(std::span<const double> x, double lo = 0.0,
                             double hi = 1.0) {
  if (x.empty()) throw DataError("cannot fit a scaler on an empty series");
  const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
  if (!(*mx > *mn)) throw DataError("cannot min-max scale a constant series");
  return {*mn, *mx, lo, hi};
}

inline std::vector<double> apply_scale(std::span<const double> x,
                                       const ScaleParams& p) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(),
                 [&](double v) { return p.forward(v); });
  return out;
}

inline std::vector<double> invert_scale(std::span<const double> y,
                                        const ScaleParams& p) {
  std::vector<double> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(),
                 [&](double v) { return p.inverse(v); });
  return out;
}

inline std::pair<TimeSeries, ScaleParams> minmax_scale(const TimeSeries& series) {
  const ScaleParams p = fit_scale(series.values);
  TimeSeries out = series;
  out.values = apply_scale(series.values, p);
  return {std::move(out), p};
}

inline TimeSeries inverse_scale(const TimeSeries& scaled, const ScaleParams& p) {
  TimeSeries out = scaled;
  out.values = invert_scale(scaled.values, p);
  return out;
}

}  // namespace windcast
