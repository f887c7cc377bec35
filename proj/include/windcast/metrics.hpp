#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "windcast/error.hpp"
#include "windcast/series.hpp"

namespace windcast {

/// The five error indices over T compared points.
struct ErrorMetrics {
  double mae = 0.0;
  double mape = 0.0;  // percent
  double mre = 0.0;   // fraction, mape / 100
  double mse = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

/// MAE, MAPE, MRE, MSE and RMSE of `forecast` against `ground`.
///
/// A zero ground value makes the relative indices undefined; that is a hard
/// error listing the offending indices.
inline ErrorMetrics compute_metrics(std::span<const double> ground,
                                    std::span<const double> forecast) {
  require_same_length(ground.size(), forecast.size(), "compute_metrics");
  if (ground.empty()) throw DataError("compute_metrics: no points to compare");

  std::vector<std::size_t> zeros;
  for (std::size_t u = 0; u < ground.size(); ++u)
    if (ground[u] == 0.0) zeros.push_back(u);
  if (!zeros.empty()) {
    std::string msg = "compute_metrics: ground truth is zero at index";
    msg += zeros.size() > 1 ? "es " : " ";
    for (std::size_t i = 0; i < zeros.size() && i < 10; ++i)
      msg += (i ? "," : "") + std::to_string(zeros[i]);
    if (zeros.size() > 10) msg += ",...";
    throw DataError(msg + " (MAPE/MRE undefined)");
  }

  double abs_sum = 0.0, rel_sum = 0.0, sq_sum = 0.0;
  for (std::size_t u = 0; u < ground.size(); ++u) {
    const double diff = ground[u] - forecast[u];
    abs_sum += std::abs(diff);
    rel_sum += std::abs(diff) / std::abs(ground[u]);
    sq_sum += diff * diff;
  }
  const double count = static_cast<double>(ground.size());

  ErrorMetrics m;
  m.n = ground.size();
  m.mae = abs_sum / count;
  m.mre = rel_sum / count;
  m.mape = m.mre * 100.0;
  m.mse = sq_sum / count;
  m.rmse = std::sqrt(m.mse);
  if (!std::isfinite(m.mse) || !std::isfinite(m.mre))
    throw DataError("compute_metrics: non-finite result");
  return m;
}

inline ErrorMetrics compute_metrics(const TimeSeries& ground,
                                    const TimeSeries& forecast) {
  return compute_metrics(ground.view(), forecast.view());
}

}  // namespace windcast
