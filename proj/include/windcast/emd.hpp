#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "windcast/error.hpp"

namespace windcast {

struct Extrema {
  std::vector<std::size_t> maxima;
  std::vector<std::size_t> minima;

  /// Envelopes need at least two knots of each kind.
  bool oscillates() const { return maxima.size() >= 2 && minima.size() >= 2; }
  std::size_t count() const { return maxima.size() + minima.size(); }
};

/// Interior local extrema. A flat run counts once, at its center index, when
/// both neighbours of the run lie on the same side of it. Runs touching either
/// end of the signal are not extrema.
inline void find_extrema(std::span<const double> x, Extrema& e) {
  e.maxima.clear();
  e.minima.clear();
  const std::size_t n = x.size();
  if (n < 3) return;
  std::size_t i = 1;
  while (i + 1 < n) {
    const double v = x[i];
    const bool rises = x[i - 1] < v;
    const bool falls = x[i - 1] > v;
    if (!rises && !falls) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j + 1 < n && x[j + 1] == v) ++j;
    if (j + 1 >= n) break;
    if (rises && x[j + 1] < v) e.maxima.push_back((i + j) / 2);
    if (falls && x[j + 1] > v) e.minima.push_back((i + j) / 2);
    i = j + 1;
  }
}

inline Extrema find_extrema(std::span<const double> x) {
  Extrema e;
  find_extrema(x, e);
  return e;
}

inline std::size_t count_zero_crossings(std::span<const double> x) {
  std::size_t crossings = 0;
  int last_sign = 0;
  for (double v : x) {
    const int s = (v > 0.0) - (v < 0.0);
    if (s == 0) continue;
    if (last_sign != 0 && s != last_sign) ++crossings;
    last_sign = s;
  }
  return crossings;
}

/// Reusable buffers for the envelope and sifting routines.
struct SplineWorkspace {
  std::vector<double> kx, ky, second, diag, rhs, upper, scratch;
  Extrema extrema;
};

/// Natural cubic spline through (knot_x[k], knot_y[k]) evaluated at 0..n-1.
/// Knots must be strictly increasing. Outside the knot range the end
/// segment's tangent line is used.
inline void natural_spline(std::span<const double> knot_x,
                           std::span<const double> knot_y, std::span<double> out,
                           SplineWorkspace& ws) {
  const std::size_t m = knot_x.size();
  if (m < 2) throw DataError("spline needs at least 2 knots");

  // Second derivatives via the Thomas algorithm; M[0] = M[m-1] = 0.
  auto& second = ws.second;
  second.assign(m, 0.0);
  if (m > 2) {
    auto& diag = ws.diag;
    auto& rhs = ws.rhs;
    auto& upper = ws.upper;
    diag.resize(m - 2);
    rhs.resize(m - 2);
    upper.resize(m - 2);
    for (std::size_t k = 1; k + 1 < m; ++k) {
      const double h0 = knot_x[k] - knot_x[k - 1];
      const double h1 = knot_x[k + 1] - knot_x[k];
      diag[k - 1] = 2.0 * (h0 + h1);
      upper[k - 1] = h1;
      rhs[k - 1] = 6.0 * ((knot_y[k + 1] - knot_y[k]) / h1 -
                          (knot_y[k] - knot_y[k - 1]) / h0);
    }
    for (std::size_t k = 1; k < m - 2; ++k) {
      const double lower = knot_x[k + 1] - knot_x[k];
      const double w = lower / diag[k - 1];
      diag[k] -= w * upper[k - 1];
      rhs[k] -= w * rhs[k - 1];
    }
    for (std::size_t k = m - 2; k-- > 0;) {
      double v = rhs[k];
      if (k + 1 < m - 2) v -= upper[k] * second[k + 2];
      second[k + 1] = v / diag[k];
    }
  }

  // Each segment as a cubic in d = t - knot_x[seg], evaluated by Horner.
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
  std::ptrdiff_t i = 0;
  for (std::size_t seg = 0; seg + 1 < m; ++seg) {
    const double x0 = knot_x[seg];
    const double h = knot_x[seg + 1] - x0;
    const double c0 = knot_y[seg];
    const double c1 = (knot_y[seg + 1] - knot_y[seg]) / h -
                      h * (2.0 * second[seg] + second[seg + 1]) / 6.0;
    const double c2 = 0.5 * second[seg];
    const double c3 = (second[seg + 1] - second[seg]) / (6.0 * h);
    if (seg == 0) {
      for (; i < n && static_cast<double>(i) < x0; ++i)
        out[i] = c0 + c1 * (static_cast<double>(i) - x0);
    }
    const bool last_seg = seg + 2 == m;
    for (; i < n && (static_cast<double>(i) < knot_x[seg + 1] ||
                     (last_seg && static_cast<double>(i) == knot_x[seg + 1]));
         ++i) {
      const double d = static_cast<double>(i) - x0;
      out[i] = c0 + d * (c1 + d * (c2 + d * c3));
    }
    if (last_seg && i < n) {
      const double x1 = knot_x[seg + 1];
      const double slope = c1 + h * (2.0 * c2 + 3.0 * c3 * h);
      for (; i < n; ++i) out[i] = knot_y[seg + 1] + slope * (static_cast<double>(i) - x1);
    }
  }
}

inline void natural_spline(std::span<const double> knot_x,
                           std::span<const double> knot_y, std::span<double> out) {
  SplineWorkspace ws;
  natural_spline(knot_x, knot_y, out, ws);
}

/// Cubic-spline envelope through signal[knot] at the given indices.
///
/// Unless a knot already sits on the boundary sample, the two knots nearest
/// each end are mirrored across that end before fitting.
inline void spline_envelope(std::span<const double> signal,
                            std::span<const std::size_t> knots, std::span<double> out,
                            SplineWorkspace& ws) {
  if (knots.size() < 2) throw DataError("spline_envelope needs at least 2 knots");
  const std::size_t n = signal.size();
  const double last = static_cast<double>(n - 1);

  auto& kx = ws.kx;
  auto& ky = ws.ky;
  kx.clear();
  ky.clear();
  const bool mirror_left = knots.front() != 0;
  const bool mirror_right = knots.back() != n - 1;
  if (mirror_left) {
    for (std::size_t k = std::min<std::size_t>(2, knots.size()); k-- > 0;) {
      kx.push_back(-static_cast<double>(knots[k]));
      ky.push_back(signal[knots[k]]);
    }
  }
  for (std::size_t k : knots) {
    kx.push_back(static_cast<double>(k));
    ky.push_back(signal[k]);
  }
  if (mirror_right) {
    const std::size_t count = std::min<std::size_t>(2, knots.size());
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = knots[knots.size() - 1 - k];
      kx.push_back(2.0 * last - static_cast<double>(idx));
      ky.push_back(signal[idx]);
    }
  }
  natural_spline(kx, ky, out, ws);
}

inline std::vector<double> spline_envelope(std::span<const double> signal,
                                           std::span<const std::size_t> knots) {
  std::vector<double> out(signal.size());
  SplineWorkspace ws;
  spline_envelope(signal, knots, out, ws);
  return out;
}

/// Mean of the upper and lower envelopes. A signal without at least two
/// maxima and two minima is its own local mean.
inline void local_mean(std::span<const double> x, std::span<double> out,
                       SplineWorkspace& ws) {
  find_extrema(x, ws.extrema);
  if (!ws.extrema.oscillates()) {
    std::copy(x.begin(), x.end(), out.begin());
    return;
  }
  ws.scratch.resize(x.size());
  spline_envelope(x, ws.extrema.maxima, out, ws);
  spline_envelope(x, ws.extrema.minima, ws.scratch, ws);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = 0.5 * (out[i] + ws.scratch[i]);
}

inline std::vector<double> local_mean(std::span<const double> x) {
  std::vector<double> out(x.size());
  SplineWorkspace ws;
  local_mean(x, out, ws);
  return out;
}

struct SiftParams {
  int max_iters = 1000;
  double tolerance = 1e-8;  // on sum (h_prev - h)^2 / sum h_prev^2
};

/// Extracts one IMF by repeated local-mean subtraction. When `trace` is given
/// it receives the normalized squared change of every pass.
inline std::vector<double> sift(std::span<const double> signal, const SiftParams& params,
                                std::vector<double>* trace = nullptr) {
  std::vector<double> h(signal.begin(), signal.end());
  std::vector<double> mean(h.size());
  SplineWorkspace ws;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    local_mean(h, mean, ws);
    double prev_energy = 0.0, change = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      prev_energy += h[i] * h[i];
      change += mean[i] * mean[i];
      h[i] -= mean[i];
    }
    if (prev_energy == 0.0) break;
    const double ratio = change / prev_energy;
    if (trace) trace->push_back(ratio);
    if (ratio < params.tolerance) break;
    // A monotonic h is its own local mean; it has just become zero.
    if (ratio == 1.0) break;
  }
  return h;
}

/// Ordered IMFs plus the final residue; additive partition of the input.
struct Decomposition {
  std::vector<std::vector<double>> imfs;
  std::vector<double> residue;
  std::size_t input_length = 0;

  /// IMFs followed by the residue.
  std::vector<std::vector<double>> subseries() const {
    auto out = imfs;
    out.push_back(residue);
    return out;
  }

  std::vector<double> reconstruct() const {
    std::vector<double> sum = residue;
    for (const auto& imf : imfs)
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += imf[i];
    return sum;
  }

  double max_reconstruction_error(std::span<const double> input) const {
    const auto sum = reconstruct();
    double worst = 0.0;
    for (std::size_t i = 0; i < input.size(); ++i)
      worst = std::max(worst, std::abs(input[i] - sum[i]));
    return worst;
  }
};

/// Plain EMD: sift out IMFs until the residue stops oscillating or
/// `max_imfs` modes exist. Anything left over stays in the residue.
inline Decomposition emd(std::span<const double> signal, std::size_t max_imfs,
                         const SiftParams& sift_params = {}) {
  if (signal.size() < 4) throw DataError("emd needs at least 4 samples");
  Decomposition d;
  d.input_length = signal.size();
  d.residue.assign(signal.begin(), signal.end());
  while (d.imfs.size() < max_imfs && find_extrema(d.residue).oscillates()) {
    auto imf = sift(d.residue, sift_params);
    for (std::size_t i = 0; i < imf.size(); ++i) d.residue[i] -= imf[i];
    d.imfs.push_back(std::move(imf));
  }
  return d;
}

}  // namespace windcast
