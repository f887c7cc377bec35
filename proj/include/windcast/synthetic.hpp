#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "windcast/error.hpp"
#include "windcast/rng.hpp"
#include "windcast/series.hpp"

namespace windcast {

struct Tone {
  double amplitude = 1.0;
  double frequency = 0.01;  // cycles per sample
  double phase = 0.0;       // radians
};

/// Recipe for a deterministic test signal:
/// offset + sum of tones + trend_slope * t + gaussian noise.
struct SyntheticSpec {
  std::vector<Tone> components;
  double offset = 0.0;
  double trend_slope = 0.0;
  double noise_std = 0.0;
  std::size_t length = 0;
  std::uint64_t seed = 0;
  std::int64_t start_time = 1514764800;  // 2018-01-01T00:00:00Z
  double step = 600.0;
};

inline TimeSeries generate_synthetic(const SyntheticSpec& spec) {
  if (spec.length == 0) throw ConfigError("synthetic length must be positive");
  if (spec.length < 2) throw ConfigError("synthetic length must be at least 2");
  if (!(spec.noise_std >= 0.0)) throw ConfigError("noise_std must be >= 0");
  if (!(spec.step > 0.0)) throw ConfigError("synthetic step must be positive");

  TimeSeries out;
  out.name = "wind_speed";
  out.start_time = spec.start_time;
  out.step = spec.step;
  out.values.resize(spec.length);
  Rng rng(spec.seed);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double time = static_cast<double>(t);
    double v = spec.offset + spec.trend_slope * time;
    for (const Tone& c : spec.components)
      v += c.amplitude *
           std::sin(2.0 * std::numbers::pi * c.frequency * time + c.phase);
    if (spec.noise_std > 0.0) v += spec.noise_std * rng.gaussian();
    out.values[t] = v;
  }
  return out;
}

/// The noisy two-tone benchmark shipped in data/two_tone_benchmark.csv.
inline SyntheticSpec two_tone_benchmark_spec() {
  SyntheticSpec spec;
  spec.components = {{1.5, 0.05, 0.0}, {2.5, 0.005, 0.0}};
  spec.offset = 8.0;
  spec.noise_std = 0.05;
  spec.length = 1500;
  spec.seed = 2018;
  return spec;
}

}  // namespace windcast
