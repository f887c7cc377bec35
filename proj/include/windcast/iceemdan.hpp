#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "windcast/emd.hpp"
#include "windcast/error.hpp"
#include "windcast/parallel.hpp"
#include "windcast/rng.hpp"
#include "windcast/series.hpp"

namespace windcast {

struct IceemdanParams {
  std::size_t realizations = 90;
  int max_sift_iters = 1000;
  double noise_ratio = 0.3;  // epsilon_0, constant across stages
  std::size_t max_imfs = 10;
  std::uint64_t seed = 0;
  double sift_tolerance = 1e-8;

  SiftParams sift() const { return {max_sift_iters, sift_tolerance}; }

  void validate() const {
    if (realizations < 1) throw ConfigError("iceemdan: realizations must be >= 1");
    if (max_imfs < 1) throw ConfigError("iceemdan: max_imfs must be >= 1");
    if (!(noise_ratio > 0.0)) throw ConfigError("iceemdan: noise_ratio must be > 0");
    if (max_sift_iters < 1) throw ConfigError("iceemdan: max_sift_iters must be >= 1");
    if (!(sift_tolerance > 0.0))
      throw ConfigError("iceemdan: sift_tolerance must be > 0");
  }
};

inline double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Population standard deviation.
inline double std_of(std::span<const double> x) {
  const double mu = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return std::sqrt(s / static_cast<double>(x.size()));
}

/// White-noise realizations and their EMD modes, shared by every stage.
///
/// Mode k of realization j is rescaled to unit standard deviation; modes the
/// EMD of a realization did not produce are empty and contribute no noise.
class NoiseBank {
 public:
  NoiseBank(std::size_t length, std::size_t realizations, std::size_t max_modes,
            std::uint64_t seed, const SiftParams& sift_params = {})
      : length_(length), max_modes_(max_modes), noise_(realizations),
        modes_(realizations) {
    if (length < 4) throw DataError("noise bank length must be >= 4");
    parallel_for(realizations, [&](std::size_t j) {
      Rng rng(derive_seed(seed, j));
      auto& z = noise_[j];
      z.resize(length);
      for (double& v : z) v = rng.gaussian();
      auto d = emd(z, max_modes, sift_params);
      for (auto& mode : d.imfs) {
        const double s = std_of(mode);
        if (s > 0.0)
          for (double& v : mode) v /= s;
      }
      modes_[j] = std::move(d.imfs);
    });
  }

  std::size_t length() const noexcept { return length_; }
  std::size_t realizations() const noexcept { return noise_.size(); }
  std::size_t max_modes() const noexcept { return max_modes_; }

  std::span<const double> noise(std::size_t j) const { return noise_[j]; }

  /// Unit-std k-th mode (1-based) of realization j; empty if absent.
  std::span<const double> mode(std::size_t j, std::size_t k) const {
    const auto& m = modes_[j];
    if (k == 0 || k > m.size()) return {};
    return m[k - 1];
  }

 private:
  std::size_t length_;
  std::size_t max_modes_;
  std::vector<std::vector<double>> noise_;
  std::vector<std::vector<std::vector<double>>> modes_;
};

/// Converged local mean: what remains after sifting one IMF out of `x`.
inline std::vector<double> ensemble_local_mean(std::span<const double> x,
                                               const SiftParams& sift_params) {
  auto imf = sift(x, sift_params);
  for (std::size_t i = 0; i < imf.size(); ++i) imf[i] = x[i] - imf[i];
  return imf;
}

/// ICEEMDAN decomposition with exactly `params.max_imfs` modes.
///
/// Stage k averages, over all realizations j, the local mean of
///   residue_{k-1} + noise_ratio * std(residue_{k-1}) * mode_k(z_j)
/// (residue_0 is the input) and takes mode k = residue_{k-1} - residue_k.
/// Extraction stops early once the residue no longer oscillates; the missing
/// modes are zero. Pass `bank` to reuse noise across calls; it must match the
/// signal length and realization count and cover max_imfs modes.
inline Decomposition iceemdan(std::span<const double> signal, const IceemdanParams& params,
                              const NoiseBank* bank = nullptr) {
  params.validate();
  if (signal.size() < 4) throw DataError("iceemdan needs at least 4 samples");
  require_finite(signal, "iceemdan input");

  const std::size_t n = signal.size();
  const SiftParams sift_params = params.sift();
  if (bank != nullptr && (bank->length() != n || bank->realizations() != params.realizations ||
                          bank->max_modes() < params.max_imfs))
    throw ConfigError("iceemdan: noise bank does not match signal/params");
  // Built on first use: a signal that never oscillates needs no noise.
  std::unique_ptr<NoiseBank> own_bank;

  Decomposition d;
  d.input_length = n;
  std::vector<double> residue(signal.begin(), signal.end());
  std::vector<std::vector<double>> local(params.realizations);

  for (std::size_t k = 1; k <= params.max_imfs; ++k) {
    if (!find_extrema(residue).oscillates()) break;
    if (bank == nullptr) {
      own_bank = std::make_unique<NoiseBank>(n, params.realizations, params.max_imfs,
                                             params.seed, sift_params);
      bank = own_bank.get();
    }
    const double alpha = params.noise_ratio * std_of(residue);
    parallel_for(params.realizations, [&](std::size_t j) {
      std::vector<double> perturbed = residue;
      const auto noise = bank->mode(j, k);
      if (!noise.empty())
        for (std::size_t i = 0; i < n; ++i) perturbed[i] += alpha * noise[i];
      local[j] = ensemble_local_mean(perturbed, sift_params);
    });

    // Ordered reduction keeps serial and threaded runs bit-identical.
    std::vector<double> next(n, 0.0);
    for (const auto& l : local)
      for (std::size_t i = 0; i < n; ++i) next[i] += l[i];
    const double inv = 1.0 / static_cast<double>(params.realizations);
    for (double& v : next) v *= inv;

    std::vector<double> mode(n);
    for (std::size_t i = 0; i < n; ++i) mode[i] = residue[i] - next[i];
    d.imfs.push_back(std::move(mode));
    residue = std::move(next);
  }
  while (d.imfs.size() < params.max_imfs) d.imfs.emplace_back(n, 0.0);
  d.residue = std::move(residue);
  return d;
}

inline Decomposition iceemdan(const TimeSeries& series, const IceemdanParams& params,
                              const NoiseBank* bank = nullptr) {
  return iceemdan(series.view(), params, bank);
}

}  // namespace windcast
