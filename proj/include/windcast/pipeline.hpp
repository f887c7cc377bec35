#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "windcast/error.hpp"
#include "windcast/forecaster.hpp"
#include "windcast/iceemdan.hpp"
#include "windcast/metrics.hpp"
#include "windcast/parallel.hpp"
#include "windcast/residual_mlp.hpp"
#include "windcast/series.hpp"

namespace windcast {

/// Step counts of the four horizon classes.
struct Horizons {
  std::size_t very_short = 1;
  std::size_t short_term = 6;
  std::size_t medium = 144;
  std::size_t long_term = 1008;

  static constexpr std::array<const char*, 4> names{"very_short", "short", "medium", "long"};

  std::array<std::size_t, 4> steps() const { return {very_short, short_term, medium, long_term}; }

  void validate() const {
    const auto s = steps();
    if (s[0] < 1) throw ConfigError("horizons: very_short must be >= 1");
    for (std::size_t i = 1; i < s.size(); ++i)
      if (s[i] <= s[i - 1])
        throw ConfigError(std::string("horizons: ") + names[i] + " must exceed " + names[i - 1]);
  }
};

struct PipelineConfig {
  IceemdanParams iceemdan;
  TransformerConfig transformer;
  std::size_t mlp_lags = 6;
  LmParams lm;
  Horizons horizons;
  double train_fraction = 0.8;     // used when test_length is 0
  std::size_t test_length = 0;
  double calibration_fraction = 0.2;  // tail of the training span that feeds the MLP
  bool strict_causal = false;
  bool evaluate_horizons = true;

  void validate() const {
    iceemdan.validate();
    transformer.validate();
    lm.validate();
    if (mlp_lags < 1) throw ConfigError("mlp.lags must be >= 1");
    if (evaluate_horizons) horizons.validate();
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
      throw ConfigError("split.train_fraction must be in (0, 1)");
    if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0))
      throw ConfigError("split.calibration_fraction must be in (0, 1)");
  }
};

/// Index ranges of one run: transformers fit on [0, fit_end), the MLP on
/// [fit_end, train_end), and [train_end, size) is the test span.
struct Spans {
  std::size_t fit_end = 0;
  std::size_t train_end = 0;
  std::size_t size = 0;

  std::size_t calibration_length() const { return train_end - fit_end; }
  std::size_t test_length() const { return size - train_end; }
};

inline Spans plan_spans(const PipelineConfig& cfg, std::size_t n) {
  Spans s;
  s.size = n;
  const std::size_t test = cfg.test_length > 0
                               ? cfg.test_length
                               : n - static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  if (test < 1 || test >= n)
    throw DataError("split leaves no training or no test data (" + std::to_string(n) + " samples, " +
                    std::to_string(test) + " test)");
  s.train_end = n - test;
  const auto calib = static_cast<std::size_t>(
      std::llround(cfg.calibration_fraction * static_cast<double>(s.train_end)));
  s.fit_end = s.train_end - calib;
  const std::size_t need_fit = cfg.transformer.encoder_len + cfg.transformer.decoder_len;
  if (s.fit_end < need_fit)
    throw DataError("fit slice of " + std::to_string(s.fit_end) + " samples is shorter than one " +
                    "transformer window (" + std::to_string(need_fit) + ")");
  if (calib <= cfg.mlp_lags)
    throw DataError("calibration slice of " + std::to_string(calib) + " samples cannot feed " +
                    std::to_string(cfg.mlp_lags) + " MLP lags");
  return s;
}

inline std::vector<double> fuse(const std::vector<std::vector<double>>& forecasts) {
  if (forecasts.empty()) throw DataError("fuse: no subseries forecasts");
  std::vector<double> out(forecasts.front().size(), 0.0);
  for (std::size_t k = 0; k < forecasts.size(); ++k) {
    if (forecasts[k].size() != out.size())
      throw DataError("fuse: subseries " + std::to_string(k) + " has length " +
                      std::to_string(forecasts[k].size()) + ", expected " + std::to_string(out.size()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += forecasts[k][i];
  }
  return out;
}

/// ground - primary.
inline std::vector<double> residual_errors(std::span<const double> ground,
                                           std::span<const double> primary) {
  require_same_length(ground.size(), primary.size(), "residual_errors");
  std::vector<double> out(ground.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ground[i] - primary[i];
  return out;
}

/// primary + forecast errors.
inline std::vector<double> correct(std::span<const double> primary,
                                   std::span<const double> forecast_errors) {
  require_same_length(primary.size(), forecast_errors.size(), "correct");
  std::vector<double> out(primary.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = primary[i] + forecast_errors[i];
  return out;
}

inline std::vector<double> persistence_baseline(std::span<const double> history, std::size_t steps) {
  if (history.empty()) throw DataError("persistence: empty history");
  return std::vector<double>(steps, history.back());
}

/// Error forecaster: the MLP on scaled errors, or a constant when the
/// calibration errors carry no variation to scale.
class ResidualCorrector {
 public:
  static ResidualCorrector fit(std::span<const double> errors, std::size_t lags,
                               const LmParams& lm, LmResult* result = nullptr) {
    require_finite(errors, "residual errors");
    ResidualCorrector c;
    c.net_ = ResidualMlp(lags);
    const auto [lo, hi] = std::minmax_element(errors.begin(), errors.end());
    if (*lo == *hi) {
      c.constant_ = *lo;
      return c;
    }
    c.scale_ = fit_scale(errors, -0.9, 0.9);
    c.net_ = ResidualMlp::random(lags, lm.seed);
    auto r = train_lm(c.net_, make_lag_samples(apply_scale(errors, c.scale_), lags), lm);
    if (result) *result = std::move(r);
    return c;
  }

  static ResidualCorrector from_parts(ResidualMlp net, ScaleParams scale) {
    ResidualCorrector c;
    c.net_ = std::move(net);
    c.scale_ = scale;
    return c;
  }

  static ResidualCorrector constant(double value) {
    ResidualCorrector c;
    c.constant_ = value;
    return c;
  }

  bool is_constant() const { return constant_.has_value(); }
  double constant_value() const { return constant_.value_or(0.0); }
  const ResidualMlp& net() const { return net_; }
  const ScaleParams& scale() const { return scale_; }
  std::size_t lags() const { return net_.lags; }

  std::vector<double> forecast(std::span<const double> history, std::size_t steps) const {
    if (constant_) return std::vector<double>(steps, *constant_);
    return forecast_errors(net_, history, steps, scale_);
  }

 private:
  std::optional<double> constant_;
  ResidualMlp net_;
  ScaleParams scale_;
};

/// Everything fitted in one run, kept for horizon evaluation and export.
struct PipelineState {
  PipelineConfig config;
  Spans spans;
  std::vector<double> ground;
  Decomposition decomposition;
  /// Subseries over the whole series; in strict-causal mode the test part is
  /// the forecasters' own rollout.
  std::vector<std::vector<double>> subseries;
  std::vector<SubseriesForecaster> forecasters;
  std::vector<TrainReport> train_reports;
  /// One-step primary forecasts and residual errors over [fit_end, size).
  std::vector<double> primary;
  std::vector<double> errors;
  ResidualCorrector corrector;
  LmResult lm_result;

  double primary_at(std::size_t t) const { return primary[t - spans.fit_end]; }
  double error_at(std::size_t t) const { return errors[t - spans.fit_end]; }
};

struct ForecastReport {
  std::size_t test_start = 0;
  std::vector<double> ground;
  std::vector<double> primary;
  std::vector<double> corrected;
  std::vector<double> residual_errors;
  std::vector<double> forecast_errors;
  std::vector<double> baseline;
  ErrorMetrics metrics_primary;
  ErrorMetrics metrics_corrected;
  ErrorMetrics baseline_metrics;
  std::vector<std::pair<std::string, ErrorMetrics>> per_horizon;
};

namespace detail {

template <typename F>
auto in_stage(const std::string& stage, int subseries, F&& f) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, subseries, e.what());
  }
}

inline std::vector<double> errors_before(const PipelineState& s, std::size_t t) {
  return {s.errors.begin(), s.errors.begin() + static_cast<std::ptrdiff_t>(t - s.spans.fit_end)};
}

}  // namespace detail

/// Decomposes, fits every subseries forecaster and the residual corrector.
/// `bank` lets several runs share one noise bank.
inline PipelineState fit_pipeline(const PipelineConfig& config, const TimeSeries& data,
                                  const NoiseBank* bank = nullptr) {
  config.validate();
  detail::in_stage("input", -1, [&] { data.validate(); return 0; });
  PipelineState s;
  s.config = config;
  s.ground = data.values;
  s.spans = detail::in_stage("split", -1, [&] { return plan_spans(config, data.size()); });
  const Spans& sp = s.spans;

  const std::size_t decompose_len = config.strict_causal ? sp.train_end : sp.size;
  s.decomposition = detail::in_stage("decompose", -1, [&] {
    return iceemdan(std::span(s.ground).first(decompose_len), config.iceemdan, bank);
  });
  s.subseries = s.decomposition.subseries();
  const std::size_t K = s.subseries.size();

  s.forecasters.resize(K);
  s.train_reports.resize(K);
  parallel_for(K, [&](std::size_t k) {
    detail::in_stage("train", static_cast<int>(k), [&] {
      TransformerConfig tc = config.transformer;
      tc.seed = derive_seed(config.transformer.seed, k);
      s.forecasters[k] = SubseriesForecaster::fit(std::span(s.subseries[k]).first(sp.fit_end), tc,
                                                  &s.train_reports[k]);
      return 0;
    });
  });

  if (config.strict_causal) {
    parallel_for(K, [&](std::size_t k) {
      detail::in_stage("extend", static_cast<int>(k), [&] {
        auto tail = s.forecasters[k].forecast(s.subseries[k], sp.test_length());
        s.subseries[k].insert(s.subseries[k].end(), tail.begin(), tail.end());
        return 0;
      });
    });
  }

  // One-step forecasts from the true subseries history.
  const std::size_t span_len = sp.size - sp.fit_end;
  std::vector<std::vector<double>> per_sub(K, std::vector<double>(span_len));
  parallel_for(K, [&](std::size_t k) {
    detail::in_stage("forecast", static_cast<int>(k), [&] {
      for (std::size_t t = sp.fit_end; t < sp.size; ++t)
        per_sub[k][t - sp.fit_end] = s.forecasters[k].predict_next(std::span(s.subseries[k]).first(t));
      return 0;
    });
  });
  s.primary = fuse(per_sub);
  s.errors = residual_errors(std::span(s.ground).subspan(sp.fit_end), s.primary);

  s.corrector = detail::in_stage("residual_mlp", -1, [&] {
    LmParams lm = config.lm;
    return ResidualCorrector::fit(std::span(s.errors).first(sp.calibration_length()),
                                  config.mlp_lags, lm, &s.lm_result);
  });
  return s;
}

/// One-step corrected forecasts over the test span.
inline ForecastReport one_step_report(const PipelineState& s) {
  const Spans& sp = s.spans;
  ForecastReport r;
  r.test_start = sp.train_end;
  for (std::size_t t = sp.train_end; t < sp.size; ++t) {
    r.ground.push_back(s.ground[t]);
    r.primary.push_back(s.primary_at(t));
    r.residual_errors.push_back(s.error_at(t));
    r.forecast_errors.push_back(s.corrector.forecast(detail::errors_before(s, t), 1)[0]);
    r.baseline.push_back(s.ground[t - 1]);
  }
  r.corrected = correct(r.primary, r.forecast_errors);
  detail::in_stage("metrics", -1, [&] {
    r.metrics_primary = compute_metrics(r.ground, r.primary);
    r.metrics_corrected = compute_metrics(r.ground, r.corrected);
    r.baseline_metrics = compute_metrics(r.ground, r.baseline);
    return 0;
  });
  return r;
}

/// Rolling-origin evaluation: origins step through the test span with
/// stride `steps`; each origin forecasts `steps` values ahead with every
/// subseries rolled out autoregressively and the MLP rolling its own error
/// forecasts. Metrics pool all forecast values.
inline ErrorMetrics horizon_metrics(const PipelineState& s, std::size_t steps) {
  const Spans& sp = s.spans;
  if (steps < 1) throw ConfigError("horizon must be >= 1 step");
  if (steps > sp.test_length())
    throw DataError("horizon of " + std::to_string(steps) + " steps exceeds the test span of " +
                    std::to_string(sp.test_length()));
  std::vector<double> ground, corrected;
  for (std::size_t o = sp.train_end; o + steps <= sp.size; o += steps) {
    std::vector<std::vector<double>> parts(s.forecasters.size());
    parallel_for(parts.size(), [&](std::size_t k) {
      parts[k] = s.forecasters[k].forecast(std::span(s.subseries[k]).first(o), steps);
    });
    const auto primary = fuse(parts);
    const auto errs = s.corrector.forecast(detail::errors_before(s, o), steps);
    const auto c = correct(primary, errs);
    ground.insert(ground.end(), s.ground.begin() + static_cast<std::ptrdiff_t>(o),
                  s.ground.begin() + static_cast<std::ptrdiff_t>(o + steps));
    corrected.insert(corrected.end(), c.begin(), c.end());
  }
  return compute_metrics(ground, corrected);
}

inline std::vector<std::pair<std::string, ErrorMetrics>> horizon_eval(const PipelineState& s,
                                                                      const Horizons& h) {
  h.validate();
  std::vector<std::pair<std::string, ErrorMetrics>> out;
  const auto steps = h.steps();
  for (std::size_t i = 0; i < steps.size(); ++i)
    out.emplace_back(Horizons::names[i], detail::in_stage("horizon", -1, [&] {
                       return horizon_metrics(s, steps[i]);
                     }));
  return out;
}

inline ForecastReport run_pipeline(const PipelineConfig& config, const TimeSeries& data,
                                   PipelineState* state_out = nullptr,
                                   const NoiseBank* bank = nullptr) {
  PipelineState s = fit_pipeline(config, data, bank);
  ForecastReport r = one_step_report(s);
  if (config.evaluate_horizons) r.per_horizon = horizon_eval(s, config.horizons);
  if (state_out) *state_out = std::move(s);
  return r;
}

struct SweepRow {
  std::size_t imfs = 0;
  ErrorMetrics metrics;  // corrected one-step forecasts
};

/// Runs the pipeline once per IMF count with one shared noise bank.
inline std::vector<SweepRow> imf_sweep(const PipelineConfig& config, const TimeSeries& data,
                                       std::span<const std::size_t> counts) {
  if (counts.empty()) throw ConfigError("sweep: no IMF counts");
  for (std::size_t c : counts)
    if (c < 1 || c > 16) throw ConfigError("sweep: IMF counts must be within [1, 16]");
  config.validate();
  data.validate();
  const Spans sp = plan_spans(config, data.size());
  const std::size_t len = config.strict_causal ? sp.train_end : sp.size;
  const std::size_t most = *std::max_element(counts.begin(), counts.end());
  const NoiseBank bank(len, config.iceemdan.realizations, most, config.iceemdan.seed,
                       config.iceemdan.sift());
  PipelineConfig run = config;
  run.evaluate_horizons = false;
  std::vector<SweepRow> rows;
  for (std::size_t c : counts) {
    run.iceemdan.max_imfs = c;
    rows.push_back({c, run_pipeline(run, data, nullptr, &bank).metrics_corrected});
  }
  return rows;
}

/// Index of the row with the smallest MSE, if no other row ties it.
inline std::optional<std::size_t> unique_argmin(const std::vector<SweepRow>& rows) {
  if (rows.empty()) return std::nullopt;
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].metrics.mse < rows[best].metrics.mse) best = i;
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (i != best && rows[i].metrics.mse == rows[best].metrics.mse) return std::nullopt;
  return best;
}

}  // namespace windcast
