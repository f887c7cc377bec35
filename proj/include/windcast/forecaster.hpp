#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "windcast/archive.hpp"
#include "windcast/error.hpp"
#include "windcast/rng.hpp"
#include "windcast/series.hpp"
#include "windcast/transformer.hpp"

namespace windcast {

/// Number of stride-1 windows a series of length n yields.
inline std::size_t window_count(std::size_t n, std::size_t encoder_len, std::size_t decoder_len) {
  return n >= encoder_len + decoder_len ? n - encoder_len - decoder_len + 1 : 0;
}

/// Teacher-forced training windows. For origin o the encoder sees
/// s[o-E, o), the decoder is fed s[o-1, o+D-1) and predicts s[o, o+D).
inline std::vector<Window> make_windows(std::span<const double> series, std::size_t encoder_len,
                                        std::size_t decoder_len) {
  const std::size_t count = window_count(series.size(), encoder_len, decoder_len);
  if (count == 0)
    throw DataError("series of length " + std::to_string(series.size()) +
                    " is too short for encoder " + std::to_string(encoder_len) + " + decoder " +
                    std::to_string(decoder_len));
  std::vector<Window> out(count);
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t o = w + encoder_len;
    out[w].encoder.assign(series.begin() + (o - encoder_len), series.begin() + o);
    out[w].decoder_input.assign(series.begin() + (o - 1), series.begin() + (o + decoder_len - 1));
    out[w].target.assign(series.begin() + o, series.begin() + (o + decoder_len));
  }
  return out;
}

/// Scales `g` so its global L2 norm is at most `max_norm`; returns the norm
/// before clipping.
inline double clip_global_norm(std::vector<double>& g, double max_norm) {
  double sq = 0.0;
  for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (double& v : g) v *= f;
  }
  return norm;
}

struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (m.empty()) {
      m.assign(params.size(), 0.0);
      v.assign(params.size(), 0.0);
    }
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

struct TrainReport {
  std::vector<double> loss;       // minibatch loss before each step
  std::vector<double> grad_norm;  // before clipping
};

/// Adam on minibatches of stride-1 windows of `series` (already scaled).
/// One iteration is one optimizer step; windows are reshuffled each pass.
inline TrainReport train(TransformerModel& model, std::span<const double> series) {
  const auto& cfg = model.config();
  const auto windows = make_windows(series, cfg.encoder_len, cfg.decoder_len);
  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  const std::size_t batch = std::min(cfg.batch_size, windows.size());

  std::vector<std::size_t> order(windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  auto reshuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next() % i]);
    cursor = 0;
  };

  Adam adam;
  TrainReport report;
  std::vector<Window> minibatch(batch);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) reshuffle();
      minibatch[b] = windows[order[cursor++]];
    }
    auto lg = loss_and_gradients(model, minibatch, &dropout_rng);
    report.loss.push_back(lg.loss);
    report.grad_norm.push_back(clip_global_norm(lg.gradients.data(), cfg.max_grad_norm));
    adam.step(model.params().data(), lg.gradients.data(), cfg.learning_rate);
    if (!model.all_finite())
      throw NumericError("training diverged at iteration " + std::to_string(it + 1));
  }
  return report;
}

/// Smallest history a rollout can start from.
inline std::size_t min_history(const TransformerConfig& cfg) {
  return cfg.encoder_len + cfg.decoder_len - 1;
}

/// Predicts the value following `context`, which must hold at least
/// min_history values; the prediction comes from the last decoder position.
inline double predict_next(const TransformerModel& model, std::span<const double> context) {
  const auto& cfg = model.config();
  const std::size_t t = context.size();
  if (t < min_history(cfg))
    throw DataError("forecast needs at least " + std::to_string(min_history(cfg)) +
                    " history values, got " + std::to_string(t));
  const std::size_t o = t - cfg.decoder_len + 1;
  const auto enc = context.subspan(o - cfg.encoder_len, cfg.encoder_len);
  const auto dec = context.subspan(t - cfg.decoder_len, cfg.decoder_len);
  return forward(model, enc, dec).predictions.back();
}

/// Autoregressive rollout: each prediction is appended to the context for
/// the next step.
inline std::vector<double> forecast_subseries(const TransformerModel& model,
                                              std::span<const double> history, std::size_t steps) {
  if (steps < 1) throw DataError("forecast: steps must be >= 1");
  const std::size_t keep = min_history(model.config());
  if (history.size() < keep)
    throw DataError("forecast needs at least " + std::to_string(keep) + " history values, got " +
                    std::to_string(history.size()));
  std::vector<double> context(history.end() - static_cast<std::ptrdiff_t>(keep), history.end());
  std::vector<double> out;
  out.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double y = predict_next(model, context);
    if (!std::isfinite(y)) throw NumericError("forecast produced a non-finite value");
    out.push_back(y);
    context.erase(context.begin());
    context.push_back(y);
  }
  return out;
}

/// Forecaster for one subseries in its original units: min-max scaling
/// fitted on the training values wrapped around a transformer. A subseries
/// that is constant over its training values cannot be scaled and is
/// forecast by persistence instead.
class SubseriesForecaster {
 public:
  SubseriesForecaster() = default;

  static SubseriesForecaster fit(std::span<const double> training, const TransformerConfig& cfg,
                                 TrainReport* report = nullptr) {
    if (training.empty()) throw DataError("subseries training span is empty");
    require_finite(training, "subseries");
    SubseriesForecaster f;
    f.config_ = cfg;
    const auto [lo, hi] = std::minmax_element(training.begin(), training.end());
    if (*lo == *hi) return f;
    f.scale_ = fit_scale(training);
    f.model_ = std::make_shared<TransformerModel>(TransformerModel::initialized(cfg));
    const auto scaled = apply_scale(training, f.scale_);
    auto r = train(*f.model_, scaled);
    if (report) *report = std::move(r);
    return f;
  }

  static SubseriesForecaster from_parts(TransformerModel model, ScaleParams scale) {
    SubseriesForecaster f;
    f.config_ = model.config();
    f.scale_ = scale;
    f.model_ = std::make_shared<TransformerModel>(std::move(model));
    return f;
  }

  static SubseriesForecaster persistence(const TransformerConfig& cfg) {
    SubseriesForecaster f;
    f.config_ = cfg;
    return f;
  }

  bool is_persistence() const noexcept { return model_ == nullptr; }
  const TransformerModel* model() const noexcept { return model_.get(); }
  const ScaleParams& scale() const noexcept { return scale_; }
  const TransformerConfig& config() const noexcept { return config_; }

  std::size_t min_history() const {
    return is_persistence() ? 1 : windcast::min_history(config_);
  }

  std::vector<double> forecast(std::span<const double> history, std::size_t steps) const {
    if (history.size() < min_history())
      throw DataError("forecast needs at least " + std::to_string(min_history()) +
                      " history values, got " + std::to_string(history.size()));
    if (is_persistence()) return std::vector<double>(steps, history.back());
    const auto tail = history.subspan(history.size() - min_history());
    return invert_scale(forecast_subseries(*model_, apply_scale(tail, scale_), steps), scale_);
  }

  double predict_next(std::span<const double> history) const { return forecast(history, 1)[0]; }

 private:
  TransformerConfig config_;
  ScaleParams scale_;
  std::shared_ptr<TransformerModel> model_;
};

inline void write_settings(Archive& a, const TransformerConfig& c) {
  auto& s = a.settings;
  s["embed_dim"] = std::to_string(c.embed_dim);
  s["heads"] = std::to_string(c.heads);
  s["stacks"] = std::to_string(c.stacks);
  s["ff_dim"] = std::to_string(c.ff_dim);
  s["dropout"] = hex_double(c.dropout);
  s["learning_rate"] = hex_double(c.learning_rate);
  s["iterations"] = std::to_string(c.iterations);
  s["batch_size"] = std::to_string(c.batch_size);
  s["max_grad_norm"] = hex_double(c.max_grad_norm);
  s["encoder_len"] = std::to_string(c.encoder_len);
  s["decoder_len"] = std::to_string(c.decoder_len);
  s["seed"] = std::to_string(c.seed);
  s["layernorm_mode"] = to_string(c.layernorm_mode);
  s["layernorm_eps"] = hex_double(c.layernorm_eps);
  s["positional_encoding"] = c.positional_encoding ? "1" : "0";
}

inline TransformerConfig read_settings(const Archive& a) {
  TransformerConfig c;
  auto count = [&](const char* k) { return static_cast<std::size_t>(std::stoull(a.get(k))); };
  c.embed_dim = count("embed_dim");
  c.heads = count("heads");
  c.stacks = count("stacks");
  c.ff_dim = count("ff_dim");
  c.dropout = parse_hex_double(a.get("dropout"));
  c.learning_rate = parse_hex_double(a.get("learning_rate"));
  c.iterations = count("iterations");
  c.batch_size = count("batch_size");
  c.max_grad_norm = parse_hex_double(a.get("max_grad_norm"));
  c.encoder_len = count("encoder_len");
  c.decoder_len = count("decoder_len");
  c.seed = std::stoull(a.get("seed"));
  c.layernorm_mode = parse_layernorm_mode(a.get("layernorm_mode"));
  c.layernorm_eps = parse_hex_double(a.get("layernorm_eps"));
  c.positional_encoding = a.get("positional_encoding") == "1";
  return c;
}

inline Archive to_archive(const TransformerModel& model) {
  Archive a;
  a.type = "transformer";
  write_settings(a, model.config());
  a.add_store(model.params());
  return a;
}

inline TransformerModel transformer_from_archive(const Archive& a) {
  if (a.type != "transformer")
    throw DataError("archive holds a '" + a.type + "', expected transformer");
  TransformerModel m(read_settings(a));
  a.fill_store(m.params());
  return m;
}

/// Transformer plus its scaling, or a persistence marker.
inline Archive to_archive(const SubseriesForecaster& f) {
  Archive a;
  if (f.is_persistence()) {
    a.type = "persistence";
    write_settings(a, f.config());
    return a;
  }
  a = to_archive(*f.model());
  a.settings["scale.min"] = hex_double(f.scale().min);
  a.settings["scale.max"] = hex_double(f.scale().max);
  a.settings["scale.lo"] = hex_double(f.scale().lo);
  a.settings["scale.hi"] = hex_double(f.scale().hi);
  return a;
}

inline SubseriesForecaster forecaster_from_archive(const Archive& a) {
  if (a.type == "persistence") return SubseriesForecaster::persistence(read_settings(a));
  ScaleParams s{parse_hex_double(a.get("scale.min")), parse_hex_double(a.get("scale.max")),
                parse_hex_double(a.get("scale.lo")), parse_hex_double(a.get("scale.hi"))};
  return SubseriesForecaster::from_parts(transformer_from_archive(a), s);
}

}  // namespace windcast
