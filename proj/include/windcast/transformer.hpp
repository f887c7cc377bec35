#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "windcast/attention.hpp"
#include "windcast/error.hpp"
#include "windcast/rng.hpp"
#include "windcast/tensor_store.hpp"

namespace windcast {

enum class LayerNormMode {
  paper_global,  // statistics over the whole l x T block
  per_position,  // statistics per column
};

inline const char* to_string(LayerNormMode m) {
  return m == LayerNormMode::paper_global ? "paper_global" : "per_position";
}

inline LayerNormMode parse_layernorm_mode(const std::string& s) {
  if (s == "paper_global") return LayerNormMode::paper_global;
  if (s == "per_position") return LayerNormMode::per_position;
  throw ConfigError("unknown layernorm mode '" + s + "'");
}

struct TransformerConfig {
  std::size_t embed_dim = 32;
  std::size_t heads = 4;
  std::size_t stacks = 3;
  std::size_t ff_dim = 64;
  double dropout = 0.2;
  double learning_rate = 1e-3;
  std::size_t iterations = 10;
  std::size_t batch_size = 256;
  double max_grad_norm = 0.01;
  std::size_t encoder_len = 48;
  std::size_t decoder_len = 12;
  std::uint64_t seed = 0;
  LayerNormMode layernorm_mode = LayerNormMode::paper_global;
  double layernorm_eps = 1e-5;
  bool positional_encoding = true;

  void validate() const {
    if (embed_dim < 2 || embed_dim % 2 != 0)
      throw ConfigError("transformer: embed_dim must be even and >= 2");
    if (heads == 0 || embed_dim % heads != 0)
      throw ConfigError("transformer: heads must divide embed_dim");
    if (stacks == 0) throw ConfigError("transformer: stacks must be >= 1");
    if (ff_dim == 0) throw ConfigError("transformer: ff_dim must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0))
      throw ConfigError("transformer: dropout must be in [0, 1)");
    if (!(learning_rate >= 0.0)) throw ConfigError("transformer: learning_rate must be >= 0");
    if (batch_size == 0) throw ConfigError("transformer: batch_size must be >= 1");
    if (!(max_grad_norm > 0.0)) throw ConfigError("transformer: max_grad_norm must be > 0");
    if (encoder_len == 0 || decoder_len == 0)
      throw ConfigError("transformer: window lengths must be >= 1");
    if (!(layernorm_eps >= 0.0)) throw ConfigError("transformer: layernorm_eps must be >= 0");
  }
};

/// Add-and-normalize core without the learned affine part.
inline Matrix layer_norm(const Matrix& x, LayerNormMode mode, double eps) {
  return normalize(x, mode == LayerNormMode::paper_global ? NormScope::block : NormScope::column,
                   eps);
}

inline double gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
}

inline double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

/// One training/evaluation example: encoder context, teacher-forced decoder
/// inputs and the decoder targets.
struct Window {
  std::vector<double> encoder;
  std::vector<double> decoder_input;
  std::vector<double> target;
};

/// Every learned tensor of the encoder-decoder forecaster plus the fixed
/// position tables.
class TransformerModel {
 public:
  struct Attention {
    std::size_t query, key, value, merge;
  };
  struct Norm {
    std::size_t gain, bias;
  };
  struct FeedForward {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Attention attn;
    Norm norm1;
    FeedForward ff;
    Norm norm2;
  };
  struct DecoderLayer {
    Attention self_attn;
    Norm norm1;
    Attention cross_attn;
    Norm norm2;
    FeedForward ff;
    Norm norm3;
  };

  /// Layout only: weights zero, layer-norm gains one.
  explicit TransformerModel(const TransformerConfig& config) : config_(config) {
    config_.validate();
    const std::size_t l = config_.embed_dim, f = config_.ff_dim;
    embed_w_ = store_.add("embed.weight", l, 1);
    embed_b_ = store_.add("embed.bias", l, 1, TensorKind::bias);
    auto attention = [&](const std::string& p) {
      return Attention{store_.add(p + ".query", l, l), store_.add(p + ".key", l, l),
                       store_.add(p + ".value", l, l), store_.add(p + ".merge", l, l)};
    };
    auto norm = [&](const std::string& p) {
      return Norm{store_.add(p + ".gain", l, 1, TensorKind::gain),
                  store_.add(p + ".bias", l, 1, TensorKind::bias)};
    };
    auto feed_forward = [&](const std::string& p) {
      return FeedForward{store_.add(p + ".w1", f, l), store_.add(p + ".b1", f, 1, TensorKind::bias),
                         store_.add(p + ".w2", l, f), store_.add(p + ".b2", l, 1, TensorKind::bias)};
    };
    for (std::size_t s = 0; s < config_.stacks; ++s) {
      const std::string p = "encoder" + std::to_string(s);
      encoder_.push_back({attention(p + ".attn"), norm(p + ".norm1"), feed_forward(p + ".ff"),
                          norm(p + ".norm2")});
    }
    for (std::size_t s = 0; s < config_.stacks; ++s) {
      const std::string p = "decoder" + std::to_string(s);
      decoder_.push_back({attention(p + ".self_attn"), norm(p + ".norm1"),
                          attention(p + ".cross_attn"), norm(p + ".norm2"),
                          feed_forward(p + ".ff"), norm(p + ".norm3")});
    }
    out_w_ = store_.add("output.weight", 1, l);
    out_b_ = store_.add("output.bias", 1, 1, TensorKind::bias);
    for (const auto& e : store_.entries())
      if (e.kind == TensorKind::gain) store_[store_.find(e.name)].setOnes();
    pe_encoder_ = positional_encoding(config_.encoder_len, l);
    pe_decoder_ = positional_encoding(config_.decoder_len, l);
  }

  /// Weights uniform in +-1/sqrt(fan_in) from the config seed; biases zero.
  static TransformerModel initialized(const TransformerConfig& config) {
    TransformerModel m(config);
    Rng rng(derive_seed(config.seed, 0x7f4a));
    auto& store = m.store_;
    for (std::size_t i = 0; i < store.entries().size(); ++i) {
      const auto& e = store.entries()[i];
      if (e.kind != TensorKind::weight) continue;
      const double bound = 1.0 / std::sqrt(static_cast<double>(e.cols));
      auto t = store[i];
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        for (Eigen::Index r = 0; r < t.rows(); ++r) t(r, c) = rng.uniform(-bound, bound);
    }
    return m;
  }

  const TransformerConfig& config() const noexcept { return config_; }
  TensorStore& params() noexcept { return store_; }
  const TensorStore& params() const noexcept { return store_; }

  std::size_t embed_weight() const { return embed_w_; }
  std::size_t embed_bias() const { return embed_b_; }
  std::size_t output_weight() const { return out_w_; }
  std::size_t output_bias() const { return out_b_; }
  const std::vector<EncoderLayer>& encoder() const { return encoder_; }
  const std::vector<DecoderLayer>& decoder() const { return decoder_; }
  const Matrix& encoder_positions() const { return pe_encoder_; }
  const Matrix& decoder_positions() const { return pe_decoder_; }

  bool all_finite() const {
    for (double v : store_.data())
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  TransformerConfig config_;
  TensorStore store_;
  std::size_t embed_w_ = 0, embed_b_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
  Matrix pe_encoder_, pe_decoder_;
};

/// Statistics of one add-and-normalize step.
struct NormTrace {
  std::string label;
  std::vector<double> mean;      // per column (identical across a shared scope)
  std::vector<double> variance;  // per column
  Matrix normalized;
};

/// Post-softmax attention weights and normalization state of one forward
/// pass. `weights[i]` is Tk x Tq, one column per query.
struct AttentionTrace {
  std::vector<std::string> labels;
  std::vector<Matrix> weights;
  std::vector<NormTrace> norms;
};

namespace detail {

/// Inverted-dropout masks drawn from a seeded stream; disabled when rng is null.
struct Dropout {
  Rng* rng = nullptr;
  double rate = 0.0;

  bool active() const { return rng != nullptr && rate > 0.0; }

  Matrix mask(Eigen::Index rows, Eigen::Index cols) const {
    Matrix m(rows, cols);
    const double keep = 1.0 / (1.0 - rate);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng->uniform() < rate ? 0.0 : keep;
    return m;
  }
};

struct AttentionCache {
  Matrix xq, xkv, q, k, v, stacked;
  std::vector<Matrix> probs;  // pre-dropout
  std::vector<Matrix> masks;  // empty without dropout
};

struct FeedForwardCache {
  Matrix x, pre, act, mask;
};

struct AffineNormCache {
  NormCache norm;
};

struct EncoderCache {
  AttentionCache attn;
  AffineNormCache norm1;
  FeedForwardCache ff;
  AffineNormCache norm2;
};

struct DecoderCache {
  AttentionCache self_attn;
  AffineNormCache norm1;
  AttentionCache cross_attn;
  AffineNormCache norm2;
  FeedForwardCache ff;
  AffineNormCache norm3;
};

struct ForwardCache {
  Eigen::RowVectorXd enc_values, dec_values;
  std::vector<EncoderCache> encoder;
  std::vector<DecoderCache> decoder;
  Matrix memory;  // encoder output
  Matrix top;     // last decoder output
  Eigen::RowVectorXd predictions;
};

inline Matrix attention_forward(const TensorStore& p, const TransformerModel::Attention& a,
                                const Matrix& xq, const Matrix& xkv, std::size_t heads,
                                bool causal, double scale, const Dropout& drop,
                                AttentionCache& c) {
  const Eigen::Index d = xq.rows() / static_cast<Eigen::Index>(heads);
  c.xq = xq;
  c.xkv = xkv;
  c.q = p[a.query] * xq;
  c.k = p[a.key] * xkv;
  c.v = p[a.value] * xkv;
  c.stacked.resize(c.v.rows(), xq.cols());
  c.probs.clear();
  c.masks.clear();
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index r = static_cast<Eigen::Index>(h) * d;
    Matrix w = attention_weights(c.q.middleRows(r, d), c.k.middleRows(r, d), causal, scale);
    if (drop.active()) {
      c.masks.push_back(drop.mask(w.rows(), w.cols()));
      c.stacked.middleRows(r, d) = c.v.middleRows(r, d) * w.cwiseProduct(c.masks.back());
    } else {
      c.stacked.middleRows(r, d) = c.v.middleRows(r, d) * w;
    }
    c.probs.push_back(std::move(w));
  }
  return p[a.merge] * c.stacked;
}

/// Accumulates parameter gradients; adds input gradients to dxq / dxkv.
inline void attention_backward(const TensorStore& p, TensorStore& g,
                               const TransformerModel::Attention& a, const AttentionCache& c,
                               const Matrix& dout, std::size_t heads, double scale, Matrix& dxq,
                               Matrix& dxkv) {
  const Eigen::Index d = c.q.rows() / static_cast<Eigen::Index>(heads);
  g[a.merge] += dout * c.stacked.transpose();
  const Matrix dstacked = p[a.merge].transpose() * dout;
  Matrix dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index r = static_cast<Eigen::Index>(h) * d;
    const Matrix& w = c.probs[h];
    const Matrix dropped = c.masks.empty() ? w : Matrix(w.cwiseProduct(c.masks[h]));
    const auto dout_h = dstacked.middleRows(r, d);
    dv.middleRows(r, d) = dout_h * dropped.transpose();
    Matrix dw = c.v.middleRows(r, d).transpose() * dout_h;
    if (!c.masks.empty()) dw = dw.cwiseProduct(c.masks[h]);
    // Column-wise softmax backward; masked entries have w = 0 and drop out.
    Matrix dz(w.rows(), w.cols());
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double inner = w.col(j).dot(dw.col(j));
      dz.col(j) = w.col(j).cwiseProduct((dw.col(j).array() - inner).matrix());
    }
    dz *= scale;
    dq.middleRows(r, d) = c.k.middleRows(r, d) * dz;
    dk.middleRows(r, d) = c.q.middleRows(r, d) * dz.transpose();
  }
  g[a.query] += dq * c.xq.transpose();
  g[a.key] += dk * c.xkv.transpose();
  g[a.value] += dv * c.xkv.transpose();
  dxq += p[a.query].transpose() * dq;
  dxkv += p[a.key].transpose() * dk + p[a.value].transpose() * dv;
}

inline Matrix norm_forward(const TensorStore& p, const TransformerModel::Norm& n,
                           const Matrix& x, NormScope scope, double eps, AffineNormCache& c) {
  const Matrix z = normalize(x, scope, eps, &c.norm);
  return (z.array().colwise() * p[n.gain].col(0).array()).colwise() +
         p[n.bias].col(0).array();
}

inline Matrix norm_backward(const TensorStore& p, TensorStore& g, const TransformerModel::Norm& n,
                            const AffineNormCache& c, const Matrix& dy) {
  g[n.gain] += dy.cwiseProduct(c.norm.normalized).rowwise().sum();
  g[n.bias] += dy.rowwise().sum();
  const Matrix dz = dy.array().colwise() * p[n.gain].col(0).array();
  return normalize_backward(c.norm, dz);
}

inline Matrix ff_forward(const TensorStore& p, const TransformerModel::FeedForward& f,
                         const Matrix& x, const Dropout& drop, FeedForwardCache& c) {
  c.x = x;
  c.pre = (p[f.w1] * x).colwise() + p[f.b1].col(0);
  c.act = c.pre.unaryExpr([](double v) { return gelu(v); });
  if (drop.active()) {
    c.mask = drop.mask(c.act.rows(), c.act.cols());
    return (p[f.w2] * c.act.cwiseProduct(c.mask)).colwise() + p[f.b2].col(0);
  }
  c.mask.resize(0, 0);
  return (p[f.w2] * c.act).colwise() + p[f.b2].col(0);
}

inline Matrix ff_backward(const TensorStore& p, TensorStore& g,
                          const TransformerModel::FeedForward& f, const FeedForwardCache& c,
                          const Matrix& dy) {
  const bool masked = c.mask.size() > 0;
  const Matrix act = masked ? Matrix(c.act.cwiseProduct(c.mask)) : c.act;
  g[f.w2] += dy * act.transpose();
  g[f.b2] += dy.rowwise().sum();
  Matrix dact = p[f.w2].transpose() * dy;
  if (masked) dact = dact.cwiseProduct(c.mask);
  const Matrix dpre =
      dact.cwiseProduct(c.pre.unaryExpr([](double v) { return gelu_derivative(v); }));
  g[f.w1] += dpre * c.x.transpose();
  g[f.b1] += dpre.rowwise().sum();
  return p[f.w1].transpose() * dpre;
}

inline void require_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

inline Matrix embed_values(const TransformerModel& model, const Eigen::RowVectorXd& values,
                           const Matrix& positions) {
  const auto& p = model.params();
  Matrix x = p[model.embed_weight()].col(0) * values;
  x.colwise() += p[model.embed_bias()].col(0);
  if (model.config().positional_encoding) x += positions;
  return x;
}

inline Eigen::RowVectorXd to_row(std::span<const double> v) {
  Eigen::RowVectorXd r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

inline void run_forward(const TransformerModel& model, std::span<const double> enc,
                        std::span<const double> dec, const Dropout& drop, ForwardCache& c) {
  const auto& cfg = model.config();
  if (enc.size() != cfg.encoder_len)
    throw DataError("forward: encoder window has " + std::to_string(enc.size()) +
                    " values, expected " + std::to_string(cfg.encoder_len));
  if (dec.size() != cfg.decoder_len)
    throw DataError("forward: decoder window has " + std::to_string(dec.size()) +
                    " values, expected " + std::to_string(cfg.decoder_len));
  const auto& p = model.params();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));
  const double eps = cfg.layernorm_eps;
  const bool global = cfg.layernorm_mode == LayerNormMode::paper_global;
  const NormScope enc_scope = global ? NormScope::block : NormScope::column;
  // Global statistics over the decoder block would let later positions leak
  // into earlier ones; the decoder uses the running (prefix) block instead.
  const NormScope dec_scope = global ? NormScope::prefix : NormScope::column;

  c.enc_values = to_row(enc);
  c.dec_values = to_row(dec);
  Matrix x = embed_values(model, c.enc_values, model.encoder_positions());
  c.encoder.resize(cfg.stacks);
  for (std::size_t s = 0; s < cfg.stacks; ++s) {
    const auto& layer = model.encoder()[s];
    auto& lc = c.encoder[s];
    const Matrix a = attention_forward(p, layer.attn, x, x, cfg.heads, false, scale, drop, lc.attn);
    const Matrix x1 = norm_forward(p, layer.norm1, x + a, enc_scope, eps, lc.norm1);
    const Matrix f = ff_forward(p, layer.ff, x1, drop, lc.ff);
    x = norm_forward(p, layer.norm2, x1 + f, enc_scope, eps, lc.norm2);
    require_finite(x, "encoder layer " + std::to_string(s));
  }
  c.memory = x;

  Matrix y = embed_values(model, c.dec_values, model.decoder_positions());
  c.decoder.resize(cfg.stacks);
  for (std::size_t s = 0; s < cfg.stacks; ++s) {
    const auto& layer = model.decoder()[s];
    auto& lc = c.decoder[s];
    const Matrix a1 =
        attention_forward(p, layer.self_attn, y, y, cfg.heads, true, scale, drop, lc.self_attn);
    const Matrix y1 = norm_forward(p, layer.norm1, y + a1, dec_scope, eps, lc.norm1);
    const Matrix a2 = attention_forward(p, layer.cross_attn, y1, c.memory, cfg.heads, false,
                                        scale, drop, lc.cross_attn);
    const Matrix y2 = norm_forward(p, layer.norm2, y1 + a2, dec_scope, eps, lc.norm2);
    const Matrix f = ff_forward(p, layer.ff, y2, drop, lc.ff);
    y = norm_forward(p, layer.norm3, y2 + f, dec_scope, eps, lc.norm3);
    require_finite(y, "decoder layer " + std::to_string(s));
  }
  c.top = y;
  c.predictions = (p[model.output_weight()] * y).row(0).array() + p[model.output_bias()](0, 0);
  if (!c.predictions.allFinite()) throw NumericError("non-finite activation in output layer");
}

/// Backpropagates d(loss)/d(predictions) through a cached forward pass.
inline void run_backward(const TransformerModel& model, const ForwardCache& c,
                         const Eigen::RowVectorXd& dpred, TensorStore& g) {
  const auto& cfg = model.config();
  const auto& p = model.params();
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.embed_dim));

  g[model.output_weight()] += dpred * c.top.transpose();
  g[model.output_bias()](0, 0) += dpred.sum();
  Matrix dy = p[model.output_weight()].transpose() * dpred;
  Matrix dmemory = Matrix::Zero(c.memory.rows(), c.memory.cols());

  for (std::size_t s = cfg.stacks; s-- > 0;) {
    const auto& layer = model.decoder()[s];
    const auto& lc = c.decoder[s];
    const Matrix dsum3 = norm_backward(p, g, layer.norm3, lc.norm3, dy);
    Matrix dy2 = dsum3 + ff_backward(p, g, layer.ff, lc.ff, dsum3);
    const Matrix dsum2 = norm_backward(p, g, layer.norm2, lc.norm2, dy2);
    Matrix dy1 = dsum2;
    attention_backward(p, g, layer.cross_attn, lc.cross_attn, dsum2, cfg.heads, scale, dy1,
                       dmemory);
    const Matrix dsum1 = norm_backward(p, g, layer.norm1, lc.norm1, dy1);
    Matrix dy0 = dsum1;
    attention_backward(p, g, layer.self_attn, lc.self_attn, dsum1, cfg.heads, scale, dy0, dy0);
    dy = std::move(dy0);
  }

  Matrix dx = dmemory;
  for (std::size_t s = cfg.stacks; s-- > 0;) {
    const auto& layer = model.encoder()[s];
    const auto& lc = c.encoder[s];
    const Matrix dsum2 = norm_backward(p, g, layer.norm2, lc.norm2, dx);
    Matrix dx1 = dsum2 + ff_backward(p, g, layer.ff, lc.ff, dsum2);
    const Matrix dsum1 = norm_backward(p, g, layer.norm1, lc.norm1, dx1);
    Matrix dx0 = dsum1;
    attention_backward(p, g, layer.attn, lc.attn, dsum1, cfg.heads, scale, dx0, dx0);
    dx = std::move(dx0);
  }

  // Embedding is shared by encoder and decoder inputs.
  g[model.embed_weight()] += dx * c.enc_values.transpose() + dy * c.dec_values.transpose();
  g[model.embed_bias()] += dx.rowwise().sum() + dy.rowwise().sum();
}

}  // namespace detail

enum class WindowRole { encoder, decoder };

/// Value embedding plus position table for one window (l x T).
inline Matrix embed(const TransformerModel& model, std::span<const double> window,
                    WindowRole role) {
  const auto& cfg = model.config();
  const std::size_t expected = role == WindowRole::encoder ? cfg.encoder_len : cfg.decoder_len;
  if (window.size() != expected)
    throw DataError("embed: window has " + std::to_string(window.size()) + " values, expected " +
                    std::to_string(expected));
  return detail::embed_values(model, detail::to_row(window),
                              role == WindowRole::encoder ? model.encoder_positions()
                                                          : model.decoder_positions());
}

struct ForwardResult {
  std::vector<double> predictions;  // one per decoder position
  AttentionTrace trace;
};

/// Runs the encoder-decoder on one window. Dropout is applied only in
/// train_mode, with masks drawn from `dropout_seed`.
inline ForwardResult forward(const TransformerModel& model, std::span<const double> encoder_window,
                             std::span<const double> decoder_window, bool train_mode = false,
                             std::uint64_t dropout_seed = 0) {
  Rng rng(dropout_seed);
  detail::Dropout drop{train_mode ? &rng : nullptr, model.config().dropout};
  detail::ForwardCache c;
  detail::run_forward(model, encoder_window, decoder_window, drop, c);

  ForwardResult r;
  r.predictions.assign(c.predictions.data(), c.predictions.data() + c.predictions.size());
  auto add_attention = [&](const std::string& label, const detail::AttentionCache& a) {
    for (std::size_t h = 0; h < a.probs.size(); ++h) {
      r.trace.labels.push_back(label + ".head" + std::to_string(h));
      r.trace.weights.push_back(a.probs[h]);
    }
  };
  auto add_norm = [&](const std::string& label, const detail::AffineNormCache& n) {
    r.trace.norms.push_back({label, n.norm.mean, n.norm.variance, n.norm.normalized});
  };
  for (std::size_t s = 0; s < c.encoder.size(); ++s) {
    const std::string p = "encoder" + std::to_string(s);
    add_attention(p + ".attn", c.encoder[s].attn);
    add_norm(p + ".norm1", c.encoder[s].norm1);
    add_norm(p + ".norm2", c.encoder[s].norm2);
  }
  for (std::size_t s = 0; s < c.decoder.size(); ++s) {
    const std::string p = "decoder" + std::to_string(s);
    add_attention(p + ".self_attn", c.decoder[s].self_attn);
    add_attention(p + ".cross_attn", c.decoder[s].cross_attn);
    add_norm(p + ".norm1", c.decoder[s].norm1);
    add_norm(p + ".norm2", c.decoder[s].norm2);
    add_norm(p + ".norm3", c.decoder[s].norm3);
  }
  return r;
}

struct LossAndGradients {
  double loss = 0.0;
  TensorStore gradients;
};

/// Mean squared error over every decoder position of every window, with
/// exact gradients for all parameters. `dropout` enables train-mode masks.
inline LossAndGradients loss_and_gradients(const TransformerModel& model,
                                           std::span<const Window> batch,
                                           Rng* dropout = nullptr) {
  if (batch.empty()) throw DataError("loss_and_gradients: empty batch");
  detail::Dropout drop{dropout, model.config().dropout};
  LossAndGradients out{0.0, model.params().zeros_like()};
  const double count =
      static_cast<double>(batch.size()) * static_cast<double>(model.config().decoder_len);
  detail::ForwardCache c;
  for (const Window& w : batch) {
    if (w.target.size() != model.config().decoder_len)
      throw DataError("loss_and_gradients: target length mismatch");
    detail::run_forward(model, w.encoder, w.decoder_input, drop, c);
    const Eigen::RowVectorXd residual = c.predictions - detail::to_row(w.target);
    out.loss += residual.squaredNorm();
    detail::run_backward(model, c, (2.0 / count) * residual, out.gradients);
  }
  out.loss /= count;
  return out;
}

/// Loss only, in evaluation mode.
inline double evaluate_loss(const TransformerModel& model, std::span<const Window> batch) {
  if (batch.empty()) throw DataError("evaluate_loss: empty batch");
  double total = 0.0;
  detail::ForwardCache c;
  for (const Window& w : batch) {
    detail::run_forward(model, w.encoder, w.decoder_input, {}, c);
    total += (c.predictions - detail::to_row(w.target)).squaredNorm();
  }
  return total / (static_cast<double>(batch.size()) *
                  static_cast<double>(model.config().decoder_len));
}

}  // namespace windcast
