#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "windcast/error.hpp"

namespace windcast {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sinusoidal position table, one column per position (l x length):
/// row 2i holds sin(pos / 10000^(2i/l)) and row 2i+1 the matching cosine.
inline Matrix positional_encoding(std::size_t length, std::size_t l) {
  if (length < 1) throw ConfigError("positional_encoding: length must be >= 1");
  if (l < 2 || l % 2 != 0)
    throw ConfigError("positional_encoding: embedding width must be even and >= 2");
  Matrix pe(l, length);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < l / 2; ++i) {
      const double rate =
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(l));
      const double angle = static_cast<double>(pos) / rate;
      pe(2 * i, pos) = std::sin(angle);
      pe(2 * i + 1, pos) = std::cos(angle);
    }
  }
  return pe;
}

/// Which entries share normalization statistics.
enum class NormScope {
  block,   // every entry of the l x T block
  prefix,  // column t uses columns 0..t (causal form of `block`)
  column,  // each column on its own
};

/// Normalization state kept for the backward pass. `mean[t]`/`stddev[t]` are
/// the statistics applied to column t, gathered over columns lo[t]..hi[t].
struct NormCache {
  Matrix input;
  Matrix normalized;
  std::vector<double> mean, variance, stddev;
  std::vector<Eigen::Index> lo, hi;
};

/// (x - mean) / sqrt(var + eps) with population statistics per scope.
inline Matrix normalize(const Matrix& x, NormScope scope, double eps, NormCache* cache = nullptr) {
  const Eigen::Index rows = x.rows(), cols = x.cols();
  std::vector<double> col_mean(static_cast<std::size_t>(cols)),
      col_m2(static_cast<std::size_t>(cols));
  for (Eigen::Index t = 0; t < cols; ++t) {
    const double mu = x.col(t).mean();
    col_mean[t] = mu;
    col_m2[t] = (x.col(t).array() - mu).square().sum();
  }

  NormCache local;
  NormCache& c = cache ? *cache : local;
  c.mean.assign(cols, 0.0);
  c.variance.assign(cols, 0.0);
  c.stddev.assign(cols, 0.0);
  c.lo.assign(cols, 0);
  c.hi.assign(cols, 0);

  // Chan et al. pairwise merge of per-column (count, mean, M2).
  double n_acc = 0.0, mean_acc = 0.0, m2_acc = 0.0;
  auto merge = [&](Eigen::Index t) {
    const double nb = static_cast<double>(rows);
    const double delta = col_mean[t] - mean_acc;
    const double n_new = n_acc + nb;
    mean_acc += delta * nb / n_new;
    m2_acc += col_m2[t] + delta * delta * n_acc * nb / n_new;
    n_acc = n_new;
  };
  auto store = [&](Eigen::Index t, Eigen::Index lo, Eigen::Index hi) {
    c.mean[t] = mean_acc;
    c.variance[t] = m2_acc / n_acc;
    c.stddev[t] = std::sqrt(c.variance[t] + eps);
    c.lo[t] = lo;
    c.hi[t] = hi;
  };

  switch (scope) {
    case NormScope::block:
      for (Eigen::Index t = 0; t < cols; ++t) merge(t);
      for (Eigen::Index t = 0; t < cols; ++t) store(t, 0, cols - 1);
      break;
    case NormScope::prefix:
      for (Eigen::Index t = 0; t < cols; ++t) {
        merge(t);
        store(t, 0, t);
      }
      break;
    case NormScope::column:
      for (Eigen::Index t = 0; t < cols; ++t) {
        n_acc = mean_acc = m2_acc = 0.0;
        merge(t);
        store(t, t, t);
      }
      break;
  }

  Matrix z(rows, cols);
  for (Eigen::Index t = 0; t < cols; ++t)
    z.col(t) = (x.col(t).array() - c.mean[t]) / c.stddev[t];
  if (cache) {
    c.input = x;
    c.normalized = z;
  }
  return z;
}

/// Gradient of normalize() given the gradient of its output.
inline Matrix normalize_backward(const NormCache& c, const Matrix& grad_z) {
  const Eigen::Index rows = grad_z.rows(), cols = grad_z.cols();
  Matrix dx(rows, cols);
  // Each output column t feeds back into every input column of its range
  // with -(a_t + b_t * x); spread those ranges with difference arrays.
  std::vector<double> diff_a(cols + 1, 0.0), diff_b(cols + 1, 0.0);
  for (Eigen::Index t = 0; t < cols; ++t) {
    const double s = c.stddev[t];
    const double count = static_cast<double>(rows * (c.hi[t] - c.lo[t] + 1));
    const double g_sum = grad_z.col(t).sum();
    const double gz_sum = grad_z.col(t).dot(c.normalized.col(t));
    const double a = g_sum / (count * s) - gz_sum * c.mean[t] / (count * s * s);
    const double b = gz_sum / (count * s * s);
    diff_a[c.lo[t]] += a;
    diff_a[c.hi[t] + 1] -= a;
    diff_b[c.lo[t]] += b;
    diff_b[c.hi[t] + 1] -= b;
    dx.col(t) = grad_z.col(t) / s;
  }
  double a_run = 0.0, b_run = 0.0;
  for (Eigen::Index j = 0; j < cols; ++j) {
    a_run += diff_a[j];
    b_run += diff_b[j];
    dx.col(j).array() -= a_run + b_run * c.input.col(j).array();
  }
  return dx;
}

/// Result of one attention call: output columns and post-softmax weights.
struct AttentionResult {
  Matrix output;   // dv x Tq
  Matrix weights;  // Tk x Tq, each column sums to 1
};

/// Column-wise softmax of key^T query * scale. With `causal`, key positions
/// after the query position get weight exactly 0.
inline Matrix attention_weights(const Matrix& q, const Matrix& k, bool causal, double scale) {
  Matrix z = (k.transpose() * q) * scale;
  const Eigen::Index tk = z.rows(), tq = z.cols();
  Matrix w(tk, tq);
  for (Eigen::Index j = 0; j < tq; ++j) {
    const Eigen::Index visible = causal ? std::min(j + 1, tk) : tk;
    const double peak = z.col(j).head(visible).maxCoeff();
    double total = 0.0;
    for (Eigen::Index i = 0; i < visible; ++i) {
      w(i, j) = std::exp(z(i, j) - peak);
      total += w(i, j);
    }
    for (Eigen::Index i = 0; i < visible; ++i) w(i, j) /= total;
    for (Eigen::Index i = visible; i < tk; ++i) w(i, j) = 0.0;
  }
  return w;
}

/// Scaled dot-product attention in column-token form:
/// Z = K^T Q / sqrt(l), SW = softmax over keys per query, O = V SW.
inline AttentionResult scaled_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                        bool causal, std::size_t l) {
  if (q.rows() != k.rows()) throw DataError("scaled_attention: query/key width mismatch");
  if (k.cols() != v.cols()) throw DataError("scaled_attention: key/value length mismatch");
  if (l == 0) throw ConfigError("scaled_attention: l must be positive");
  AttentionResult r;
  r.weights = attention_weights(q, k, causal, 1.0 / std::sqrt(static_cast<double>(l)));
  r.output = v * r.weights;
  return r;
}

/// Projection matrices of one multi-head block. Rows [h*d, (h+1)*d) of
/// query/key/value belong to head h; `merge` maps the stacked head outputs
/// back to the model width.
struct HeadWeights {
  Matrix query, key, value, merge;
};

/// Multi-head attention: per-head scaled_attention on row slices of the
/// projections, outputs stacked, then merged by a bias-free projection.
inline Matrix multi_head(const Matrix& xq, const Matrix& xkv, const HeadWeights& w,
                         std::size_t heads, bool causal, std::size_t l,
                         std::vector<Matrix>* weights_out = nullptr) {
  if (heads == 0 || w.query.rows() % static_cast<Eigen::Index>(heads) != 0)
    throw ConfigError("multi_head: head count must divide the projection width");
  if (w.query.cols() != xq.rows() || w.key.cols() != xkv.rows() ||
      w.value.cols() != xkv.rows() || w.merge.cols() != w.value.rows() ||
      w.query.rows() != w.key.rows())
    throw DataError("multi_head: weight shapes do not match inputs");
  const Eigen::Index d = w.query.rows() / static_cast<Eigen::Index>(heads);
  const Eigen::Index dv = w.value.rows() / static_cast<Eigen::Index>(heads);
  const Matrix q = w.query * xq, k = w.key * xkv, v = w.value * xkv;
  Matrix stacked(w.value.rows(), xq.cols());
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index r = static_cast<Eigen::Index>(h);
    auto res = scaled_attention(q.middleRows(r * d, d), k.middleRows(r * d, d),
                                v.middleRows(r * dv, dv), causal, l);
    stacked.middleRows(r * dv, dv) = res.output;
    if (weights_out) weights_out->push_back(std::move(res.weights));
  }
  return w.merge * stacked;
}

}  // namespace windcast
