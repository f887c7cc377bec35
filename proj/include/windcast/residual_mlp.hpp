#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "windcast/archive.hpp"
#include "windcast/error.hpp"
#include "windcast/rng.hpp"
#include "windcast/series.hpp"

namespace windcast {

/// y = tanh(sum_h tanh(x . w_h + b_h) * v_h + c) with two hidden units.
///
/// Parameters live in one vector: w_0 (lags), w_1 (lags), b_0, b_1, v_0, v_1, c.
struct ResidualMlp {
  static constexpr std::size_t hidden = 2;

  std::size_t lags = 6;
  std::vector<double> params;

  ResidualMlp() : ResidualMlp(6) {}
  explicit ResidualMlp(std::size_t lag_count)
      : lags(lag_count), params(parameter_count(lag_count), 0.0) {
    if (lag_count < 1) throw ConfigError("mlp: lags must be >= 1");
  }

  static std::size_t parameter_count(std::size_t lags) { return hidden * lags + 2 * hidden + 1; }

  double& weight(std::size_t h, std::size_t i) { return params[h * lags + i]; }
  double weight(std::size_t h, std::size_t i) const { return params[h * lags + i]; }
  double& hidden_bias(std::size_t h) { return params[hidden * lags + h]; }
  double hidden_bias(std::size_t h) const { return params[hidden * lags + h]; }
  double& output_weight(std::size_t h) { return params[hidden * lags + hidden + h]; }
  double output_weight(std::size_t h) const { return params[hidden * lags + hidden + h]; }
  double& output_bias() { return params.back(); }
  double output_bias() const { return params.back(); }

  /// Weights uniform in [-0.5, 0.5].
  static ResidualMlp random(std::size_t lags, std::uint64_t seed) {
    ResidualMlp net(lags);
    Rng rng(derive_seed(seed, 0x31f));
    for (double& p : net.params) p = rng.uniform(-0.5, 0.5);
    return net;
  }

  bool all_finite() const {
    for (double p : params)
      if (!std::isfinite(p)) return false;
    return true;
  }
};

inline double mlp_forward(const ResidualMlp& net, std::span<const double> x) {
  if (x.size() != net.lags)
    throw DataError("mlp: input has " + std::to_string(x.size()) + " values, expected " +
                    std::to_string(net.lags));
  double s = net.output_bias();
  for (std::size_t h = 0; h < ResidualMlp::hidden; ++h) {
    double a = net.hidden_bias(h);
    for (std::size_t i = 0; i < net.lags; ++i) a += net.weight(h, i) * x[i];
    s += std::tanh(a) * net.output_weight(h);
  }
  return std::tanh(s);
}

/// Training samples: one row of lagged inputs per target.
struct LagSamples {
  Eigen::MatrixXd inputs;  // n x lags
  Eigen::VectorXd targets;

  std::size_t size() const { return static_cast<std::size_t>(targets.size()); }
};

/// Sample k predicts x[lags + k] from x[k .. k + lags).
inline LagSamples make_lag_samples(std::span<const double> x, std::size_t lags) {
  if (x.size() <= lags)
    throw DataError("mlp: need more than " + std::to_string(lags) + " values to form samples, got " +
                    std::to_string(x.size()));
  const std::size_t n = x.size() - lags;
  LagSamples s{Eigen::MatrixXd(n, lags), Eigen::VectorXd(n)};
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < lags; ++i)
      s.inputs(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = x[k + i];
    s.targets(static_cast<Eigen::Index>(k)) = x[k + lags];
  }
  return s;
}

inline Eigen::VectorXd mlp_predict(const ResidualMlp& net, const Eigen::MatrixXd& inputs) {
  Eigen::VectorXd out(inputs.rows());
  std::vector<double> row(net.lags);
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    for (std::size_t i = 0; i < net.lags; ++i) row[i] = inputs(k, static_cast<Eigen::Index>(i));
    out(k) = mlp_forward(net, row);
  }
  return out;
}

/// d(prediction_k)/d(param_p) for every sample row.
inline Eigen::MatrixXd jacobian(const ResidualMlp& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw DataError("mlp: jacobian of an empty batch");
  if (static_cast<std::size_t>(inputs.cols()) != net.lags)
    throw DataError("mlp: jacobian input width does not match lags");
  const std::size_t L = net.lags, H = ResidualMlp::hidden;
  Eigen::MatrixXd J(inputs.rows(), static_cast<Eigen::Index>(net.params.size()));
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    double act[H];
    double s = net.output_bias();
    for (std::size_t h = 0; h < H; ++h) {
      double a = net.hidden_bias(h);
      for (std::size_t i = 0; i < L; ++i) a += net.weight(h, i) * inputs(k, static_cast<Eigen::Index>(i));
      act[h] = std::tanh(a);
      s += act[h] * net.output_weight(h);
    }
    const double y = std::tanh(s);
    const double dy = 1.0 - y * y;
    for (std::size_t h = 0; h < H; ++h) {
      const double da = dy * net.output_weight(h) * (1.0 - act[h] * act[h]);
      for (std::size_t i = 0; i < L; ++i)
        J(k, static_cast<Eigen::Index>(h * L + i)) = da * inputs(k, static_cast<Eigen::Index>(i));
      J(k, static_cast<Eigen::Index>(H * L + h)) = da;
      J(k, static_cast<Eigen::Index>(H * L + H + h)) = dy * act[h];
    }
    J(k, static_cast<Eigen::Index>(H * L + 2 * H)) = dy;
  }
  return J;
}

struct LmParams {
  std::size_t max_iters = 1000;
  double initial_damping = 1e-2;
  double damping_up = 10.0;
  double damping_down = 10.0;
  double max_damping = 1e10;
  double tolerance = 1e-12;  // on the decrease of an accepted step
  std::uint64_t seed = 0;

  void validate() const {
    if (max_iters < 1) throw ConfigError("lm: max_iters must be >= 1");
    if (!(initial_damping > 0.0)) throw ConfigError("lm: initial_damping must be > 0");
    if (!(damping_up > 1.0) || !(damping_down > 1.0))
      throw ConfigError("lm: damping factors must be > 1");
    if (!(max_damping > initial_damping))
      throw ConfigError("lm: max_damping must exceed initial_damping");
    if (!(tolerance > 0.0)) throw ConfigError("lm: tolerance must be > 0");
  }
};

struct LmStep {
  double loss;    // loss after the step if accepted, else the rejected trial loss
  double damping; // lambda used for the trial
  bool accepted;
};

enum class LmStop { zero_loss, tolerance, max_iters, damping_limit };

inline const char* to_string(LmStop s) {
  switch (s) {
    case LmStop::zero_loss: return "zero_loss";
    case LmStop::tolerance: return "tolerance";
    case LmStop::max_iters: return "max_iters";
    case LmStop::damping_limit: return "damping_limit";
  }
  return "?";
}

struct LmResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<LmStep> trace;
  LmStop stop = LmStop::max_iters;
};

inline double mse_of(const Eigen::VectorXd& r) { return r.squaredNorm() / static_cast<double>(r.size()); }

/// Levenberg-Marquardt on the mean squared error. Each iteration solves
/// (J'J + lambda I) delta = J'r, keeps the step only if the loss drops, and
/// divides or multiplies lambda accordingly.
inline LmResult train_lm(ResidualMlp& net, const LagSamples& samples, const LmParams& params) {
  params.validate();
  if (samples.size() == 0) throw DataError("lm: no training samples");
  if (static_cast<std::size_t>(samples.inputs.cols()) != net.lags)
    throw DataError("lm: sample width does not match lags");

  const Eigen::Index P = static_cast<Eigen::Index>(net.params.size());
  Eigen::Map<Eigen::VectorXd> theta(net.params.data(), P);
  auto residual = [&] { return Eigen::VectorXd(samples.targets - mlp_predict(net, samples.inputs)); };

  LmResult result;
  Eigen::VectorXd r = residual();
  double loss = mse_of(r);
  if (!std::isfinite(loss)) throw NumericError("lm: non-finite initial loss");
  result.initial_loss = loss;
  double lambda = params.initial_damping;
  result.stop = LmStop::max_iters;

  for (std::size_t it = 0; it < params.max_iters; ++it) {
    if (loss == 0.0) {
      result.stop = LmStop::zero_loss;
      break;
    }
    const Eigen::MatrixXd J = jacobian(net, samples.inputs);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;

    Eigen::MatrixXd A = JtJ;
    A.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd delta;
    if (ldlt.info() == Eigen::Success) delta = ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
      if (lambda * params.damping_up > params.max_damping)
        throw NumericError("lm: normal equations singular at maximum damping");
      lambda *= params.damping_up;
      continue;
    }

    const Eigen::VectorXd saved = theta;
    theta += delta;
    const Eigen::VectorXd r_new = residual();
    const double trial = mse_of(r_new);
    if (std::isfinite(trial) && trial < loss) {
      const double decrease = loss - trial;
      result.trace.push_back({trial, lambda, true});
      r = r_new;
      loss = trial;
      lambda = std::max(lambda / params.damping_down, 1e-15);
      if (decrease < params.tolerance) {
        result.stop = LmStop::tolerance;
        break;
      }
    } else {
      theta = saved;
      result.trace.push_back({trial, lambda, false});
      lambda *= params.damping_up;
      if (lambda > params.max_damping) {
        result.stop = LmStop::damping_limit;
        break;
      }
    }
  }
  result.final_loss = loss;
  return result;
}

/// Rolls the net forward over scaled errors and returns errors in original
/// units. `history` is in original units too.
inline std::vector<double> forecast_errors(const ResidualMlp& net, std::span<const double> history,
                                           std::size_t steps, const ScaleParams& scale) {
  if (history.size() < net.lags)
    throw DataError("mlp: forecast needs at least " + std::to_string(net.lags) +
                    " past errors, got " + std::to_string(history.size()));
  if (steps < 1) throw DataError("mlp: steps must be >= 1");
  std::vector<double> window = apply_scale(history.subspan(history.size() - net.lags), scale);
  std::vector<double> out;
  out.reserve(steps);
  for (std::size_t k = 0; k < steps; ++k) {
    const double y = mlp_forward(net, window);
    out.push_back(scale.inverse(y));
    window.erase(window.begin());
    window.push_back(y);
  }
  return out;
}

inline Archive to_archive(const ResidualMlp& net, const ScaleParams& scale) {
  Archive a;
  a.type = "residual_mlp";
  a.settings["lags"] = std::to_string(net.lags);
  a.settings["scale.min"] = hex_double(scale.min);
  a.settings["scale.max"] = hex_double(scale.max);
  a.settings["scale.lo"] = hex_double(scale.lo);
  a.settings["scale.hi"] = hex_double(scale.hi);
  a.tensors.push_back({"params", net.params.size(), 1, net.params});
  return a;
}

inline std::pair<ResidualMlp, ScaleParams> mlp_from_archive(const Archive& a) {
  if (a.type != "residual_mlp")
    throw DataError("archive holds a '" + a.type + "', expected residual_mlp");
  ResidualMlp net(std::stoul(a.get("lags")));
  const auto& t = a.tensor("params");
  if (t.values.size() != net.params.size()) throw DataError("archive: mlp parameter count mismatch");
  net.params = t.values;
  ScaleParams s{parse_hex_double(a.get("scale.min")), parse_hex_double(a.get("scale.max")),
                parse_hex_double(a.get("scale.lo")), parse_hex_double(a.get("scale.hi"))};
  return {std::move(net), s};
}

}  // namespace windcast
