// Standalone acceptance run: one PASS/FAIL line per criterion, exit 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "test_util.hpp"
#include "windcast/attention.hpp"
#include "windcast/emd.hpp"
#include "windcast/forecaster.hpp"
#include "windcast/iceemdan.hpp"
#include "windcast/metrics.hpp"
#include "windcast/pipeline.hpp"
#include "windcast/residual_mlp.hpp"
#include "windcast/synthetic.hpp"
#include "windcast/transformer.hpp"

using namespace windcast;
using windcast::testing::pearson;
using windcast::testing::random_vector;
using windcast::testing::read_text;
using windcast::testing::scratch_dir;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> tone(std::size_t n, double freq) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t)
    x[t] = std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t));
  return x;
}

Outcome additivity() {
  IceemdanParams p;
  p.realizations = 30;
  p.max_sift_iters = 50;
  Rng rng(2024);
  const auto t0 = Clock::now();
  double worst_ratio = 0.0;
  for (int s = 0; s < 20; ++s) {
    SyntheticSpec spec;
    spec.length = 2000;
    spec.seed = 1000 + static_cast<std::uint64_t>(s);
    spec.offset = rng.uniform(-5.0, 10.0);
    spec.trend_slope = rng.uniform(-2e-3, 2e-3);
    spec.noise_std = rng.uniform(0.0, 0.5);
    spec.components.clear();
    const int tones = 1 + static_cast<int>(rng.next() % 3);
    for (int k = 0; k < tones; ++k)
      spec.components.push_back({rng.uniform(0.2, 3.0), rng.uniform(0.002, 0.2), rng.uniform(0.0, 6.28)});
    const auto x = generate_synthetic(spec).values;
    p.seed = static_cast<std::uint64_t>(s);
    const auto d = iceemdan(x, p);
    double peak = 0.0;
    for (double v : x) peak = std::max(peak, std::fabs(v));
    worst_ratio = std::max(worst_ratio, d.max_reconstruction_error(x) / (1e-8 * (peak + 1.0)));
  }
  const double secs = seconds_since(t0);
  return {worst_ratio <= 1.0 && secs < 60.0,
          "worst error/bound=" + fmt("%.3g", worst_ratio) + " time=" + fmt("%.1f", secs) + "s"};
}

Outcome tone_separation() {
  const std::size_t n = 2000;
  const auto fast = tone(n, 0.05), slow = tone(n, 0.005);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = fast[i] + slow[i];
  const auto d = emd(x, 10);
  if (d.imfs.size() < 2) return {false, "emd produced fewer than 2 IMFs"};
  const double c_fast = pearson(d.imfs[0], fast);
  double c_slow = pearson(d.imfs[1], slow);
  std::size_t slow_k = 1;
  for (std::size_t k = 2; k < d.imfs.size(); ++k)
    if (const double c = pearson(d.imfs[k], slow); c > c_slow) c_slow = c, slow_k = k;

  // Noise-assisted: early modes soak up residual ensemble noise, so match by best IMF.
  IceemdanParams p;
  p.realizations = 30;
  p.max_imfs = 10;
  p.max_sift_iters = 50;
  p.seed = 5;
  const auto e = iceemdan(x, p);
  double i_fast = -1, i_slow = -1;
  for (const auto& imf : e.imfs) {
    i_fast = std::max(i_fast, pearson(imf, fast));
    i_slow = std::max(i_slow, pearson(imf, slow));
  }
  return {c_fast > 0.95 && c_slow > 0.95 && i_fast > 0.95 && i_slow > 0.95,
          "emd corr(imf1,fast)=" + fmt("%.4f", c_fast) + " corr(imf" + std::to_string(slow_k + 1) +
              ",slow)=" + fmt("%.4f", c_slow) + "; iceemdan best fast=" + fmt("%.3f", i_fast) +
              " best slow=" + fmt("%.3f", i_slow)};
}

Outcome attention_normalization() {
  Rng rng(77);
  double worst_sum = 0.0;
  bool in_range = true;
  for (int call = 0; call < 1000; ++call) {
    const auto d = static_cast<Eigen::Index>(1 + rng.next() % 16);
    const auto tq = static_cast<Eigen::Index>(1 + rng.next() % 24);
    const auto tk = static_cast<Eigen::Index>(1 + rng.next() % 24);
    const bool causal = rng.next() % 2 == 0;
    const double spread = rng.uniform(0.1, 20.0);
    Matrix q(d, causal ? tk : tq), k(d, tk), v(d, tk);
    for (Eigen::Index i = 0; i < q.size(); ++i) q.data()[i] = rng.uniform(-spread, spread);
    for (Eigen::Index i = 0; i < k.size(); ++i) k.data()[i] = rng.uniform(-spread, spread);
    for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = rng.uniform(-1, 1);
    const auto r = scaled_attention(q, k, v, causal, static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < r.weights.cols(); ++j) {
      worst_sum = std::max(worst_sum, std::fabs(r.weights.col(j).sum() - 1.0));
      in_range = in_range && r.weights.col(j).minCoeff() >= 0.0 && r.weights.col(j).maxCoeff() <= 1.0;
    }
  }
  return {worst_sum <= 1e-9 && in_range,
          "max |sum-1|=" + fmt("%.2g", worst_sum) + (in_range ? " weights in [0,1]" : " weight outside [0,1]")};
}

TransformerModel random_model(const TransformerConfig& c, std::uint64_t seed) {
  auto m = TransformerModel::initialized(c);
  Rng rng(seed);
  auto& p = m.params();
  for (std::size_t i = 0; i < p.entries().size(); ++i) {
    const auto kind = p.entries()[i].kind;
    if (kind == TensorKind::weight) continue;
    auto t = p[i];
    for (Eigen::Index k = 0; k < t.size(); ++k)
      t.data()[k] = kind == TensorKind::gain ? rng.uniform(0.5, 1.5) : rng.uniform(-0.3, 0.3);
  }
  return m;
}

Outcome causality() {
  double worst = 0.0, weakest_self = 1e300;
  for (auto mode : {LayerNormMode::paper_global, LayerNormMode::per_position}) {
    TransformerConfig c;
    c.embed_dim = 16;
    c.heads = 4;
    c.stacks = 2;
    c.ff_dim = 32;
    c.encoder_len = 12;
    c.decoder_len = 8;
    c.dropout = 0.0;
    c.layernorm_mode = mode;
    c.seed = 9;
    const auto m = random_model(c, 31);
    Rng rng(32);
    const auto enc = random_vector(rng, c.encoder_len, 0, 1);
    const auto dec = random_vector(rng, c.decoder_len, 0, 1);
    const auto base = forward(m, enc, dec).predictions;
    for (std::size_t t = 0; t < dec.size(); ++t) {
      auto bumped = dec;
      bumped[t] += 0.5;
      const auto p = forward(m, enc, bumped).predictions;
      for (std::size_t u = 0; u < t; ++u) worst = std::max(worst, std::fabs(p[u] - base[u]));
      weakest_self = std::min(weakest_self, std::fabs(p[t] - base[t]));
    }
  }
  return {worst < 1e-12 && weakest_self > 0.0,
          "max earlier-position response=" + fmt("%.2g", worst) +
              " min own-position response=" + fmt("%.2g", weakest_self)};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst_tf = 0.0;
  for (auto mode : {LayerNormMode::paper_global, LayerNormMode::per_position}) {
    TransformerConfig c;
    c.embed_dim = 8;
    c.heads = 2;
    c.stacks = 1;
    c.ff_dim = 16;
    c.encoder_len = 8;
    c.decoder_len = 4;
    c.dropout = 0.0;
    c.layernorm_mode = mode;
    c.seed = 5;
    auto m = random_model(c, 21);
    Rng rng(22);
    std::vector<Window> batch(2);
    for (auto& w : batch) {
      w.encoder = random_vector(rng, c.encoder_len, 0, 1);
      w.decoder_input = random_vector(rng, c.decoder_len, 0, 1);
      w.target = random_vector(rng, c.decoder_len, 0, 1);
    }
    const auto lg = loss_and_gradients(m, batch);
    auto& data = m.params().data();
    const double h = 1e-5;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = evaluate_loss(m, batch);
      data[i] = saved - h;
      const double down = evaluate_loss(m, batch);
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h), analytic = lg.gradients.data()[i];
      worst_tf = std::max(worst_tf, std::fabs(analytic - numeric) /
                                        std::max({std::fabs(analytic), std::fabs(numeric), 1e-6}));
    }
  }

  double worst_mlp = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto net = ResidualMlp::random(6, seed);
    Eigen::MatrixXd x(10, 6);
    Rng rng(seed + 100);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-0.9, 0.9);
    const auto J = jacobian(net, x);
    const double h = 1e-6;
    for (std::size_t p = 0; p < net.params.size(); ++p) {
      const double saved = net.params[p];
      net.params[p] = saved + h;
      const auto up = mlp_predict(net, x);
      net.params[p] = saved - h;
      const auto down = mlp_predict(net, x);
      net.params[p] = saved;
      for (Eigen::Index k = 0; k < x.rows(); ++k) {
        const double numeric = (up(k) - down(k)) / (2 * h), a = J(k, static_cast<Eigen::Index>(p));
        worst_mlp = std::max(worst_mlp, std::fabs(a - numeric) /
                                            std::max({std::fabs(a), std::fabs(numeric), 1e-3}));
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst_tf < 1e-4 && worst_mlp < 1e-6 && secs < 120.0,
          "transformer worst rel=" + fmt("%.2g", worst_tf) + " mlp worst rel=" + fmt("%.2g", worst_mlp) +
              " time=" + fmt("%.1f", secs) + "s"};
}

Outcome overfit() {
  TransformerConfig c;
  c.embed_dim = 8;
  c.heads = 2;
  c.stacks = 1;
  c.ff_dim = 16;
  c.encoder_len = 8;
  c.decoder_len = 4;
  c.dropout = 0.0;
  c.iterations = 500;
  c.learning_rate = 1e-2;
  c.max_grad_norm = 0.01;
  c.seed = 5;
  std::vector<double> series(64);
  for (std::size_t i = 0; i < series.size(); ++i)
    series[i] = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / 16.0);
  auto m = TransformerModel::initialized(c);
  train(m, series);
  const double tf_mse = evaluate_loss(m, make_windows(series, c.encoder_len, c.decoder_len));

  LagSamples s{Eigen::MatrixXd(50, 1), Eigen::VectorXd(50)};
  for (int k = 0; k < 50; ++k) {
    const double x = -1.0 + 2.0 * k / 49.0;
    s.inputs(k, 0) = x;
    s.targets(k) = std::tanh(2.0 * x);
  }
  auto net = ResidualMlp::random(1, 42);
  LmParams lm;
  lm.max_iters = 200;
  const auto r = train_lm(net, s, lm);
  return {tf_mse < 1e-3 && r.final_loss < 1e-6,
          "transformer sine MSE=" + fmt("%.3g", tf_mse) + " mlp tanh(2x) MSE=" + fmt("%.3g", r.final_loss) +
              " after " + std::to_string(r.trace.size()) + " LM steps"};
}

Outcome metrics_oracle() {
  Rng rng(7);
  double worst = 0.0, worst_identity = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    const std::size_t n = 1 + rng.next() % 500;
    const auto g = random_vector(rng, n, 0.1, 30.0);
    const auto f = random_vector(rng, n, -5.0, 35.0);
    long double abs = 0, rel = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const long double e = static_cast<long double>(g[i]) - f[i];
      abs += std::fabs(e);
      rel += std::fabs(e) / g[i];
      sq += e * e;
    }
    const long double nn = static_cast<long double>(n);
    const double mae = static_cast<double>(abs / nn), mre = static_cast<double>(rel / nn);
    const double mse = static_cast<double>(sq / nn), rmse = std::sqrt(mse), mape = 100.0 * mre;
    const auto m = compute_metrics(g, f);
    for (auto [got, want] : {std::pair{m.mae, mae}, {m.mape, mape}, {m.mre, mre}, {m.mse, mse}, {m.rmse, rmse}})
      worst = std::max(worst, std::fabs(got - want) / std::max(std::fabs(want), 1e-300));
    worst_identity = std::max(worst_identity, std::fabs(m.rmse * m.rmse - m.mse) / m.mse);
    worst_identity = std::max(worst_identity, std::fabs(m.mre * 100.0 - m.mape) / m.mape);
  }
  return {worst <= 1e-12 && worst_identity <= 1e-12,
          "worst rel vs naive=" + fmt("%.2g", worst) + " identities=" + fmt("%.2g", worst_identity)};
}

Outcome closure() {
  Rng rng(8);
  std::size_t mismatches = 0, total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next() % 1000;
    const auto g = random_vector(rng, n, 0.5, 25.0);
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = g[i] * rng.uniform(0.5, 2.0);
    const auto back = correct(p, residual_errors(g, p));
    for (std::size_t i = 0; i < n; ++i) mismatches += back[i] != g[i];
    total += n;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of " + std::to_string(total) + " values differ"};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(WINDCAST_CLI) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, double> read_metrics(const fs::path& path) {
  std::map<std::string, double> out;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cut = line.rfind(',');
    out[line.substr(0, cut)] = std::stod(line.substr(cut + 1));
  }
  return out;
}

struct Benchmark {
  int code = -1;
  double seconds = 0;
  fs::path dir;
};

Benchmark benchmark_run(const fs::path& root, const std::string& name) {
  const fs::path src = WINDCAST_SOURCE_DIR;
  Benchmark b;
  b.dir = root / name;
  const auto t0 = Clock::now();
  b.code = run_cli("run --config '" + (src / "configs/benchmark.cfg").string() + "' --input '" +
                       (src / "data/two_tone_benchmark.csv").string() + "' --out '" + b.dir.string() + "'",
                   root / (name + ".log"));
  b.seconds = seconds_since(t0);
  return b;
}

}  // namespace

int main() {
  setenv("WINDCAST_THREADS", "0", 1);
  const fs::path root = scratch_dir("acceptance");
  Benchmark first, second;
  auto ensure_first = [&] {
    if (first.code < 0) first = benchmark_run(root, "run1");
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"decomposition additivity", additivity},
      {"tone separation", tone_separation},
      {"attention normalization", attention_normalization},
      {"decoder causality", causality},
      {"gradient checks", gradient_checks},
      {"overfit", overfit},
      {"metrics oracle", metrics_oracle},
      {"correction closure", closure},
      {"benchmark ordering",
       [&]() -> Outcome {
         ensure_first();
         if (first.code != 0) return {false, "run exited " + std::to_string(first.code)};
         const auto m = read_metrics(first.dir / "metrics.csv");
         const double c = m.at("corrected,MAE"), p = m.at("primary,MAE"), b = m.at("baseline,MAE");
         return {c <= p && p < b && first.seconds < 600.0,
                 "MAE corrected=" + fmt("%.5g", c) + " primary=" + fmt("%.5g", p) +
                     " persistence=" + fmt("%.5g", b) + " time=" + fmt("%.1f", first.seconds) + "s"};
       }},
      {"horizon protocol",
       [&]() -> Outcome {
         ensure_first();
         if (first.code != 0) return {false, "run exited " + std::to_string(first.code)};
         const auto m = read_metrics(first.dir / "metrics.csv");
         std::string detail;
         std::size_t sets = 0;
         for (const char* h : {"very_short", "short", "medium", "long"}) {
           std::size_t found = 0;
           for (const char* k : {"MAE", "MAPE", "MRE", "MSE", "RMSE"})
             found += m.count(std::string("horizon:") + h + "," + k);
           if (found == 5) {
             ++sets;
             detail += std::string(detail.empty() ? "" : " ") + h + "=" +
                       fmt("%.4g", m.at(std::string("horizon:") + h + ",MAE"));
           }
         }
         if (sets != 4) return {false, std::to_string(sets) + " of 4 horizon metric sets"};
         return {m.at("horizon:very_short,MAE") <= m.at("horizon:short,MAE"), "MAE " + detail};
       }},
      {"reproducibility",
       [&]() -> Outcome {
         ensure_first();
         second = benchmark_run(root, "run2");
         if (first.code != 0 || second.code != 0) return {false, "a benchmark run failed"};
         const auto a = read_text(first.dir / "metrics.csv"), b = read_text(second.dir / "metrics.csv");
         return {!a.empty() && a == b, a == b ? "metrics.csv byte-identical across two serial runs"
                                               : "metrics.csv differs between runs"};
       }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
