#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "windcast/archive.hpp"
#include "windcast/config.hpp"
#include "windcast/csv.hpp"
#include "windcast/pipeline.hpp"

namespace fs = std::filesystem;
using namespace windcast;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string input;
  bool strict_causal = false;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) c.set_seed(*o.seed);
  if (!o.input.empty()) c.input = o.input;
  if (o.strict_causal) c.pipeline.strict_causal = true;
  return c;
}

TimeSeries load_input(const RunConfig& c) {
  if (c.input.empty()) throw ConfigError("no input file: pass --input or set data.input");
  return load_csv(c.input, c.column);
}

void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c,
                    const std::string& extra = {}) {
  auto out = open_output(dir / "manifest.txt");
  out << "# windcast " << command << " manifest\n";
  out << "# reproduce: windcast " << command << " --config manifest.txt\n";
  if (!extra.empty()) out << extra;
  write_config(out, c);
}

void write_metric_rows(std::ostream& out, const std::string& scope, const ErrorMetrics& m) {
  out << scope << ",MAE," << format_number(m.mae) << '\n';
  out << scope << ",MAPE," << format_number(m.mape) << '\n';
  out << scope << ",MRE," << format_number(m.mre) << '\n';
  out << scope << ",MSE," << format_number(m.mse) << '\n';
  out << scope << ",RMSE," << format_number(m.rmse) << '\n';
}

int cmd_decompose(const Options& o) {
  const RunConfig c = resolve(o);
  const TimeSeries data = load_input(c);
  const Decomposition d = iceemdan(data, c.pipeline.iceemdan);
  const fs::path dir = o.out;

  auto out = open_output(dir / "decomposition.csv");
  out << "index";
  for (std::size_t k = 0; k < d.imfs.size(); ++k) out << ",imf_" << k + 1;
  out << ",residue\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << i;
    for (const auto& imf : d.imfs) out << ',' << format_number(imf[i]);
    out << ',' << format_number(d.residue[i]) << '\n';
  }

  double peak = 0.0;
  for (double v : data.values) peak = std::max(peak, std::fabs(v));
  const double err = d.max_reconstruction_error(data.values);
  const double bound = 1e-8 * (peak + 1.0);
  const std::string summary = "reconstruction max_abs_error=" + format_number(err) +
                              " bound=" + format_number(bound) +
                              (err <= bound ? " ok" : " EXCEEDED");
  std::cout << summary << '\n';
  write_manifest(dir, "decompose", c, "# " + summary + "\n");
  return 0;
}

void save_models(const fs::path& dir, const PipelineState& s) {
  for (std::size_t k = 0; k < s.forecasters.size(); ++k) {
    auto out = open_output(dir / ("subseries_" + std::to_string(k + 1) + ".model"));
    write_archive(out, to_archive(s.forecasters[k]));
  }
  auto out = open_output(dir / "residual_mlp.model");
  if (s.corrector.is_constant()) {
    Archive a;
    a.type = "constant_error";
    a.settings["value"] = hex_double(s.corrector.constant_value());
    write_archive(out, a);
  } else {
    write_archive(out, to_archive(s.corrector.net(), s.corrector.scale()));
  }
}

int cmd_run(const Options& o) {
  const RunConfig c = resolve(o);
  const TimeSeries data = load_input(c);
  PipelineState state;
  const ForecastReport r = run_pipeline(c.pipeline, data, &state);
  const fs::path dir = o.out;

  {
    auto out = open_output(dir / "report.csv");
    out << "index,ground,primary,corrected,residual_error,forecast_error\n";
    for (std::size_t i = 0; i < r.ground.size(); ++i)
      out << r.test_start + i << ',' << format_number(r.ground[i]) << ','
          << format_number(r.primary[i]) << ',' << format_number(r.corrected[i]) << ','
          << format_number(r.residual_errors[i]) << ',' << format_number(r.forecast_errors[i])
          << '\n';
  }
  {
    auto out = open_output(dir / "metrics.csv");
    out << "scope,metric,value\n";
    write_metric_rows(out, "primary", r.metrics_primary);
    write_metric_rows(out, "corrected", r.metrics_corrected);
    write_metric_rows(out, "baseline", r.baseline_metrics);
    for (const auto& [name, m] : r.per_horizon) write_metric_rows(out, "horizon:" + name, m);
  }
  {
    // Ground against corrected forecast for external (log-scale) plotting.
    auto out = open_output(dir / "plot.csv");
    out << "index,timestamp,ground,corrected,abs_error\n";
    for (std::size_t i = 0; i < r.ground.size(); ++i) {
      const std::size_t t = r.test_start + i;
      const auto stamp = data.start_time +
                         static_cast<std::int64_t>(std::llround(data.step * static_cast<double>(t)));
      out << t << ',' << format_iso8601(stamp) << ',' << format_number(r.ground[i]) << ','
          << format_number(r.corrected[i]) << ','
          << format_number(std::fabs(r.ground[i] - r.corrected[i])) << '\n';
    }
  }
  save_models(dir / "models", state);
  write_manifest(dir, "run", c,
                 "# strict_causal=" + std::string(c.pipeline.strict_causal ? "true" : "false") + "\n");

  std::cout << "MAE primary=" << format_number(r.metrics_primary.mae)
            << " corrected=" << format_number(r.metrics_corrected.mae)
            << " baseline=" << format_number(r.baseline_metrics.mae) << '\n';
  return 0;
}

int cmd_sweep(const Options& o, const std::string& counts) {
  RunConfig c = resolve(o);
  if (!counts.empty()) apply_setting(c, "sweep.counts", counts);
  const TimeSeries data = load_input(c);
  const auto rows = imf_sweep(c.pipeline, data, c.sweep_counts);
  const auto best = unique_argmin(rows);
  const fs::path dir = o.out;
  auto out = open_output(dir / "sweep.csv");
  out << "imfs,MAE,MAPE,MRE,MSE,RMSE,best\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& m = rows[i].metrics;
    out << rows[i].imfs << ',' << format_number(m.mae) << ',' << format_number(m.mape) << ','
        << format_number(m.mre) << ',' << format_number(m.mse) << ',' << format_number(m.rmse)
        << ',' << (best && *best == i ? 1 : 0) << '\n';
  }
  write_manifest(dir, "sweep", c);
  if (best)
    std::cout << "lowest MSE at " << rows[*best].imfs << " IMFs\n";
  else
    std::cout << "no unique lowest MSE\n";
  return 0;
}

int cmd_synth(const Options& o, const std::string& name) {
  const RunConfig c = resolve(o);
  const fs::path dir = o.out;
  write_series_csv(dir / name, generate_synthetic(c.synth));
  return 0;
}

int cmd_eval(const Options& o, const std::string& ground_path, const std::string& forecast_path) {
  const RunConfig c = resolve(o);
  const TimeSeries g = load_csv(ground_path, c.column);
  const TimeSeries f = load_csv(forecast_path, c.column);
  if (g.size() != f.size())
    throw DataError("ground has " + std::to_string(g.size()) + " rows but forecast has " +
                    std::to_string(f.size()));
  const ErrorMetrics m = compute_metrics(g, f);
  write_metrics_csv(std::cout, m);
  if (!o.out.empty() && o.out != ".") {
    auto out = open_output(fs::path(o.out) / "metrics.csv");
    write_metrics_csv(out, m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"windcast: decomposition + transformer + residual-correction wind forecasting"};
  app.require_subcommand(1);

  Options opt;
  std::string counts, name = "synthetic.csv", ground_path, forecast_path;
  auto common = [&](CLI::App* sub, bool causal) {
    sub->add_option("--config", opt.config, "key = value config file");
    sub->add_option("--seed", opt.seed, "seed for every random stage (N, N+1, N+2)");
    sub->add_option("--out", opt.out, "output directory");
    if (causal) {
      sub->add_option("--input", opt.input, "input CSV (timestamp,<column>)");
      sub->add_flag("--strict-causal", opt.strict_causal,
                    "decompose the training span only");
    }
  };
  auto* decompose = app.add_subcommand("decompose", "ICEEMDAN decomposition to CSV");
  common(decompose, true);
  auto* run = app.add_subcommand("run", "full pipeline with report, metrics and models");
  common(run, true);
  auto* sweep = app.add_subcommand("sweep", "pipeline metrics across IMF counts");
  common(sweep, true);
  sweep->add_option("--counts", counts, "comma-separated IMF counts");
  auto* synth = app.add_subcommand("synth", "write a synthetic series");
  common(synth, false);
  synth->add_option("--name", name, "file name inside --out");
  auto* eval = app.add_subcommand("eval", "metrics between two CSV series");
  common(eval, false);
  eval->add_option("--ground", ground_path, "ground-truth CSV")->required();
  eval->add_option("--forecast", forecast_path, "forecast CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*decompose) return cmd_decompose(opt);
    if (*run) return cmd_run(opt);
    if (*sweep) return cmd_sweep(opt, counts);
    if (*synth) return cmd_synth(opt, name);
    if (*eval) return cmd_eval(opt, ground_path, forecast_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
