#pragma once

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "windcast/csv.hpp"
#include "windcast/error.hpp"
#include "windcast/pipeline.hpp"
#include "windcast/synthetic.hpp"

namespace windcast {

/// Everything a CLI invocation needs, loadable from a key=value file.
struct RunConfig {
  PipelineConfig pipeline;
  SyntheticSpec synth = two_tone_benchmark_spec();
  std::string input;
  std::string column = "wind_speed";
  std::vector<std::size_t> sweep_counts{5, 6, 7, 8, 9, 10, 11, 12};

  /// Seeds of every random stage from one number.
  void set_seed(std::uint64_t seed) {
    pipeline.iceemdan.seed = seed;
    pipeline.transformer.seed = seed + 1;
    pipeline.lm.seed = seed + 2;
  }
};

namespace config_detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (...) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": '" + v + "' is not a number");
  return d;
}

inline std::uint64_t to_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
  try {
    return std::stoull(v);
  } catch (...) {
    throw ConfigError(key + ": '" + v + "' is out of range");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline const std::vector<Field>& fields() {
  using namespace std::string_literals;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto real = [&](std::string key, auto getter) {
      f.push_back({key,
                   [=](RunConfig& c, const std::string& v) { getter(c) = to_double(key, v); },
                   [=](const RunConfig& c) { return num(getter(const_cast<RunConfig&>(c))); }});
    };
    auto count = [&](std::string key, auto getter) {
      f.push_back({key,
                   [=](RunConfig& c, const std::string& v) {
                     getter(c) = static_cast<std::remove_reference_t<decltype(getter(c))>>(
                         to_count(key, v));
                   },
                   [=](const RunConfig& c) {
                     return std::to_string(getter(const_cast<RunConfig&>(c)));
                   }});
    };
    auto flag = [&](std::string key, auto getter) {
      f.push_back({key, [=](RunConfig& c, const std::string& v) { getter(c) = to_bool(key, v); },
                   [=](const RunConfig& c) {
                     return getter(const_cast<RunConfig&>(c)) ? "true"s : "false"s;
                   }});
    };
    auto text = [&](std::string key, auto getter) {
      f.push_back({key, [=](RunConfig& c, const std::string& v) { getter(c) = v; },
                   [=](const RunConfig& c) { return getter(const_cast<RunConfig&>(c)); }});
    };

    text("data.input", [](RunConfig& c) -> std::string& { return c.input; });
    text("data.column", [](RunConfig& c) -> std::string& { return c.column; });

    count("iceemdan.realizations", [](RunConfig& c) -> std::size_t& { return c.pipeline.iceemdan.realizations; });
    count("iceemdan.max_imfs", [](RunConfig& c) -> std::size_t& { return c.pipeline.iceemdan.max_imfs; });
    count("iceemdan.max_sift_iters", [](RunConfig& c) -> int& { return c.pipeline.iceemdan.max_sift_iters; });
    real("iceemdan.noise_ratio", [](RunConfig& c) -> double& { return c.pipeline.iceemdan.noise_ratio; });
    real("iceemdan.sift_tolerance", [](RunConfig& c) -> double& { return c.pipeline.iceemdan.sift_tolerance; });
    count("iceemdan.seed", [](RunConfig& c) -> std::uint64_t& { return c.pipeline.iceemdan.seed; });

    auto tf = [](RunConfig& c) -> TransformerConfig& { return c.pipeline.transformer; };
    count("transformer.embed_dim", [=](RunConfig& c) -> std::size_t& { return tf(c).embed_dim; });
    count("transformer.heads", [=](RunConfig& c) -> std::size_t& { return tf(c).heads; });
    count("transformer.stacks", [=](RunConfig& c) -> std::size_t& { return tf(c).stacks; });
    count("transformer.ff_dim", [=](RunConfig& c) -> std::size_t& { return tf(c).ff_dim; });
    real("transformer.dropout", [=](RunConfig& c) -> double& { return tf(c).dropout; });
    real("transformer.learning_rate", [=](RunConfig& c) -> double& { return tf(c).learning_rate; });
    count("transformer.iterations", [=](RunConfig& c) -> std::size_t& { return tf(c).iterations; });
    count("transformer.batch_size", [=](RunConfig& c) -> std::size_t& { return tf(c).batch_size; });
    real("transformer.max_grad_norm", [=](RunConfig& c) -> double& { return tf(c).max_grad_norm; });
    count("transformer.encoder_len", [=](RunConfig& c) -> std::size_t& { return tf(c).encoder_len; });
    count("transformer.decoder_len", [=](RunConfig& c) -> std::size_t& { return tf(c).decoder_len; });
    count("transformer.seed", [=](RunConfig& c) -> std::uint64_t& { return tf(c).seed; });
    f.push_back({"transformer.layernorm_mode",
                 [](RunConfig& c, const std::string& v) {
                   c.pipeline.transformer.layernorm_mode = parse_layernorm_mode(v);
                 },
                 [](const RunConfig& c) {
                   return std::string(to_string(c.pipeline.transformer.layernorm_mode));
                 }});
    real("transformer.layernorm_eps", [=](RunConfig& c) -> double& { return tf(c).layernorm_eps; });
    flag("transformer.positional_encoding", [=](RunConfig& c) -> bool& { return tf(c).positional_encoding; });

    count("mlp.lags", [](RunConfig& c) -> std::size_t& { return c.pipeline.mlp_lags; });
    count("lm.max_iters", [](RunConfig& c) -> std::size_t& { return c.pipeline.lm.max_iters; });
    real("lm.initial_damping", [](RunConfig& c) -> double& { return c.pipeline.lm.initial_damping; });
    real("lm.damping_up", [](RunConfig& c) -> double& { return c.pipeline.lm.damping_up; });
    real("lm.damping_down", [](RunConfig& c) -> double& { return c.pipeline.lm.damping_down; });
    real("lm.max_damping", [](RunConfig& c) -> double& { return c.pipeline.lm.max_damping; });
    real("lm.tolerance", [](RunConfig& c) -> double& { return c.pipeline.lm.tolerance; });
    count("lm.seed", [](RunConfig& c) -> std::uint64_t& { return c.pipeline.lm.seed; });

    count("horizons.very_short", [](RunConfig& c) -> std::size_t& { return c.pipeline.horizons.very_short; });
    count("horizons.short", [](RunConfig& c) -> std::size_t& { return c.pipeline.horizons.short_term; });
    count("horizons.medium", [](RunConfig& c) -> std::size_t& { return c.pipeline.horizons.medium; });
    count("horizons.long", [](RunConfig& c) -> std::size_t& { return c.pipeline.horizons.long_term; });

    real("split.train_fraction", [](RunConfig& c) -> double& { return c.pipeline.train_fraction; });
    count("split.test_length", [](RunConfig& c) -> std::size_t& { return c.pipeline.test_length; });
    real("split.calibration_fraction", [](RunConfig& c) -> double& { return c.pipeline.calibration_fraction; });
    flag("pipeline.strict_causal", [](RunConfig& c) -> bool& { return c.pipeline.strict_causal; });
    flag("pipeline.evaluate_horizons", [](RunConfig& c) -> bool& { return c.pipeline.evaluate_horizons; });

    f.push_back({"sweep.counts",
                 [](RunConfig& c, const std::string& v) {
                   c.sweep_counts.clear();
                   for (const auto& part : split(v, ','))
                     c.sweep_counts.push_back(static_cast<std::size_t>(to_count("sweep.counts", part)));
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.sweep_counts.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.sweep_counts[i]);
                   return s;
                 }});

    f.push_back({"synth.components",
                 [](RunConfig& c, const std::string& v) {
                   c.synth.components.clear();
                   for (const auto& part : split(v, ',')) {
                     if (part.empty()) continue;
                     const auto p = split(part, ':');
                     if (p.size() != 3)
                       throw ConfigError("synth.components: '" + part +
                                         "' must be amplitude:frequency:phase");
                     c.synth.components.push_back({to_double("synth.components", p[0]),
                                                   to_double("synth.components", p[1]),
                                                   to_double("synth.components", p[2])});
                   }
                 },
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.synth.components.size(); ++i) {
                     const auto& t = c.synth.components[i];
                     s += (i ? "," : "") + num(t.amplitude) + ":" + num(t.frequency) + ":" + num(t.phase);
                   }
                   return s;
                 }});
    real("synth.offset", [](RunConfig& c) -> double& { return c.synth.offset; });
    real("synth.trend_slope", [](RunConfig& c) -> double& { return c.synth.trend_slope; });
    real("synth.noise_std", [](RunConfig& c) -> double& { return c.synth.noise_std; });
    count("synth.length", [](RunConfig& c) -> std::size_t& { return c.synth.length; });
    count("synth.seed", [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; });
    f.push_back({"synth.start",
                 [](RunConfig& c, const std::string& v) {
                   if (!parse_iso8601(v, c.synth.start_time))
                     throw ConfigError("synth.start: '" + v + "' is not an ISO-8601 timestamp");
                 },
                 [](const RunConfig& c) { return format_iso8601(c.synth.start_time); }});
    real("synth.step", [](RunConfig& c) -> double& { return c.synth.step; });
    return f;
  }();
  return table;
}

}  // namespace config_detail

/// Applies one key=value setting; unknown keys are errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_detail::fields())
    if (f.key == key) return f.set(c, value);
  throw ConfigError("unknown config key '" + key + "'");
}

/// Reads `key = value` lines; '#' starts a comment.
inline void parse_config(std::istream& in, RunConfig& c, const std::string& origin = "config") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + " line " + std::to_string(line_no) + ": expected key = value");
    try {
      apply_setting(c, config_detail::trim(line.substr(0, eq)),
                    config_detail::trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  RunConfig c;
  parse_config(in, c, path);
  return c;
}

/// Every setting in table order, in a form parse_config reads back.
inline void write_config(std::ostream& out, const RunConfig& c) {
  for (const auto& f : config_detail::fields()) out << f.key << " = " << f.get(c) << '\n';
}

}  // namespace windcast
