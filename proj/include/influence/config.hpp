#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "influence/clustering.hpp"
#include "influence/csv_io.hpp"
#include "influence/data_model.hpp"
#include "influence/error.hpp"
#include "influence/gaussian_mlp.hpp"
#include "influence/synthetic.hpp"
#include "influence/te_engine.hpp"

namespace influence {

/// Everything a pipeline run depends on. Loaded from a `key = value` file
/// and overridden from the command line.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  std::vector<std::filesystem::path> inputs;  // empty: the simulated files in out_dir
  std::vector<std::filesystem::path> truths;  // empty: <stem>_truth.csv next to each input
  std::filesystem::path model;                // empty: out_dir/model.json

  TrajectorySchema schema;
  WindowConfig window;
  double mask_value = 0.0;
  TrainConfig train;
  double filter_cutoff_hz = 0.5;
  PeakParams peaks;

  KMeansConfig cluster;
  std::string cluster_channel = "lin_vel";
  std::string cluster_centroid = "dba";  // or "mean"
  std::size_t report_tolerance = 5;

  SimConfig sim;
  std::string sim_name = "sim";
  std::size_t sim_count = 1;

  void validate() const {
    schema.validate();
    window.validate();
    train.validate();
    sim.validate();
    require(filter_cutoff_hz > 0.0, ErrorCategory::invalid_argument, "filter.cutoff_hz must be positive");
    require(filter_cutoff_hz < 0.5 * schema.sample_rate_hz, ErrorCategory::invalid_argument,
            "filter.cutoff_hz must be below the Nyquist frequency");
    require(peaks.min_distance_frames >= 1, ErrorCategory::invalid_argument,
            "peaks.min_distance must be at least 1");
    require(peaks.min_prominence >= 0.0, ErrorCategory::invalid_argument,
            "peaks.min_prominence must be non-negative");
    require(cluster.k >= 1, ErrorCategory::invalid_argument, "cluster.k must be at least 1");
    require(cluster.restarts >= 1, ErrorCategory::invalid_argument, "cluster.restarts must be at least 1");
    require(cluster_centroid == "dba" || cluster_centroid == "mean", ErrorCategory::invalid_argument,
            "cluster.centroid must be 'dba' or 'mean'");
    require(sim_count >= 1, ErrorCategory::invalid_argument, "sim.count must be at least 1");
    require(!sim_name.empty(), ErrorCategory::invalid_argument, "sim.name must not be empty");
    require(truths.empty() || truths.size() == inputs.size(), ErrorCategory::invalid_argument,
            "truths must list one file per input");
  }

  std::filesystem::path model_path() const { return model.empty() ? out_dir / "model.json" : model; }
};

/// Independent seed for stream `stream` of a run (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == s.npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  for (const auto& f : split_fields(v)) out.emplace_back(trim(f));
  return out;
}

[[noreturn]] inline void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  fail(ErrorCategory::parse_error,
       std::string(key) + ": '" + std::string(value) + "' is not " + std::string(what));
}

template <class T>
T parse_value(std::string_view key, std::string_view v) {
  v = trim(v);
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v, "a boolean");
  } else if constexpr (std::is_unsigned_v<T>) {
    T out{};
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) {
      bad_value(key, v, "a non-negative integer");
    }
    return out;
  } else if constexpr (std::is_floating_point_v<T>) {
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
    return out;
  } else if constexpr (std::is_same_v<T, std::string>) {
    return std::string(v);
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    return std::filesystem::path(std::string(v));
  } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
    return split_list(v);
  } else if constexpr (std::is_same_v<T, std::vector<std::filesystem::path>>) {
    std::vector<std::filesystem::path> out;
    for (auto& s : split_list(v)) out.emplace_back(s);
    return out;
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::vector<double> out;
    for (auto& s : split_list(v)) out.push_back(parse_value<double>(key, s));
    return out;
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    std::vector<std::size_t> out;
    for (auto& s : split_list(v)) out.push_back(parse_value<std::size_t>(key, s));
    return out;
  } else if constexpr (std::is_same_v<T, std::optional<std::size_t>>) {
    if (v == "none" || v.empty()) return std::nullopt;
    return parse_value<std::size_t>(key, v);
  } else {
    static_assert(sizeof(T) == 0, "unsupported setting type");
  }
}

template <class T>
std::string render_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_unsigned_v<T>) {
    return std::to_string(v);
  } else if constexpr (std::is_floating_point_v<T>) {
    return format_number(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
    return v.string();
  } else if constexpr (std::is_same_v<T, std::optional<std::size_t>>) {
    return v ? std::to_string(*v) : "none";
  } else {
    std::string out;
    for (const auto& item : v) {
      if (!out.empty()) out += ",";
      out += render_value(item);
    }
    return out;
  }
}

}  // namespace detail

struct Setting {
  std::string key;
  std::function<void(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

namespace detail {

template <class T, class Access>
Setting bind(std::string key, Access access) {
  Setting s;
  s.key = key;
  s.set = [key, access](PipelineConfig& c, std::string_view v) { access(c) = parse_value<T>(key, v); };
  s.get = [access](const PipelineConfig& c) {
    return render_value<T>(access(const_cast<PipelineConfig&>(c)));
  };
  return s;
}

}  // namespace detail

/// All recognized configuration keys, in documentation order.
inline const std::vector<Setting>& settings() {
  using detail::bind;
  using C = PipelineConfig;
  using Path = std::filesystem::path;
  using Size = std::size_t;
  static const std::vector<Setting> all = {
      bind<std::uint64_t>("seed", [](C& c) -> auto& { return c.seed; }),
      bind<Path>("out", [](C& c) -> auto& { return c.out_dir; }),
      bind<std::vector<Path>>("inputs", [](C& c) -> auto& { return c.inputs; }),
      bind<std::vector<Path>>("truths", [](C& c) -> auto& { return c.truths; }),
      bind<Path>("model", [](C& c) -> auto& { return c.model; }),

      bind<std::string>("columns.time", [](C& c) -> auto& { return c.schema.time_column; }),
      bind<std::vector<std::string>>("columns.observations",
                                     [](C& c) -> auto& { return c.schema.observation_columns; }),
      bind<std::vector<std::string>>("columns.actions", [](C& c) -> auto& { return c.schema.action_columns; }),
      bind<bool>("input.normalized", [](C& c) -> auto& { return c.schema.normalized; }),
      bind<std::vector<double>>("input.action_vmax", [](C& c) -> auto& { return c.schema.action_vmax; }),
      bind<double>("input.sample_rate_hz", [](C& c) -> auto& { return c.schema.sample_rate_hz; }),

      bind<Size>("window.length", [](C& c) -> auto& { return c.window.window_len; }),
      bind<Size>("window.mask_start", [](C& c) -> auto& { return c.window.mask_start_offset; }),
      bind<Size>("window.mask_end", [](C& c) -> auto& { return c.window.mask_end_offset; }),
      bind<double>("mask.value", [](C& c) -> auto& { return c.mask_value; }),

      bind<Size>("train.epochs", [](C& c) -> auto& { return c.train.epochs; }),
      bind<Size>("train.batch_size", [](C& c) -> auto& { return c.train.batch_size; }),
      bind<double>("train.learning_rate", [](C& c) -> auto& { return c.train.learning_rate; }),
      bind<double>("train.weight_decay", [](C& c) -> auto& { return c.train.weight_decay; }),
      bind<double>("train.mask_probability", [](C& c) -> auto& { return c.train.mask_probability; }),
      bind<Size>("train.patience", [](C& c) -> auto& { return c.train.patience; }),
      bind<double>("train.validation_fraction", [](C& c) -> auto& { return c.train.validation_fraction; }),
      bind<bool>("train.residual_mean", [](C& c) -> auto& { return c.train.residual_mean; }),
      bind<std::vector<Size>>("train.hidden", [](C& c) -> auto& { return c.train.hidden; }),
      bind<double>("train.sigma_min", [](C& c) -> auto& { return c.train.sigma_min; }),

      bind<double>("filter.cutoff_hz", [](C& c) -> auto& { return c.filter_cutoff_hz; }),
      bind<Size>("peaks.min_distance", [](C& c) -> auto& { return c.peaks.min_distance_frames; }),
      bind<double>("peaks.min_prominence", [](C& c) -> auto& { return c.peaks.min_prominence; }),

      bind<Size>("cluster.k", [](C& c) -> auto& { return c.cluster.k; }),
      bind<Size>("cluster.restarts", [](C& c) -> auto& { return c.cluster.restarts; }),
      bind<Size>("cluster.max_iterations", [](C& c) -> auto& { return c.cluster.max_iterations; }),
      bind<std::string>("cluster.channel", [](C& c) -> auto& { return c.cluster_channel; }),
      bind<Size>("cluster.dba_iterations", [](C& c) -> auto& { return c.cluster.dba.iterations; }),
      bind<std::optional<Size>>("cluster.band", [](C& c) -> auto& { return c.cluster.dba.band; }),
      bind<std::string>("cluster.centroid", [](C& c) -> auto& { return c.cluster_centroid; }),

      bind<Size>("report.tolerance", [](C& c) -> auto& { return c.report_tolerance; }),

      bind<std::string>("sim.name", [](C& c) -> auto& { return c.sim_name; }),
      bind<Size>("sim.count", [](C& c) -> auto& { return c.sim_count; }),
      bind<double>("sim.duration_s", [](C& c) -> auto& { return c.sim.duration_s; }),
      bind<double>("sim.sample_rate_hz", [](C& c) -> auto& { return c.sim.sample_rate_hz; }),
      bind<double>("sim.event_rate_per_min", [](C& c) -> auto& { return c.sim.event_rate_per_min; }),
      bind<double>("sim.turn_fraction", [](C& c) -> auto& { return c.sim.turn_fraction; }),
      bind<bool>("sim.rotation_bursts", [](C& c) -> auto& { return c.sim.rotation_bursts; }),
      bind<double>("sim.wander_rate_per_min", [](C& c) -> auto& { return c.sim.wander_rate_per_min; }),
      bind<double>("sim.min_gap_s", [](C& c) -> auto& { return c.sim.min_gap_s; }),
      bind<double>("sim.lead_in_s", [](C& c) -> auto& { return c.sim.lead_in_s; }),
      bind<double>("sim.rise_s", [](C& c) -> auto& { return c.sim.rise_s; }),
      bind<double>("sim.hold_min_s", [](C& c) -> auto& { return c.sim.hold_min_s; }),
      bind<double>("sim.hold_max_s", [](C& c) -> auto& { return c.sim.hold_max_s; }),
      bind<double>("sim.fall_s", [](C& c) -> auto& { return c.sim.fall_s; }),
      bind<double>("sim.linear_speed", [](C& c) -> auto& { return c.sim.linear_speed; }),
      bind<double>("sim.angular_speed", [](C& c) -> auto& { return c.sim.angular_speed; }),
      bind<double>("sim.wander_speed", [](C& c) -> auto& { return c.sim.wander_speed; }),
      bind<double>("sim.reaction_lag_s", [](C& c) -> auto& { return c.sim.human_reaction_lag_s; }),
      bind<double>("sim.response_tau_s", [](C& c) -> auto& { return c.sim.human_response_tau_s; }),
      bind<double>("sim.gain", [](C& c) -> auto& { return c.sim.human_gain; }),
      bind<double>("sim.noise_std", [](C& c) -> auto& { return c.sim.noise_std; }),
      bind<double>("sim.initial_depth_m", [](C& c) -> auto& { return c.sim.initial_depth_m; }),
      bind<double>("sim.preferred_depth_m", [](C& c) -> auto& { return c.sim.preferred_depth_m; }),
      bind<double>("sim.lin_vel_max", [](C& c) -> auto& { return c.sim.lin_vel_max; }),
      bind<double>("sim.ang_vel_max", [](C& c) -> auto& { return c.sim.ang_vel_max; }),
  };
  return all;
}

/// Applies one `key=value` assignment; unknown keys are rejected.
inline void apply_setting(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  const auto& all = settings();
  const auto it = std::find_if(all.begin(), all.end(), [&](const Setting& s) { return s.key == key; });
  if (it == all.end()) fail(ErrorCategory::invalid_argument, "unknown configuration key '" + std::string(key) + "'");
  it->set(cfg, value);
}

/// Parses `key = value` lines. Blank lines and lines starting with '#' are
/// ignored; a key may appear only once.
inline void apply_config_text(PipelineConfig& cfg, std::string_view text, std::string_view source) {
  std::map<std::string, std::size_t, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
    pos = nl == text.npos ? text.size() + 1 : nl + 1;
    ++line_no;
    line = detail::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == line.npos) fail(ErrorCategory::parse_error, where + ": expected 'key = value'");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty()) fail(ErrorCategory::parse_error, where + ": missing key");
    if (const auto it = seen.find(key); it != seen.end()) {
      fail(ErrorCategory::parse_error,
           where + ": duplicate key '" + std::string(key) + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen.emplace(std::string(key), line_no);
    try {
      apply_setting(cfg, key, value);
    } catch (const Error& e) {
      fail(e.category(), where + ": " + e.what());
    }
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  apply_config_text(cfg, read_text_file(path), path.string());
  return cfg;
}

/// Applies `key=value` overrides given on the command line.
inline void apply_overrides(PipelineConfig& cfg, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == a.npos) fail(ErrorCategory::parse_error, "override '" + a + "' is not key=value");
    apply_setting(cfg, detail::trim(std::string_view(a).substr(0, eq)),
                  detail::trim(std::string_view(a).substr(eq + 1)));
  }
}

/// Every setting rendered back to text, in registry order.
inline std::vector<std::pair<std::string, std::string>> describe(const PipelineConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : settings()) out.emplace_back(s.key, s.get(cfg));
  return out;
}

}  // namespace influence
