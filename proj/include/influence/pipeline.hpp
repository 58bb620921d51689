#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "influence/checkpoint.hpp"
#include "influence/clustering.hpp"
#include "influence/config.hpp"
#include "influence/csv_io.hpp"
#include "influence/data_model.hpp"
#include "influence/error.hpp"
#include "influence/gaussian_mlp.hpp"
#include "influence/svg.hpp"
#include "influence/synthetic.hpp"
#include "influence/te_engine.hpp"

namespace influence {

inline constexpr const char* kVersion = "0.1.0";

namespace fs = std::filesystem;

// Seed streams derived from the global seed.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kClusterStream = 2;
inline constexpr std::uint64_t kSimulateStream = 1000;  // + experiment index

inline std::uint64_t simulation_seed(const PipelineConfig& cfg, std::size_t index) {
  return derive_seed(cfg.seed, kSimulateStream + index);
}

// ---------------------------------------------------------------------------
// file layout

inline std::vector<fs::path> simulated_files(const PipelineConfig& cfg) {
  std::vector<fs::path> out;
  for (std::size_t i = 1; i <= cfg.sim_count; ++i) {
    out.push_back(cfg.out_dir / (cfg.sim_name + "_" + std::to_string(i) + ".csv"));
  }
  return out;
}

inline fs::path truth_file_for(const fs::path& input) {
  return input.parent_path() / (input.stem().string() + "_truth.csv");
}

/// Configured inputs, or the files `simulate` writes when none are given.
inline std::vector<fs::path> resolve_inputs(const PipelineConfig& cfg) {
  auto inputs = cfg.inputs.empty() ? simulated_files(cfg) : cfg.inputs;
  std::set<std::string> stems;
  for (const auto& p : inputs) {
    if (!stems.insert(p.stem().string()).second) {
      fail(ErrorCategory::invalid_argument, "two inputs share the file name stem '" + p.stem().string() + "'");
    }
  }
  return inputs;
}

inline std::vector<fs::path> resolve_truths(const PipelineConfig& cfg, const std::vector<fs::path>& inputs) {
  if (!cfg.truths.empty()) return cfg.truths;
  std::vector<fs::path> out;
  for (const auto& p : inputs) out.push_back(truth_file_for(p));
  return out;
}

inline fs::path te_file(const PipelineConfig& cfg, const fs::path& input) {
  return cfg.out_dir / (input.stem().string() + "_te.csv");
}
inline fs::path peaks_file(const PipelineConfig& cfg, const fs::path& input) {
  return cfg.out_dir / (input.stem().string() + "_peaks.csv");
}
inline fs::path te_plot_file(const PipelineConfig& cfg, const fs::path& input) {
  return cfg.out_dir / (input.stem().string() + "_te.svg");
}
inline fs::path clusters_file(const PipelineConfig& cfg) { return cfg.out_dir / "clusters.csv"; }
inline fs::path centroids_file(const PipelineConfig& cfg) { return cfg.out_dir / "centroids.csv"; }
inline fs::path cluster_plot_file(const PipelineConfig& cfg) { return cfg.out_dir / "clusters.svg"; }
inline fs::path history_file(const PipelineConfig& cfg) { return cfg.out_dir / "train_history.csv"; }
inline fs::path report_file(const PipelineConfig& cfg) { return cfg.out_dir / "report.json"; }

/// Files produced by a command, held in memory until every one is ready.
class OutputSet {
 public:
  void add(fs::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

  std::vector<fs::path> commit() const {
    std::vector<fs::path> written;
    for (const auto& [path, content] : files_) {
      write_text_file_atomic(path, content);
      written.push_back(path);
    }
    return written;
  }

  const std::vector<std::pair<fs::path, std::string>>& files() const noexcept { return files_; }

 private:
  std::vector<std::pair<fs::path, std::string>> files_;
};

// ---------------------------------------------------------------------------
// TE, peak, cluster and centroid files

struct TeRow {
  std::size_t anchor_t = 0;
  double te_raw = 0.0;
  double te_smoothed = 0.0;
  bool is_peak = false;
};

inline std::string render_te_csv(const TeSeries& raw, const TeSeries& smoothed,
                                 const std::vector<TePeak>& peaks) {
  std::set<std::size_t> peak_anchors;
  for (const auto& p : peaks) peak_anchors.insert(p.anchor_t);
  std::vector<std::vector<std::string>> rows;
  rows.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    rows.push_back({std::to_string(raw.anchors[i]), format_number(raw.values[i]),
                    format_number(smoothed.values[i]), peak_anchors.count(raw.anchors[i]) ? "1" : "0"});
  }
  return render_csv({"anchor_t", "te_raw", "te_smoothed", "is_peak"}, rows);
}

inline std::size_t parse_index(std::string_view cell, const std::string& src, std::size_t line) {
  const double v = parse_number(cell, src, line);
  if (v < 0.0 || v != std::floor(v)) {
    fail(ErrorCategory::parse_error, src + ": line " + std::to_string(line) + ": expected a frame index");
  }
  return static_cast<std::size_t>(v);
}

inline std::vector<TeRow> load_te_csv(const fs::path& path) {
  const auto doc = read_csv(path);
  const auto src = path.string();
  const auto a = doc.column_index("anchor_t", src);
  const auto r = doc.column_index("te_raw", src);
  const auto s = doc.column_index("te_smoothed", src);
  const auto p = doc.column_index("is_peak", src);
  std::vector<TeRow> out;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto line = doc.line_numbers[i];
    TeRow row;
    row.anchor_t = parse_index(doc.rows[i][a], src, line);
    row.te_raw = parse_number(doc.rows[i][r], src, line);
    row.te_smoothed = parse_number(doc.rows[i][s], src, line);
    row.is_peak = parse_number(doc.rows[i][p], src, line) != 0.0;
    out.push_back(row);
  }
  return out;
}

inline std::string render_peaks_csv(const std::vector<TePeak>& peaks) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : peaks) {
    rows.push_back({std::to_string(p.anchor_t), format_number(p.te_value), std::to_string(p.window_start_t),
                    std::to_string(p.window_end_t)});
  }
  return render_csv({"anchor_t", "te_value", "window_start_t", "window_end_t"}, rows);
}

/// Peaks without their action windows; see attach_action_windows.
inline std::vector<TePeak> load_peaks_csv(const fs::path& path) {
  const auto doc = read_csv(path);
  const auto src = path.string();
  const auto a = doc.column_index("anchor_t", src);
  const auto v = doc.column_index("te_value", src);
  const auto ws = doc.column_index("window_start_t", src);
  const auto we = doc.column_index("window_end_t", src);
  std::vector<TePeak> out;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto line = doc.line_numbers[i];
    TePeak p;
    p.anchor_t = parse_index(doc.rows[i][a], src, line);
    p.te_value = parse_number(doc.rows[i][v], src, line);
    p.window_start_t = parse_index(doc.rows[i][ws], src, line);
    p.window_end_t = parse_index(doc.rows[i][we], src, line);
    require(p.window_end_t >= p.window_start_t, ErrorCategory::parse_error,
            src + ": line " + std::to_string(line) + ": window ends before it starts");
    out.push_back(p);
  }
  return out;
}

/// Re-slices each peak's attributed action frames from its trajectory.
inline void attach_action_windows(std::vector<TePeak>& peaks, const Trajectory& traj, const std::string& source) {
  for (auto& p : peaks) {
    require(p.window_end_t < traj.length(), ErrorCategory::invalid_argument,
            source + ": peak window at frame " + std::to_string(p.window_start_t) + " lies outside the trajectory");
    p.action_window = traj.actions.slice(p.window_start_t, p.window_end_t - p.window_start_t + 1);
  }
}

struct ClusterRow {
  std::size_t sequence_id = 0;
  std::string experiment_id;
  std::size_t anchor_t = 0;
  std::size_t cluster_id = 0;
};

inline std::string render_clusters_csv(const std::vector<ClusterRow>& rows) {
  std::vector<std::vector<std::string>> text;
  for (const auto& r : rows) {
    text.push_back({std::to_string(r.sequence_id), r.experiment_id, std::to_string(r.anchor_t),
                    std::to_string(r.cluster_id)});
  }
  return render_csv({"sequence_id", "experiment_id", "anchor_t", "cluster_id"}, text);
}

inline std::vector<ClusterRow> load_clusters_csv(const fs::path& path) {
  const auto doc = read_csv(path);
  const auto src = path.string();
  const auto s = doc.column_index("sequence_id", src);
  const auto e = doc.column_index("experiment_id", src);
  const auto a = doc.column_index("anchor_t", src);
  const auto c = doc.column_index("cluster_id", src);
  std::vector<ClusterRow> out;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto line = doc.line_numbers[i];
    out.push_back({parse_index(doc.rows[i][s], src, line), doc.rows[i][e], parse_index(doc.rows[i][a], src, line),
                   parse_index(doc.rows[i][c], src, line)});
  }
  return out;
}

inline std::string render_centroids_csv(const std::vector<Sequence>& centroids) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    for (std::size_t f = 0; f < centroids[c].size(); ++f) {
      rows.push_back({std::to_string(c), std::to_string(f), format_number(centroids[c][f])});
    }
  }
  return render_csv({"cluster_id", "frame_offset", "value"}, rows);
}

inline std::vector<Sequence> load_centroids_csv(const fs::path& path) {
  const auto doc = read_csv(path);
  const auto src = path.string();
  const auto c = doc.column_index("cluster_id", src);
  const auto f = doc.column_index("frame_offset", src);
  const auto v = doc.column_index("value", src);
  std::vector<Sequence> out;
  for (std::size_t i = 0; i < doc.rows.size(); ++i) {
    const auto line = doc.line_numbers[i];
    const auto cid = parse_index(doc.rows[i][c], src, line);
    const auto off = parse_index(doc.rows[i][f], src, line);
    if (cid >= out.size()) out.resize(cid + 1);
    require(off == out[cid].size(), ErrorCategory::parse_error,
            src + ": line " + std::to_string(line) + ": frame offsets must be consecutive per cluster");
    out[cid].push_back(parse_number(doc.rows[i][v], src, line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// centroid shapes

enum class CentroidShape { end_of_forward, start_of_backward, other };

inline std::string_view to_string(CentroidShape s) {
  switch (s) {
    case CentroidShape::end_of_forward: return "end_of_forward";
    case CentroidShape::start_of_backward: return "start_of_backward";
    case CentroidShape::other: return "other";
  }
  return "other";
}

struct ShapeSummary {
  double head = 0.0;  // mean of the first frames
  double tail = 0.0;  // mean of the last frames
  CentroidShape shape = CentroidShape::other;
};

/// Linear-velocity centroid shape: forward motion that has ended (head above
/// neutral, tail near it) or backward motion that has begun (head near
/// neutral, tail below it). Neutral velocity normalizes to 0.5.
inline ShapeSummary classify_centroid(const Sequence& c, std::size_t frames = 3, double margin = 0.05) {
  require(c.size() >= frames && frames > 0, ErrorCategory::invalid_argument, "centroid too short to classify");
  ShapeSummary s;
  for (std::size_t i = 0; i < frames; ++i) {
    s.head += c[i];
    s.tail += c[c.size() - frames + i];
  }
  s.head /= static_cast<double>(frames);
  s.tail /= static_cast<double>(frames);
  const auto near_neutral = [margin](double v) { return std::abs(v - 0.5) <= margin; };
  if (s.head > 0.5 + margin && near_neutral(s.tail)) {
    s.shape = CentroidShape::end_of_forward;
  } else if (near_neutral(s.head) && s.tail < 0.5 - margin) {
    s.shape = CentroidShape::start_of_backward;
  }
  return s;
}

// ---------------------------------------------------------------------------
// commands

namespace detail {

inline void check_schema_for_simulation(const PipelineConfig& cfg) {
  require(cfg.schema.observation_columns.size() == 1 && cfg.schema.action_columns.size() == 2,
          ErrorCategory::invalid_argument,
          "simulate writes one observation and two action columns; the configured schema differs");
  require(!cfg.schema.normalized, ErrorCategory::invalid_argument,
          "simulate writes raw values; set input.normalized = false");
  require(cfg.sim.sample_rate_hz == cfg.schema.sample_rate_hz, ErrorCategory::invalid_argument,
          "sim.sample_rate_hz must equal input.sample_rate_hz");
}

inline std::string render_raw_trajectory(const RawTrajectory& raw, const TrajectorySchema& schema) {
  std::vector<std::string> header{schema.time_column};
  header.insert(header.end(), schema.observation_columns.begin(), schema.observation_columns.end());
  header.insert(header.end(), schema.action_columns.begin(), schema.action_columns.end());
  std::vector<std::vector<std::string>> rows(raw.time.size());
  for (std::size_t k = 0; k < raw.time.size(); ++k) {
    auto& r = rows[k];
    r.push_back(format_number(raw.time[k]));
    for (const auto& c : raw.observations) r.push_back(format_number(c[k]));
    for (const auto& c : raw.actions) r.push_back(format_number(c[k]));
  }
  return render_csv(header, rows);
}

inline std::string render_truth(const GroundTruth& truth) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : truth.events) {
    rows.push_back({std::to_string(e.id), std::string(to_string(e.type)), std::to_string(e.start_t),
                    std::to_string(e.end_t)});
  }
  return render_csv({"event_id", "type", "start_t", "end_t"}, rows);
}

inline std::vector<WindowSample> windows_for(const Trajectory& traj, const WindowConfig& window,
                                             const fs::path& source) {
  try {
    return extract_windows(traj, window);
  } catch (const Error& e) {
    fail(e.category(), source.string() + ": " + e.what());
  }
}

inline std::string analysis_plot(const std::string& title, const Trajectory& traj, const TeTrace& trace,
                                 const TeSeries& smoothed, const std::vector<TePeak>& peaks) {
  const double W = 1200, left = 70, right = 20, panel_h = 200, gap = 60, top = 40;
  svg::Canvas canvas(W, top + 3 * panel_h + 2 * gap + 40);
  canvas.text(W / 2, 20, title, 15, "middle");
  const double fs_hz = traj.sample_rate_hz;
  const double t_max = traj.length() > 1 ? static_cast<double>(traj.length() - 1) / fs_hz : 1.0;

  std::vector<double> time(traj.length());
  for (std::size_t k = 0; k < time.size(); ++k) time[k] = static_cast<double>(k) / fs_hz;

  // actions
  svg::Panel actions{left, top, W - left - right, panel_h, 0.0, t_max, 0.0, 1.0};
  actions.decorate(canvas, "actions (normalized)");
  for (std::size_t c = 0; c < traj.action_channels(); ++c) {
    canvas.polyline(actions.map(time, traj.actions.column(c)), svg::color(c), 1.0);
    canvas.text(actions.left + actions.width - 4, actions.top + 14 + 14 * static_cast<double>(c),
                traj.action_names.size() > c ? traj.action_names[c] : "action", 11, "end");
  }

  // observation with both predictions, each +-3 sd, plotted at the predicted frame
  const std::size_t n = trace.series.size();
  std::vector<double> pt(n), fm(n), flo(n), fhi(n), mm(n), mlo(n), mhi(n);
  for (std::size_t i = 0; i < n; ++i) {
    pt[i] = static_cast<double>(trace.series.anchors[i] + 1) / fs_hz;
    fm[i] = trace.full[i].mean;
    flo[i] = fm[i] - 3.0 * trace.full[i].std;
    fhi[i] = fm[i] + 3.0 * trace.full[i].std;
    mm[i] = trace.masked[i].mean;
    mlo[i] = mm[i] - 3.0 * trace.masked[i].std;
    mhi[i] = mm[i] + 3.0 * trace.masked[i].std;
  }
  const auto obs = traj.observations.column(0);
  const auto [olo, ohi] = svg::range_of({obs, flo, fhi, mlo, mhi});
  svg::Panel depth{left, top + panel_h + gap, W - left - right, panel_h, 0.0, t_max, olo, ohi};
  depth.decorate(canvas, "observation with full (blue) and masked (red) predictions, +-3 sd");
  auto band = [&](const std::vector<double>& lo, const std::vector<double>& hi, std::string_view fill) {
    auto pts = depth.map(pt, hi);
    auto lower = depth.map(pt, lo);
    pts.insert(pts.end(), lower.rbegin(), lower.rend());
    canvas.polygon(pts, fill, 0.2);
  };
  band(mlo, mhi, svg::color(1));
  band(flo, fhi, svg::color(0));
  canvas.polyline(depth.map(time, obs), "#000", 1.0);
  canvas.polyline(depth.map(pt, mm), svg::color(1), 1.0, 0.8);
  canvas.polyline(depth.map(pt, fm), svg::color(0), 1.0, 0.8);

  // TE with peaks
  std::vector<double> at(n);
  for (std::size_t i = 0; i < n; ++i) at[i] = static_cast<double>(trace.series.anchors[i]) / fs_hz;
  const auto [tlo, thi] = svg::range_of({trace.series.values, smoothed.values});
  svg::Panel te{left, top + 2 * (panel_h + gap), W - left - right, panel_h, 0.0, t_max, tlo, thi};
  te.decorate(canvas, "transfer entropy (nats): raw (grey), smoothed (black), peaks (red)");
  if (tlo < 0.0 && thi > 0.0) canvas.line(te.left, te.y(0.0), te.left + te.width, te.y(0.0), "#bbb");
  canvas.polyline(te.map(at, trace.series.values), "#999", 0.8);
  canvas.polyline(te.map(at, smoothed.values), "#000", 1.2);
  for (const auto& p : peaks) {
    canvas.circle(te.x(static_cast<double>(p.anchor_t) / fs_hz), te.y(p.te_value), 3.0, svg::color(1));
  }
  canvas.text(W / 2, top + 3 * panel_h + 2 * gap + 30, "time (s)", 12, "middle");
  return canvas.str();
}

inline std::string cluster_plot(const std::string& channel, const std::vector<Sequence>& sequences,
                                const ClusterResult& res, const std::vector<Sequence>& centroids) {
  const double W = 800, H = 500, left = 70, top = 40;
  svg::Canvas canvas(W, H);
  const std::size_t len = sequences.empty() ? 1 : sequences.front().size();
  svg::Panel p{left, top, W - left - 20, H - top - 60, 0.0, static_cast<double>(len - 1), 0.0, 1.0};
  p.decorate(canvas, "influential action sequences (" + channel + "): members and centroids");
  canvas.line(p.left, p.y(0.5), p.left + p.width, p.y(0.5), "#bbb");
  std::vector<double> xs(len);
  for (std::size_t f = 0; f < len; ++f) xs[f] = static_cast<double>(f);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    canvas.polyline(p.map(xs, sequences[i]), svg::color(res.assignments[i]), 0.6, 0.25);
  }
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    canvas.polyline(p.map(xs, centroids[c]), svg::color(c), 3.0);
    std::size_t members = std::count(res.assignments.begin(), res.assignments.end(), c);
    canvas.text(p.left + p.width - 4, p.top + 14 + 14 * static_cast<double>(c),
                "cluster " + std::to_string(c) + " (" + std::to_string(members) + ")", 11, "end");
  }
  canvas.text(W / 2, H - 15, "frame offset within attributed window", 12, "middle");
  return canvas.str();
}

}  // namespace detail

/// Writes `<name>_<i>.csv` (raw units) and `<name>_<i>_truth.csv` per experiment.
inline OutputSet cmd_simulate(const PipelineConfig& cfg) {
  cfg.validate();
  detail::check_schema_for_simulation(cfg);
  OutputSet out;
  const auto files = simulated_files(cfg);
  for (std::size_t i = 0; i < files.size(); ++i) {
    SimConfig sim = cfg.sim;
    sim.rng_seed = simulation_seed(cfg, i + 1);
    const auto res = simulate_interaction(sim);
    out.add(files[i], detail::render_raw_trajectory(res.raw, cfg.schema));
    out.add(truth_file_for(files[i]), detail::render_truth(res.truth));
  }
  return out;
}

struct TrainingOutput {
  OutputSet files;
  TrainResult result;
};

/// Trains one model on the windows of every input, concatenated in input order.
inline TrainingOutput cmd_train(const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<WindowSample> samples;
  for (const auto& input : resolve_inputs(cfg)) {
    const auto traj = load_trajectory(input, cfg.schema);
    auto w = detail::windows_for(traj, cfg.window, input);
    samples.insert(samples.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
  }
  TrainConfig tc = cfg.train;
  tc.rng_seed = derive_seed(cfg.seed, kTrainStream);
  TrainingOutput out;
  out.result = train(samples, MaskSpec::for_window(cfg.window, cfg.mask_value), tc);

  ModelMetadata meta;
  meta.window = cfg.window;
  meta.mask_value = cfg.mask_value;
  meta.observation_columns = cfg.schema.observation_columns;
  meta.action_columns = cfg.schema.action_columns;
  meta.inputs_prenormalized = cfg.schema.normalized;
  meta.action_vmax = cfg.schema.action_vmax;
  meta.rng_seed = tc.rng_seed;
  meta.best_epoch = out.result.best_epoch;
  out.files.add(cfg.model_path(), checkpoint_to_string(out.result.model, meta));

  std::vector<std::vector<std::string>> rows;
  for (const auto& h : out.result.history) {
    rows.push_back({std::to_string(h.epoch), format_number(h.train_nll),
                    std::isfinite(h.validation_nll) ? format_number(h.validation_nll) : "nan"});
  }
  out.files.add(history_file(cfg), render_csv({"epoch", "train_nll", "validation_nll"}, rows));
  return out;
}

struct ExperimentAnalysis {
  fs::path input;
  Trajectory trajectory;
  TeTrace trace;
  TeSeries smoothed;
  std::vector<TePeak> peaks;
};

/// TE series and peaks of one trajectory under a trained model.
inline ExperimentAnalysis analyze_trajectory(const PipelineConfig& cfg, const Checkpoint& ck,
                                             const fs::path& input) {
  ExperimentAnalysis a;
  a.input = input;
  a.trajectory = load_trajectory(input, cfg.schema);
  const auto& window = ck.metadata.window;
  const auto samples = detail::windows_for(a.trajectory, window, input);
  a.trace = compute_te_trace(ck.model, samples, MaskSpec::for_window(window, ck.metadata.mask_value));
  a.smoothed = smooth(a.trace.series, cfg.filter_cutoff_hz, a.trajectory.sample_rate_hz);
  a.peaks = find_te_peaks(a.smoothed, a.trajectory, window, cfg.peaks);
  return a;
}

inline Checkpoint load_model_for(const PipelineConfig& cfg) {
  auto ck = load_checkpoint(cfg.model_path());
  const auto& m = ck.metadata;
  require(m.observation_columns == cfg.schema.observation_columns && m.action_columns == cfg.schema.action_columns,
          ErrorCategory::invalid_argument,
          cfg.model_path().string() + ": model was trained on different columns than the configured schema");
  return ck;
}

/// Per input: `<stem>_te.csv`, `<stem>_peaks.csv` and `<stem>_te.svg`. The
/// window layout and mask value come from the checkpoint.
inline OutputSet cmd_analyze(const PipelineConfig& cfg) {
  cfg.validate();
  const auto ck = load_model_for(cfg);
  OutputSet out;
  for (const auto& input : resolve_inputs(cfg)) {
    const auto a = analyze_trajectory(cfg, ck, input);
    out.add(te_file(cfg, input), render_te_csv(a.trace.series, a.smoothed, a.peaks));
    out.add(peaks_file(cfg, input), render_peaks_csv(a.peaks));
    out.add(te_plot_file(cfg, input),
            detail::analysis_plot(input.stem().string(), a.trajectory, a.trace, a.smoothed, a.peaks));
  }
  return out;
}

struct ClusteringOutput {
  OutputSet files;
  std::vector<ActionSequence> sequences;
  std::vector<std::string> experiment_names;
  ClusterResult result;
  std::vector<Sequence> centroids;  // as reported: DBA or pointwise mean
};

/// Pools the peak windows of every input and clusters one action channel.
inline ClusteringOutput cmd_cluster(const PipelineConfig& cfg) {
  cfg.validate();
  ClusteringOutput out;
  const auto inputs = resolve_inputs(cfg);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto traj = load_trajectory(inputs[i], cfg.schema);
    auto peaks = load_peaks_csv(peaks_file(cfg, inputs[i]));
    attach_action_windows(peaks, traj, peaks_file(cfg, inputs[i]).string());
    auto seqs = select_channel(peaks, traj.action_names, cfg.cluster_channel, i);
    out.sequences.insert(out.sequences.end(), seqs.begin(), seqs.end());
    out.experiment_names.push_back(inputs[i].stem().string());
  }
  std::vector<Sequence> values;
  for (const auto& s : out.sequences) values.push_back(s.values);
  require(!values.empty(), ErrorCategory::insufficient_data, "no peak windows to cluster");

  KMeansConfig kc = cfg.cluster;
  kc.seed = derive_seed(cfg.seed, kClusterStream);
  out.result = kmeans_dtw(values, kc);
  if (cfg.cluster_centroid == "mean") {
    for (std::size_t c = 0; c < out.result.k; ++c) {
      std::vector<Sequence> members;
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (out.result.assignments[i] == c) members.push_back(values[i]);
      }
      out.centroids.push_back(members.empty() ? out.result.centroids[c] : pointwise_mean(members));
    }
  } else {
    out.centroids = out.result.centroids;
  }

  std::vector<ClusterRow> rows;
  for (std::size_t i = 0; i < out.sequences.size(); ++i) {
    rows.push_back({i, out.experiment_names[out.sequences[i].experiment_id], out.sequences[i].anchor_t,
                    out.result.assignments[i]});
  }
  out.files.add(clusters_file(cfg), render_clusters_csv(rows));
  out.files.add(centroids_file(cfg), render_centroids_csv(out.centroids));
  out.files.add(cluster_plot_file(cfg), detail::cluster_plot(cfg.cluster_channel, values, out.result, out.centroids));
  return out;
}

struct ExperimentScore {
  std::string name;
  DetectionScore score;
};

struct ReportOutput {
  OutputSet files;
  std::vector<ExperimentScore> experiments;
  double mean_recall = 0.0;
  double mean_precision = 0.0;
  double mean_turn_peak_fraction = 0.0;
  std::vector<ShapeSummary> centroid_shapes;  // empty when no centroids file exists
};

/// Detection scores against ground truth, centroid shapes when clustering
/// has run, and the parameters of the run.
inline ReportOutput cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  ReportOutput out;
  const auto inputs = resolve_inputs(cfg);
  const auto truths = resolve_truths(cfg, inputs);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto peaks = load_peaks_csv(peaks_file(cfg, inputs[i]));
    const auto truth = load_ground_truth(truths[i]);
    out.experiments.push_back({inputs[i].stem().string(), evaluate_detection(peaks, truth, cfg.report_tolerance)});
  }
  for (const auto& e : out.experiments) {
    out.mean_recall += e.score.recall;
    out.mean_precision += e.score.precision;
    out.mean_turn_peak_fraction += e.score.turn_peak_fraction;
  }
  const double n = static_cast<double>(out.experiments.size());
  out.mean_recall /= n;
  out.mean_precision /= n;
  out.mean_turn_peak_fraction /= n;

  nlohmann::ordered_json j;
  j["tool"] = "influence";
  j["version"] = kVersion;
  nlohmann::ordered_json seeds;
  seeds["global"] = cfg.seed;
  auto sim_seeds = nlohmann::ordered_json::array();
  for (std::size_t i = 1; i <= cfg.sim_count; ++i) sim_seeds.push_back(simulation_seed(cfg, i));
  seeds["simulate"] = sim_seeds;
  seeds["train"] = derive_seed(cfg.seed, kTrainStream);
  seeds["cluster"] = derive_seed(cfg.seed, kClusterStream);
  j["seeds"] = seeds;
  nlohmann::ordered_json params;
  for (const auto& [k, v] : describe(cfg)) params[k] = v;
  j["parameters"] = params;

  auto exps = nlohmann::ordered_json::array();
  for (const auto& e : out.experiments) {
    nlohmann::ordered_json x;
    x["name"] = e.name;
    x["peaks"] = e.score.peak_count;
    x["responsive_events"] = e.score.responsive_events;
    x["matched_events"] = e.score.matched_events;
    x["recall"] = e.score.recall;
    x["precision"] = e.score.precision;
    x["turn_peaks"] = e.score.turn_peaks;
    x["turn_peak_fraction"] = e.score.turn_peak_fraction;
    exps.push_back(x);
  }
  j["experiments"] = exps;
  j["mean"] = {{"recall", out.mean_recall},
               {"precision", out.mean_precision},
               {"turn_peak_fraction", out.mean_turn_peak_fraction}};

  std::error_code ec;
  if (fs::exists(centroids_file(cfg), ec)) {
    auto shapes = nlohmann::ordered_json::array();
    const auto centroids = load_centroids_csv(centroids_file(cfg));
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const auto s = classify_centroid(centroids[c]);
      out.centroid_shapes.push_back(s);
      nlohmann::ordered_json x;
      x["cluster_id"] = c;
      x["first_frames_mean"] = s.head;
      x["last_frames_mean"] = s.tail;
      x["shape"] = to_string(s.shape);
      shapes.push_back(x);
    }
    j["centroids"] = shapes;
  }
  out.files.add(report_file(cfg), j.dump(2) + "\n");
  return out;
}

}  // namespace influence
