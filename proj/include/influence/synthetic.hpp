#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "influence/csv_io.hpp"
#include "influence/data_model.hpp"
#include "influence/error.hpp"
#include "influence/random.hpp"
#include "influence/te_engine.hpp"

namespace influence {

enum class EventType { forward, backward, turn_left, turn_right };

constexpr std::string_view to_string(EventType t) noexcept {
  switch (t) {
    case EventType::forward: return "forward";
    case EventType::backward: return "backward";
    case EventType::turn_left: return "turn_left";
    case EventType::turn_right: return "turn_right";
  }
  return "unknown";
}

inline EventType parse_event_type(std::string_view s) {
  for (auto t : {EventType::forward, EventType::backward, EventType::turn_left, EventType::turn_right}) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorCategory::parse_error, "unknown event type '" + std::string(s) + "'");
}

/// Robot translation events are the ones the simulated human reacts to.
constexpr bool has_depth_response(EventType t) noexcept {
  return t == EventType::forward || t == EventType::backward;
}

struct ActionEvent {
  std::size_t id = 0;
  EventType type = EventType::forward;
  std::size_t start_t = 0;  // first frame of the burst
  std::size_t end_t = 0;    // last frame of the burst (velocity back at zero)
};

struct GroundTruth {
  std::vector<ActionEvent> events;
  std::vector<bool> causal;  // per frame: inside a robot translation burst
};

/// Synthetic proximity interaction. Lengths in meters, velocities in m/s and
/// rad/s. Optionally the human also steps on its own ("wander"); those steps
/// look like robot motion in the relative depth signal but trigger no
/// reaction.
struct SimConfig {
  double duration_s = 900.0;
  double sample_rate_hz = 10.0;
  double event_rate_per_min = 15.0;  // robot bursts, all four types
  double turn_fraction = 0.2;        // share of robot bursts that are turns
  bool rotation_bursts = true;
  double wander_rate_per_min = 0.0;
  double min_gap_s = 2.0;  // quiet time after each burst
  double lead_in_s = 3.0;

  double rise_s = 0.1;
  double hold_min_s = 0.5;
  double hold_max_s = 1.5;
  double fall_s = 0.1;
  double linear_speed = 0.3;
  double angular_speed = 0.6;
  double wander_speed = 0.3;

  double human_reaction_lag_s = 0.8;
  double human_response_tau_s = 0.2;
  double human_gain = 0.35;  // size of the reactive step
  double noise_std = 0.01;

  double initial_depth_m = 1.5;
  double preferred_depth_m = 1.5;
  double lin_vel_max = 0.5;  // normalization bounds
  double ang_vel_max = 1.0;

  std::uint64_t rng_seed = 0;

  std::size_t frame_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  }

  void validate() const {
    auto positive = [](double v, const char* name) {
      require(v > 0.0 && std::isfinite(v), ErrorCategory::invalid_argument,
              std::string(name) + " must be positive");
    };
    auto non_negative = [](double v, const char* name) {
      require(v >= 0.0 && std::isfinite(v), ErrorCategory::invalid_argument,
              std::string(name) + " must be non-negative");
    };
    positive(duration_s, "duration_s");
    positive(sample_rate_hz, "sample_rate_hz");
    non_negative(event_rate_per_min, "event_rate_per_min");
    non_negative(wander_rate_per_min, "wander_rate_per_min");
    require(turn_fraction >= 0.0 && turn_fraction <= 1.0, ErrorCategory::invalid_argument,
            "turn_fraction must lie in [0,1]");
    non_negative(min_gap_s, "min_gap_s");
    non_negative(lead_in_s, "lead_in_s");
    non_negative(rise_s, "rise_s");
    non_negative(fall_s, "fall_s");
    non_negative(hold_min_s, "hold_min_s");
    require(hold_max_s >= hold_min_s, ErrorCategory::invalid_argument, "hold_max_s < hold_min_s");
    non_negative(linear_speed, "linear_speed");
    non_negative(angular_speed, "angular_speed");
    non_negative(wander_speed, "wander_speed");
    require(human_reaction_lag_s > 0.5 && human_reaction_lag_s < 2.0, ErrorCategory::invalid_argument,
            "human_reaction_lag_s must lie in (0.5, 2.0) so the lag falls inside the masked span");
    positive(human_response_tau_s, "human_response_tau_s");
    non_negative(human_gain, "human_gain");
    non_negative(noise_std, "noise_std");
    positive(initial_depth_m, "initial_depth_m");
    positive(lin_vel_max, "lin_vel_max");
    positive(ang_vel_max, "ang_vel_max");
    require(linear_speed <= lin_vel_max && angular_speed <= ang_vel_max,
            ErrorCategory::invalid_argument, "burst speeds exceed the normalization bounds");
  }

  TrajectorySchema schema() const {
    TrajectorySchema s;
    s.action_vmax = {lin_vel_max, ang_vel_max};
    s.sample_rate_hz = sample_rate_hz;
    return s;
  }
};

struct SimulationOutput {
  RawTrajectory raw;      // meters and m/s, as written to CSV
  Trajectory trajectory;  // normalized
  GroundTruth truth;
  std::vector<ActionEvent> human_steps;  // spontaneous human moves (type = direction)
};

/// Trapezoid velocity profile value at `tau` seconds into a burst.
inline double trapezoid(double tau, double rise, double hold, double fall) {
  if (tau <= 0.0) return 0.0;
  if (tau < rise) return tau / rise;
  if (tau <= rise + hold) return 1.0;
  if (tau < rise + hold + fall) return (rise + hold + fall - tau) / fall;
  return 0.0;
}

/// Human reaction to a robot translation: a first-order step of size
/// `human_gain` with time constant tau, beginning `lag` after the burst ends
/// (forward, the human retreats) or after it starts (backward, the human
/// follows). Returns the human displacement at frame k.
inline double reaction_displacement(const ActionEvent& e, std::size_t k, const SimConfig& cfg) {
  const auto lag = static_cast<std::size_t>(std::llround(cfg.human_reaction_lag_s * cfg.sample_rate_hz));
  std::size_t onset = 0;
  double sign = 0.0;
  if (e.type == EventType::forward) {
    onset = e.end_t + lag;
    sign = 1.0;
  } else if (e.type == EventType::backward) {
    onset = e.start_t + lag;
    sign = -1.0;
  } else {
    return 0.0;
  }
  if (k < onset) return 0.0;
  const double elapsed = static_cast<double>(k - onset) / cfg.sample_rate_hz;
  return sign * cfg.human_gain * (1.0 - std::exp(-elapsed / cfg.human_response_tau_s));
}

inline SimulationOutput simulate_interaction(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t T = cfg.frame_count();
  require(T >= 2, ErrorCategory::invalid_argument, "duration too short for a single frame pair");
  const double dt = 1.0 / cfg.sample_rate_hz;
  Rng rng(cfg.rng_seed);

  std::vector<double> lin(T, 0.0), ang(T, 0.0), wander(T, 0.0);
  SimulationOutput out;

  auto frames = [&](double seconds) {
    return static_cast<std::size_t>(std::llround(seconds * cfg.sample_rate_hz));
  };
  auto fill_burst = [&](std::vector<double>& v, std::size_t start, double speed, double hold) {
    const std::size_t len = frames(cfg.rise_s + hold + cfg.fall_s);
    for (std::size_t k = 0; k <= len && start + k < T; ++k) {
      v[start + k] += speed * trapezoid(static_cast<double>(k) * dt, cfg.rise_s, hold, cfg.fall_s);
    }
    return start + len;
  };

  // true relative depth at frame k given everything scheduled so far
  std::vector<double> robot_pos(T, 0.0), human_pos(T, 0.0);
  auto current_depth = [&](std::size_t upto) {
    double rp = 0.0, hp = 0.0;
    for (std::size_t k = 1; k <= upto && k < T; ++k) {
      rp += lin[k] * dt;
      hp += wander[k] * dt;
    }
    for (const auto& e : out.truth.events) hp += reaction_displacement(e, upto, cfg);
    return cfg.initial_depth_m + hp - rp;
  };

  // Robot bursts: translations alternate direction, as an operator
  // approaching and backing off would.
  if (cfg.event_rate_per_min > 0.0) {
    std::size_t cursor = frames(cfg.lead_in_s);
    bool next_forward = rng.bernoulli(0.5);
    while (true) {
      cursor += frames(rng.exponential(60.0 / cfg.event_rate_per_min));
      const double hold = static_cast<double>(frames(rng.uniform(cfg.hold_min_s, cfg.hold_max_s))) * dt;
      const std::size_t len = frames(cfg.rise_s + hold + cfg.fall_s);
      if (cursor + len + frames(cfg.min_gap_s) >= T) break;
      ActionEvent e;
      e.id = out.truth.events.size();
      e.start_t = cursor;
      if (cfg.rotation_bursts && rng.bernoulli(cfg.turn_fraction)) {
        e.type = rng.bernoulli(0.5) ? EventType::turn_left : EventType::turn_right;
        const double sign = e.type == EventType::turn_left ? 1.0 : -1.0;
        e.end_t = fill_burst(ang, cursor, sign * cfg.angular_speed, hold);
      } else {
        e.type = next_forward ? EventType::forward : EventType::backward;
        next_forward = !next_forward;
        const double sign = e.type == EventType::forward ? 1.0 : -1.0;
        e.end_t = fill_burst(lin, cursor, sign * cfg.linear_speed, hold);
      }
      out.truth.events.push_back(e);
      cursor += len + frames(cfg.min_gap_s);
    }
  }

  // Human steps form an independent process, free to overlap robot bursts,
  // so their timing carries no information about the robot's actions.
  if (cfg.wander_rate_per_min > 0.0) {
    std::size_t cursor = frames(cfg.lead_in_s);
    while (true) {
      cursor += frames(rng.exponential(60.0 / cfg.wander_rate_per_min));
      const double hold = static_cast<double>(frames(rng.uniform(cfg.hold_min_s, cfg.hold_max_s))) * dt;
      const std::size_t len = frames(cfg.rise_s + hold + cfg.fall_s);
      if (cursor + len + frames(cfg.min_gap_s) >= T) break;
      // step toward the preferred distance
      const double depth = current_depth(cursor);
      ActionEvent step;
      step.id = out.human_steps.size();
      step.start_t = cursor;
      step.type = depth > cfg.preferred_depth_m ? EventType::forward : EventType::backward;
      const double sign = step.type == EventType::forward ? -1.0 : 1.0;
      step.end_t = fill_burst(wander, cursor, sign * cfg.wander_speed, hold);
      out.human_steps.push_back(step);
      cursor += len + frames(cfg.min_gap_s);
    }
  }

  for (std::size_t k = 1; k < T; ++k) {
    robot_pos[k] = robot_pos[k - 1] + lin[k] * dt;
    human_pos[k] = human_pos[k - 1] + wander[k] * dt;
  }

  out.truth.causal.assign(T, false);
  for (const auto& e : out.truth.events) {
    if (!has_depth_response(e.type)) continue;
    for (std::size_t k = e.start_t; k <= e.end_t && k < T; ++k) out.truth.causal[k] = true;
  }

  out.raw.time.resize(T);
  out.raw.observations.assign(1, std::vector<double>(T));
  for (std::size_t k = 0; k < T; ++k) {
    double reaction = 0.0;
    for (const auto& e : out.truth.events) reaction += reaction_displacement(e, k, cfg);
    const double depth = cfg.initial_depth_m + human_pos[k] + reaction - robot_pos[k];
    const double noise = cfg.noise_std > 0.0 ? rng.normal(0.0, cfg.noise_std) : 0.0;
    out.raw.time[k] = static_cast<double>(k) * dt;
    out.raw.observations[0][k] = depth + noise;
  }
  out.raw.actions = {std::move(lin), std::move(ang)};
  out.trajectory = make_trajectory(out.raw, cfg.schema());
  return out;
}

// ---------------------------------------------------------------------------
// ground-truth files

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruth& truth) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : truth.events) {
    rows.push_back({std::to_string(e.id), std::string(to_string(e.type)), std::to_string(e.start_t),
                    std::to_string(e.end_t)});
  }
  write_text_file_atomic(path, render_csv({"event_id", "type", "start_t", "end_t"}, rows));
}

inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
  const auto doc = read_csv(path);
  const auto src = path.string();
  const auto id_col = doc.column_index("event_id", src);
  const auto type_col = doc.column_index("type", src);
  const auto start_col = doc.column_index("start_t", src);
  const auto end_col = doc.column_index("end_t", src);
  GroundTruth truth;
  std::size_t last_frame = 0;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto line = doc.line_numbers[r];
    ActionEvent e;
    e.id = static_cast<std::size_t>(parse_number(doc.rows[r][id_col], src, line));
    try {
      e.type = parse_event_type(doc.rows[r][type_col]);
    } catch (const Error& err) {
      fail(ErrorCategory::parse_error, src + ": line " + std::to_string(line) + ": " + err.what());
    }
    e.start_t = static_cast<std::size_t>(parse_number(doc.rows[r][start_col], src, line));
    e.end_t = static_cast<std::size_t>(parse_number(doc.rows[r][end_col], src, line));
    require(e.end_t >= e.start_t, ErrorCategory::parse_error,
            src + ": line " + std::to_string(line) + ": event ends before it starts");
    last_frame = std::max(last_frame, e.end_t);
    truth.events.push_back(e);
  }
  truth.causal.assign(truth.events.empty() ? 0 : last_frame + 1, false);
  for (const auto& e : truth.events) {
    if (!has_depth_response(e.type)) continue;
    for (std::size_t k = e.start_t; k <= e.end_t; ++k) truth.causal[k] = true;
  }
  return truth;
}

// ---------------------------------------------------------------------------
// detection scoring

struct DetectionScore {
  double recall = 0.0;
  double precision = 1.0;  // 1.0 by convention when there are no peaks
  double turn_peak_fraction = 0.0;
  std::size_t peak_count = 0;
  std::size_t responsive_events = 0;
  std::size_t matched_events = 0;
  std::size_t turn_peaks = 0;
};

inline bool window_overlaps(const TePeak& p, const ActionEvent& e, std::size_t tolerance) {
  const std::size_t lo = e.start_t > tolerance ? e.start_t - tolerance : 0;
  const std::size_t hi = e.end_t + tolerance;
  return p.window_start_t <= hi && p.window_end_t >= lo;
}

/// A peak matches an event when its attributed action window overlaps the
/// event's frames widened by `tolerance_frames`. Events are matched in time
/// order, each to the strongest still-unmatched overlapping peak.
inline DetectionScore evaluate_detection(const std::vector<TePeak>& peaks, const GroundTruth& truth,
                                         std::size_t tolerance_frames) {
  DetectionScore score;
  score.peak_count = peaks.size();
  std::vector<bool> used(peaks.size(), false);
  auto events = truth.events;
  std::sort(events.begin(), events.end(),
            [](const ActionEvent& a, const ActionEvent& b) { return a.start_t < b.start_t; });
  for (const auto& e : events) {
    if (!has_depth_response(e.type)) continue;
    ++score.responsive_events;
    std::size_t best = peaks.size();
    for (std::size_t i = 0; i < peaks.size(); ++i) {
      if (used[i] || !window_overlaps(peaks[i], e, tolerance_frames)) continue;
      if (best == peaks.size() || peaks[i].te_value > peaks[best].te_value) best = i;
    }
    if (best != peaks.size()) {
      used[best] = true;
      ++score.matched_events;
    }
  }
  for (const auto& p : peaks) {
    const bool on_turn = std::any_of(events.begin(), events.end(), [&](const ActionEvent& e) {
      return !has_depth_response(e.type) && window_overlaps(p, e, tolerance_frames);
    });
    if (on_turn) ++score.turn_peaks;
  }
  if (score.responsive_events > 0) {
    score.recall = static_cast<double>(score.matched_events) / static_cast<double>(score.responsive_events);
  }
  if (!peaks.empty()) {
    score.precision = static_cast<double>(score.matched_events) / static_cast<double>(peaks.size());
    score.turn_peak_fraction = static_cast<double>(score.turn_peaks) / static_cast<double>(peaks.size());
  }
  return score;
}

}  // namespace influence
