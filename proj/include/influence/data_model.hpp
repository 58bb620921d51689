#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "influence/error.hpp"

namespace influence {

/// Dense row-major matrix of frames: one row per time step, one column per channel.
class FrameMatrix {
 public:
  FrameMatrix() = default;
  FrameMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double> column(std::size_t c) const {
    std::vector<double> out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
  }

  void set_column(std::size_t c, std::span<const double> values) {
    require(values.size() == rows_, ErrorCategory::invalid_argument, "column length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
  }

  /// Copy of rows [first, first + count).
  FrameMatrix slice(std::size_t first, std::size_t count) const {
    FrameMatrix out(count, cols_);
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
                out.data_.begin());
    return out;
  }

  std::span<const double> flat() const noexcept { return data_; }
  std::span<double> flat() noexcept { return data_; }

  friend bool operator==(const FrameMatrix&, const FrameMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Synchronized observation/action channels sampled at a fixed rate,
/// with every value normalized into [0, 1].
struct Trajectory {
  double sample_rate_hz = 10.0;
  FrameMatrix observations;
  FrameMatrix actions;
  std::vector<std::string> observation_names;
  std::vector<std::string> action_names;

  std::size_t length() const noexcept { return observations.rows(); }
  std::size_t observation_channels() const noexcept { return observations.cols(); }
  std::size_t action_channels() const noexcept { return actions.cols(); }

  void validate() const {
    require(sample_rate_hz > 0.0, ErrorCategory::invalid_argument,
            "sample rate must be positive");
    require(observations.rows() == actions.rows(), ErrorCategory::invalid_argument,
            "observation and action sequences differ in length");
    require(observations.cols() >= 1, ErrorCategory::invalid_argument,
            "trajectory needs at least one observation channel");
    for (const auto* m : {&observations, &actions}) {
      for (double v : m->flat()) {
        require(v >= 0.0 && v <= 1.0, ErrorCategory::invalid_argument,
                "trajectory value outside [0,1]");
      }
    }
  }
};

struct WindowConfig {
  std::size_t window_len = 20;
  std::size_t mask_start_offset = 19;
  std::size_t mask_end_offset = 5;
  std::size_t horizon = 1;

  std::size_t masked_span() const noexcept { return mask_start_offset - mask_end_offset + 1; }

  void validate() const {
    require(window_len >= 1, ErrorCategory::invalid_argument, "window length must be >= 1");
    require(window_len >= mask_start_offset + 1, ErrorCategory::invalid_argument,
            "mask start offset must lie inside the window");
    require(mask_start_offset >= mask_end_offset, ErrorCategory::invalid_argument,
            "mask start offset must not be smaller than mask end offset");
    require(horizon == 1, ErrorCategory::invalid_argument, "only a one-step horizon is supported");
  }
};

/// One supervised example anchored at frame t: frames t-W+1..t of both
/// streams, and observation channel 0 at t+1 as the target.
struct WindowSample {
  FrameMatrix obs_window;
  FrameMatrix act_window;
  double target = 0.0;
  std::size_t anchor_t = 0;

  std::size_t input_size() const noexcept {
    return obs_window.rows() * obs_window.cols() + act_window.rows() * act_window.cols();
  }

  friend bool operator==(const WindowSample&, const WindowSample&) = default;
};

/// Flattened model input: the observation block followed by the action
/// block, each row-major (frame-major).
inline std::vector<double> flatten(const WindowSample& s) {
  std::vector<double> out;
  out.reserve(s.input_size());
  out.insert(out.end(), s.obs_window.flat().begin(), s.obs_window.flat().end());
  out.insert(out.end(), s.act_window.flat().begin(), s.act_window.flat().end());
  return out;
}

/// Position of the newest frame of observation channel 0 in flatten()'s layout.
inline std::size_t last_observation_index(const WindowSample& s) {
  require(s.obs_window.rows() > 0 && s.obs_window.cols() > 0, ErrorCategory::invalid_argument,
          "sample has no observations");
  return (s.obs_window.rows() - 1) * s.obs_window.cols();
}

struct MaskSpec {
  std::vector<std::size_t> masked_frames;  // offsets within the action window
  double mask_value = 0.0;

  /// Masks the action frames t-mask_start..t-mask_end and keeps the most
  /// recent ones as the compensation segment.
  static MaskSpec for_window(const WindowConfig& cfg, double mask_value = 0.0) {
    cfg.validate();
    MaskSpec m;
    m.mask_value = mask_value;
    const std::size_t last = cfg.window_len - 1;
    for (std::size_t off = last - cfg.mask_start_offset; off <= last - cfg.mask_end_offset; ++off) {
      m.masked_frames.push_back(off);
    }
    return m;
  }

  void validate(std::size_t window_len) const {
    for (std::size_t f : masked_frames) {
      require(f < window_len, ErrorCategory::invalid_argument,
              "mask offset " + std::to_string(f) + " outside window of length " +
                  std::to_string(window_len));
    }
  }
};

// ---------------------------------------------------------------------------
// normalization

/// Maps velocities in [-v_max, v_max] onto [0, 1] with zero velocity at 0.5.
/// Out-of-range inputs are clamped.
inline std::vector<double> normalize_actions(std::span<const double> raw, double v_max) {
  require(v_max > 0.0 && std::isfinite(v_max), ErrorCategory::invalid_argument,
          "v_max must be positive");
  std::vector<double> out(raw.size());
  std::transform(raw.begin(), raw.end(), out.begin(), [v_max](double v) {
    return 0.5 + 0.5 * std::clamp(v, -v_max, v_max) / v_max;
  });
  return out;
}

/// Min-max normalization over the whole sequence; constant input maps to 0.5.
inline std::vector<double> normalize_depth(std::span<const double> raw) {
  require(!raw.empty(), ErrorCategory::invalid_argument, "cannot normalize an empty sequence");
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  std::vector<double> out(raw.size(), 0.5);
  if (range > 0.0) {
    std::transform(raw.begin(), raw.end(), out.begin(),
                   [lo, range](double d) { return (d - lo) / range; });
  }
  return out;
}

/// Dominant depth of a region: the center of the most populated histogram bin
/// over [min, max]. Ties resolve to the nearer (smaller) depth.
inline double depth_from_histogram(std::span<const double> depths, std::size_t n_bins) {
  require(!depths.empty(), ErrorCategory::invalid_argument, "depth array is empty");
  require(n_bins >= 1, ErrorCategory::invalid_argument, "n_bins must be >= 1");
  const auto [lo_it, hi_it] = std::minmax_element(depths.begin(), depths.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi <= lo) return lo;

  const double width = (hi - lo) / static_cast<double>(n_bins);
  std::vector<std::size_t> counts(n_bins, 0);
  for (double d : depths) {
    auto bin = static_cast<std::size_t>((d - lo) / width);
    ++counts[std::min(bin, n_bins - 1)];
  }
  // max_element returns the first maximum, i.e. the smallest depth
  const auto best = static_cast<std::size_t>(
      std::max_element(counts.begin(), counts.end()) - counts.begin());
  return std::clamp(lo + (static_cast<double>(best) + 0.5) * width, lo, hi);
}

// ---------------------------------------------------------------------------
// windowing

inline std::vector<WindowSample> extract_windows(const Trajectory& traj, const WindowConfig& cfg) {
  cfg.validate();
  const std::size_t T = traj.length();
  const std::size_t W = cfg.window_len;
  require(traj.actions.rows() == T, ErrorCategory::invalid_argument,
          "observation and action sequences differ in length");
  if (T < W + cfg.horizon) {
    fail(ErrorCategory::insufficient_data,
         "trajectory has " + std::to_string(T) + " frames, need at least " +
             std::to_string(W + cfg.horizon));
  }
  std::vector<WindowSample> out;
  out.reserve(T - W);
  for (std::size_t t = W - 1; t + cfg.horizon < T; ++t) {
    WindowSample s;
    s.anchor_t = t;
    s.obs_window = traj.observations.slice(t + 1 - W, W);
    s.act_window = traj.actions.slice(t + 1 - W, W);
    s.target = traj.observations(t + cfg.horizon, 0);
    out.push_back(std::move(s));
  }
  return out;
}

inline WindowSample apply_mask(const WindowSample& sample, const MaskSpec& mask) {
  mask.validate(sample.act_window.rows());
  WindowSample out = sample;
  for (std::size_t f : mask.masked_frames) {
    for (double& v : out.act_window.row(f)) v = mask.mask_value;
  }
  return out;
}

}  // namespace influence
