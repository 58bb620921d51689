#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "influence/data_model.hpp"
#include "influence/error.hpp"
#include "influence/gaussian_mlp.hpp"

namespace influence {

/// Differential entropy of a univariate Gaussian, in nats:
/// 0.5 * (1 + log 2pi) + log sigma.
inline double differential_entropy(const GaussianPrediction& pred) {
  if (!(pred.std > 0.0) || !std::isfinite(pred.std)) {
    fail(ErrorCategory::invalid_argument, "standard deviation must be positive and finite");
  }
  return 0.5 * (1.0 + std::log(2.0 * std::numbers::pi)) + std::log(pred.std);
}

/// Entropy of the masked prediction minus entropy of the full prediction.
/// Positive when the masked actions reduce predictive uncertainty. Negative
/// estimates are returned as-is.
inline double transfer_entropy_at(const GaussianPrediction& full, const GaussianPrediction& masked) {
  return differential_entropy(masked) - differential_entropy(full);
}

struct TeSeries {
  std::vector<double> values;        // nats, one per window sample
  std::vector<std::size_t> anchors;  // trajectory frame t of each value

  std::size_t size() const noexcept { return values.size(); }
};

/// Per-sample predictions from both regimes, kept for plotting.
struct TeTrace {
  TeSeries series;
  std::vector<GaussianPrediction> full;
  std::vector<GaussianPrediction> masked;
};

inline TeTrace compute_te_trace(const MlpModel& model, const std::vector<WindowSample>& samples,
                                const MaskSpec& mask) {
  TeTrace trace;
  trace.series.values.reserve(samples.size());
  trace.series.anchors.reserve(samples.size());
  MlpModel::Workspace ws;
  for (const auto& s : samples) {
    const auto full = model.forward(flatten(s), ws);
    const auto masked = model.forward(flatten(apply_mask(s, mask)), ws);
    trace.series.values.push_back(transfer_entropy_at(full, masked));
    trace.series.anchors.push_back(s.anchor_t);
    trace.full.push_back(full);
    trace.masked.push_back(masked);
  }
  return trace;
}

inline TeSeries compute_te_series(const MlpModel& model, const std::vector<WindowSample>& samples,
                                  const MaskSpec& mask) {
  return compute_te_trace(model, samples, mask).series;
}

// ---------------------------------------------------------------------------
// smoothing

/// Second-order Butterworth low-pass section (bilinear transform with
/// frequency prewarping), normalized so a0 = 1.
struct Biquad {
  double b0, b1, b2, a1, a2;

  static Biquad butterworth_lowpass(double cutoff_hz, double sample_rate_hz) {
    require(sample_rate_hz > 0.0, ErrorCategory::invalid_argument, "sample rate must be positive");
    require(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate_hz, ErrorCategory::invalid_argument,
            "cutoff must lie strictly between 0 and the Nyquist frequency");
    const double k = std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
    const double k2 = k * k;
    const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k2);
    Biquad q{};
    q.b0 = k2 * norm;
    q.b1 = 2.0 * q.b0;
    q.b2 = q.b0;
    q.a1 = 2.0 * (k2 - 1.0) * norm;
    q.a2 = (1.0 - std::numbers::sqrt2 * k + k2) * norm;
    return q;
  }

  /// Causal pass (transposed direct form II), starting from the steady state
  /// of a constant input equal to the first sample.
  void run(std::vector<double>& x) const {
    if (x.empty()) return;
    double z1 = (1.0 - b0) * x.front();
    double z2 = (b2 - a2) * x.front();
    for (double& v : x) {
      const double in = v;
      const double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = out;
    }
  }
};

/// Edge padding used by lowpass_filter: one period of the cutoff frequency.
inline std::size_t filter_pad_length(double cutoff_hz, double sample_rate_hz) {
  return static_cast<std::size_t>(std::ceil(sample_rate_hz / cutoff_hz));
}

/// Zero-phase (forward-backward) second-order Butterworth low-pass with
/// mirror padding at both ends.
inline std::vector<double> lowpass_filter(std::span<const double> series, double cutoff_hz,
                                          double sample_rate_hz) {
  const auto q = Biquad::butterworth_lowpass(cutoff_hz, sample_rate_hz);
  const std::size_t n = series.size();
  if (n < 2) return {series.begin(), series.end()};

  const std::size_t pad = std::min(filter_pad_length(cutoff_hz, sample_rate_hz), n - 1);
  std::vector<double> buf;
  buf.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) buf.push_back(series[i]);
  buf.insert(buf.end(), series.begin(), series.end());
  for (std::size_t i = 1; i <= pad; ++i) buf.push_back(series[n - 1 - i]);

  q.run(buf);
  std::reverse(buf.begin(), buf.end());
  q.run(buf);
  std::reverse(buf.begin(), buf.end());
  return {buf.begin() + static_cast<std::ptrdiff_t>(pad),
          buf.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline TeSeries smooth(const TeSeries& series, double cutoff_hz, double sample_rate_hz) {
  return {lowpass_filter(series.values, cutoff_hz, sample_rate_hz), series.anchors};
}

// ---------------------------------------------------------------------------
// peaks

struct PeakParams {
  std::size_t min_distance_frames = 10;
  double min_prominence = 0.05;
};

/// Topographic prominence: height above the higher of the two lowest points
/// reached before climbing to a taller sample (or the series edge).
inline double peak_prominence(std::span<const double> x, std::size_t i) {
  const double h = x[i];
  double left_min = h;
  for (std::size_t j = i; j-- > 0;) {
    if (x[j] > h) break;
    left_min = std::min(left_min, x[j]);
  }
  double right_min = h;
  for (std::size_t j = i + 1; j < x.size(); ++j) {
    if (x[j] > h) break;
    right_min = std::min(right_min, x[j]);
  }
  return h - std::max(left_min, right_min);
}

/// Indices of strictly positive local maxima (greater than both neighbors),
/// thinned to at least `min_distance_frames` apart keeping the larger, then
/// filtered by prominence. Returned in ascending index order.
inline std::vector<std::size_t> find_peak_indices(std::span<const double> x, const PeakParams& params) {
  require(params.min_distance_frames >= 1, ErrorCategory::invalid_argument,
          "min_distance_frames must be >= 1");
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > 0.0 && x[i] > x[i - 1] && x[i] > x[i + 1]) candidates.push_back(i);
  }

  // larger peaks claim their neighborhood first; ties go to the earlier index
  std::vector<std::size_t> by_height = candidates;
  std::stable_sort(by_height.begin(), by_height.end(),
                   [&x](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : by_height) {
    const bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
      const std::size_t d = c > k ? c - k : k - c;
      return d < params.min_distance_frames;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());

  std::vector<std::size_t> out;
  for (std::size_t k : kept) {
    if (peak_prominence(x, k) >= params.min_prominence) out.push_back(k);
  }
  return out;
}

struct TePeak {
  std::size_t anchor_t = 0;
  double te_value = 0.0;
  std::size_t window_start_t = 0;  // first attributed action frame (t - mask_start)
  std::size_t window_end_t = 0;    // last attributed action frame (t - mask_end)
  FrameMatrix action_window;       // masked-span frames x action channels
};

/// Peaks of a (smoothed) TE series, each carrying the action frames whose
/// masking produced it.
inline std::vector<TePeak> find_te_peaks(const TeSeries& smoothed, const Trajectory& traj,
                                         const WindowConfig& window, const PeakParams& params) {
  window.validate();
  require(smoothed.values.size() == smoothed.anchors.size(), ErrorCategory::invalid_argument,
          "TE series values and anchors differ in length");
  std::vector<TePeak> peaks;
  for (std::size_t idx : find_peak_indices(smoothed.values, params)) {
    const std::size_t t = smoothed.anchors[idx];
    require(t >= window.mask_start_offset && t < traj.length(), ErrorCategory::invalid_argument,
            "peak anchor outside the trajectory");
    TePeak p;
    p.anchor_t = t;
    p.te_value = smoothed.values[idx];
    p.window_start_t = t - window.mask_start_offset;
    p.window_end_t = t - window.mask_end_offset;
    p.action_window = traj.actions.slice(p.window_start_t, window.masked_span());
    peaks.push_back(std::move(p));
  }
  return peaks;
}

}  // namespace influence
