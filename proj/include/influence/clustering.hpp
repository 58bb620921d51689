#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "influence/error.hpp"
#include "influence/random.hpp"
#include "influence/te_engine.hpp"

namespace influence {

using Sequence = std::vector<double>;

namespace detail {

inline bool in_band(std::size_t i, std::size_t j, std::size_t n, std::size_t m,
                    std::optional<std::size_t> band) {
  if (!band) return true;
  const std::size_t width = std::max(*band, n > m ? n - m : m - n);
  const std::size_t d = i > j ? i - j : j - i;
  return d <= width;
}

/// Accumulated-cost table, (n+1) x (m+1) with an infinite border.
inline std::vector<double> dtw_table(std::span<const double> a, std::span<const double> b,
                                     std::optional<std::size_t> band) {
  require(!a.empty() && !b.empty(), ErrorCategory::invalid_argument, "DTW needs non-empty sequences");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> D((n + 1) * (m + 1), inf);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  D[0] = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      if (!in_band(i - 1, j - 1, n, m, band)) continue;
      const double cost = std::abs(a[i - 1] - b[j - 1]);
      D[at(i, j)] = cost + std::min({D[at(i - 1, j - 1)], D[at(i - 1, j)], D[at(i, j - 1)]});
    }
  }
  return D;
}

}  // namespace detail

/// Classic dynamic time warping with absolute-difference local cost and
/// {diagonal, vertical, horizontal} steps. An optional Sakoe-Chiba band
/// limits |i - j|.
inline double dtw_distance(std::span<const double> a, std::span<const double> b,
                           std::optional<std::size_t> band = std::nullopt) {
  const auto D = detail::dtw_table(a, b, band);
  return D.back();
}

/// Optimal warping path as (index in a, index in b) pairs from (0,0) to
/// (n-1, m-1). Ties prefer the diagonal step.
inline std::vector<std::pair<std::size_t, std::size_t>> dtw_path(
    std::span<const double> a, std::span<const double> b, std::optional<std::size_t> band = std::nullopt) {
  const auto D = detail::dtw_table(a, b, band);
  const std::size_t m = b.size();
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  std::vector<std::pair<std::size_t, std::size_t>> path;
  std::size_t i = a.size();
  std::size_t j = b.size();
  while (i > 0 && j > 0) {
    path.emplace_back(i - 1, j - 1);
    const double diag = D[at(i - 1, j - 1)];
    const double up = D[at(i - 1, j)];
    const double left = D[at(i, j - 1)];
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

inline double total_dtw(std::span<const double> center, const std::vector<Sequence>& members,
                        std::optional<std::size_t> band = std::nullopt) {
  double total = 0.0;
  for (const auto& s : members) total += dtw_distance(center, s, band);
  return total;
}

inline Sequence pointwise_mean(const std::vector<Sequence>& sequences) {
  require(!sequences.empty(), ErrorCategory::invalid_argument, "cannot average an empty set");
  Sequence out(sequences.front().size(), 0.0);
  for (const auto& s : sequences) {
    require(s.size() == out.size(), ErrorCategory::invalid_argument, "sequences differ in length");
    for (std::size_t i = 0; i < s.size(); ++i) out[i] += s[i];
  }
  for (double& v : out) v /= static_cast<double>(sequences.size());
  return out;
}

namespace detail {

inline double median(std::vector<double>& v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline std::size_t medoid_index(const std::vector<Sequence>& sequences, std::optional<std::size_t> band) {
  std::size_t best = 0;
  double best_total = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const double t = total_dtw(sequences[i], sequences, band);
    if (t < best_total) {
      best_total = t;
      best = i;
    }
  }
  return best;
}

}  // namespace detail

struct DbaOptions {
  std::size_t iterations = 10;
  std::optional<std::size_t> band;
};

/// DTW barycenter averaging refined from `initial`. Under the absolute-value
/// local cost the per-coordinate minimizer of the aligned points is their
/// median, so each refinement never increases the total DTW distance.
inline Sequence dba_refine(const std::vector<Sequence>& sequences, Sequence initial,
                           const DbaOptions& opts = {}) {
  require(!sequences.empty(), ErrorCategory::invalid_argument, "cannot average an empty set");
  const std::size_t len = initial.size();
  require(len > 0, ErrorCategory::invalid_argument, "initial average is empty");
  Sequence avg = std::move(initial);
  double cost = total_dtw(avg, sequences, opts.band);
  std::vector<std::vector<double>> aligned(len);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    for (auto& a : aligned) a.clear();
    for (const auto& s : sequences) {
      for (const auto& [i, j] : dtw_path(avg, s, opts.band)) aligned[i].push_back(s[j]);
    }
    Sequence next(len);
    for (std::size_t i = 0; i < len; ++i) next[i] = detail::median(aligned[i]);
    const double next_cost = total_dtw(next, sequences, opts.band);
    if (!(next_cost < cost)) break;
    avg = std::move(next);
    cost = next_cost;
  }
  return avg;
}

/// Barycenter of equal-length sequences, initialized at the medoid.
inline Sequence dba_average(const std::vector<Sequence>& sequences, const DbaOptions& opts = {}) {
  require(!sequences.empty(), ErrorCategory::invalid_argument, "cannot average an empty set");
  for (const auto& s : sequences) {
    require(s.size() == sequences.front().size() && !s.empty(), ErrorCategory::invalid_argument,
            "sequences must be non-empty and of equal length");
  }
  if (sequences.size() == 1) return sequences.front();
  return dba_refine(sequences, sequences[detail::medoid_index(sequences, opts.band)], opts);
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansConfig {
  std::size_t k = 2;
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 50;
  DbaOptions dba;
};

struct ClusterResult {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;
  std::vector<Sequence> centroids;
  double inertia = 0.0;                // sum of DTW distances to assigned centroids
  std::vector<double> inertia_history;  // after each iteration of the chosen run
};

namespace detail {

inline std::pair<std::size_t, double> nearest(const Sequence& s, const std::vector<Sequence>& centroids,
                                              std::optional<std::size_t> band) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = dtw_distance(s, centroids[c], band);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

inline std::vector<Sequence> farthest_point_seeds(const std::vector<Sequence>& seqs, std::size_t k,
                                                  Rng& rng, std::optional<std::size_t> band) {
  const std::size_t n = seqs.size();
  std::vector<bool> chosen(n, false);
  std::vector<Sequence> centers;
  std::size_t first = static_cast<std::size_t>(rng.index(n));
  chosen[first] = true;
  centers.push_back(seqs[first]);
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (chosen[i]) {
        d2[i] = 0.0;
        continue;
      }
      const double d = nearest(seqs[i], centers, band).second;
      d2[i] = d * d;
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] || d2[i] == 0.0) continue;
        pick = i;
        r -= d2[i];
        if (r <= 0.0) break;
      }
    } else {
      // all remaining points coincide with a center; take any unchosen one
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < n; ++i) {
        if (!chosen[i]) rest.push_back(i);
      }
      pick = rest[static_cast<std::size_t>(rng.index(rest.size()))];
    }
    chosen[pick] = true;
    centers.push_back(seqs[pick]);
  }
  return centers;
}

}  // namespace detail

/// One Lloyd run from the given initial centroids. Centroids move to the DTW
/// barycenter of their members only when that lowers the cluster's cost, so
/// inertia never increases between iterations.
inline ClusterResult kmeans_from_centroids(const std::vector<Sequence>& sequences,
                                           std::vector<Sequence> centroids, const KMeansConfig& cfg) {
  const std::size_t n = sequences.size();
  const std::size_t k = centroids.size();
  ClusterResult res;
  res.k = k;
  res.assignments.assign(n, k);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(cfg.max_iterations, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = detail::nearest(sequences[i], centroids, cfg.dba.band).first;
      if (c != res.assignments[i]) {
        res.assignments[i] = c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;

    for (std::size_t c = 0; c < k; ++c) {
      std::vector<Sequence> members;
      for (std::size_t i = 0; i < n; ++i) {
        if (res.assignments[i] == c) members.push_back(sequences[i]);
      }
      if (members.empty()) continue;
      const double current = total_dtw(centroids[c], members, cfg.dba.band);
      auto candidate = dba_average(members, cfg.dba);
      if (total_dtw(candidate, members, cfg.dba.band) <= current) {
        centroids[c] = std::move(candidate);
      } else {
        centroids[c] = dba_refine(members, std::move(centroids[c]), cfg.dba);
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += dtw_distance(sequences[i], centroids[res.assignments[i]], cfg.dba.band);
    }
    res.inertia_history.push_back(inertia);
  }
  res.centroids = std::move(centroids);
  res.inertia = res.inertia_history.empty() ? 0.0 : res.inertia_history.back();
  return res;
}

/// K-means under DTW with farthest-point (k-means++ style) seeding; the
/// lowest-inertia result over all restarts is returned.
inline ClusterResult kmeans_dtw(const std::vector<Sequence>& sequences, const KMeansConfig& cfg) {
  require(cfg.k >= 1, ErrorCategory::invalid_argument, "k must be >= 1");
  if (sequences.size() < cfg.k) {
    fail(ErrorCategory::invalid_argument, "cannot form " + std::to_string(cfg.k) + " clusters from " +
                                              std::to_string(sequences.size()) + " sequences");
  }
  for (const auto& s : sequences) {
    require(!s.empty() && s.size() == sequences.front().size(), ErrorCategory::invalid_argument,
            "sequences must be non-empty and of equal length");
  }
  Rng rng(cfg.seed);
  ClusterResult best;
  bool have = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(cfg.restarts, 1); ++r) {
    auto seeds = detail::farthest_point_seeds(sequences, cfg.k, rng, cfg.dba.band);
    auto res = kmeans_from_centroids(sequences, std::move(seeds), cfg);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// peak windows to sequences

struct ActionSequence {
  Sequence values;
  std::size_t experiment_id = 0;
  std::size_t anchor_t = 0;
};

inline std::vector<ActionSequence> select_channel(const std::vector<TePeak>& peaks, std::size_t channel,
                                                  std::size_t experiment_id = 0) {
  std::vector<ActionSequence> out;
  out.reserve(peaks.size());
  for (const auto& p : peaks) {
    if (channel >= p.action_window.cols()) {
      fail(ErrorCategory::invalid_argument, "unknown action channel " + std::to_string(channel));
    }
    out.push_back({p.action_window.column(channel), experiment_id, p.anchor_t});
  }
  return out;
}

inline std::vector<ActionSequence> select_channel(const std::vector<TePeak>& peaks,
                                                  const std::vector<std::string>& channel_names,
                                                  const std::string& channel,
                                                  std::size_t experiment_id = 0) {
  const auto it = std::find(channel_names.begin(), channel_names.end(), channel);
  if (it == channel_names.end()) {
    fail(ErrorCategory::invalid_argument, "unknown action channel '" + channel + "'");
  }
  return select_channel(peaks, static_cast<std::size_t>(it - channel_names.begin()), experiment_id);
}

}  // namespace influence
