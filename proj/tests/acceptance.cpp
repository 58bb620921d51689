// Acceptance checks, one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "influence/clustering.hpp"
#include "influence/gaussian_mlp.hpp"
#include "influence/pipeline.hpp"
#include "influence/random.hpp"
#include "influence/te_engine.hpp"

namespace fs = std::filesystem;
using namespace influence;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void verdict(int id, bool ok, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("influence_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---------------------------------------------------------------------------

void entropy_closed_form() {
  const auto t0 = Clock::now();
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double sigma = std::pow(10.0, rng.uniform(-3.0, 3.0));
    const double oracle = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * sigma * sigma);
    worst = std::max(worst, std::abs(differential_entropy({0.0, sigma}) - oracle));
  }
  const double dt = seconds_since(t0);
  verdict(1, worst <= 1e-12 && dt < 1.0, fmt("max abs error %.3g, %.3f s", worst, dt));
}

void te_definition() {
  const auto t0 = Clock::now();
  Rng rng(12);
  double worst = 0.0;
  bool self_zero = true;
  for (int i = 0; i < 1000; ++i) {
    const GaussianPrediction f{rng.uniform(-1, 1), std::pow(10.0, rng.uniform(-3.0, 3.0))};
    const GaussianPrediction m{rng.uniform(-1, 1), std::pow(10.0, rng.uniform(-3.0, 3.0))};
    const double diff = differential_entropy(m) - differential_entropy(f);
    worst = std::max(worst, std::abs(transfer_entropy_at(f, m) - diff));
    self_zero = self_zero && transfer_entropy_at(f, f) == 0.0 && transfer_entropy_at(m, m) == 0.0;
  }
  const double dt = seconds_since(t0);
  verdict(2, worst <= 1e-12 && self_zero && dt < 1.0,
          fmt("max abs error %.3g, TE(p,p)==0 %s, %.3f s", worst, self_zero ? "yes" : "no", dt));
}

// Loss of a model whose parameter `k` is shifted by `h`.
double shifted_loss(MlpModel m, std::size_t k, double h, const std::vector<double>& x, double y) {
  m.parameters()[k] += h;
  return nll_loss(m.forward(x), y);
}

void gradient_check() {
  const auto t0 = Clock::now();
  Rng rng(13);
  const double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto model = MlpModel::initialize({60, 32, 16, 2}, 1000 + trial);
    if (trial % 2 == 1) model.set_mean_offset_input(57);
    for (double& b : model.parameters()) b += rng.uniform(-0.05, 0.05);
    std::vector<double> x(60);
    for (double& v : x) v = rng.uniform();
    const double y = rng.uniform();
    const auto grad = backward(model, x, y);
    for (std::size_t k = 0; k < model.parameter_count(); ++k) {
      const double fd = (shifted_loss(model, k, h, x, y) - shifted_loss(model, k, -h, x, y)) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(grad[k]), 1e-6});
      worst = std::max(worst, std::abs(fd - grad[k]) / scale);
    }
  }
  const double dt = seconds_since(t0);
  verdict(3, worst < 1e-4 && dt < 10.0, fmt("max relative error %.3g over 100 triples, %.2f s", worst, dt));
}

// Minimum over every monotone warping path, enumerated recursively.
double enumerate_paths(const std::vector<double>& a, const std::vector<double>& b, std::size_t i, std::size_t j) {
  const double here = std::abs(a[i] - b[j]);
  if (i + 1 == a.size() && j + 1 == b.size()) return here;
  double best = INFINITY;
  if (i + 1 < a.size()) best = std::min(best, enumerate_paths(a, b, i + 1, j));
  if (j + 1 < b.size()) best = std::min(best, enumerate_paths(a, b, i, j + 1));
  if (i + 1 < a.size() && j + 1 < b.size()) best = std::min(best, enumerate_paths(a, b, i + 1, j + 1));
  return here + best;
}

void dtw_oracle() {
  const auto t0 = Clock::now();
  Rng rng(14);
  const double alphabet[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  auto draw = [&] {
    std::vector<double> s(1 + rng.index(5));
    for (double& v : s) v = alphabet[rng.index(5)];
    return s;
  };
  int mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const auto a = draw();
    const auto b = draw();
    if (dtw_distance(a, b) != enumerate_paths(a, b, 0, 0)) ++mismatches;
  }
  const double dt = seconds_since(t0);
  verdict(4, mismatches == 0 && dt < 30.0, fmt("%d mismatches in 500 pairs, %.2f s", mismatches, dt));
}

void clustering_recovery() {
  const auto t0 = Clock::now();
  int good_seeds = 0;
  std::string accs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed * 7919);
    std::vector<Sequence> seqs;
    std::vector<std::size_t> truth;
    for (int i = 0; i < 60; ++i) {
      const std::size_t label = static_cast<std::size_t>(i % 2);
      Sequence s(15);
      for (std::size_t f = 0; f < 15; ++f) {
        // ramp down to neutral by frame 8, or neutral then a step below it at frame 8
        const double clean = label == 0 ? std::max(0.5, 0.8 - 0.3 * static_cast<double>(f) / 8.0)
                                        : (f < 8 ? 0.5 : 0.2);
        s[f] = std::clamp(clean + 0.05 * rng.normal(), 0.0, 1.0);
      }
      seqs.push_back(std::move(s));
      truth.push_back(label);
    }
    KMeansConfig kc;
    kc.k = 2;
    kc.restarts = 10;
    kc.seed = seed;
    const auto res = kmeans_dtw(seqs, kc);
    std::size_t same = 0;
    for (std::size_t i = 0; i < seqs.size(); ++i) same += res.assignments[i] == truth[i];
    const double acc = std::max(same, seqs.size() - same) / static_cast<double>(seqs.size());
    if (acc >= 0.95) ++good_seeds;
    accs += fmt(" %.2f", acc);
  }
  const double dt = seconds_since(t0);
  verdict(5, good_seeds >= 9 && dt < 30.0,
          fmt("%d/10 seeds with accuracy >= 0.95 (%s ), %.2f s", good_seeds, accs.c_str() + 1, dt));
}

// ---------------------------------------------------------------------------

struct PipelineRun {
  ReportOutput report;
  std::size_t frames = 0;
  std::size_t translations = 0;
};

PipelineRun run_pipeline(const PipelineConfig& cfg) {
  PipelineRun run;
  cmd_simulate(cfg).commit();
  cmd_train(cfg).files.commit();
  cmd_analyze(cfg).commit();
  cmd_cluster(cfg).files.commit();
  run.report = cmd_report(cfg);
  run.report.files.commit();
  for (const auto& input : resolve_inputs(cfg)) {
    run.frames += load_trajectory(input, cfg.schema).length();
    for (const auto& e : load_ground_truth(truth_file_for(input)).events) {
      run.translations += e.type == EventType::forward || e.type == EventType::backward;
    }
  }
  return run;
}

void end_to_end() {
  const auto t0 = Clock::now();
  const PipelineConfig defaults;
  std::vector<PipelineRun> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    PipelineConfig cfg;
    cfg.seed = seed;
    cfg.out_dir = scratch_dir("seed" + std::to_string(seed));
    runs.push_back(run_pipeline(cfg));
    const auto& r = runs.back().report;
    std::printf("  seed %llu: recall %.3f precision %.3f turn-peak fraction %.3f",
                static_cast<unsigned long long>(seed), r.mean_recall, r.mean_precision, r.mean_turn_peak_fraction);
    for (const auto& s : r.centroid_shapes) {
      std::printf("  [%.2f..%.2f %s]", s.head, s.tail, std::string(to_string(s.shape)).c_str());
    }
    std::printf("  (%.0f s)\n", seconds_since(t0));
    std::fflush(stdout);
  }
  const double dt = seconds_since(t0);

  double recall = 0, precision = 0, turn = 0;
  bool setup_ok = defaults.sim.human_reaction_lag_s == 0.8 && defaults.train.epochs <= 200 &&
                  defaults.sim.human_gain >= 5.0 * defaults.sim.noise_std;
  std::size_t pattern_seeds = 0;
  for (const auto& run : runs) {
    recall += run.report.mean_recall / 3.0;
    precision += run.report.mean_precision / 3.0;
    turn += run.report.mean_turn_peak_fraction / 3.0;
    setup_ok = setup_ok && run.frames >= 8900 && run.frames <= 9100 && run.translations >= 20;
    bool fwd = false, bwd = false;
    for (const auto& s : run.report.centroid_shapes) {
      fwd = fwd || s.shape == CentroidShape::end_of_forward;
      bwd = bwd || s.shape == CentroidShape::start_of_backward;
    }
    pattern_seeds += fwd && bwd && run.report.centroid_shapes.size() == 2;
  }
  verdict(6, setup_ok && recall >= 0.7 && precision >= 0.6 && dt <= 300.0,
          fmt("mean recall %.3f, mean precision %.3f over 3 seeds, %.0f s", recall, precision, dt));
  verdict(7, turn <= 0.15, fmt("mean turn-peak fraction %.3f", turn));
  verdict(8, pattern_seeds >= 2, fmt("%zu/3 seeds with an end-of-forward and a start-of-backward centroid",
                                     pattern_seeds));
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_text_file(e.path());
  }
  return files;
}

void determinism() {
  const auto t0 = Clock::now();
  PipelineConfig cfg;
  cfg.seed = 42;
  cfg.sim_count = 2;
  cfg.sim.duration_s = 180.0;
  cfg.train.epochs = 10;
  cfg.out_dir = scratch_dir("determinism");

  const std::vector<std::pair<std::string, std::function<void()>>> commands = {
      {"simulate", [&] { cmd_simulate(cfg).commit(); }},
      {"train", [&] { cmd_train(cfg).files.commit(); }},
      {"analyze", [&] { cmd_analyze(cfg).commit(); }},
      {"cluster", [&] { cmd_cluster(cfg).files.commit(); }},
      {"report", [&] { cmd_report(cfg).files.commit(); }},
  };
  std::vector<std::string> differing;
  std::size_t compared = 0;
  for (const auto& [name, run] : commands) {
    const auto before = snapshot(cfg.out_dir);
    run();
    const auto first = snapshot(cfg.out_dir);
    run();
    const auto second = snapshot(cfg.out_dir);
    if (first != second || first.size() <= before.size()) differing.push_back(name);
    compared += first.size() - before.size();
  }
  const double dt = seconds_since(t0);
  std::string which;
  for (const auto& d : differing) which += " " + d;
  verdict(9, differing.empty(),
          differing.empty() ? fmt("%zu files from 5 commands identical across reruns, %.1f s", compared, dt)
                            : "outputs differ or missing for:" + which);
}

}  // namespace

int main() {
  entropy_closed_form();
  te_definition();
  gradient_check();
  dtw_oracle();
  clustering_recovery();
  end_to_end();
  determinism();
  return failures;
}
