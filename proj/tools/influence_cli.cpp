#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "influence/config.hpp"
#include "influence/error.hpp"
#include "influence/pipeline.hpp"

namespace {

struct Options {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::vector<std::string> overrides;
};

influence::PipelineConfig resolve(const Options& opt) {
  influence::PipelineConfig cfg = opt.config ? influence::load_config(*opt.config) : influence::PipelineConfig{};
  influence::apply_overrides(cfg, opt.overrides);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.out) cfg.out_dir = *opt.out;
  return cfg;
}

void print_written(const std::vector<std::filesystem::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
}

int fail_with(std::string_view category, std::string_view message) {
  std::string one_line(message);
  for (char& c : one_line) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::cerr << "error: " << category << ": " << one_line << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transfer-entropy analysis of paired action/observation time series"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string("influence ") + influence::kVersion);

  Options opt;
  auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "Configuration file (key = value lines)");
    cmd->add_option("--seed", opt.seed, "Global seed, overrides the config");
    cmd->add_option("--out", opt.out, "Output directory, overrides the config");
    cmd->add_option("--set", opt.overrides, "Override one setting, key=value (repeatable)");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic trajectories with ground truth");
  auto* train = app.add_subcommand("train", "Train the Gaussian predictor on the input trajectories");
  auto* analyze = app.add_subcommand("analyze", "Compute TE series, peaks and plots per input");
  auto* cluster = app.add_subcommand("cluster", "Cluster the pooled peak windows under DTW");
  auto* report = app.add_subcommand("report", "Score detections against ground truth");
  for (auto* cmd : {simulate, train, analyze, cluster, report}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail_with("usage", e.what());
    return 2;
  }

  try {
    const auto cfg = resolve(opt);
    if (simulate->parsed()) {
      print_written(influence::cmd_simulate(cfg).commit());
    } else if (train->parsed()) {
      const auto res = influence::cmd_train(cfg);
      print_written(res.files.commit());
      std::cout << "epochs " << res.result.history.size() << ", best epoch " << res.result.best_epoch << "\n";
    } else if (analyze->parsed()) {
      print_written(influence::cmd_analyze(cfg).commit());
    } else if (cluster->parsed()) {
      print_written(influence::cmd_cluster(cfg).files.commit());
    } else if (report->parsed()) {
      const auto res = influence::cmd_report(cfg);
      print_written(res.files.commit());
      std::cout << "recall " << res.mean_recall << ", precision " << res.mean_precision
                << ", turn peak fraction " << res.mean_turn_peak_fraction << "\n";
    }
  } catch (const influence::Error& e) {
    return fail_with(influence::to_string(e.category()), e.what());
  } catch (const std::exception& e) {
    return fail_with("internal", e.what());
  }
  return 0;
}
