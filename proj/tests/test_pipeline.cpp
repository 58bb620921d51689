#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "influence/pipeline.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace influence;
using influence::testing::category_of;

namespace {

std::string slurp(const fs::path& p) { return read_text_file(p); }

PipelineConfig small_config(const fs::path& dir) {
  PipelineConfig cfg;
  cfg.out_dir = dir;
  cfg.seed = 3;
  cfg.sim.duration_s = 300.0;
  cfg.train.epochs = 30;
  return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

TEST(Config, ParsesKeysCommentsAndLists) {
  PipelineConfig cfg;
  apply_config_text(cfg,
                    "# comment\n"
                    "seed = 17\n"
                    "\n"
                    "  window.length = 24  \n"
                    "mask.value = 0.5\n"
                    "columns.actions = lin_vel, ang_vel\n"
                    "input.action_vmax = 0.4,0.9\n"
                    "cluster.band = none\n"
                    "train.residual_mean = false\n",
                    "test.conf");
  EXPECT_EQ(cfg.seed, 17u);
  EXPECT_EQ(cfg.window.window_len, 24u);
  EXPECT_EQ(cfg.mask_value, 0.5);
  EXPECT_EQ(cfg.schema.action_vmax, (std::vector<double>{0.4, 0.9}));
  EXPECT_FALSE(cfg.cluster.dba.band.has_value());
  EXPECT_FALSE(cfg.train.residual_mean);
}

TEST(Config, UnknownKeyRejectedWithLocation) {
  PipelineConfig cfg;
  try {
    apply_config_text(cfg, "seed = 1\nwindow.size = 3\n", "a.conf");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::invalid_argument);
    EXPECT_NE(std::string(e.what()).find("a.conf:2"), std::string::npos) << e.what();
  }
}

TEST(Config, DuplicateKeyIsParseError) {
  PipelineConfig cfg;
  EXPECT_EQ(category_of([&] { apply_config_text(cfg, "seed = 1\nseed = 2\n", "a.conf"); }), "parse_error");
}

TEST(Config, MalformedLineAndValue) {
  PipelineConfig cfg;
  EXPECT_EQ(category_of([&] { apply_config_text(cfg, "seed 1\n", "a"); }), "parse_error");
  EXPECT_EQ(category_of([&] { apply_config_text(cfg, "train.epochs = many\n", "a"); }), "parse_error");
  EXPECT_EQ(category_of([&] { apply_config_text(cfg, "train.residual_mean = maybe\n", "a"); }), "parse_error");
}

TEST(Config, OverridesApplyAfterFile) {
  const auto dir = influence::testing::temp_dir();
  std::ofstream(dir / "p.conf") << "train.epochs = 50\nfilter.cutoff_hz = 0.8\n";
  auto cfg = load_config(dir / "p.conf");
  apply_overrides(cfg, {"train.epochs=7", "peaks.min_distance = 4"});
  EXPECT_EQ(cfg.train.epochs, 7u);
  EXPECT_EQ(cfg.filter_cutoff_hz, 0.8);
  EXPECT_EQ(cfg.peaks.min_distance_frames, 4u);
  EXPECT_EQ(category_of([&] { apply_overrides(cfg, {"train.epochs"}); }), "parse_error");
  EXPECT_EQ(category_of([&] { load_config(dir / "missing.conf"); }), "file_not_found");
}

TEST(Config, DescribeRoundTrips) {
  PipelineConfig cfg;
  apply_overrides(cfg, {"sim.noise_std=0.02", "cluster.k=3", "inputs=a.csv,b.csv", "cluster.band=4"});
  std::string text;
  for (const auto& [k, v] : describe(cfg)) text += k + " = " + v + "\n";
  PipelineConfig back;
  apply_config_text(back, text, "described");
  EXPECT_EQ(describe(back), describe(cfg));
  EXPECT_EQ(back.inputs.size(), 2u);
  EXPECT_EQ(back.cluster.dba.band, std::optional<std::size_t>(4));
}

TEST(Config, ValidationCatchesBadValues) {
  PipelineConfig cfg;
  cfg.filter_cutoff_hz = 6.0;
  EXPECT_EQ(category_of([&] { cfg.validate(); }), "invalid_argument");
  cfg = {};
  cfg.cluster_centroid = "median";
  EXPECT_EQ(category_of([&] { cfg.validate(); }), "invalid_argument");
}

TEST(Config, DerivedSeedsDifferByStream) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t stream : {1, 2, 1001, 1002}) seen.insert(derive_seed(7, stream));
  EXPECT_EQ(seen.size(), 4u);
  EXPECT_EQ(derive_seed(7, 1), derive_seed(7, 1));
  EXPECT_NE(derive_seed(7, 1), derive_seed(8, 1));
}

// ---------------------------------------------------------------------------
// output files

TEST(OutputFiles, TeCsvRoundTrip) {
  const auto dir = influence::testing::temp_dir();
  TeSeries raw{{0.1, -0.25, 1.0 / 3.0}, {19, 20, 21}};
  TeSeries sm{{0.05, 0.2, 0.125}, {19, 20, 21}};
  TePeak p;
  p.anchor_t = 20;
  write_text_file_atomic(dir / "te.csv", render_te_csv(raw, sm, {p}));
  const auto rows = load_te_csv(dir / "te.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].anchor_t, 21u);
  EXPECT_EQ(rows[2].te_raw, 1.0 / 3.0);
  EXPECT_EQ(rows[1].te_smoothed, 0.2);
  EXPECT_TRUE(rows[1].is_peak);
  EXPECT_FALSE(rows[0].is_peak);
}

TEST(OutputFiles, PeaksCsvRoundTrip) {
  const auto dir = influence::testing::temp_dir();
  TePeak p;
  p.anchor_t = 40;
  p.te_value = 0.123456789012345;
  p.window_start_t = 21;
  p.window_end_t = 35;
  write_text_file_atomic(dir / "peaks.csv", render_peaks_csv({p}));
  auto back = load_peaks_csv(dir / "peaks.csv");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].te_value, p.te_value);
  EXPECT_EQ(back[0].window_start_t, 21u);
  attach_action_windows(back, influence::testing::ramp_trajectory(60), "peaks.csv");
  EXPECT_EQ(back[0].action_window.rows(), 15u);
  EXPECT_EQ(category_of([&] { attach_action_windows(back, influence::testing::ramp_trajectory(30), "x"); }),
            "invalid_argument");
}

TEST(OutputFiles, EmptyPeaksFileLoads) {
  const auto dir = influence::testing::temp_dir();
  write_text_file_atomic(dir / "peaks.csv", render_peaks_csv({}));
  EXPECT_TRUE(load_peaks_csv(dir / "peaks.csv").empty());
}

TEST(OutputFiles, ClustersAndCentroidsRoundTrip) {
  const auto dir = influence::testing::temp_dir();
  const std::vector<ClusterRow> rows{{0, "sim_1", 44, 1}, {1, "sim_2", 90, 0}};
  write_text_file_atomic(dir / "c.csv", render_clusters_csv(rows));
  const auto back = load_clusters_csv(dir / "c.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].experiment_id, "sim_2");
  EXPECT_EQ(back[0].cluster_id, 1u);
  const std::vector<Sequence> centroids{{0.7, 0.6, 0.5}, {0.5, 0.45, 0.2}};
  write_text_file_atomic(dir / "k.csv", render_centroids_csv(centroids));
  EXPECT_EQ(load_centroids_csv(dir / "k.csv"), centroids);
}

TEST(OutputFiles, BadIndexIsParseError) {
  const auto dir = influence::testing::temp_dir();
  write_text_file_atomic(dir / "peaks.csv", "anchor_t,te_value,window_start_t,window_end_t\n4.5,1,0,3\n");
  EXPECT_EQ(category_of([&] { load_peaks_csv(dir / "peaks.csv"); }), "parse_error");
}

TEST(CentroidShape, Classification) {
  EXPECT_EQ(classify_centroid({0.8, 0.75, 0.7, 0.6, 0.5, 0.5, 0.5, 0.5}).shape, CentroidShape::end_of_forward);
  EXPECT_EQ(classify_centroid({0.5, 0.5, 0.5, 0.45, 0.3, 0.2, 0.2, 0.2}).shape, CentroidShape::start_of_backward);
  EXPECT_EQ(classify_centroid({0.2, 0.2, 0.2, 0.4, 0.5, 0.5, 0.5, 0.5}).shape, CentroidShape::other);
  const auto s = classify_centroid({0.56, 0.56, 0.56, 0.5, 0.54, 0.54, 0.54});
  EXPECT_NEAR(s.head, 0.56, 1e-12);
  EXPECT_NEAR(s.tail, 0.54, 1e-12);
  EXPECT_EQ(s.shape, CentroidShape::end_of_forward);
}

TEST(Layout, InputsAndNames) {
  PipelineConfig cfg;
  cfg.out_dir = "o";
  cfg.sim_count = 2;
  const auto files = resolve_inputs(cfg);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[1], fs::path("o/sim_2.csv"));
  EXPECT_EQ(truth_file_for(files[1]), fs::path("o/sim_2_truth.csv"));
  EXPECT_EQ(peaks_file(cfg, "data/run.csv"), fs::path("o/run_peaks.csv"));
  cfg.inputs = {"a/x.csv", "b/x.csv"};
  EXPECT_EQ(category_of([&] { resolve_inputs(cfg); }), "invalid_argument");
}

// ---------------------------------------------------------------------------
// commands

TEST(Commands, SimulateWritesRowsAndTruth) {
  const auto dir = influence::testing::temp_dir();
  PipelineConfig cfg;
  cfg.out_dir = dir;
  const auto written = cmd_simulate(cfg).commit();
  EXPECT_EQ(written.size(), 2u);
  const auto traj = load_trajectory(dir / "sim_1.csv", cfg.schema);
  EXPECT_EQ(traj.length(), 9000u);
  EXPECT_FALSE(load_ground_truth(dir / "sim_1_truth.csv").events.empty());
}

TEST(Commands, SimulateRepeatsByteForByte) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  const auto a = cmd_simulate(cfg).files();
  const auto b = cmd_simulate(cfg).files();
  EXPECT_EQ(a, b);
  cfg.seed = 4;
  EXPECT_NE(cmd_simulate(cfg).files()[0].second, a[0].second);
}

TEST(Commands, SimulateRejectsZeroDuration) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  cfg.sim.duration_s = 0.0;
  EXPECT_EQ(category_of([&] { cmd_simulate(cfg); }), "invalid_argument");
}

TEST(Commands, TrainMissingInputNamesPath) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  try {
    cmd_train(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::file_not_found);
    EXPECT_NE(std::string(e.what()).find("sim_1.csv"), std::string::npos);
  }
}

TEST(Commands, ZeroModelGivesZeroTeAndNoPeaks) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  cmd_simulate(cfg).commit();
  save_checkpoint(cfg.model_path(), MlpModel::zeros({60, 32, 16, 2}), ModelMetadata{});
  cmd_analyze(cfg).commit();
  for (const auto& row : load_te_csv(dir / "sim_1_te.csv")) {
    EXPECT_EQ(row.te_raw, 0.0);
    EXPECT_EQ(row.te_smoothed, 0.0);
    EXPECT_FALSE(row.is_peak);
  }
  EXPECT_TRUE(load_peaks_csv(dir / "sim_1_peaks.csv").empty());
  EXPECT_TRUE(fs::exists(dir / "sim_1_te.svg"));
  EXPECT_EQ(category_of([&] { cmd_cluster(cfg); }), "insufficient_data");
}

TEST(Commands, CorruptCheckpointFailsWithoutWriting) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  cmd_simulate(cfg).commit();
  write_text_file_atomic(cfg.model_path(), "{\"format\": \"influence-gaussian-mlp\", \"version\": 1");
  EXPECT_EQ(category_of([&] { cmd_analyze(cfg); }), "checkpoint_parse_error");
  EXPECT_FALSE(fs::exists(dir / "sim_1_te.csv"));
}

TEST(Commands, CheckpointColumnsMustMatchSchema) {
  const auto dir = influence::testing::temp_dir();
  auto cfg = small_config(dir);
  ModelMetadata meta;
  meta.action_columns = {"v", "w"};
  save_checkpoint(cfg.model_path(), MlpModel::zeros({60, 4, 2}), meta);
  EXPECT_EQ(category_of([&] { load_model_for(cfg); }), "invalid_argument");
}

// One small end-to-end run shared by the tests below.
class SmallPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / "influence_tests" / "SmallPipeline";
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    cfg_ = small_config(dir_);
    cfg_.sim_count = 2;
    cmd_simulate(cfg_).commit();
    train_files_ = cmd_train(cfg_).files.commit().size();
    cmd_analyze(cfg_).commit();
    cmd_cluster(cfg_).files.commit();
    report_ = cmd_report(cfg_);
    report_.files.commit();
  }

  static inline fs::path dir_;
  static inline PipelineConfig cfg_;
  static inline std::size_t train_files_ = 0;
  static inline ReportOutput report_;
};

TEST_F(SmallPipeline, TrainWritesCheckpointAndHistory) {
  EXPECT_EQ(train_files_, 2u);
  const auto ck = load_checkpoint(cfg_.model_path(), 60);
  EXPECT_EQ(ck.metadata.rng_seed, derive_seed(cfg_.seed, kTrainStream));
  EXPECT_TRUE(ck.model.mean_offset_input().has_value());
  const auto history = read_csv(dir_ / "train_history.csv");
  EXPECT_EQ(history.header, (std::vector<std::string>{"epoch", "train_nll", "validation_nll"}));
  EXPECT_FALSE(history.rows.empty());
}

TEST_F(SmallPipeline, TrainIsReproducible) {
  EXPECT_EQ(cmd_train(cfg_).files.files(), cmd_train(cfg_).files.files());
  EXPECT_EQ(cmd_train(cfg_).files.files()[0].second, slurp(cfg_.model_path()));
}

TEST_F(SmallPipeline, AnalyzeFindsPeaksOnPlantedData) {
  for (const char* stem : {"sim_1", "sim_2"}) {
    const auto peaks = load_peaks_csv(dir_ / (std::string(stem) + "_peaks.csv"));
    EXPECT_FALSE(peaks.empty()) << stem;
    for (const auto& p : peaks) {
      EXPECT_GT(p.te_value, 0.0);
      EXPECT_EQ(p.window_end_t - p.window_start_t + 1, 15u);
    }
    const auto te = load_te_csv(dir_ / (std::string(stem) + "_te.csv"));
    EXPECT_EQ(te.size(), 3000u - 20u);
    std::size_t flagged = 0;
    for (const auto& r : te) flagged += r.is_peak;
    EXPECT_EQ(flagged, peaks.size());
  }
  const auto svg = slurp(dir_ / "sim_1_te.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST_F(SmallPipeline, ClusterOutputsAreConsistent) {
  const auto centroids = load_centroids_csv(dir_ / "centroids.csv");
  ASSERT_EQ(centroids.size(), 2u);
  EXPECT_EQ(centroids[0].size(), 15u);
  EXPECT_EQ(centroids[1].size(), 15u);
  const auto rows = load_clusters_csv(dir_ / "clusters.csv");
  std::size_t total_peaks = 0;
  for (const char* stem : {"sim_1", "sim_2"}) {
    total_peaks += load_peaks_csv(dir_ / (std::string(stem) + "_peaks.csv")).size();
  }
  EXPECT_EQ(rows.size(), total_peaks);
  std::set<std::string> experiments;
  for (const auto& r : rows) {
    EXPECT_LT(r.cluster_id, 2u);
    experiments.insert(r.experiment_id);
  }
  EXPECT_EQ(experiments, (std::set<std::string>{"sim_1", "sim_2"}));
}

TEST_F(SmallPipeline, ClusterRejectsKAboveSequenceCount) {
  auto cfg = cfg_;
  cfg.cluster.k = 100000;
  EXPECT_EQ(category_of([&] { cmd_cluster(cfg); }), "invalid_argument");
}

TEST_F(SmallPipeline, MeanCentroidOption) {
  auto cfg = cfg_;
  cfg.cluster_centroid = "mean";
  const auto out = cmd_cluster(cfg);
  ASSERT_EQ(out.centroids.size(), 2u);
  std::vector<Sequence> members;
  for (std::size_t i = 0; i < out.sequences.size(); ++i) {
    if (out.result.assignments[i] == 0) members.push_back(out.sequences[i].values);
  }
  EXPECT_EQ(out.centroids[0], pointwise_mean(members));
}

TEST_F(SmallPipeline, ReportCarriesScoresSeedsAndParameters) {
  const auto j = nlohmann::json::parse(slurp(dir_ / "report.json"));
  EXPECT_EQ(j.at("tool"), "influence");
  EXPECT_EQ(j.at("version"), kVersion);
  EXPECT_EQ(j.at("seeds").at("train"), derive_seed(cfg_.seed, kTrainStream));
  EXPECT_EQ(j.at("seeds").at("simulate").size(), 2u);
  EXPECT_EQ(j.at("parameters").at("train.epochs"), "30");
  EXPECT_EQ(j.at("experiments").size(), 2u);
  EXPECT_EQ(j.at("centroids").size(), 2u);
  const auto& e = j.at("experiments")[0];
  EXPECT_GE(e.at("recall").get<double>(), 0.0);
  EXPECT_LE(e.at("recall").get<double>(), 1.0);
  EXPECT_DOUBLE_EQ(j.at("mean").at("recall").get<double>(), report_.mean_recall);
}

TEST_F(SmallPipeline, EveryCommandReproducible) {
  std::map<std::string, std::string> first;
  const auto analyzed = cmd_analyze(cfg_);
  const auto clustered = cmd_cluster(cfg_);
  const auto reported = cmd_report(cfg_);
  for (const auto& [p, c] : analyzed.files()) first[p.string()] = c;
  for (const auto& [p, c] : clustered.files.files()) first[p.string()] = c;
  for (const auto& [p, c] : reported.files.files()) first[p.string()] = c;
  for (const auto& [p, c] : first) EXPECT_EQ(slurp(p), c) << p;
}
