#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "influence/csv_io.hpp"
#include "influence/data_model.hpp"
#include "influence/gaussian_mlp.hpp"

namespace influence {

/// How the inputs of a checkpointed model were produced.
struct ModelMetadata {
  WindowConfig window;
  double mask_value = 0.0;
  std::vector<std::string> observation_columns{"depth"};
  std::vector<std::string> action_columns{"lin_vel", "ang_vel"};
  bool inputs_prenormalized = false;
  std::vector<double> action_vmax{0.5, 1.0};
  std::string observation_normalization = "per_trajectory_minmax";
  std::uint64_t rng_seed = 0;
  std::size_t best_epoch = 0;
};

inline constexpr const char* kCheckpointFormat = "influence-gaussian-mlp";
inline constexpr int kCheckpointVersion = 1;

inline std::string checkpoint_to_string(const MlpModel& model, const ModelMetadata& meta) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["layer_dims"] = model.layer_dims();
  j["sigma_min"] = model.sigma_min();
  j["hidden_activation"] = "relu";
  j["spread_transform"] = "softplus";
  if (model.mean_offset_input()) {
    j["mean_offset_input"] = *model.mean_offset_input();
  } else {
    j["mean_offset_input"] = nullptr;
  }
  auto layers = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    nlohmann::ordered_json layer;
    const auto w = model.weights(l);
    const auto b = model.biases(l);
    layer["weights"] = std::vector<double>(w.begin(), w.end());
    layer["biases"] = std::vector<double>(b.begin(), b.end());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  nlohmann::ordered_json m;
  m["window_len"] = meta.window.window_len;
  m["mask_start_offset"] = meta.window.mask_start_offset;
  m["mask_end_offset"] = meta.window.mask_end_offset;
  m["mask_value"] = meta.mask_value;
  m["observation_columns"] = meta.observation_columns;
  m["action_columns"] = meta.action_columns;
  m["inputs_prenormalized"] = meta.inputs_prenormalized;
  m["action_vmax"] = meta.action_vmax;
  m["observation_normalization"] = meta.observation_normalization;
  m["rng_seed"] = meta.rng_seed;
  m["best_epoch"] = meta.best_epoch;
  j["normalization"] = std::move(m);
  return j.dump(1) + "\n";
}

struct Checkpoint {
  MlpModel model;
  ModelMetadata metadata;
};

inline Checkpoint checkpoint_from_string(const std::string& text, const std::string& source) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      fail(ErrorCategory::checkpoint_parse_error, source + ": not a model checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      fail(ErrorCategory::checkpoint_parse_error, source + ": unsupported checkpoint version");
    }
    auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
    Checkpoint ck;
    ck.model = MlpModel::zeros(dims, j.at("sigma_min").get<double>());
    const auto& layers = j.at("layers");
    if (layers.size() != ck.model.num_layers()) {
      fail(ErrorCategory::checkpoint_parse_error, source + ": layer count does not match layer_dims");
    }
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto w = layers[l].at("weights").get<std::vector<double>>();
      const auto b = layers[l].at("biases").get<std::vector<double>>();
      auto dw = ck.model.weights(l);
      auto db = ck.model.biases(l);
      if (w.size() != dw.size() || b.size() != db.size()) {
        fail(ErrorCategory::checkpoint_parse_error,
             source + ": layer " + std::to_string(l) + " has the wrong number of parameters");
      }
      std::copy(w.begin(), w.end(), dw.begin());
      std::copy(b.begin(), b.end(), db.begin());
    }
    const auto& offset = j.at("mean_offset_input");
    if (!offset.is_null()) ck.model.set_mean_offset_input(offset.get<std::size_t>());
    const auto& m = j.at("normalization");
    auto& meta = ck.metadata;
    meta.window.window_len = m.at("window_len").get<std::size_t>();
    meta.window.mask_start_offset = m.at("mask_start_offset").get<std::size_t>();
    meta.window.mask_end_offset = m.at("mask_end_offset").get<std::size_t>();
    meta.mask_value = m.at("mask_value").get<double>();
    meta.observation_columns = m.at("observation_columns").get<std::vector<std::string>>();
    meta.action_columns = m.at("action_columns").get<std::vector<std::string>>();
    meta.inputs_prenormalized = m.at("inputs_prenormalized").get<bool>();
    meta.action_vmax = m.at("action_vmax").get<std::vector<double>>();
    meta.observation_normalization = m.at("observation_normalization").get<std::string>();
    meta.rng_seed = m.at("rng_seed").get<std::uint64_t>();
    meta.best_epoch = m.at("best_epoch").get<std::size_t>();
    meta.window.validate();
    const std::size_t expected =
        meta.window.window_len * (meta.observation_columns.size() + meta.action_columns.size());
    if (expected != ck.model.input_size()) {
      fail(ErrorCategory::checkpoint_parse_error,
           source + ": input size " + std::to_string(ck.model.input_size()) +
               " does not match the recorded window layout (" + std::to_string(expected) + ")");
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::checkpoint_parse_error, source + ": " + e.what());
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::checkpoint_parse_error) throw;
    fail(ErrorCategory::checkpoint_parse_error, source + ": " + e.what());
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const MlpModel& model,
                            const ModelMetadata& meta) {
  write_text_file_atomic(path, checkpoint_to_string(model, meta));
}

/// Loads a checkpoint; a nonzero `expected_input_size` that disagrees with
/// the stored layout is a hard error.
inline Checkpoint load_checkpoint(const std::filesystem::path& path, std::size_t expected_input_size = 0) {
  auto ck = checkpoint_from_string(read_text_file(path), path.string());
  if (expected_input_size != 0 && ck.model.input_size() != expected_input_size) {
    fail(ErrorCategory::checkpoint_parse_error,
         path.string() + ": checkpoint input size " + std::to_string(ck.model.input_size()) +
             " differs from expected " + std::to_string(expected_input_size));
  }
  return ck;
}

}  // namespace influence
