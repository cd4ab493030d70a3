#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mea/arch/mea_net.hpp"
#include "mea/cost/cost.hpp"
#include "mea/data/dataset.hpp"
#include "mea/nn/sgd.hpp"
#include "mea/router/router.hpp"

namespace mea::cli {

struct DatasetConfig {
  std::string kind = "synthetic";  // "synthetic", "csv", "idx"
  data::SyntheticSpec synthetic;
  std::size_t test_samples_per_class = 100;
  // csv: train/test files; idx: *_images + *_labels.
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::optional<std::size_t> num_classes;
};

struct ModelConfig {
  arch::Variant variant = arch::Variant::kB;
  arch::MergeMode merge = arch::MergeMode::kSum;
  std::vector<std::size_t> main{32, 16};
  std::vector<std::size_t> adaptive{16};
  std::vector<std::size_t> extension{32, 32};
  // Variant A: the hidden stack and how many of its layers form the main block.
  std::vector<std::size_t> stack{32, 16, 16};
  std::size_t split = 2;
  std::optional<std::size_t> num_hard;  // default K / 2
};

struct StageConfig {
  int epochs = 30;
  nn::SgdConfig sgd;
};

struct RouterConfig {
  std::optional<double> threshold;  // calibrated midpoint when absent
  router::CloudMode cloud_mode = router::CloudMode::kRawModel;
  double failure_rate = 0.0;
  unsigned threads = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  double val_fraction = 0.10;
  DatasetConfig dataset;
  ModelConfig model;
  std::vector<std::size_t> cloud{64, 64, 32};
  std::vector<std::size_t> feature_tail{32};
  StageConfig main_stage;
  StageConfig edge_stage;
  StageConfig cloud_stage;
  RouterConfig router;
  cost::EnergyParams energy;
  std::vector<double> sweep_grid;  // empty: derived from the calibrated range

  // Model layout for a dataset of the given shape.
  arch::MEAConfig mea_config(std::size_t input_dim, std::size_t num_classes) const;
  arch::BlockSpec cloud_spec() const;
  arch::BlockSpec feature_tail_spec() const;
  // Stage SGD settings with seeds derived from the experiment seed.
  nn::SgdConfig main_sgd() const;
  nn::SgdConfig edge_sgd() const;
  nn::SgdConfig cloud_sgd() const;
};

// Unknown keys are rejected so typos do not silently fall back to defaults.
// Relative dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
// Every field, defaults included.
nlohmann::json to_json(const ExperimentConfig& config);

struct LoadedData {
  data::Dataset train;
  data::Dataset test;
};

LoadedData load_data(const ExperimentConfig& config);

}  // namespace mea::cli
