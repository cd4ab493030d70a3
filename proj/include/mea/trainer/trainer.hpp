#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mea/arch/mea_net.hpp"
#include "mea/complexity/complexity.hpp"
#include "mea/data/dataset.hpp"
#include "mea/nn/network.hpp"
#include "mea/nn/sgd.hpp"

namespace mea::trainer {

struct EpochMetrics {
  int epoch = 0;
  std::string stage;  // "main", "cloud", "feature-tail", "extension"
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
};

using Curve = std::vector<EpochMetrics>;

// Mean cross-entropy and accuracy of a classifier over a dataset.
EpochMetrics evaluate_classifier(const nn::Network& net, const data::Dataset& data);

// Mini-batch SGD on cross-entropy for every trainable layer of `net`.
// Batches are drawn from a per-epoch shuffle seeded by config.seed;
// per-batch gradients are summed in instance order and averaged.
Curve train_classifier(nn::Network& net, const data::Dataset& train, const nn::SgdConfig& config,
                       int epochs, const data::Dataset* val = nullptr,
                       const std::string& stage = "classifier");

// Trains main block + exit 1 on all classes.
Curve train_main(arch::MEANet& net, const data::Dataset& train, const nn::SgdConfig& config,
                 int epochs, const data::Dataset* val = nullptr);

// Cloud model: hidden layers from `spec`, then a dense classifier over K.
nn::Network build_cloud(std::size_t input_dim, std::size_t num_classes, const arch::BlockSpec& spec,
                        std::uint64_t seed);
// The cloud stack must be at least as deep and as wide as the edge main
// block, and strictly larger in one of the two.
void check_cloud_spec(const arch::BlockSpec& cloud, const arch::BlockSpec& main);

struct CloudTraining {
  nn::Network network;
  Curve curve;
  double val_accuracy = 0.0;
};

CloudTraining train_cloud(const arch::BlockSpec& spec, const arch::BlockSpec& main_spec,
                          const data::Dataset& train, const data::Dataset* val,
                          const nn::SgdConfig& config, int epochs, std::uint64_t seed);

// Dataset of main-block features F with the original labels.
data::Dataset feature_dataset(const arch::MEANet& net, const data::Dataset& data);

// Cloud tail for feature offloading: F (dim d) -> K logits.
CloudTraining train_feature_tail(const arch::MEANet& net, const arch::BlockSpec& spec,
                                 const data::Dataset& train, const data::Dataset* val,
                                 const nn::SgdConfig& config, int epochs, std::uint64_t seed);

struct ExtensionStep {
  double loss = 0.0;
  std::size_t predicted = 0;  // hard label
};

// Cross-entropy at exit 2 for one instance with precomputed main features,
// accumulating gradients of the adaptive, extension and exit-2 blocks.
ExtensionStep extension_gradients(const arch::MEANet& net, std::span<const double> features,
                                  std::span<const double> x, std::size_t hard_label,
                                  nn::NetworkGradients& g_adaptive,
                                  nn::NetworkGradients& g_extension, nn::NetworkGradients& g_exit2);

// Blockwise stage: only adaptive, extension and exit 2 are updated, on
// hard-class data whose labels are already remapped into [0, N_hard).
// Throws ContractViolation unless the main block is frozen.
Curve train_extension_adaptive(arch::MEANet& net, const data::Dataset& hard_train,
                               const nn::SgdConfig& config, int epochs,
                               const data::Dataset* hard_val = nullptr);

// Extension-path accuracy on remapped hard data.
EpochMetrics evaluate_extension(const arch::MEANet& net, const data::Dataset& hard_data);

// Main-exit predictions for every instance.
std::vector<std::size_t> main_predictions(const arch::MEANet& net, const data::Dataset& data);

// Keeps the hard-class rows and relabels them into [0, N_hard).
data::Dataset hard_dataset(const data::Dataset& data, const complexity::ClassPartition& partition);

// Offsets from the experiment seed for each random stream, shared by the
// in-process pipeline and the staged CLI so both produce identical models.
inline constexpr std::uint64_t kCloudSeedOffset = 1;
inline constexpr std::uint64_t kEdgeBlockSeedOffset = 2;
inline constexpr std::uint64_t kRandomClassSeedOffset = 3;
inline constexpr std::uint64_t kFeatureTailSeedOffset = 4;

struct Algorithm1Options {
  arch::MEAConfig config;
  nn::SgdConfig main_sgd;
  nn::SgdConfig edge_sgd;
  nn::SgdConfig cloud_sgd;
  int main_epochs = 100;
  int edge_epochs = 100;
  int cloud_epochs = 100;
  double val_fraction = 0.10;
  std::uint64_t seed = 0;
  std::optional<arch::BlockSpec> cloud_spec;
  // Random hard-class selection (ablation) instead of precision ranking.
  bool random_classes = false;
  // Where the partition is handed off; kept in memory when empty.
  std::optional<std::filesystem::path> partition_path;
};

struct Algorithm1Result {
  arch::MEANet net;
  arch::MEANet main_snapshot;  // after stage 1, before freezing
  complexity::ClassPartition partition;
  complexity::ClassStats stats;
  std::optional<nn::Network> cloud;
  data::Split split;
  std::size_t hard_subset_size = 0;
  Curve curve;
};

Algorithm1Result run_algorithm1(const data::Dataset& dataset, const Algorithm1Options& options);

}  // namespace mea::trainer
