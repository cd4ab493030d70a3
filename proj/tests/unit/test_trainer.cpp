#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "mea/arch/checkpoint.hpp"
#include "mea/errors.hpp"
#include "mea/nn/functional.hpp"
#include "mea/trainer/trainer.hpp"
#include "oracles.hpp"

namespace {

using namespace mea;
using arch::BlockSpec;

data::Dataset blobs(std::size_t k, std::size_t per_class, double spread, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  data::Dataset d;
  d.dim = 2;
  d.num_classes = k;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      const double a = 2.0 * M_PI * c / k;
      d.features.push_back(3.0 * std::cos(a) + noise(rng));
      d.features.push_back(3.0 * std::sin(a) + noise(rng));
      d.labels.push_back(c);
    }
  }
  return d;
}

nn::SgdConfig quick_sgd(std::uint64_t seed = 1) {
  nn::SgdConfig c;
  c.initial_lr = 0.05;
  c.milestones = {};
  c.batch_size = 16;
  c.seed = seed;
  return c;
}

arch::MEAConfig blob_config(std::size_t k, std::size_t n_hard,
                            arch::MergeMode merge = arch::MergeMode::kSum) {
  return arch::MEAConfig::variant_b(2, k, n_hard, BlockSpec::relu({12, 6}), BlockSpec::relu({6}),
                                    BlockSpec::relu({10}), merge);
}

TEST(Trainer, LearnsSeparableBlobs) {
  const auto d = blobs(3, 60, 0.4, 1);
  std::mt19937_64 rng(2);
  const std::size_t widths[] = {8, 3};
  const nn::Activation acts[] = {nn::Activation::kRelu, nn::Activation::kIdentity};
  auto net = nn::Network::random(2, widths, acts, rng);
  const auto curve = trainer::train_classifier(net, d, quick_sgd(), 30, &d);
  ASSERT_EQ(curve.size(), 60u);
  EXPECT_GT(curve.back().accuracy, 0.95);
  EXPECT_LT(curve.back().loss, curve.front().loss);
  EXPECT_EQ(curve.back().split, "val");
}

TEST(Trainer, ZeroEpochsLeaveTheNetworkUntouched) {
  const auto d = blobs(3, 10, 0.4, 1);
  std::mt19937_64 rng(2);
  auto net = oracle::random_network(rng, 2, 3);
  const auto before = net;
  EXPECT_TRUE(trainer::train_classifier(net, d, quick_sgd(), 0).empty());
  EXPECT_EQ(net, before);
}

TEST(Trainer, SameSeedSameWeights) {
  const auto d = blobs(4, 20, 0.6, 3);
  auto a = arch::MEANet::build(blob_config(4, 2), 5);
  auto b = arch::MEANet::build(blob_config(4, 2), 5);
  trainer::train_main(a, d, quick_sgd(7), 5);
  trainer::train_main(b, d, quick_sgd(7), 5);
  EXPECT_EQ(arch::serialize(a), arch::serialize(b));
  auto c = arch::MEANet::build(blob_config(4, 2), 5);
  trainer::train_main(c, d, quick_sgd(8), 5);
  EXPECT_NE(arch::serialize(a), arch::serialize(c));
}

TEST(Trainer, RejectsMismatchedData) {
  auto net = arch::MEANet::build(blob_config(4, 2), 5);
  EXPECT_THROW(trainer::train_main(net, blobs(3, 5, 0.5, 1), quick_sgd(), 1), InvalidInputError);
  data::Dataset empty;
  empty.dim = 2;
  empty.num_classes = 4;
  EXPECT_THROW(trainer::train_main(net, empty, quick_sgd(), 1), InvalidInputError);
}

// Finite differences of the exit-2 loss through exit 2, the extension and
// the adaptive block, with the main features held fixed.
TEST(Trainer, ExtensionGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(12);
  for (auto merge : {arch::MergeMode::kSum, arch::MergeMode::kConcat}) {
    for (int trial = 0; trial < 10; ++trial) {
      auto net = arch::MEANet::build(blob_config(5, 3, merge), rng());
      for (auto* block : {&net.adaptive(), &net.extension(), &net.exit2()}) {
        for (std::size_t l = 0; l < block->depth(); ++l) {
          for (auto& b : block->mutable_layer(l).bias.values()) b = oracle::random_vector(rng, 1)[0];
        }
      }
      const auto x = oracle::random_vector(rng, 2, -3, 3);
      const auto features = net.forward_main(x).features;
      const std::size_t label = rng() % 3;
      auto ga = net.adaptive().zero_gradients();
      auto ge = net.extension().zero_gradients();
      auto g2 = net.exit2().zero_gradients();
      trainer::extension_gradients(net, features, x, label, ga, ge, g2);

      auto loss = [&](const arch::MEANet& m) {
        return oracle::ref_cross_entropy(m.forward_extension(features, m.adaptive_features(x)), label);
      };
      auto check = [&](nn::Network& (arch::MEANet::*block)(), const nn::NetworkGradients& g) {
        for (std::size_t l = 0; l < (net.*block)().depth(); ++l) {
          const auto& lg = *g.layers[l];
          const std::size_t nw = (net.*block)().layer(l).weights.size();
          for (std::size_t i = 0; i < nw + lg.bias.size(); ++i) {
            auto value = [&](arch::MEANet& m) -> double& {
              auto& layer = (m.*block)().mutable_layer(l);
              return i < nw ? layer.weights[i] : layer.bias[i - nw];
            };
            const double h = 1e-6;
            auto plus = net;
            auto minus = net;
            value(plus) += h;
            value(minus) -= h;
            const double num = (loss(plus) - loss(minus)) / (2 * h);
            const double ana = i < nw ? lg.weights[i] : lg.bias[i - nw];
            const double scale = std::max({std::fabs(num), std::fabs(ana), 1e-6});
            EXPECT_LT(std::fabs(num - ana) / scale, 1e-4) << "layer " << l << " param " << i;
          }
        }
      };
      check(&arch::MEANet::adaptive, ga);
      check(&arch::MEANet::extension, ge);
      check(&arch::MEANet::exit2, g2);
    }
  }
}

TEST(Trainer, ExtensionStageRequiresFrozenMainAndLeavesItIntact) {
  const auto d = blobs(4, 30, 0.8, 4);
  auto net = arch::MEANet::build(blob_config(4, 2), 3);
  trainer::train_main(net, d, quick_sgd(), 5);
  const complexity::ClassPartition partition(4, {1, 2});
  const auto hard = trainer::hard_dataset(d, partition);
  EXPECT_EQ(hard.num_classes, 2u);
  EXPECT_THROW(trainer::train_extension_adaptive(net, hard, quick_sgd(), 1), ContractViolation);

  net.freeze_main();
  const auto main_before = arch::main_block_digest(net);
  const auto adaptive_before = net.adaptive();
  const auto exit2_before = net.exit2();
  const auto curve = trainer::train_extension_adaptive(net, hard, quick_sgd(), 5, &hard);
  EXPECT_EQ(arch::main_block_digest(net), main_before);
  EXPECT_FALSE(net.adaptive() == adaptive_before);
  EXPECT_FALSE(net.exit2() == exit2_before);
  EXPECT_EQ(curve.back().stage, "extension");
  EXPECT_THROW(trainer::train_extension_adaptive(net, d, quick_sgd(), 1), InvalidInputError);
}

TEST(Trainer, HardDatasetRemapsLabels) {
  const auto d = blobs(4, 3, 0.5, 1);
  const complexity::ClassPartition partition(4, {3, 1});
  const auto hard = trainer::hard_dataset(d, partition);
  EXPECT_EQ(hard.size(), 6u);
  for (std::size_t i = 0; i < hard.size(); ++i) EXPECT_LT(hard.labels[i], 2u);
  EXPECT_EQ(hard.labels[0], 0u);  // class 1 comes first in the interleaved data
  EXPECT_EQ(hard.labels[1], 1u);
}

TEST(Trainer, CloudMustBeLargerThanMain) {
  const auto main = BlockSpec::relu({12, 6});
  EXPECT_NO_THROW(trainer::check_cloud_spec(BlockSpec::relu({12, 6, 6}), main));
  EXPECT_NO_THROW(trainer::check_cloud_spec(BlockSpec::relu({16, 6}), main));
  EXPECT_THROW(trainer::check_cloud_spec(BlockSpec::relu({12, 6}), main), ConfigError);
  EXPECT_THROW(trainer::check_cloud_spec(BlockSpec::relu({8, 8, 8}), main), ConfigError);
  EXPECT_THROW(trainer::check_cloud_spec(BlockSpec::relu({64}), main), ConfigError);
}

TEST(Trainer, CloudAndFeatureTail) {
  const auto d = blobs(3, 40, 0.4, 2);
  const auto cloud = trainer::train_cloud(BlockSpec::relu({16, 8, 8}), BlockSpec::relu({12, 6}), d,
                                          &d, quick_sgd(), 10, 3);
  EXPECT_EQ(cloud.network.input_dim(), 2u);
  EXPECT_EQ(cloud.network.output_dim(), 3u);
  EXPECT_GT(cloud.val_accuracy, 0.9);

  auto net = arch::MEANet::build(blob_config(3, 1), 3);
  trainer::train_main(net, d, quick_sgd(), 10);
  const auto f = trainer::feature_dataset(net, d);
  EXPECT_EQ(f.dim, net.config().feature_dim);
  EXPECT_EQ(f.labels, d.labels);
  const auto tail = trainer::train_feature_tail(net, BlockSpec::relu({8}), d, &d, quick_sgd(), 5, 4);
  EXPECT_EQ(tail.network.input_dim(), net.config().feature_dim);
  EXPECT_EQ(tail.network.output_dim(), 3u);
}

TEST(Algorithm1, EndToEndInvariants) {
  const auto d = blobs(6, 40, 1.2, 5);
  trainer::Algorithm1Options o;
  o.config = blob_config(6, 3);
  o.main_sgd = quick_sgd(1);
  o.edge_sgd = quick_sgd(2);
  o.cloud_sgd = quick_sgd(3);
  o.main_epochs = 8;
  o.edge_epochs = 8;
  o.cloud_epochs = 4;
  o.seed = 9;
  o.cloud_spec = BlockSpec::relu({16, 8, 8});
  const auto path = std::filesystem::temp_directory_path() / "mea_alg1_partition.json";
  std::filesystem::remove(path);
  o.partition_path = path;
  const auto r = trainer::run_algorithm1(d, o);

  EXPECT_TRUE(std::filesystem::exists(path));
  EXPECT_EQ(complexity::ClassPartition::load(path), r.partition);
  EXPECT_EQ(r.partition.num_hard(), 3u);
  EXPECT_EQ(r.partition, complexity::select_hard_classes(r.stats, 3));
  for (std::size_t l = 0; l < r.net.main().depth(); ++l) {
    EXPECT_EQ(r.net.main().layer(l).weights, r.main_snapshot.main().layer(l).weights);
    EXPECT_EQ(r.net.main().layer(l).bias, r.main_snapshot.main().layer(l).bias);
  }
  EXPECT_EQ(r.net.exit1().layer(0).weights, r.main_snapshot.exit1().layer(0).weights);
  EXPECT_EQ(arch::main_block_digest(r.net), arch::main_block_digest(r.main_snapshot));
  EXPECT_TRUE(r.net.main_frozen());
  EXPECT_TRUE(r.cloud.has_value());
  EXPECT_EQ(r.split.train.size() + r.split.val.size(), d.size());

  std::size_t expected = 0;
  for (auto y : r.split.train.labels) expected += r.partition.is_hard_class(y);
  EXPECT_EQ(r.hard_subset_size, expected);

  const auto p = r.net.count_params();
  EXPECT_EQ(p.fixed, r.net.main().param_count() + r.net.exit1().param_count());
  EXPECT_EQ(p.trained, p.total() - p.fixed);

  const auto again = trainer::run_algorithm1(d, o);
  EXPECT_EQ(arch::serialize(again.net), arch::serialize(r.net));
}

TEST(Algorithm1, RejectsShapeMismatch) {
  trainer::Algorithm1Options o;
  o.config = blob_config(5, 2);
  EXPECT_THROW(trainer::run_algorithm1(blobs(4, 10, 0.5, 1), o), ConfigError);
}

}  // namespace
