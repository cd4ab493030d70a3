#include "mea/trainer/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include "mea/errors.hpp"
#include "mea/nn/functional.hpp"

namespace mea::trainer {
namespace {

std::vector<std::size_t> epoch_order(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void require_nonempty(const data::Dataset& d, const char* what) {
  if (d.empty()) throw InvalidInputError(std::string(what) + ": empty dataset");
  d.validate();
}

// Splits a combined stack back into its two parts.
std::pair<nn::Network, nn::Network> split_stack(const nn::Network& combined, std::size_t head_depth,
                                                std::size_t input_dim) {
  std::vector<nn::DenseLayer> head(combined.layers().begin(),
                                   combined.layers().begin() + static_cast<long>(head_depth));
  std::vector<nn::DenseLayer> tail(combined.layers().begin() + static_cast<long>(head_depth),
                                   combined.layers().end());
  nn::Network a(input_dim, std::move(head));
  nn::Network b(a.output_dim(), std::move(tail));
  return {std::move(a), std::move(b)};
}

}  // namespace

EpochMetrics evaluate_classifier(const nn::Network& net, const data::Dataset& data) {
  EpochMetrics m;
  if (data.empty()) return m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto logits = net.predict(data.row(i));
    m.loss += nn::cross_entropy_loss(logits, data.labels[i]).loss;
    hits += nn::argmax(logits) == data.labels[i] ? 1 : 0;
  }
  m.loss /= static_cast<double>(data.size());
  m.accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  return m;
}

Curve train_classifier(nn::Network& net, const data::Dataset& train, const nn::SgdConfig& config,
                       int epochs, const data::Dataset* val, const std::string& stage) {
  require_nonempty(train, "training");
  config.validate();
  if (train.dim != net.input_dim()) throw ShapeError("dataset dim does not match network input");
  if (train.num_classes > net.output_dim()) {
    throw ShapeError("network emits fewer logits than the dataset has classes");
  }

  std::mt19937_64 rng(config.seed);
  nn::MomentumState momentum;
  Curve curve;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = epoch_order(train.size(), rng);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto grads = net.zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto trace = net.forward(train.row(i));
        const auto ce = nn::cross_entropy_loss(trace.output, train.labels[i]);
        loss_sum += ce.loss;
        hits += nn::argmax(trace.output) == train.labels[i] ? 1 : 0;
        net.backward_into(trace, ce.grad, grads);
      }
      grads.scale(1.0 / static_cast<double>(end - start));
      nn::sgd_step(net, grads, epoch, config, momentum);
    }
    const double n = static_cast<double>(train.size());
    curve.push_back({epoch, stage, "train", loss_sum / n, static_cast<double>(hits) / n});
    if (val != nullptr && !val->empty()) {
      auto m = evaluate_classifier(net, *val);
      m.epoch = epoch;
      m.stage = stage;
      m.split = "val";
      curve.push_back(m);
    }
  }
  return curve;
}

Curve train_main(arch::MEANet& net, const data::Dataset& train, const nn::SgdConfig& config,
                 int epochs, const data::Dataset* val) {
  require_nonempty(train, "train_main");
  if (train.num_classes != net.config().num_classes) {
    throw InvalidInputError("dataset class count differs from the model's");
  }
  std::vector<nn::DenseLayer> layers = net.main().layers();
  layers.push_back(net.exit1().layer(0));
  nn::Network combined(net.config().input_dim, std::move(layers));
  Curve curve = train_classifier(combined, train, config, epochs, val, "main");
  auto [main, exit1] = split_stack(combined, net.main().depth(), net.config().input_dim);
  net.main() = std::move(main);
  net.exit1() = std::move(exit1);
  return curve;
}

nn::Network build_cloud(std::size_t input_dim, std::size_t num_classes, const arch::BlockSpec& spec,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto widths = spec.widths;
  auto acts = spec.activations;
  widths.push_back(num_classes);
  acts.push_back(nn::Activation::kIdentity);
  return nn::Network::random(input_dim, widths, acts, rng);
}

void check_cloud_spec(const arch::BlockSpec& cloud, const arch::BlockSpec& main) {
  const auto widest = [](const arch::BlockSpec& s) {
    return s.widths.empty() ? std::size_t{0} : *std::max_element(s.widths.begin(), s.widths.end());
  };
  const bool deeper_or_equal = cloud.depth() >= main.depth();
  const bool wider_or_equal = widest(cloud) >= widest(main);
  const bool strictly = cloud.depth() > main.depth() || widest(cloud) > widest(main);
  if (!(deeper_or_equal && wider_or_equal && strictly)) {
    throw ConfigError("cloud model must be strictly larger than the edge main block");
  }
}

CloudTraining train_cloud(const arch::BlockSpec& spec, const arch::BlockSpec& main_spec,
                          const data::Dataset& train, const data::Dataset* val,
                          const nn::SgdConfig& config, int epochs, std::uint64_t seed) {
  check_cloud_spec(spec, main_spec);
  require_nonempty(train, "train_cloud");
  CloudTraining out{build_cloud(train.dim, train.num_classes, spec, seed), {}, 0.0};
  out.curve = train_classifier(out.network, train, config, epochs, val, "cloud");
  if (val != nullptr && !val->empty()) out.val_accuracy = evaluate_classifier(out.network, *val).accuracy;
  return out;
}

data::Dataset feature_dataset(const arch::MEANet& net, const data::Dataset& data) {
  data::Dataset out;
  out.dim = net.config().feature_dim;
  out.num_classes = data.num_classes;
  out.provenance = data.provenance + "+features";
  out.labels = data.labels;
  out.features.reserve(data.size() * out.dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = net.main().predict(data.row(i));
    out.features.insert(out.features.end(), f.begin(), f.end());
  }
  return out;
}

CloudTraining train_feature_tail(const arch::MEANet& net, const arch::BlockSpec& spec,
                                 const data::Dataset& train, const data::Dataset* val,
                                 const nn::SgdConfig& config, int epochs, std::uint64_t seed) {
  require_nonempty(train, "train_feature_tail");
  const auto f_train = feature_dataset(net, train);
  std::optional<data::Dataset> f_val;
  if (val != nullptr && !val->empty()) f_val = feature_dataset(net, *val);
  CloudTraining out{build_cloud(f_train.dim, f_train.num_classes, spec, seed), {}, 0.0};
  out.curve = train_classifier(out.network, f_train, config, epochs, f_val ? &*f_val : nullptr,
                               "feature-tail");
  if (f_val) out.val_accuracy = evaluate_classifier(out.network, *f_val).accuracy;
  return out;
}

EpochMetrics evaluate_extension(const arch::MEANet& net, const data::Dataset& hard_data) {
  EpochMetrics m;
  if (hard_data.empty()) return m;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < hard_data.size(); ++i) {
    const auto x = hard_data.row(i);
    const auto main_out = net.forward_main(x);
    const auto logits = net.forward_extension(main_out.features, net.adaptive_features(x));
    m.loss += nn::cross_entropy_loss(logits, hard_data.labels[i]).loss;
    hits += nn::argmax(logits) == hard_data.labels[i] ? 1 : 0;
  }
  m.loss /= static_cast<double>(hard_data.size());
  m.accuracy = static_cast<double>(hits) / static_cast<double>(hard_data.size());
  return m;
}

ExtensionStep extension_gradients(const arch::MEANet& net, std::span<const double> features,
                                  std::span<const double> x, std::size_t hard_label,
                                  nn::NetworkGradients& g_adaptive,
                                  nn::NetworkGradients& g_extension, nn::NetworkGradients& g_exit2) {
  const auto t_adaptive = net.adaptive().forward(x);
  const auto merged = net.merge(features, t_adaptive.output);
  const auto t_extension = net.extension().forward(merged);
  const auto t_exit2 = net.exit2().forward(t_extension.output);
  const auto ce = nn::cross_entropy_loss(t_exit2.output, hard_label);

  const auto d_ext_out = net.exit2().backward_into(t_exit2, ce.grad, g_exit2, true);
  const auto d_merged = net.extension().backward_into(t_extension, d_ext_out, g_extension, true);
  // F is frozen; only the adaptive share of the merged gradient flows back.
  std::span<const double> d_f2(d_merged);
  if (net.config().merge == arch::MergeMode::kConcat) {
    d_f2 = d_f2.subspan(net.config().feature_dim, net.config().feature_dim);
  }
  net.adaptive().backward_into(t_adaptive, d_f2, g_adaptive);
  return {ce.loss, nn::argmax(t_exit2.output)};
}

Curve train_extension_adaptive(arch::MEANet& net, const data::Dataset& hard_train,
                               const nn::SgdConfig& config, int epochs,
                               const data::Dataset* hard_val) {
  if (!net.main_frozen()) {
    throw ContractViolation("blockwise training requires a frozen main block");
  }
  require_nonempty(hard_train, "train_extension_adaptive");
  config.validate();
  const auto& cfg = net.config();
  if (hard_train.num_classes != cfg.num_hard) {
    throw InvalidInputError("hard-class labels must be remapped into [0, N_hard)");
  }
  // Main-block features never change while it is frozen; compute them once.
  std::vector<std::vector<double>> features(hard_train.size());
  for (std::size_t i = 0; i < hard_train.size(); ++i) {
    features[i] = net.main().predict(hard_train.row(i));
  }

  std::mt19937_64 rng(config.seed);
  nn::MomentumState m_adaptive;
  nn::MomentumState m_extension;
  nn::MomentumState m_exit2;
  Curve curve;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto order = epoch_order(hard_train.size(), rng);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      auto g_adaptive = net.adaptive().zero_gradients();
      auto g_extension = net.extension().zero_gradients();
      auto g_exit2 = net.exit2().zero_gradients();
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const auto g = extension_gradients(net, features[i], hard_train.row(i),
                                           hard_train.labels[i], g_adaptive, g_extension, g_exit2);
        loss_sum += g.loss;
        hits += g.predicted == hard_train.labels[i] ? 1 : 0;
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      g_adaptive.scale(inv);
      g_extension.scale(inv);
      g_exit2.scale(inv);
      nn::sgd_step(net.adaptive(), g_adaptive, epoch, config, m_adaptive);
      nn::sgd_step(net.extension(), g_extension, epoch, config, m_extension);
      nn::sgd_step(net.exit2(), g_exit2, epoch, config, m_exit2);
    }
    const double n = static_cast<double>(hard_train.size());
    curve.push_back({epoch, "extension", "train", loss_sum / n, static_cast<double>(hits) / n});
    if (hard_val != nullptr && !hard_val->empty()) {
      auto m = evaluate_extension(net, *hard_val);
      m.epoch = epoch;
      m.stage = "extension";
      m.split = "val";
      curve.push_back(m);
    }
  }
  return curve;
}

std::vector<std::size_t> main_predictions(const arch::MEANet& net, const data::Dataset& data) {
  std::vector<std::size_t> preds(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    preds[i] = nn::argmax(net.forward_main(data.row(i)).logits);
  }
  return preds;
}

data::Dataset hard_dataset(const data::Dataset& data, const complexity::ClassPartition& partition) {
  const auto subset = complexity::filter_hard_subset(data.labels, partition);
  data::Dataset out = data.subset(subset.indices);
  out.labels = subset.hard_labels;
  out.num_classes = partition.num_hard();
  return out;
}

Algorithm1Result run_algorithm1(const data::Dataset& dataset, const Algorithm1Options& options) {
  require_nonempty(dataset, "run_algorithm1");
  options.config.validate();
  if (dataset.num_classes != options.config.num_classes || dataset.dim != options.config.input_dim) {
    throw ConfigError("dataset shape does not match the model configuration");
  }
  if (options.cloud_spec) check_cloud_spec(*options.cloud_spec, options.config.main_spec);

  Algorithm1Result r;
  // Held out before any training; reused for class selection.
  r.split = data::split_train_val(dataset, options.val_fraction, options.seed);

  // 1. Cloud-side training of the main block (and the cloud model).
  r.net = arch::MEANet::build(options.config, options.seed);
  auto curve = train_main(r.net, r.split.train, options.main_sgd, options.main_epochs, &r.split.val);
  r.curve.insert(r.curve.end(), curve.begin(), curve.end());
  if (options.cloud_spec) {
    auto cloud = train_cloud(*options.cloud_spec, options.config.main_spec, r.split.train,
                             &r.split.val, options.cloud_sgd, options.cloud_epochs,
                             options.seed + kCloudSeedOffset);
    r.curve.insert(r.curve.end(), cloud.curve.begin(), cloud.curve.end());
    r.cloud = std::move(cloud.network);
  }
  r.main_snapshot = r.net;

  // 2-3. Validation statistics, hard classes and the class dictionary.
  const auto preds = main_predictions(r.net, r.split.val);
  r.stats = complexity::build_class_stats(preds, r.split.val.labels, dataset.num_classes);
  r.partition = options.random_classes
                    ? complexity::select_random_classes(dataset.num_classes,
                                                        options.config.num_hard,
                                                        options.seed + kRandomClassSeedOffset)
                    : complexity::select_hard_classes(r.stats, options.config.num_hard);

  // 4. Hand the partition to the edge.
  if (options.partition_path) {
    r.partition.save(*options.partition_path);
    r.partition = complexity::ClassPartition::load(*options.partition_path);
  } else {
    r.partition = complexity::ClassPartition::from_json(r.partition.to_json());
  }

  // 5. Hard-class subset with remapped labels.
  const auto hard_train = hard_dataset(r.split.train, r.partition);
  const auto hard_val = hard_dataset(r.split.val, r.partition);
  r.hard_subset_size = hard_train.size();

  // 6-8. Attach fresh edge blocks, freeze the main block, train the rest.
  r.net = arch::MEANet::attach_edge_blocks(r.net, r.partition.num_hard(),
                                           options.seed + kEdgeBlockSeedOffset);
  r.net.freeze_main();
  curve = train_extension_adaptive(r.net, hard_train, options.edge_sgd, options.edge_epochs, &hard_val);
  r.curve.insert(r.curve.end(), curve.begin(), curve.end());
  return r;
}

}  // namespace mea::trainer
