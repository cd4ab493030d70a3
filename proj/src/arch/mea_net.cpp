#include "mea/arch/mea_net.hpp"

#include <nlohmann/json.hpp>

#include "mea/errors.hpp"

namespace mea::arch {

std::string_view variant_name(Variant v) { return v == Variant::kA ? "A" : "B"; }
std::string_view merge_name(MergeMode m) { return m == MergeMode::kSum ? "sum" : "concat"; }

Variant parse_variant(std::string_view s) {
  if (s == "A" || s == "a") return Variant::kA;
  if (s == "B" || s == "b") return Variant::kB;
  throw ConfigError("unknown model variant '" + std::string(s) + "'");
}

MergeMode parse_merge(std::string_view s) {
  if (s == "sum") return MergeMode::kSum;
  if (s == "concat") return MergeMode::kConcat;
  throw ConfigError("unknown merge mode '" + std::string(s) + "'");
}

BlockSpec BlockSpec::relu(std::vector<std::size_t> widths) {
  BlockSpec spec;
  spec.activations.assign(widths.size(), nn::Activation::kRelu);
  spec.widths = std::move(widths);
  return spec;
}

MEAConfig MEAConfig::variant_a(std::size_t input_dim, std::size_t num_classes,
                               std::size_t num_hard, const BlockSpec& stack, std::size_t split,
                               BlockSpec adaptive, MergeMode merge) {
  if (split == 0 || split > stack.depth()) {
    throw ConfigError("variant A split must leave at least one layer in the main block");
  }
  MEAConfig c;
  c.variant = Variant::kA;
  c.merge = merge;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.num_hard = num_hard;
  c.main_spec.widths.assign(stack.widths.begin(), stack.widths.begin() + split);
  c.main_spec.activations.assign(stack.activations.begin(), stack.activations.begin() + split);
  c.extension_spec.widths.assign(stack.widths.begin() + split, stack.widths.end());
  c.extension_spec.activations.assign(stack.activations.begin() + split, stack.activations.end());
  c.adaptive_spec = std::move(adaptive);
  c.feature_dim = c.main_spec.output_width();
  return c;
}

MEAConfig MEAConfig::variant_b(std::size_t input_dim, std::size_t num_classes,
                               std::size_t num_hard, BlockSpec stack, BlockSpec adaptive,
                               BlockSpec extension, MergeMode merge) {
  MEAConfig c;
  c.variant = Variant::kB;
  c.merge = merge;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.num_hard = num_hard;
  c.main_spec = std::move(stack);
  c.adaptive_spec = std::move(adaptive);
  c.extension_spec = std::move(extension);
  c.feature_dim = c.main_spec.output_width();
  return c;
}

void MEAConfig::validate() const {
  auto check_spec = [](const BlockSpec& s, const char* name) {
    if (s.widths.size() != s.activations.size()) {
      throw ConfigError(std::string(name) + ": one activation per layer is required");
    }
    for (std::size_t w : s.widths) {
      if (w == 0) throw ConfigError(std::string(name) + ": layer widths must be positive");
    }
  };
  check_spec(main_spec, "main block");
  check_spec(adaptive_spec, "adaptive block");
  check_spec(extension_spec, "extension block");
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (num_classes < 2) throw ConfigError("at least two classes are required");
  if (num_hard < 1 || num_hard > num_classes) throw ConfigError("N_hard must lie in [1, K]");
  if (main_spec.depth() == 0) throw ConfigError("main block needs at least one layer");
  if (adaptive_spec.depth() == 0) throw ConfigError("adaptive block needs at least one layer");
  if (feature_dim != main_spec.output_width()) {
    throw ConfigError("feature_dim must equal the main block's output width");
  }
  if (adaptive_spec.depth() >= main_spec.depth()) {
    throw ConfigError("adaptive block must be shallower than the main block");
  }
  if (adaptive_spec.output_width() != feature_dim) {
    throw ConfigError("adaptive block output width " + std::to_string(adaptive_spec.output_width()) +
                      " must equal feature_dim " + std::to_string(feature_dim));
  }
}

void to_json(nlohmann::json& j, const BlockSpec& spec) {
  std::vector<std::string> acts;
  for (auto a : spec.activations) acts.emplace_back(nn::activation_name(a));
  j = nlohmann::json{{"widths", spec.widths}, {"activations", acts}};
}

void from_json(const nlohmann::json& j, BlockSpec& spec) {
  spec.widths = j.at("widths").get<std::vector<std::size_t>>();
  spec.activations.clear();
  if (j.contains("activations")) {
    for (const auto& a : j.at("activations")) {
      spec.activations.push_back(nn::parse_activation(a.get<std::string>()));
    }
  } else {
    spec.activations.assign(spec.widths.size(), nn::Activation::kRelu);
  }
}

void to_json(nlohmann::json& j, const MEAConfig& c) {
  j = nlohmann::json{{"variant", variant_name(c.variant)},
                     {"merge", merge_name(c.merge)},
                     {"input_dim", c.input_dim},
                     {"feature_dim", c.feature_dim},
                     {"num_classes", c.num_classes},
                     {"num_hard", c.num_hard},
                     {"main", c.main_spec},
                     {"adaptive", c.adaptive_spec},
                     {"extension", c.extension_spec}};
}

void from_json(const nlohmann::json& j, MEAConfig& c) {
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.merge = parse_merge(j.at("merge").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.num_hard = j.at("num_hard").get<std::size_t>();
  c.main_spec = j.at("main").get<BlockSpec>();
  c.adaptive_spec = j.at("adaptive").get<BlockSpec>();
  c.extension_spec = j.at("extension").get<BlockSpec>();
}

MEANet::MEANet(MEAConfig config, nn::Network main, nn::Network exit1, nn::Network adaptive,
               nn::Network extension, nn::Network exit2)
    : config_(std::move(config)),
      main_(std::move(main)),
      exit1_(std::move(exit1)),
      adaptive_(std::move(adaptive)),
      extension_(std::move(extension)),
      exit2_(std::move(exit2)) {
  config_.validate();
  check_shapes();
}

void MEANet::check_shapes() const {
  const auto& c = config_;
  if (main_.input_dim() != c.input_dim || main_.output_dim() != c.feature_dim ||
      main_.depth() != c.main_spec.depth()) {
    throw ShapeError("main block does not match the configuration");
  }
  if (exit1_.depth() != 1 || exit1_.input_dim() != c.feature_dim ||
      exit1_.output_dim() != c.num_classes) {
    throw ShapeError("exit 1 must be a single dense layer from F to the class logits");
  }
  if (adaptive_.input_dim() != c.input_dim || adaptive_.output_dim() != c.feature_dim ||
      adaptive_.depth() != c.adaptive_spec.depth()) {
    throw ShapeError("adaptive block does not match the configuration");
  }
  if (extension_.input_dim() != c.extension_input_dim() ||
      extension_.depth() != c.extension_spec.depth()) {
    throw ShapeError("extension block does not match the merge mode");
  }
  if (exit2_.depth() != 1 || exit2_.input_dim() != extension_.output_dim() ||
      exit2_.output_dim() != c.num_hard) {
    throw ShapeError("exit 2 must be a single dense layer onto the hard-class logits");
  }
}

MEANet MEANet::build(const MEAConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const nn::Activation identity[] = {nn::Activation::kIdentity};

  auto main = nn::Network::random(config.input_dim, config.main_spec.widths,
                                  config.main_spec.activations, rng);
  const std::size_t k[] = {config.num_classes};
  auto exit1 = nn::Network::random(config.feature_dim, k, identity, rng);
  auto adaptive = nn::Network::random(config.input_dim, config.adaptive_spec.widths,
                                      config.adaptive_spec.activations, rng);
  auto extension = nn::Network::random(config.extension_input_dim(), config.extension_spec.widths,
                                       config.extension_spec.activations, rng);
  const std::size_t n_hard[] = {config.num_hard};
  auto exit2 = nn::Network::random(extension.output_dim(), n_hard, identity, rng);
  return MEANet(config, std::move(main), std::move(exit1), std::move(adaptive),
                std::move(extension), std::move(exit2));
}

MEANet MEANet::attach_edge_blocks(const MEANet& source, std::size_t num_hard,
                                  std::uint64_t seed) {
  MEAConfig config = source.config_;
  config.num_hard = num_hard;
  config.validate();
  std::mt19937_64 rng(seed);
  const nn::Activation identity[] = {nn::Activation::kIdentity};
  auto adaptive = nn::Network::random(config.input_dim, config.adaptive_spec.widths,
                                      config.adaptive_spec.activations, rng);
  auto extension = nn::Network::random(config.extension_input_dim(), config.extension_spec.widths,
                                       config.extension_spec.activations, rng);
  const std::size_t n_hard[] = {num_hard};
  auto exit2 = nn::Network::random(extension.output_dim(), n_hard, identity, rng);
  return MEANet(std::move(config), source.main_, source.exit1_, std::move(adaptive),
                std::move(extension), std::move(exit2));
}

MEANet::MainOutput MEANet::forward_main(std::span<const double> x) const {
  if (x.size() != config_.input_dim) {
    throw ShapeError("input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(config_.input_dim));
  }
  MainOutput out;
  out.features = main_.predict(x);
  out.logits = exit1_.predict(out.features);
  return out;
}

std::vector<double> MEANet::adaptive_features(std::span<const double> x) const {
  return adaptive_.predict(x);
}

std::vector<double> MEANet::merge(std::span<const double> features,
                                  std::span<const double> f2) const {
  if (features.size() != config_.feature_dim || f2.size() != config_.feature_dim) {
    throw ShapeError("merge inputs must both have feature_dim values");
  }
  std::vector<double> merged(features.begin(), features.end());
  if (config_.merge == MergeMode::kSum) {
    for (std::size_t i = 0; i < merged.size(); ++i) merged[i] += f2[i];
  } else {
    merged.insert(merged.end(), f2.begin(), f2.end());
  }
  return merged;
}

std::vector<double> MEANet::forward_extension(std::span<const double> features,
                                              std::span<const double> f2) const {
  return exit2_.predict(extension_.predict(merge(features, f2)));
}

void MEANet::freeze_main() {
  main_.freeze();
  exit1_.freeze();
}

bool MEANet::main_frozen() const { return main_.all_frozen() && exit1_.all_frozen(); }

namespace {

void tally(const nn::Network& net, Counts& params, Counts& macs) {
  for (const auto& layer : net.layers()) {
    (layer.frozen ? params.fixed : params.trained) += layer.param_count();
    (layer.frozen ? macs.fixed : macs.trained) += layer.macs();
  }
}

}  // namespace

std::vector<BlockCounts> MEANet::block_counts() const {
  std::vector<BlockCounts> out;
  const std::pair<const char*, const nn::Network*> blocks[] = {
      {"main", &main_}, {"exit1", &exit1_}, {"adaptive", &adaptive_},
      {"extension", &extension_}, {"exit2", &exit2_}};
  for (const auto& [name, net] : blocks) {
    BlockCounts b{name, {}, {}};
    tally(*net, b.params, b.macs);
    out.push_back(b);
  }
  return out;
}

Counts MEANet::count_params() const {
  Counts total;
  for (const auto& b : block_counts()) {
    total.fixed += b.params.fixed;
    total.trained += b.params.trained;
  }
  return total;
}

Counts MEANet::count_macs() const {
  Counts total;
  for (const auto& b : block_counts()) {
    total.fixed += b.macs.fixed;
    total.trained += b.macs.trained;
  }
  return total;
}

}  // namespace mea::arch
