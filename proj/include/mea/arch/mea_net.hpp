#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mea/nn/network.hpp"

namespace mea::arch {

enum class Variant { kA, kB };
enum class MergeMode { kSum, kConcat };

std::string_view variant_name(Variant v);
std::string_view merge_name(MergeMode m);
Variant parse_variant(std::string_view s);
MergeMode parse_merge(std::string_view s);

struct BlockSpec {
  std::vector<std::size_t> widths;
  std::vector<nn::Activation> activations;

  std::size_t depth() const { return widths.size(); }
  std::size_t output_width() const { return widths.empty() ? 0 : widths.back(); }
  static BlockSpec relu(std::vector<std::size_t> widths);

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct MEAConfig {
  Variant variant = Variant::kB;
  MergeMode merge = MergeMode::kSum;
  std::size_t input_dim = 0;
  std::size_t feature_dim = 0;
  std::size_t num_classes = 0;
  std::size_t num_hard = 0;
  BlockSpec main_spec;
  BlockSpec adaptive_spec;
  BlockSpec extension_spec;

  // Variant A: `stack` holds the hidden layers of one network (its
  // classifier implied); the first `split` go to the main block and the rest
  // become the extension, whose classifier is re-sized to N_hard.
  static MEAConfig variant_a(std::size_t input_dim, std::size_t num_classes, std::size_t num_hard,
                             const BlockSpec& stack, std::size_t split, BlockSpec adaptive,
                             MergeMode merge = MergeMode::kSum);
  // Variant B: the whole stack is the main block; adaptive and extension are new.
  static MEAConfig variant_b(std::size_t input_dim, std::size_t num_classes, std::size_t num_hard,
                             BlockSpec stack, BlockSpec adaptive, BlockSpec extension,
                             MergeMode merge = MergeMode::kSum);

  std::size_t extension_input_dim() const {
    return merge == MergeMode::kSum ? feature_dim : 2 * feature_dim;
  }
  void validate() const;

  friend bool operator==(const MEAConfig&, const MEAConfig&) = default;
};

void to_json(nlohmann::json& j, const BlockSpec& spec);
void from_json(const nlohmann::json& j, BlockSpec& spec);
void to_json(nlohmann::json& j, const MEAConfig& config);
void from_json(const nlohmann::json& j, MEAConfig& config);

struct Counts {
  std::size_t fixed = 0;
  std::size_t trained = 0;
  std::size_t total() const { return fixed + trained; }
};

struct BlockCounts {
  std::string block;
  Counts params;
  Counts macs;
};

class MEANet {
 public:
  struct MainOutput {
    std::vector<double> logits;    // exit 1, one per class
    std::vector<double> features;  // F
  };

  MEANet() = default;
  MEANet(MEAConfig config, nn::Network main, nn::Network exit1, nn::Network adaptive,
         nn::Network extension, nn::Network exit2);

  static MEANet build(const MEAConfig& config, std::uint64_t seed);

  // Keeps main and exit 1 and attaches freshly initialised adaptive,
  // extension and exit 2 blocks sized for `num_hard` classes.
  static MEANet attach_edge_blocks(const MEANet& source, std::size_t num_hard, std::uint64_t seed);

  const MEAConfig& config() const { return config_; }

  const nn::Network& main() const { return main_; }
  const nn::Network& exit1() const { return exit1_; }
  const nn::Network& adaptive() const { return adaptive_; }
  const nn::Network& extension() const { return extension_; }
  const nn::Network& exit2() const { return exit2_; }
  nn::Network& main() { return main_; }
  nn::Network& exit1() { return exit1_; }
  nn::Network& adaptive() { return adaptive_; }
  nn::Network& extension() { return extension_; }
  nn::Network& exit2() { return exit2_; }

  MainOutput forward_main(std::span<const double> x) const;
  std::vector<double> adaptive_features(std::span<const double> x) const;
  std::vector<double> merge(std::span<const double> features, std::span<const double> f2) const;
  std::vector<double> forward_extension(std::span<const double> features,
                                        std::span<const double> f2) const;

  void freeze_main();
  bool main_frozen() const;

  Counts count_params() const;
  Counts count_macs() const;
  std::vector<BlockCounts> block_counts() const;

  friend bool operator==(const MEANet& a, const MEANet& b) {
    return a.config_ == b.config_ && a.main_ == b.main_ && a.exit1_ == b.exit1_ &&
           a.adaptive_ == b.adaptive_ && a.extension_ == b.extension_ && a.exit2_ == b.exit2_;
  }

 private:
  void check_shapes() const;

  MEAConfig config_;
  nn::Network main_;
  nn::Network exit1_;
  nn::Network adaptive_;
  nn::Network extension_;
  nn::Network exit2_;
};

}  // namespace mea::arch
