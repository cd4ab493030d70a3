#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mea/arch/mea_net.hpp"
#include "mea/complexity/complexity.hpp"
#include "mea/data/dataset.hpp"
#include "mea/nn/network.hpp"

namespace mea::router {

enum class Exit { kMain, kExtension, kCloud };
enum class PayloadKind { kRawData, kFeatures };
enum class CloudMode { kOff, kOracle, kRawModel, kFeatureTail };

std::string_view exit_name(Exit e);
std::string_view payload_name(PayloadKind p);
std::string_view cloud_mode_name(CloudMode m);
CloudMode parse_cloud_mode(std::string_view s);

struct Payload {
  PayloadKind kind = PayloadKind::kRawData;
  std::span<const double> data;
  // Only the oracle reads the ground truth.
  std::optional<std::size_t> true_label;
};

// Simulated cloud endpoint. Failures are drawn per instance from a seeded
// hash, so they do not depend on evaluation order or thread count.
class Cloud {
 public:
  static Cloud off();
  static Cloud oracle();
  static Cloud raw_model(nn::Network model);
  static Cloud feature_tail(nn::Network tail);

  CloudMode mode() const { return mode_; }
  bool enabled() const { return mode_ != CloudMode::kOff; }
  PayloadKind payload_kind() const;

  Cloud& with_failures(double rate, std::uint64_t seed);
  double failure_rate() const { return failure_rate_; }
  bool transport_fails(std::size_t instance_id) const;

  std::size_t predict(const Payload& payload) const;
  std::vector<double> logits(const Payload& payload) const;
  const std::optional<nn::Network>& model() const { return model_; }

 private:
  CloudMode mode_ = CloudMode::kOff;
  std::optional<nn::Network> model_;
  double failure_rate_ = 0.0;
  std::uint64_t failure_seed_ = 0;
};

std::size_t cloud_predict(const Cloud& cloud, const Payload& payload);

struct RoutingRecord {
  std::size_t id = 0;
  std::size_t label = 0;
  double entropy_main = 0.0;
  double conf_main = 0.0;
  std::optional<double> conf_ext;  // present iff the extension ran
  std::size_t main_predicted = 0;
  std::optional<std::size_t> ext_predicted;  // original class id
  bool is_hard = false;
  Exit decision = Exit::kMain;
  std::optional<PayloadKind> payload;  // set when an offload was attempted
  bool offload_attempted = false;
  bool cloud_failed = false;
  std::size_t predicted = 0;
  bool correct = false;
};

void to_json(nlohmann::json& j, const RoutingRecord& r);

struct ThresholdRange {
  double mu_c = 0.0;  // mean main-exit entropy of correct predictions
  double mu_w = 0.0;  // ... and of wrong ones
  std::size_t n_correct = 0;
  std::size_t n_wrong = 0;

  double midpoint() const { return 0.5 * (mu_c + mu_w); }
  bool ordered() const { return mu_c < mu_w; }
};

ThresholdRange threshold_range(std::span<const double> correct_entropies,
                               std::span<const double> wrong_entropies);
ThresholdRange calibrate_threshold(const arch::MEANet& net, const data::Dataset& validation);

// Edge-only decision: main exit for easy predictions, otherwise the more
// confident of the two exits (ties go to the extension).
RoutingRecord route_edge(const arch::MEANet& net, const complexity::ClassPartition& partition,
                         std::span<const double> x, std::size_t label, std::size_t id);

RoutingRecord route_instance(const arch::MEANet& net, const complexity::ClassPartition& partition,
                             std::span<const double> x, std::size_t label, std::size_t id,
                             double threshold, const Cloud& cloud, bool cloud_available);

struct TaxonomyCounts {
  std::size_t correct = 0;
  std::size_t type_i = 0;
  std::size_t type_ii = 0;
  std::size_t type_iii = 0;
  std::size_t type_iv = 0;

  std::size_t errors() const { return type_i + type_ii + type_iii + type_iv; }
  std::size_t total() const { return correct + errors(); }
};

struct InferenceReport {
  std::size_t instances = 0;
  double threshold = 0.0;
  double accuracy = 0.0;
  std::size_t hard_instances = 0;
  double hard_accuracy = 0.0;      // NaN without hard instances
  double detection_accuracy = 0.0;
  double main_accuracy = 0.0;      // main exit alone
  double main_hard_accuracy = 0.0;
  double frac_main = 0.0;
  double frac_extension = 0.0;
  double beta = 0.0;               // fraction that exited at the cloud
  double offload_attempted = 0.0;  // includes failed transports
  std::size_t cloud_failures = 0;
  TaxonomyCounts taxonomy;         // of the main exit
  double mean_entropy = 0.0;
  double mean_entropy_correct = 0.0;
  double mean_entropy_wrong = 0.0;
};

InferenceReport summarize(std::span<const RoutingRecord> records,
                          const complexity::ClassPartition& partition, double threshold);

struct InferenceOptions {
  bool cloud_available = true;
  unsigned threads = 1;
};

struct InferenceResult {
  std::vector<RoutingRecord> records;
  InferenceReport report;
};

InferenceResult run_inference(const arch::MEANet& net, const complexity::ClassPartition& partition,
                              const data::Dataset& dataset, double threshold, const Cloud& cloud,
                              const InferenceOptions& options = {});

// Hard-class instances only, original labels kept.
data::Dataset hard_only(const data::Dataset& dataset, const complexity::ClassPartition& partition);

void write_record_log(std::span<const RoutingRecord> records, const std::filesystem::path& path);
std::vector<RoutingRecord> read_record_log(const std::filesystem::path& path);

}  // namespace mea::router
