#include "mea/router/router.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <thread>

#include <nlohmann/json.hpp>

#include "mea/errors.hpp"
#include "mea/nn/functional.hpp"

namespace mea::router {

std::string_view exit_name(Exit e) {
  switch (e) {
    case Exit::kMain:
      return "main";
    case Exit::kExtension:
      return "extension";
    case Exit::kCloud:
      return "cloud";
  }
  return "main";
}

std::string_view payload_name(PayloadKind p) {
  return p == PayloadKind::kRawData ? "raw" : "features";
}

std::string_view cloud_mode_name(CloudMode m) {
  switch (m) {
    case CloudMode::kOff:
      return "off";
    case CloudMode::kOracle:
      return "oracle";
    case CloudMode::kRawModel:
      return "raw-model";
    case CloudMode::kFeatureTail:
      return "feature-tail";
  }
  return "off";
}

CloudMode parse_cloud_mode(std::string_view s) {
  if (s == "off") return CloudMode::kOff;
  if (s == "oracle") return CloudMode::kOracle;
  if (s == "raw-model") return CloudMode::kRawModel;
  if (s == "feature-tail") return CloudMode::kFeatureTail;
  throw ConfigError("unknown cloud mode '" + std::string(s) + "'");
}

Cloud Cloud::off() { return Cloud{}; }

Cloud Cloud::oracle() {
  Cloud c;
  c.mode_ = CloudMode::kOracle;
  return c;
}

Cloud Cloud::raw_model(nn::Network model) {
  Cloud c;
  c.mode_ = CloudMode::kRawModel;
  c.model_ = std::move(model);
  return c;
}

Cloud Cloud::feature_tail(nn::Network tail) {
  Cloud c;
  c.mode_ = CloudMode::kFeatureTail;
  c.model_ = std::move(tail);
  return c;
}

PayloadKind Cloud::payload_kind() const {
  return mode_ == CloudMode::kFeatureTail ? PayloadKind::kFeatures : PayloadKind::kRawData;
}

Cloud& Cloud::with_failures(double rate, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("cloud failure rate must lie in [0, 1]");
  failure_rate_ = rate;
  failure_seed_ = seed;
  return *this;
}

bool Cloud::transport_fails(std::size_t instance_id) const {
  if (failure_rate_ <= 0.0) return false;
  // splitmix64 finalizer over (seed, id)
  std::uint64_t z = failure_seed_ + 0x9e3779b97f4a7c15ULL * (instance_id + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const double u = static_cast<double>(z >> 11) * 0x1.0p-53;
  return u < failure_rate_;
}

std::vector<double> Cloud::logits(const Payload& payload) const {
  if (payload.kind != payload_kind()) {
    throw ContractViolation("cloud mode " + std::string(cloud_mode_name(mode_)) +
                            " cannot accept a " + std::string(payload_name(payload.kind)) +
                            " payload");
  }
  switch (mode_) {
    case CloudMode::kOff:
      throw ContractViolation("the cloud is off");
    case CloudMode::kOracle:
      throw ContractViolation("the oracle cloud has no logits");
    case CloudMode::kRawModel:
    case CloudMode::kFeatureTail:
      return model_->predict(payload.data);
  }
  return {};
}

std::size_t Cloud::predict(const Payload& payload) const {
  if (mode_ == CloudMode::kOracle) {
    if (payload.kind != PayloadKind::kRawData || !payload.true_label) {
      throw ContractViolation("the oracle cloud needs a raw payload carrying its label");
    }
    return *payload.true_label;
  }
  return nn::argmax(logits(payload));
}

std::size_t cloud_predict(const Cloud& cloud, const Payload& payload) {
  return cloud.predict(payload);
}

void to_json(nlohmann::json& j, const RoutingRecord& r) {
  j = nlohmann::json{{"id", r.id},
                     {"label", r.label},
                     {"entropy", r.entropy_main},
                     {"conf_main", r.conf_main},
                     {"conf_ext", r.conf_ext ? nlohmann::json(*r.conf_ext) : nlohmann::json()},
                     {"main_pred", r.main_predicted},
                     {"ext_pred", r.ext_predicted ? nlohmann::json(*r.ext_predicted)
                                                  : nlohmann::json()},
                     {"is_hard", r.is_hard},
                     {"decision", exit_name(r.decision)},
                     {"payload", r.payload ? nlohmann::json(payload_name(*r.payload))
                                           : nlohmann::json()},
                     {"offload_attempted", r.offload_attempted},
                     {"cloud_failed", r.cloud_failed},
                     {"prediction", r.predicted},
                     {"correct", r.correct}};
}

namespace {

RoutingRecord record_from_json(const nlohmann::json& j) {
  RoutingRecord r;
  r.id = j.at("id").get<std::size_t>();
  r.label = j.at("label").get<std::size_t>();
  r.entropy_main = j.at("entropy").get<double>();
  r.conf_main = j.at("conf_main").get<double>();
  if (!j.at("conf_ext").is_null()) r.conf_ext = j.at("conf_ext").get<double>();
  r.main_predicted = j.at("main_pred").get<std::size_t>();
  if (!j.at("ext_pred").is_null()) r.ext_predicted = j.at("ext_pred").get<std::size_t>();
  r.is_hard = j.at("is_hard").get<bool>();
  const auto d = j.at("decision").get<std::string>();
  r.decision = d == "cloud" ? Exit::kCloud : d == "extension" ? Exit::kExtension : Exit::kMain;
  if (!j.at("payload").is_null()) {
    r.payload = j.at("payload").get<std::string>() == "raw" ? PayloadKind::kRawData
                                                            : PayloadKind::kFeatures;
  }
  r.offload_attempted = j.at("offload_attempted").get<bool>();
  r.cloud_failed = j.at("cloud_failed").get<bool>();
  r.predicted = j.at("prediction").get<std::size_t>();
  r.correct = j.at("correct").get<bool>();
  return r;
}

double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Main-exit quantities shared by the edge and cloud paths.
RoutingRecord main_pass(const arch::MEANet& net, const complexity::ClassPartition& partition,
                        std::span<const double> x, std::size_t label, std::size_t id,
                        arch::MEANet::MainOutput& out) {
  out = net.forward_main(x);
  const auto p1 = nn::softmax(out.logits);
  RoutingRecord r;
  r.id = id;
  r.label = label;
  r.entropy_main = nn::entropy(p1);
  r.main_predicted = nn::argmax(p1);
  r.conf_main = p1[r.main_predicted];
  r.is_hard = partition.is_hard_class(r.main_predicted);
  return r;
}

void edge_decide(const arch::MEANet& net, const complexity::ClassPartition& partition,
                 std::span<const double> x, const arch::MEANet::MainOutput& main_out,
                 RoutingRecord& r) {
  if (!r.is_hard) {
    r.decision = Exit::kMain;
    r.predicted = r.main_predicted;
    return;
  }
  const auto y2 = net.forward_extension(main_out.features, net.adaptive_features(x));
  const auto p2 = nn::softmax(y2);
  const std::size_t hard_label = nn::argmax(p2);
  r.conf_ext = p2[hard_label];
  r.ext_predicted = partition.to_original(hard_label);
  if (r.conf_main > *r.conf_ext) {
    r.decision = Exit::kMain;
    r.predicted = r.main_predicted;
  } else {
    r.decision = Exit::kExtension;
    r.predicted = *r.ext_predicted;
  }
}

}  // namespace

ThresholdRange threshold_range(std::span<const double> correct_entropies,
                               std::span<const double> wrong_entropies) {
  if (correct_entropies.empty()) {
    throw CalibrationError("threshold calibration has no correct predictions");
  }
  if (wrong_entropies.empty()) {
    throw CalibrationError("threshold calibration has no wrong predictions");
  }
  return ThresholdRange{mean(correct_entropies), mean(wrong_entropies), correct_entropies.size(),
                        wrong_entropies.size()};
}

ThresholdRange calibrate_threshold(const arch::MEANet& net, const data::Dataset& validation) {
  if (validation.empty()) throw CalibrationError("threshold calibration needs validation data");
  std::vector<double> correct;
  std::vector<double> wrong;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    const auto p1 = nn::softmax(net.forward_main(validation.row(i)).logits);
    (nn::argmax(p1) == validation.labels[i] ? correct : wrong).push_back(nn::entropy(p1));
  }
  return threshold_range(correct, wrong);
}

RoutingRecord route_edge(const arch::MEANet& net, const complexity::ClassPartition& partition,
                         std::span<const double> x, std::size_t label, std::size_t id) {
  arch::MEANet::MainOutput main_out;
  RoutingRecord r = main_pass(net, partition, x, label, id, main_out);
  edge_decide(net, partition, x, main_out, r);
  r.correct = r.predicted == r.label;
  return r;
}

RoutingRecord route_instance(const arch::MEANet& net, const complexity::ClassPartition& partition,
                             std::span<const double> x, std::size_t label, std::size_t id,
                             double threshold, const Cloud& cloud, bool cloud_available) {
  if (!(threshold >= 0.0)) throw InvalidInputError("threshold must be nonnegative");
  arch::MEANet::MainOutput main_out;
  RoutingRecord r = main_pass(net, partition, x, label, id, main_out);

  if (cloud_available && cloud.enabled() && r.entropy_main > threshold) {
    r.offload_attempted = true;
    r.payload = cloud.payload_kind();
    if (cloud.transport_fails(id)) {
      r.cloud_failed = true;
    } else {
      Payload payload{*r.payload,
                      *r.payload == PayloadKind::kFeatures ? std::span<const double>(main_out.features)
                                                           : x,
                      label};
      r.decision = Exit::kCloud;
      r.predicted = cloud.predict(payload);
      r.correct = r.predicted == r.label;
      return r;
    }
  }
  edge_decide(net, partition, x, main_out, r);
  r.correct = r.predicted == r.label;
  return r;
}

InferenceReport summarize(std::span<const RoutingRecord> records,
                          const complexity::ClassPartition& partition, double threshold) {
  InferenceReport rep;
  rep.instances = records.size();
  rep.threshold = threshold;
  if (records.empty()) return rep;

  std::size_t correct = 0, main_correct = 0, hard_correct = 0, main_hard_correct = 0;
  std::size_t at_main = 0, at_ext = 0, at_cloud = 0, attempted = 0;
  std::vector<complexity::DetectionSample> detection;
  std::vector<double> h_all, h_correct, h_wrong;
  for (const auto& r : records) {
    correct += r.correct ? 1 : 0;
    const bool main_ok = r.main_predicted == r.label;
    main_correct += main_ok ? 1 : 0;
    const bool truly_hard = partition.is_hard_class(r.label);
    if (truly_hard) {
      ++rep.hard_instances;
      hard_correct += r.correct ? 1 : 0;
      main_hard_correct += main_ok ? 1 : 0;
    }
    detection.push_back({r.is_hard, truly_hard});
    switch (r.decision) {
      case Exit::kMain:
        ++at_main;
        break;
      case Exit::kExtension:
        ++at_ext;
        break;
      case Exit::kCloud:
        ++at_cloud;
        break;
    }
    attempted += r.offload_attempted ? 1 : 0;
    rep.cloud_failures += r.cloud_failed ? 1 : 0;

    switch (complexity::classify_error(r.main_predicted, r.label, partition)) {
      case complexity::ErrorType::kCorrect:
        ++rep.taxonomy.correct;
        break;
      case complexity::ErrorType::kTypeI:
        ++rep.taxonomy.type_i;
        break;
      case complexity::ErrorType::kTypeII:
        ++rep.taxonomy.type_ii;
        break;
      case complexity::ErrorType::kTypeIII:
        ++rep.taxonomy.type_iii;
        break;
      case complexity::ErrorType::kTypeIV:
        ++rep.taxonomy.type_iv;
        break;
    }
    h_all.push_back(r.entropy_main);
    (main_ok ? h_correct : h_wrong).push_back(r.entropy_main);
  }
  const double n = static_cast<double>(records.size());
  rep.accuracy = static_cast<double>(correct) / n;
  rep.main_accuracy = static_cast<double>(main_correct) / n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.hard_accuracy = rep.hard_instances ? static_cast<double>(hard_correct) /
                                               static_cast<double>(rep.hard_instances)
                                         : nan;
  rep.main_hard_accuracy = rep.hard_instances ? static_cast<double>(main_hard_correct) /
                                                    static_cast<double>(rep.hard_instances)
                                              : nan;
  rep.detection_accuracy = complexity::detection_accuracy(detection);
  rep.frac_main = static_cast<double>(at_main) / n;
  rep.frac_extension = static_cast<double>(at_ext) / n;
  rep.beta = static_cast<double>(at_cloud) / n;
  rep.offload_attempted = static_cast<double>(attempted) / n;
  rep.mean_entropy = mean(h_all);
  rep.mean_entropy_correct = mean(h_correct);
  rep.mean_entropy_wrong = mean(h_wrong);
  return rep;
}

InferenceResult run_inference(const arch::MEANet& net, const complexity::ClassPartition& partition,
                              const data::Dataset& dataset, double threshold, const Cloud& cloud,
                              const InferenceOptions& options) {
  if (partition.num_classes() != net.config().num_classes ||
      partition.num_hard() != net.config().num_hard) {
    throw ConfigError("class partition does not match the model");
  }
  InferenceResult result;
  result.records.resize(dataset.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      result.records[i] = route_instance(net, partition, dataset.row(i), dataset.labels[i], i,
                                         threshold, cloud, options.cloud_available);
    }
  };
  const std::size_t threads = std::max(1u, options.threads);
  if (threads == 1 || dataset.size() < 2 * threads) {
    work(0, dataset.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (dataset.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(dataset.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }
  result.report = summarize(result.records, partition, threshold);
  return result;
}

data::Dataset hard_only(const data::Dataset& dataset, const complexity::ClassPartition& partition) {
  return dataset.subset(complexity::filter_hard_subset(dataset.labels, partition).indices);
}

void write_record_log(std::span<const RoutingRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
}

std::vector<RoutingRecord> read_record_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::vector<RoutingRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mea::router
