#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "mea/errors.hpp"
#include "mea/nn/functional.hpp"
#include "mea/router/router.hpp"
#include "mea/trainer/trainer.hpp"
#include "oracles.hpp"

namespace {

using namespace mea;
using router::Exit;

constexpr double kInf = std::numeric_limits<double>::infinity();

// A small trained MEANet on synthetic data, shared by the tests below.
struct Trained {
  arch::MEANet net;
  complexity::ClassPartition partition;
  data::Dataset val;
  data::Dataset test;
  nn::Network cloud;
};

const Trained& trained() {
  static const Trained t = [] {
    data::SyntheticSpec spec;
    spec.samples_per_class = 60;
    spec.overlap = 1.5;
    spec.seed = 4;
    const auto train = data::gen_synthetic(spec);
    spec.stream = 1;
    spec.samples_per_class = 40;
    const auto test = data::gen_synthetic(spec);
    trainer::Algorithm1Options o;
    o.config = arch::MEAConfig::variant_b(16, 8, 4, arch::BlockSpec::relu({16, 8}),
                                          arch::BlockSpec::relu({8}), arch::BlockSpec::relu({16}));
    o.main_sgd.milestones = {};
    o.edge_sgd.milestones = {};
    o.cloud_sgd.milestones = {};
    o.main_epochs = 6;
    o.edge_epochs = 6;
    o.cloud_epochs = 6;
    o.seed = 2;
    o.cloud_spec = arch::BlockSpec::relu({32, 16, 16});
    auto r = trainer::run_algorithm1(train, o);
    return Trained{std::move(r.net), r.partition, r.split.val, test, std::move(*r.cloud)};
  }();
  return t;
}

std::vector<double> oracle_entropies(const arch::MEANet& net, const data::Dataset& d) {
  std::vector<double> h;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto logits = oracle::ref_forward(net.exit1(), oracle::ref_forward(net.main(), d.row(i)));
    h.push_back(oracle::ref_entropy(oracle::ref_softmax(logits)));
  }
  return h;
}

TEST(Threshold, RangeExampleAndErrors) {
  const std::vector<double> c{0.1, 0.3};
  const std::vector<double> w{1.2, 1.4};
  const auto r = router::threshold_range(c, w);
  EXPECT_NEAR(r.mu_c, 0.2, 1e-15);
  EXPECT_NEAR(r.mu_w, 1.3, 1e-15);
  EXPECT_NEAR(r.midpoint(), 0.75, 1e-15);
  EXPECT_TRUE(r.ordered());
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_EQ(router::threshold_range(zeros, w).mu_c, 0.0);
  try {
    router::threshold_range({}, w);
    FAIL();
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find("correct"), std::string::npos);
  }
  try {
    router::threshold_range(c, {});
    FAIL();
  } catch (const CalibrationError& e) {
    EXPECT_NE(std::string(e.what()).find("wrong"), std::string::npos);
  }
}

TEST(Threshold, CalibrationMatchesOracleMeans) {
  const auto& t = trained();
  const auto r = router::calibrate_threshold(t.net, t.val);
  const auto h = oracle_entropies(t.net, t.val);
  double sc = 0, sw = 0;
  std::size_t nc = 0, nw = 0;
  for (std::size_t i = 0; i < t.val.size(); ++i) {
    const auto logits = oracle::ref_forward(t.net.exit1(), oracle::ref_forward(t.net.main(), t.val.row(i)));
    if (oracle::ref_argmax(logits) == t.val.labels[i]) {
      sc += h[i];
      ++nc;
    } else {
      sw += h[i];
      ++nw;
    }
  }
  EXPECT_EQ(r.n_correct, nc);
  EXPECT_EQ(r.n_wrong, nw);
  EXPECT_NEAR(r.mu_c, sc / nc, 1e-9);
  EXPECT_NEAR(r.mu_w, sw / nw, 1e-9);
  EXPECT_TRUE(r.ordered());
}

// K = 2 with both classes hard and zero weights, so the exits' confidences
// are set by the biases alone.
arch::MEANet bias_only_net(std::vector<double> exit1_bias, std::vector<double> exit2_bias) {
  const auto c = arch::MEAConfig::variant_b(2, 2, 2, arch::BlockSpec::relu({3, 3}),
                                            arch::BlockSpec::relu({3}), arch::BlockSpec::relu({3}));
  auto net = arch::MEANet::build(c, 0);
  for (auto* block : {&net.main(), &net.exit1(), &net.adaptive(), &net.extension(), &net.exit2()}) {
    for (std::size_t l = 0; l < block->depth(); ++l) {
      for (auto& w : block->mutable_layer(l).weights.values()) w = 0.0;
    }
  }
  auto& b1 = net.exit1().mutable_layer(0).bias;
  auto& b2 = net.exit2().mutable_layer(0).bias;
  for (std::size_t i = 0; i < 2; ++i) {
    b1[i] = exit1_bias[i];
    b2[i] = exit2_bias[i];
  }
  return net;
}

TEST(Route, EqualConfidenceGoesToExtension) {
  const auto net = bias_only_net({1, 0}, {0, 1});
  const complexity::ClassPartition p(2, {0, 1});
  const std::vector<double> x{0.3, -0.2};
  const auto r = router::route_edge(net, p, x, 1, 0);
  ASSERT_TRUE(r.conf_ext.has_value());
  EXPECT_EQ(r.conf_main, *r.conf_ext);
  EXPECT_EQ(r.decision, Exit::kExtension);
  EXPECT_EQ(r.main_predicted, 0u);
  EXPECT_EQ(r.predicted, 1u);
  EXPECT_TRUE(r.correct);
}

TEST(Route, MoreConfidentExitWins) {
  const complexity::ClassPartition p(2, {0, 1});
  const std::vector<double> x{0.3, -0.2};
  const auto main_wins = router::route_edge(bias_only_net({2, 0}, {0, 1}), p, x, 0, 0);
  EXPECT_EQ(main_wins.decision, Exit::kMain);
  EXPECT_EQ(main_wins.predicted, 0u);
  const auto ext_wins = router::route_edge(bias_only_net({1, 0}, {0, 3}), p, x, 0, 0);
  EXPECT_EQ(ext_wins.decision, Exit::kExtension);
  EXPECT_EQ(ext_wins.predicted, 1u);
  EXPECT_EQ(*ext_wins.ext_predicted, 1u);
}

TEST(Route, EasyPredictionSkipsExtension) {
  const auto net = bias_only_net({1, 0}, {0, 1});
  const complexity::ClassPartition p(2, {1});
  auto n2 = arch::MEANet::attach_edge_blocks(net, 1, 0);
  const auto r = router::route_edge(n2, p, std::vector<double>{0, 0}, 0, 0);
  EXPECT_EQ(r.decision, Exit::kMain);
  EXPECT_FALSE(r.conf_ext.has_value());
  EXPECT_FALSE(r.is_hard);
}

TEST(Route, RejectsNegativeThreshold) {
  const auto& t = trained();
  EXPECT_THROW(router::route_instance(t.net, t.partition, t.test.row(0), 0, 0, -0.1,
                                      router::Cloud::oracle(), true),
               InvalidInputError);
}

TEST(Route, EdgePolicyMatchesOracle) {
  const auto& t = trained();
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    const auto r = router::route_edge(t.net, t.partition, t.test.row(i), t.test.labels[i], i);
    const auto ref = oracle::ref_edge_route(t.net, t.partition.hard_classes(), t.test.row(i));
    EXPECT_EQ(r.predicted, ref.prediction) << i;
    EXPECT_EQ(r.decision == Exit::kExtension, ref.used_extension) << i;
    EXPECT_EQ(r.conf_ext.has_value(), r.is_hard);
  }
}

TEST(Inference, ThresholdZeroWithOracleSendsEverythingAndIsPerfect) {
  const auto& t = trained();
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.0, router::Cloud::oracle());
  EXPECT_EQ(res.report.beta, 1.0);
  EXPECT_EQ(res.report.accuracy, 1.0);
  for (const auto& r : res.records) EXPECT_EQ(r.decision, Exit::kCloud);
}

TEST(Inference, InfiniteThresholdOrNoCloudIsThePureEdgePolicy) {
  const auto& t = trained();
  const auto inf = router::run_inference(t.net, t.partition, t.test, kInf, router::Cloud::oracle());
  router::InferenceOptions off;
  off.cloud_available = false;
  const auto unavailable = router::run_inference(t.net, t.partition, t.test, 0.0, router::Cloud::oracle(), off);
  EXPECT_EQ(inf.report.beta, 0.0);
  EXPECT_EQ(unavailable.report.beta, 0.0);
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    const auto ref = oracle::ref_edge_route(t.net, t.partition.hard_classes(), t.test.row(i));
    for (const auto* rec : {&inf.records[i], &unavailable.records[i]}) {
      EXPECT_EQ(rec->predicted, ref.prediction);
      EXPECT_EQ(rec->decision, ref.used_extension ? Exit::kExtension : Exit::kMain);
      EXPECT_FALSE(rec->offload_attempted);
    }
  }
}

TEST(Inference, BetaMatchesBruteForceCount) {
  const auto& t = trained();
  auto h = oracle_entropies(t.net, t.test);
  std::sort(h.begin(), h.end());
  std::vector<double> thresholds{0.0};
  for (std::size_t i = 0; i + 1 < h.size(); i += 7) {
    if (h[i + 1] - h[i] > 1e-9) thresholds.push_back(0.5 * (h[i] + h[i + 1]));
  }
  thresholds.push_back(h.back() + 1.0);
  const auto raw = oracle_entropies(t.net, t.test);
  for (double th : thresholds) {
    const auto res = router::run_inference(t.net, t.partition, t.test, th, router::Cloud::oracle());
    const auto above = std::count_if(raw.begin(), raw.end(), [&](double v) { return v > th; });
    EXPECT_DOUBLE_EQ(res.report.beta, static_cast<double>(above) / t.test.size()) << th;
  }
}

TEST(Inference, BetaAndOracleAccuracyAreMonotone) {
  const auto& t = trained();
  double prev_beta = 2.0;
  double prev_acc = 2.0;
  for (int step = 0; step <= 40; ++step) {
    const double th = 2.1 * step / 40.0;
    const auto res = router::run_inference(t.net, t.partition, t.test, th, router::Cloud::oracle());
    EXPECT_LE(res.report.beta, prev_beta);
    EXPECT_LE(res.report.accuracy, prev_acc);
    prev_beta = res.report.beta;
    prev_acc = res.report.accuracy;
  }
}

TEST(Inference, RawModelCloudEqualsStandaloneEvaluation) {
  const auto& t = trained();
  const auto cloud = router::Cloud::raw_model(t.cloud);
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.0, cloud);
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    EXPECT_EQ(res.records[i].predicted, oracle::ref_argmax(oracle::ref_forward(t.cloud, t.test.row(i))));
    EXPECT_EQ(*res.records[i].payload, router::PayloadKind::kRawData);
  }
}

TEST(Cloud, PayloadMismatchIsAContractViolation) {
  const auto& t = trained();
  const std::vector<double> f(t.net.config().feature_dim, 0.0);
  const auto raw = router::Cloud::raw_model(t.cloud);
  EXPECT_THROW(raw.predict({router::PayloadKind::kFeatures, f, std::nullopt}), ContractViolation);
  std::mt19937_64 rng(1);
  const auto tail = router::Cloud::feature_tail(oracle::random_network(rng, f.size(), 8));
  EXPECT_EQ(tail.predict({router::PayloadKind::kFeatures, f, std::nullopt}) < 8, true);
  EXPECT_THROW(tail.predict({router::PayloadKind::kRawData, t.test.row(0), std::nullopt}), ContractViolation);
  EXPECT_THROW(router::Cloud::oracle().predict({router::PayloadKind::kRawData, t.test.row(0), std::nullopt}),
               ContractViolation);
  EXPECT_THROW(router::Cloud::off().predict({router::PayloadKind::kRawData, t.test.row(0), 0}),
               ContractViolation);
}

TEST(Inference, FeatureTailReceivesMainFeatures) {
  const auto& t = trained();
  std::mt19937_64 rng(3);
  const auto tail_net = oracle::random_network(rng, t.net.config().feature_dim, 8);
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.0, router::Cloud::feature_tail(tail_net));
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    const auto f = oracle::ref_forward(t.net.main(), t.test.row(i));
    EXPECT_EQ(res.records[i].predicted, oracle::ref_argmax(oracle::ref_forward(tail_net, f)));
    EXPECT_EQ(*res.records[i].payload, router::PayloadKind::kFeatures);
  }
}

TEST(Inference, TransportFailuresFallBackToTheEdge) {
  const auto& t = trained();
  auto always = router::Cloud::oracle();
  always.with_failures(1.0, 5);
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.0, always);
  EXPECT_EQ(res.report.beta, 0.0);
  EXPECT_EQ(res.report.cloud_failures, t.test.size());
  EXPECT_EQ(res.report.offload_attempted, 1.0);
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    const auto ref = oracle::ref_edge_route(t.net, t.partition.hard_classes(), t.test.row(i));
    EXPECT_EQ(res.records[i].predicted, ref.prediction);
    EXPECT_TRUE(res.records[i].cloud_failed);
  }
  auto some = router::Cloud::oracle();
  some.with_failures(0.3, 5);
  const auto a = router::run_inference(t.net, t.partition, t.test, 0.0, some);
  EXPECT_GT(a.report.cloud_failures, 0u);
  EXPECT_LT(a.report.cloud_failures, t.test.size());
  EXPECT_NEAR(a.report.beta + static_cast<double>(a.report.cloud_failures) / t.test.size(), 1.0, 1e-12);
}

TEST(Inference, ThreadCountDoesNotChangeRecords) {
  const auto& t = trained();
  auto cloud = router::Cloud::raw_model(t.cloud);
  cloud.with_failures(0.2, 9);
  router::InferenceOptions one;
  router::InferenceOptions four;
  four.threads = 4;
  const auto a = router::run_inference(t.net, t.partition, t.test, 0.4, cloud, one);
  const auto b = router::run_inference(t.net, t.partition, t.test, 0.4, cloud, four);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].id, i);
    EXPECT_EQ(b.records[i].id, i);
    EXPECT_EQ(a.records[i].predicted, b.records[i].predicted);
    EXPECT_EQ(a.records[i].decision, b.records[i].decision);
    EXPECT_EQ(a.records[i].cloud_failed, b.records[i].cloud_failed);
  }
  EXPECT_EQ(a.report.accuracy, b.report.accuracy);
}

TEST(Inference, ReportAgreesWithRecords) {
  const auto& t = trained();
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.5, router::Cloud::raw_model(t.cloud));
  const auto& r = res.report;
  EXPECT_EQ(r.taxonomy.total(), r.instances);
  EXPECT_NEAR(r.frac_main + r.frac_extension + r.beta, 1.0, 1e-12);
  std::size_t hard = 0, main_ok = 0, detect_ok = 0;
  for (const auto& rec : res.records) {
    const bool th = t.partition.is_hard_class(rec.label);
    hard += th;
    main_ok += rec.main_predicted == rec.label;
    detect_ok += rec.is_hard == th;
    EXPECT_EQ(rec.is_hard, t.partition.is_hard_class(rec.main_predicted));
  }
  EXPECT_EQ(r.hard_instances, hard);
  EXPECT_DOUBLE_EQ(r.main_accuracy, static_cast<double>(main_ok) / r.instances);
  EXPECT_DOUBLE_EQ(r.detection_accuracy, static_cast<double>(detect_ok) / r.instances);
  EXPECT_EQ(r.taxonomy.correct, main_ok);
}

TEST(Inference, HardOnlyKeepsOriginalLabels) {
  const auto& t = trained();
  const auto hard = router::hard_only(t.test, t.partition);
  for (auto y : hard.labels) EXPECT_TRUE(t.partition.is_hard_class(y));
  EXPECT_EQ(hard.num_classes, t.test.num_classes);
  const auto res = router::run_inference(t.net, t.partition, hard, kInf, router::Cloud::off());
  EXPECT_EQ(res.report.hard_instances, hard.size());
}

TEST(RecordLog, RoundTrip) {
  const auto& t = trained();
  auto cloud = router::Cloud::raw_model(t.cloud);
  cloud.with_failures(0.25, 1);
  const auto res = router::run_inference(t.net, t.partition, t.test, 0.3, cloud);
  const auto path = std::filesystem::temp_directory_path() / "mea_records_test.jsonl";
  router::write_record_log(res.records, path);
  const auto back = router::read_record_log(path);
  ASSERT_EQ(back.size(), res.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    const auto& a = res.records[i];
    const auto& b = back[i];
    EXPECT_EQ(a.id, b.id);
    EXPECT_EQ(a.entropy_main, b.entropy_main);
    EXPECT_EQ(a.conf_main, b.conf_main);
    EXPECT_EQ(a.conf_ext, b.conf_ext);
    EXPECT_EQ(a.decision, b.decision);
    EXPECT_EQ(a.payload, b.payload);
    EXPECT_EQ(a.predicted, b.predicted);
    EXPECT_EQ(a.cloud_failed, b.cloud_failed);
    EXPECT_EQ(a.correct, b.correct);
  }
}

}  // namespace
