#include "mea/cli/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mea/arch/checkpoint.hpp"
#include "mea/complexity/complexity.hpp"
#include "mea/cost/cost.hpp"
#include "mea/errors.hpp"
#include "mea/trainer/trainer.hpp"

namespace mea::cli {

namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// CSV with '#' provenance lines ahead of the header.
class Csv {
 public:
  explicit Csv(std::vector<std::string> columns) : columns_(std::move(columns)) {}

  void comment(const std::string& key, const std::string& value) {
    comments_ << "# " << key << ": " << value << '\n';
  }
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size()) {
      throw ContractViolation("csv row has " + std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(columns_.size()));
    }
    for (std::size_t i = 0; i < cells.size(); ++i) body_ << (i ? "," : "") << cells[i];
    body_ << '\n';
  }
  void save(const fs::path& path) const {
    std::ostringstream out;
    out << comments_.str();
    for (std::size_t i = 0; i < columns_.size(); ++i) out << (i ? "," : "") << columns_[i];
    out << '\n' << body_.str();
    arch::write_file_atomic(path, out.str());
  }

 private:
  std::vector<std::string> columns_;
  std::ostringstream comments_;
  std::ostringstream body_;
};

// Loaded once per command; everything a stage needs from the config.
struct Session {
  ExperimentConfig config;
  fs::path out;
  std::string command;

  Session(const CommonOptions& common, std::string cmd) : command(std::move(cmd)) {
    config = common.config.empty() ? ExperimentConfig{} : load_config(common.config);
    if (common.seed) config.seed = *common.seed;
    out = common.out_dir;
  }

  fs::path path(const char* name) const { return out / name; }

  void prepare_out_dir() const {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw ConfigError("cannot create output directory " + out.string() + ": " + ec.message());
    arch::write_file_atomic(path(files::kResolvedConfig), to_json(config).dump(2) + "\n");
  }

  void stamp(Csv& csv) const {
    csv.comment("command", command);
    csv.comment("seed", std::to_string(config.seed));
    csv.comment("config", to_json(config).dump());
  }

  fs::path require(const char* name, const char* producer) const {
    auto p = path(name);
    if (!fs::exists(p)) {
      throw ConfigError("missing " + p.string() + "; run '" + producer + "' first");
    }
    return p;
  }
};

void save_curve(const Session& s, const trainer::Curve& curve, const char* name) {
  Csv csv({"epoch", "stage", "split", "loss", "accuracy"});
  s.stamp(csv);
  for (const auto& m : curve) {
    csv.row({std::to_string(m.epoch), m.stage, m.split, num(m.loss), num(m.accuracy)});
  }
  csv.save(s.path(name));
}

struct Prepared {
  LoadedData data;
  data::Split split;
};

Prepared prepare_data(const Session& s) {
  Prepared p;
  p.data = load_data(s.config);
  p.split = data::split_train_val(p.data.train, s.config.val_fraction, s.config.seed);
  return p;
}

void check_shape(const arch::MEANet& net, const data::Dataset& d, const fs::path& ckpt) {
  if (net.config().input_dim != d.dim || net.config().num_classes != d.num_classes) {
    throw ConfigError("checkpoint " + ckpt.string() + " expects " +
                      std::to_string(net.config().input_dim) + " features / " +
                      std::to_string(net.config().num_classes) + " classes, data has " +
                      std::to_string(d.dim) + " / " + std::to_string(d.num_classes));
  }
}

double extension_mac_ratio(const arch::MEANet& net) {
  double base = 0.0;
  double extra = 0.0;
  for (const auto& b : net.block_counts()) {
    const double macs = static_cast<double>(b.macs.total());
    if (b.block == "main" || b.block == "exit1") {
      base += macs;
    } else {
      extra += macs;
    }
  }
  return base > 0.0 ? extra / base : 0.0;
}

router::Cloud make_cloud(const Session& s, router::CloudMode mode, double failure_rate) {
  router::Cloud cloud;
  switch (mode) {
    case router::CloudMode::kOff: cloud = router::Cloud::off(); break;
    case router::CloudMode::kOracle: cloud = router::Cloud::oracle(); break;
    case router::CloudMode::kRawModel:
      cloud = router::Cloud::raw_model(
          arch::load_network_checkpoint(s.require(files::kCloudCheckpoint, "train-cloud")).network);
      break;
    case router::CloudMode::kFeatureTail:
      cloud = router::Cloud::feature_tail(
          arch::load_network_checkpoint(s.require(files::kTailCheckpoint, "train-cloud --feature-tail"))
              .network);
      break;
  }
  if (failure_rate > 0.0) cloud.with_failures(failure_rate, s.config.seed);
  return cloud;
}

// Everything eval and sweep-threshold share.
struct EvalContext {
  arch::MEANet net;
  complexity::ClassPartition partition;
  Prepared prepared;
  router::ThresholdRange range;
  cost::PathEnergy energy;
};

EvalContext load_eval_context(const Session& s, std::ostream& log) {
  EvalContext ctx;
  const auto ckpt = s.require(files::kMeaCheckpoint, "train-mea");
  ctx.net = arch::load_mea_checkpoint(ckpt);
  ctx.partition = complexity::ClassPartition::load(s.require(files::kPartition, "analyze-classes"));
  ctx.prepared = prepare_data(s);
  check_shape(ctx.net, ctx.prepared.data.test, ckpt);
  if (ctx.partition.num_classes() != ctx.net.config().num_classes ||
      ctx.partition.num_hard() != ctx.net.exit2().output_dim()) {
    throw ConfigError("partition does not match the MEANet checkpoint");
  }
  ctx.range = router::calibrate_threshold(ctx.net, ctx.prepared.split.val);
  if (!ctx.range.ordered()) {
    log << "warning: wrong predictions are not less certain than correct ones (mu_c "
        << num(ctx.range.mu_c) << " >= mu_w " << num(ctx.range.mu_w) << ")\n";
  }
  ctx.energy = cost::path_energy(s.config.energy, extension_mac_ratio(ctx.net),
                                 ctx.net.config().feature_dim);
  return ctx;
}

std::vector<std::string> cost_cells(const std::string& strategy, double threshold, double beta,
                                    const cost::CostBreakdown& mj) {
  return {strategy,       num(threshold),           num(beta),
          num(mj.edge_compute / 1000.0), num(mj.cloud_compute / 1000.0),
          num(mj.communication / 1000.0), num(mj.total / 1000.0)};
}

}  // namespace

void cmd_gen_data(const CommonOptions& common, std::ostream& log) {
  Session s(common, "gen-data");
  const auto data = load_data(s.config);
  s.prepare_out_dir();
  data::write_csv(data.train, s.out / "train.csv");
  data::write_csv(data.test, s.out / "test.csv");
  data::Manifest m;
  m.num_classes = data.train.num_classes;
  m.dim = data.train.dim;
  m.size = data.train.size() + data.test.size();
  m.provenance = data.train.provenance;
  m.format = "csv";
  m.files = {"train.csv", "test.csv"};
  data::write_manifest(m, s.out / "manifest.json");
  log << "gen-data: " << data.train.size() << " train / " << data.test.size() << " test rows, "
      << m.dim << " features, " << m.num_classes << " classes -> " << s.out.string() << "\n";
}

void cmd_train_main(const CommonOptions& common, std::ostream& log) {
  Session s(common, "train-main");
  auto p = prepare_data(s);
  const auto mea = s.config.mea_config(p.data.train.dim, p.data.train.num_classes);
  s.prepare_out_dir();
  auto net = arch::MEANet::build(mea, s.config.seed);
  const auto curve = trainer::train_main(net, p.split.train, s.config.main_sgd(),
                                         s.config.main_stage.epochs, &p.split.val);
  arch::save_checkpoint(net, s.path(files::kMainCheckpoint));
  save_curve(s, curve, files::kCurveMain);
  const auto preds = trainer::main_predictions(net, p.split.val);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == p.split.val.labels[i];
  log << "train-main: val accuracy " << num(static_cast<double>(hits) / preds.size()) << " -> "
      << s.path(files::kMainCheckpoint).string() << "\n";
}

void cmd_train_cloud(const CommonOptions& common, bool feature_tail, std::ostream& log) {
  Session s(common, feature_tail ? "train-cloud --feature-tail" : "train-cloud");
  auto p = prepare_data(s);
  const auto mea = s.config.mea_config(p.data.train.dim, p.data.train.num_classes);
  trainer::CloudTraining trained;
  const char* ckpt = nullptr;
  const char* curve = nullptr;
  std::string role;
  if (feature_tail) {
    const auto main_ckpt = s.require(files::kMainCheckpoint, "train-main");
    const auto net = arch::load_mea_checkpoint(main_ckpt);
    check_shape(net, p.data.train, main_ckpt);
    s.prepare_out_dir();
    trained = trainer::train_feature_tail(net, s.config.feature_tail_spec(), p.split.train,
                                          &p.split.val, s.config.cloud_sgd(),
                                          s.config.cloud_stage.epochs,
                                          s.config.seed + trainer::kFeatureTailSeedOffset);
    ckpt = files::kTailCheckpoint;
    curve = files::kCurveTail;
    role = "feature-tail";
  } else {
    trainer::check_cloud_spec(s.config.cloud_spec(), mea.main_spec);
    s.prepare_out_dir();
    trained = trainer::train_cloud(s.config.cloud_spec(), mea.main_spec, p.split.train, &p.split.val,
                                   s.config.cloud_sgd(), s.config.cloud_stage.epochs,
                                   s.config.seed + trainer::kCloudSeedOffset);
    ckpt = files::kCloudCheckpoint;
    curve = files::kCurveCloud;
    role = "cloud";
  }
  arch::save_checkpoint(arch::NamedNetwork{role, trained.network}, s.path(ckpt));
  save_curve(s, trained.curve, curve);
  log << "train-cloud: " << role << " val accuracy " << num(trained.val_accuracy) << " -> "
      << s.path(ckpt).string() << "\n";
}

void cmd_analyze_classes(const CommonOptions& common, const AnalyzeOptions& options,
                         std::ostream& log) {
  Session s(common, "analyze-classes");
  const auto ckpt = s.require(files::kMainCheckpoint, "train-main");
  const auto net = arch::load_mea_checkpoint(ckpt);
  auto p = prepare_data(s);
  check_shape(net, p.data.train, ckpt);
  const std::size_t k = net.config().num_classes;
  const std::size_t n_hard =
      options.num_hard.value_or(s.config.model.num_hard.value_or(complexity::default_num_hard(k)));
  if (n_hard < 1 || n_hard > k) {
    throw ConfigError("--n-hard must lie in [1, " + std::to_string(k) + "], got " +
                      std::to_string(n_hard));
  }
  s.prepare_out_dir();
  const auto preds = trainer::main_predictions(net, p.split.val);
  const auto stats = complexity::build_class_stats(preds, p.split.val.labels, k);
  const auto partition =
      options.random_classes
          ? complexity::select_random_classes(k, n_hard, s.config.seed + trainer::kRandomClassSeedOffset)
          : complexity::select_hard_classes(stats, n_hard);
  partition.save(s.path(files::kPartition));

  Csv csv({"class", "support", "predicted", "precision", "fdr", "hard", "hard_label"});
  s.stamp(csv);
  csv.comment("selection", options.random_classes ? "random" : "lowest-precision");
  csv.comment("num_hard", std::to_string(n_hard));
  for (std::size_t c = 0; c < k; ++c) {
    const bool hard = partition.is_hard_class(c);
    csv.row({std::to_string(c), std::to_string(stats.row_sum(c)), std::to_string(stats.column_sum(c)),
             num(stats.precision[c]), num(stats.fdr[c]), hard ? "1" : "0",
             hard ? std::to_string(partition.to_hard_label(c)) : "-1"});
  }
  csv.save(s.path(files::kClassStats));
  std::string hard_list;
  for (auto c : partition.hard_classes()) hard_list += (hard_list.empty() ? "" : " ") + std::to_string(c);
  log << "analyze-classes: hard classes {" << hard_list << "} -> "
      << s.path(files::kPartition).string() << "\n";
}

void cmd_train_mea(const CommonOptions& common, std::ostream& log) {
  Session s(common, "train-mea");
  const auto ckpt = s.require(files::kMainCheckpoint, "train-main");
  const auto stage1 = arch::load_mea_checkpoint(ckpt);
  const auto partition =
      complexity::ClassPartition::load(s.require(files::kPartition, "analyze-classes"));
  auto p = prepare_data(s);
  check_shape(stage1, p.data.train, ckpt);
  if (partition.num_classes() != stage1.config().num_classes) {
    throw ConfigError("partition covers " + std::to_string(partition.num_classes()) +
                      " classes, main checkpoint has " + std::to_string(stage1.config().num_classes));
  }
  s.prepare_out_dir();
  const auto hard_train = trainer::hard_dataset(p.split.train, partition);
  const auto hard_val = trainer::hard_dataset(p.split.val, partition);
  auto net = arch::MEANet::attach_edge_blocks(stage1, partition.num_hard(),
                                              s.config.seed + trainer::kEdgeBlockSeedOffset);
  net.freeze_main();
  const auto curve = trainer::train_extension_adaptive(net, hard_train, s.config.edge_sgd(),
                                                       s.config.edge_stage.epochs, &hard_val);
  arch::save_checkpoint(net, s.path(files::kMeaCheckpoint));
  save_curve(s, curve, files::kCurveEdge);

  Csv csv({"block", "fixed_params", "trained_params", "fixed_macs", "trained_macs"});
  s.stamp(csv);
  csv.comment("main_digest_stage1", arch::main_block_digest(stage1));
  csv.comment("main_digest_final", arch::main_block_digest(net));
  csv.comment("hard_subset_size", std::to_string(hard_train.size()));
  for (const auto& b : net.block_counts()) {
    csv.row({b.block, std::to_string(b.params.fixed), std::to_string(b.params.trained),
             std::to_string(b.macs.fixed), std::to_string(b.macs.trained)});
  }
  const auto params = net.count_params();
  const auto macs = net.count_macs();
  csv.row({"total", std::to_string(params.fixed), std::to_string(params.trained),
           std::to_string(macs.fixed), std::to_string(macs.trained)});
  csv.save(s.path(files::kParamsReport));
  log << "train-mea: " << hard_train.size() << " hard training instances, " << params.trained
      << " trained / " << params.total() << " total params -> "
      << s.path(files::kMeaCheckpoint).string() << "\n";
}

void cmd_eval(const CommonOptions& common, const EvalOptions& options, std::ostream& log) {
  Session s(common, "eval");
  auto ctx = load_eval_context(s, log);
  const auto mode = options.no_cloud ? router::CloudMode::kOff
                                     : options.cloud_mode.value_or(s.config.router.cloud_mode);
  const double failure_rate = options.failure_rate.value_or(s.config.router.failure_rate);
  if (failure_rate < 0.0 || failure_rate > 1.0) throw ConfigError("failure rate must lie in [0, 1]");
  const auto cloud = make_cloud(s, mode, failure_rate);
  const double threshold =
      options.threshold.value_or(s.config.router.threshold.value_or(ctx.range.midpoint()));
  if (!(threshold >= 0.0)) throw ConfigError("threshold must be non-negative");
  const auto& test = options.hard_only ? router::hard_only(ctx.prepared.data.test, ctx.partition)
                                       : ctx.prepared.data.test;
  if (test.empty()) throw InvalidInputError("evaluation set is empty");
  router::InferenceOptions inf;
  inf.cloud_available = mode != router::CloudMode::kOff;
  inf.threads = options.threads.value_or(s.config.router.threads);
  s.prepare_out_dir();
  const auto result = router::run_inference(ctx.net, ctx.partition, test, threshold, cloud, inf);
  router::write_record_log(result.records, s.path(files::kRecords));

  const auto& r = result.report;
  const auto& t = r.taxonomy;
  const double errors = static_cast<double>(t.errors());
  auto frac = [&](std::size_t n) { return errors > 0 ? n / errors : 0.0; };
  Csv report({"instances", "threshold", "cloud_mode", "hard_only", "accuracy", "hard_instances",
              "hard_accuracy", "detection_accuracy", "main_accuracy", "main_hard_accuracy",
              "frac_main", "frac_extension", "beta", "offload_attempted", "cloud_failures",
              "main_correct", "type_i", "type_ii", "type_iii", "type_iv", "frac_type_i",
              "frac_type_ii", "frac_type_iii", "frac_type_iv", "mean_entropy",
              "mean_entropy_correct", "mean_entropy_wrong", "mu_c", "mu_w"});
  s.stamp(report);
  report.row({std::to_string(r.instances), num(r.threshold), std::string(router::cloud_mode_name(mode)),
              options.hard_only ? "1" : "0", num(r.accuracy), std::to_string(r.hard_instances),
              num(r.hard_accuracy), num(r.detection_accuracy), num(r.main_accuracy),
              num(r.main_hard_accuracy), num(r.frac_main), num(r.frac_extension), num(r.beta),
              num(r.offload_attempted), std::to_string(r.cloud_failures), std::to_string(t.correct),
              std::to_string(t.type_i), std::to_string(t.type_ii), std::to_string(t.type_iii),
              std::to_string(t.type_iv), num(frac(t.type_i)), num(frac(t.type_ii)),
              num(frac(t.type_iii)), num(frac(t.type_iv)), num(r.mean_entropy),
              num(r.mean_entropy_correct), num(r.mean_entropy_wrong), num(ctx.range.mu_c),
              num(ctx.range.mu_w)});
  report.save(s.path(files::kEvalReport));

  // Edge-only and cloud-only baselines on the same instances next to the
  // measured collaborative run.
  router::InferenceOptions edge_only = inf;
  edge_only.cloud_available = false;
  const auto edge = router::run_inference(ctx.net, ctx.partition, test, threshold,
                                          router::Cloud::off(), edge_only);
  const auto edge_cost = cost::measured_cost_report(edge.records, ctx.energy);
  const auto hybrid_cost = cost::measured_cost_report(result.records, ctx.energy);
  cost::CostParams cp;
  cp.n = static_cast<double>(test.size());
  cp.x_cl = ctx.energy.cloud_mj;
  cp.x_cu = cloud.payload_kind() == router::PayloadKind::kFeatures ? ctx.energy.comm_features_mj
                                                                  : ctx.energy.comm_raw_mj;
  const auto cloud_only = cost::strategy_cost(cost::Strategy::kCloudOnly, cp);
  Csv costs({"strategy", "threshold", "beta", "edge_compute_J", "cloud_compute_J", "comm_J", "total_J"});
  s.stamp(costs);
  costs.comment("main_path_mJ", num(ctx.energy.main_mj));
  costs.comment("extension_extra_mJ", num(ctx.energy.extension_extra_mj));
  costs.comment("comm_raw_mJ", num(ctx.energy.comm_raw_mj));
  costs.comment("comm_features_mJ", num(ctx.energy.comm_features_mj));
  costs.row(cost_cells("edge", threshold, 0.0, edge_cost.breakdown));
  costs.row(cost_cells("cloud", threshold, 1.0, cloud_only));
  const auto hybrid = cloud.payload_kind() == router::PayloadKind::kFeatures
                          ? cost::Strategy::kEdgeCloudFeatures
                          : cost::Strategy::kEdgeCloudRaw;
  costs.row(cost_cells(std::string(cost::strategy_name(hybrid)), threshold, hybrid_cost.beta,
                       hybrid_cost.breakdown));
  costs.save(s.path(files::kCostReport));

  log << "eval: " << r.instances << " instances, accuracy " << num(r.accuracy) << ", beta "
      << num(r.beta) << ", threshold " << num(threshold) << " -> " << s.path(files::kEvalReport).string()
      << "\n";
}

void cmd_sweep_threshold(const CommonOptions& common, const std::vector<double>& grid_in,
                         std::ostream& log) {
  Session s(common, "sweep-threshold");
  auto ctx = load_eval_context(s, log);
  const auto mode = s.config.router.cloud_mode;
  const auto cloud = make_cloud(s, mode, s.config.router.failure_rate);
  std::vector<double> grid = grid_in.empty() ? s.config.sweep_grid : grid_in;
  if (grid.empty()) {
    const double top = std::log(static_cast<double>(ctx.net.config().num_classes));
    constexpr int kSteps = 20;
    for (int i = 0; i <= kSteps; ++i) grid.push_back(top * i / kSteps);
    grid.push_back(ctx.range.mu_c);
    grid.push_back(ctx.range.mu_w);
    grid.push_back(ctx.range.midpoint());
  }
  for (double t : grid) {
    if (!(t >= 0.0)) throw ConfigError("sweep thresholds must be non-negative");
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  s.prepare_out_dir();

  router::InferenceOptions inf;
  inf.cloud_available = mode != router::CloudMode::kOff;
  inf.threads = s.config.router.threads;
  const auto& test = ctx.prepared.data.test;
  const double payload_mj = cloud.payload_kind() == router::PayloadKind::kFeatures
                                ? ctx.energy.comm_features_mj
                                : ctx.energy.comm_raw_mj;
  Csv csv({"threshold", "beta", "accuracy", "hard_accuracy", "frac_main", "frac_extension",
           "offload_attempted", "edge_compute_J", "cloud_compute_J", "comm_J", "total_J",
           "model_total_J"});
  s.stamp(csv);
  csv.comment("cloud_mode", std::string(router::cloud_mode_name(mode)));
  csv.comment("mu_c", num(ctx.range.mu_c));
  csv.comment("mu_w", num(ctx.range.mu_w));
  for (double t : grid) {
    const auto res = router::run_inference(ctx.net, ctx.partition, test, t, cloud, inf);
    const auto measured = cost::measured_cost_report(res.records, ctx.energy);
    // Closed form with the measured per-instance edge share. Uploads are
    // charged on every attempt, cloud compute only on completed offloads.
    cost::CostParams cp;
    cp.n = static_cast<double>(test.size());
    cp.x = measured.breakdown.edge_compute / cp.n;
    cp.x_cu = payload_mj;
    cp.beta = res.report.offload_attempted;
    auto model = cost::strategy_cost(cost::Strategy::kEdgeCloudRaw, cp);
    model.total += res.report.beta * cp.n * ctx.energy.cloud_mj;
    const auto& b = measured.breakdown;
    csv.row({num(t), num(res.report.beta), num(res.report.accuracy), num(res.report.hard_accuracy),
             num(res.report.frac_main), num(res.report.frac_extension),
             num(res.report.offload_attempted), num(b.edge_compute / 1000.0),
             num(b.cloud_compute / 1000.0), num(b.communication / 1000.0), num(b.total / 1000.0),
             num(model.total / 1000.0)});
  }
  csv.save(s.path(files::kSweep));
  log << "sweep-threshold: " << grid.size() << " thresholds in [" << num(grid.front()) << ", "
      << num(grid.back()) << "] -> " << s.path(files::kSweep).string() << "\n";
}

void cmd_pipeline(const CommonOptions& common, const AnalyzeOptions& analyze,
                  const EvalOptions& eval, std::ostream& log) {
  // Parse once up front so a bad config fails before anything is written.
  Session s(common, "pipeline");
  cmd_train_main(common, log);
  const auto mode = eval.no_cloud ? router::CloudMode::kOff
                                  : eval.cloud_mode.value_or(s.config.router.cloud_mode);
  if (mode == router::CloudMode::kRawModel) cmd_train_cloud(common, false, log);
  if (mode == router::CloudMode::kFeatureTail) cmd_train_cloud(common, true, log);
  cmd_analyze_classes(common, analyze, log);
  cmd_train_mea(common, log);
  cmd_eval(common, eval, log);
  cmd_sweep_threshold(common, {}, log);
}

void cmd_cost(const CostOptions& options, std::ostream& out) {
  const auto b = cost::strategy_cost(options.strategy, options.params);
  out << "strategy,edge_compute,cloud_compute,communication,total\n"
      << cost::strategy_name(options.strategy) << ',' << num(b.edge_compute) << ','
      << num(b.cloud_compute) << ',' << num(b.communication) << ',' << num(b.total) << '\n';
}

}  // namespace mea::cli
