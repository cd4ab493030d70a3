#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mea/cli/commands.hpp"
#include "mea/errors.hpp"
#include "mea/simd/kernels.hpp"

namespace {

using namespace mea;

void add_common(CLI::App* app, cli::CommonOptions& common, std::optional<std::uint64_t>& seed) {
  app->add_option("--config", common.config, "experiment JSON config")->check(CLI::ExistingFile);
  app->add_option("--out-dir", common.out_dir, "artefact directory")->capture_default_str();
  app->add_option("--seed", seed, "overrides the config seed");
}

void add_analyze(CLI::App* app, cli::AnalyzeOptions& a) {
  app->add_option("--n-hard", a.num_hard, "number of hard classes (default K/2)");
  app->add_flag("--random-classes", a.random_classes, "pick hard classes at random (ablation)");
}

void add_eval(CLI::App* app, cli::EvalOptions& e, std::string& mode) {
  app->add_option("--threshold", e.threshold, "entropy threshold (default: calibrated midpoint)");
  app->add_option("--cloud-mode", mode, "off, oracle, raw-model or feature-tail")
      ->check(CLI::IsMember({"off", "oracle", "raw-model", "feature-tail"}));
  app->add_option("--failure-rate", e.failure_rate, "simulated cloud transport failure rate");
  app->add_option("--threads", e.threads, "inference worker threads");
  app->add_flag("--hard-only", e.hard_only, "evaluate hard-class instances only");
  app->add_flag("--no-cloud", e.no_cloud, "cloud unavailable");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate memory-efficient edge networks with cloud offloading"};
  app.require_subcommand(1);
  std::string simd;
  app.add_option("--simd", simd, "kernel backend: scalar, avx2 or neon (default: best available)");

  cli::CommonOptions common;
  std::optional<std::uint64_t> seed;
  cli::AnalyzeOptions analyze;
  cli::EvalOptions eval;
  std::string cloud_mode;
  std::vector<double> grid;
  bool feature_tail = false;
  cli::CostOptions cost;
  std::string strategy = "edge";
  std::optional<double> q;

  auto* gen = app.add_subcommand("gen-data", "write the configured dataset as CSV plus a manifest");
  auto* train_main = app.add_subcommand("train-main", "train the main block and exit 1");
  auto* train_cloud = app.add_subcommand("train-cloud", "train the cloud model");
  auto* analyze_cmd = app.add_subcommand("analyze-classes", "select hard classes on validation data");
  auto* train_mea = app.add_subcommand("train-mea", "train adaptive and extension blocks");
  auto* eval_cmd = app.add_subcommand("eval", "route the test set and report accuracy and cost");
  auto* sweep = app.add_subcommand("sweep-threshold", "evaluate a grid of entropy thresholds");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage in order");
  auto* cost_cmd = app.add_subcommand("cost", "closed-form cost of one strategy");

  for (auto* sub : {gen, train_main, train_cloud, analyze_cmd, train_mea, eval_cmd, sweep, pipeline}) {
    add_common(sub, common, seed);
  }
  train_cloud->add_flag("--feature-tail", feature_tail,
                        "train a tail on main-block features instead of a raw-input model");
  add_analyze(analyze_cmd, analyze);
  add_analyze(pipeline, analyze);
  add_eval(eval_cmd, eval, cloud_mode);
  add_eval(pipeline, eval, cloud_mode);
  sweep->add_option("--grid", grid, "thresholds to evaluate");

  auto& cp = cost.params;
  cost_cmd->add_option("--strategy", strategy, "edge, cloud, edge-cloud-raw, edge-cloud-features")
      ->check(CLI::IsMember({"edge", "cloud", "edge-cloud-raw", "edge-cloud-features"}));
  cost_cmd->add_option("--n", cp.n, "instances")->required();
  cost_cmd->add_option("--x", cp.x, "edge compute per instance");
  cost_cmd->add_option("--x-cl", cp.x_cl, "cloud compute per instance");
  cost_cmd->add_option("--x-cu", cp.x_cu, "raw upload per instance");
  cost_cmd->add_option("--x-cu-prime", cp.x_cu_prime, "feature upload per instance");
  cost_cmd->add_option("--q", q, "edge share of the split network");
  cost_cmd->add_option("--beta", cp.beta, "offloaded fraction");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!simd.empty()) simd::select_backend(simd::parse_backend(simd));
    if (seed) common.seed = seed;
    if (!cloud_mode.empty()) eval.cloud_mode = router::parse_cloud_mode(cloud_mode);
    auto& log = std::cerr;
    if (gen->parsed()) cli::cmd_gen_data(common, log);
    if (train_main->parsed()) cli::cmd_train_main(common, log);
    if (train_cloud->parsed()) cli::cmd_train_cloud(common, feature_tail, log);
    if (analyze_cmd->parsed()) cli::cmd_analyze_classes(common, analyze, log);
    if (train_mea->parsed()) cli::cmd_train_mea(common, log);
    if (eval_cmd->parsed()) cli::cmd_eval(common, eval, log);
    if (sweep->parsed()) cli::cmd_sweep_threshold(common, grid, log);
    if (pipeline->parsed()) cli::cmd_pipeline(common, analyze, eval, log);
    if (cost_cmd->parsed()) {
      cost.strategy = cost::parse_strategy(strategy);
      cp.q = q;
      cli::cmd_cost(cost, std::cout);
    }
  } catch (const mea::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
