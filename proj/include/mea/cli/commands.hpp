#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mea/cli/config.hpp"
#include "mea/router/router.hpp"

namespace mea::cli {

// Artefact names inside the output directory.
namespace files {
inline constexpr const char* kResolvedConfig = "config.resolved.json";
inline constexpr const char* kMainCheckpoint = "main.ckpt";
inline constexpr const char* kCloudCheckpoint = "cloud.ckpt";
inline constexpr const char* kTailCheckpoint = "tail.ckpt";
inline constexpr const char* kPartition = "partition.json";
inline constexpr const char* kClassStats = "class_stats.csv";
inline constexpr const char* kMeaCheckpoint = "mea.ckpt";
inline constexpr const char* kParamsReport = "params_report.csv";
inline constexpr const char* kEvalReport = "eval_report.csv";
inline constexpr const char* kRecords = "records.jsonl";
inline constexpr const char* kCostReport = "cost_report.csv";
inline constexpr const char* kSweep = "sweep.csv";
inline constexpr const char* kCurveMain = "curve_main.csv";
inline constexpr const char* kCurveCloud = "curve_cloud.csv";
inline constexpr const char* kCurveTail = "curve_feature_tail.csv";
inline constexpr const char* kCurveEdge = "curve_edge.csv";
}  // namespace files

struct CommonOptions {
  std::filesystem::path config;  // empty: built-in defaults
  std::filesystem::path out_dir = "out";
  std::optional<std::uint64_t> seed;
};

struct AnalyzeOptions {
  std::optional<std::size_t> num_hard;
  bool random_classes = false;
};

struct EvalOptions {
  std::optional<double> threshold;
  std::optional<router::CloudMode> cloud_mode;
  std::optional<double> failure_rate;
  std::optional<unsigned> threads;
  bool hard_only = false;
  bool no_cloud = false;
};

struct CostOptions {
  cost::Strategy strategy = cost::Strategy::kEdgeOnly;
  cost::CostParams params;
};

// Each command reads its inputs from the output directory written by the
// earlier stages and never modifies them. Progress goes to `log`.
void cmd_gen_data(const CommonOptions& common, std::ostream& log);
void cmd_train_main(const CommonOptions& common, std::ostream& log);
void cmd_train_cloud(const CommonOptions& common, bool feature_tail, std::ostream& log);
void cmd_analyze_classes(const CommonOptions& common, const AnalyzeOptions& options,
                         std::ostream& log);
void cmd_train_mea(const CommonOptions& common, std::ostream& log);
void cmd_eval(const CommonOptions& common, const EvalOptions& options, std::ostream& log);
void cmd_sweep_threshold(const CommonOptions& common, const std::vector<double>& grid,
                         std::ostream& log);
void cmd_pipeline(const CommonOptions& common, const AnalyzeOptions& analyze,
                  const EvalOptions& eval, std::ostream& log);
// One CSV row for a closed-form strategy cost, written to `out`.
void cmd_cost(const CostOptions& options, std::ostream& out);

}  // namespace mea::cli
