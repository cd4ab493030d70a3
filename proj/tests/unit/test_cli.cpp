#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mea/arch/checkpoint.hpp"
#include "mea/cli/commands.hpp"
#include "mea/cli/config.hpp"
#include "mea/errors.hpp"
#include "mea/trainer/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mea;
using namespace mea::cli;

fs::path fresh_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("mea_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_config() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {"kind": "synthetic", "num_classes": 6, "dim": 8, "num_hard": 3,
                "overlap": 1.0, "samples_per_class": 40, "test_samples_per_class": 20},
    "model": {"main": [12, 8], "adaptive": [8], "extension": [12]},
    "cloud": {"hidden": [16, 16, 8]},
    "feature_tail": {"hidden": [8]},
    "training": {"main": {"epochs": 3, "lr": 0.05, "milestones": []},
                 "edge": {"epochs": 3, "lr": 0.05, "milestones": []},
                 "cloud": {"epochs": 3, "lr": 0.05, "milestones": []}},
    "router": {"cloud_mode": "raw-model", "failure_rate": 0.1}
  })");
}

fs::path write_config(const fs::path& dir, const json& j) {
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

TEST(Config, DefaultsAndRoundTrip) {
  const auto c = parse_config(json::object());
  EXPECT_EQ(c.seed, 0u);
  EXPECT_EQ(c.model.variant, arch::Variant::kB);
  EXPECT_FALSE(c.router.threshold.has_value());
  const auto j = to_json(parse_config(small_config()));
  EXPECT_EQ(to_json(parse_config(j)), j);
  const auto s = parse_config(small_config());
  EXPECT_EQ(s.seed, 3u);
  EXPECT_EQ(s.main_stage.epochs, 3);
  EXPECT_DOUBLE_EQ(s.router.failure_rate, 0.1);
  EXPECT_EQ(s.dataset.synthetic.num_classes, 6u);
  const auto mea = s.mea_config(8, 6);
  EXPECT_EQ(mea.num_hard, 3u);
  EXPECT_EQ(mea.feature_dim, 8u);
}

TEST(Config, StageSeedsDifferAndFollowTheSeed) {
  auto c = parse_config(small_config());
  EXPECT_NE(c.main_sgd().seed, c.edge_sgd().seed);
  EXPECT_NE(c.main_sgd().seed, c.cloud_sgd().seed);
  const auto before = c.main_sgd().seed;
  c.seed += 1;
  EXPECT_EQ(c.main_sgd().seed, before + 1);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  for (const char* bad : {R"({"sed": 1})", R"({"dataset": {"kind": "synthetic", "clases": 3}})",
                          R"({"model": {"variant": "C"}})", R"({"model": {"merge": "max"}})",
                          R"({"router": {"cloud_mode": "fog"}})", R"({"seed": "one"})",
                          R"({"training": {"main": {"epochs": 1, "lr": 0.1, "speed": 2}}})",
                          R"({"val_fraction": 1.5})", R"({"dataset": {"kind": "tfrecord"}})"}) {
    EXPECT_THROW(parse_config(json::parse(bad)), ConfigError) << bad;
  }
}

TEST(Config, LoadErrors) {
  const auto dir = fresh_dir("load_errors");
  EXPECT_THROW(load_config(dir / "absent.json"), ConfigError);
  std::ofstream(dir / "broken.json") << "{\"seed\": ";
  EXPECT_THROW(load_config(dir / "broken.json"), ConfigError);
}

TEST(Config, RelativeDatasetPathsResolveAgainstTheConfigFile) {
  const auto c = parse_config(json::parse(R"({"dataset": {"kind": "csv", "train": "a.csv", "test": "b.csv"}})"),
                              "/data/run");
  EXPECT_EQ(c.dataset.train, fs::path("/data/run/a.csv"));
  EXPECT_EQ(c.dataset.test, fs::path("/data/run/b.csv"));
}

TEST(Commands, BadConfigWritesNothing) {
  const auto dir = fresh_dir("bad_config");
  auto j = small_config();
  j["bogus"] = 1;
  CommonOptions common{write_config(dir, j), dir / "out", std::nullopt};
  std::ostringstream log;
  EXPECT_THROW(cmd_pipeline(common, {}, {}, log), ConfigError);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Commands, MissingPrerequisitesNameTheProducer) {
  const auto dir = fresh_dir("missing");
  CommonOptions common{write_config(dir, small_config()), dir / "out", std::nullopt};
  std::ostringstream log;
  try {
    cmd_train_mea(common, log);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train-main"), std::string::npos);
  }
  try {
    cmd_eval(common, {}, log);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train-mea"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Commands, CostPrintsTheRow) {
  CostOptions o;
  o.strategy = cost::Strategy::kEdgeCloudRaw;
  o.params = cost::CostParams{10000, 3.14, 0.0, 7.12, 0.0, std::nullopt, 0.15};
  std::ostringstream out;
  cmd_cost(o, out);
  EXPECT_EQ(out.str(),
            "strategy,edge_compute,cloud_compute,communication,total\n"
            "edge-cloud-raw,31400,0,10680,42080\n");
}

// One full pipeline run, shared by the checks below.
struct PipelineRun {
  fs::path dir;
  CommonOptions common;
};

const PipelineRun& pipeline_run() {
  static const PipelineRun run = [] {
    const auto dir = fresh_dir("pipeline");
    CommonOptions common{write_config(dir, small_config()), dir / "out", std::nullopt};
    std::ostringstream log;
    cmd_pipeline(common, {}, {}, log);
    return PipelineRun{dir, common};
  }();
  return run;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool cell_has_type(const std::string& cell, const std::string& type) {
  static const std::regex integer(R"(-?\d+)");
  static const std::regex number(R"(-?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?|nan|-?inf)");
  if (type == "integer") return std::regex_match(cell, integer);
  if (type == "number") return std::regex_match(cell, number);
  if (type == "flag") return cell == "0" || cell == "1";
  if (type == "string") return !cell.empty();
  return false;
}

bool json_has_type(const json& v, std::string type) {
  if (!type.empty() && type.back() == '?') {
    if (v.is_null()) return true;
    type.pop_back();
  }
  if (type == "integer") return v.is_number_integer();
  if (type == "number") return v.is_number();
  if (type == "boolean") return v.is_boolean();
  if (type == "string") return v.is_string();
  return false;
}

TEST(Pipeline, OutputsMatchTheSchema) {
  const auto& run = pipeline_run();
  const auto schema = json::parse(slurp(fs::path(MEA_SOURCE_DIR) / "schemas" / "outputs.json"));
  std::size_t checked = 0;
  for (const auto& [name, spec] : schema["csv"].items()) {
    const auto path = run.common.out_dir / name;
    if (!fs::exists(path)) {
      // Only the feature-tail curve is absent for a raw-model run.
      EXPECT_EQ(name, files::kCurveTail);
      continue;
    }
    const auto columns = spec["columns"].is_string() ? schema[spec["columns"].get<std::string>()]
                                                     : spec["columns"];
    std::ifstream in(path);
    std::string line;
    bool header = false;
    std::size_t rows = 0;
    bool saw_config = false;
    while (std::getline(in, line)) {
      if (line.rfind("# ", 0) == 0) {
        EXPECT_FALSE(header) << name;
        saw_config |= line.rfind("# config: ", 0) == 0;
        continue;
      }
      const auto cells = split_csv_line(line);
      ASSERT_EQ(cells.size(), columns.size()) << name << ": " << line;
      if (!header) {
        for (std::size_t i = 0; i < cells.size(); ++i) EXPECT_EQ(cells[i], columns[i]["name"]) << name;
        header = true;
        continue;
      }
      ++rows;
      for (std::size_t i = 0; i < cells.size(); ++i) {
        EXPECT_TRUE(cell_has_type(cells[i], columns[i]["type"]))
            << name << " column " << columns[i]["name"] << " value '" << cells[i] << "'";
      }
    }
    EXPECT_TRUE(saw_config) << name;
    EXPECT_TRUE(header) << name;
    EXPECT_GT(rows, 0u) << name;
    ++checked;
  }
  EXPECT_EQ(checked, schema["csv"].size() - 1);

  const auto fields = schema["jsonl"]["records.jsonl"]["fields"];
  std::ifstream in(run.common.out_dir / files::kRecords);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto rec = json::parse(line);
    EXPECT_EQ(rec.size(), fields.size());
    for (const auto& f : fields) {
      ASSERT_TRUE(rec.contains(f["name"])) << f["name"];
      EXPECT_TRUE(json_has_type(rec[f["name"].get<std::string>()], f["type"])) << f["name"] << " in " << line;
    }
    EXPECT_EQ(rec["id"], n);
    ++n;
  }
  EXPECT_EQ(n, 6u * 20u);
}

TEST(Pipeline, SweepClosedFormMatchesMeasuredEnergy) {
  const auto& run = pipeline_run();
  std::ifstream in(run.common.out_dir / files::kSweep);
  std::string line;
  std::vector<std::string> header;
  std::size_t rows = 0;
  double prev_beta = 2.0;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    const auto cells = split_csv_line(line);
    if (header.empty()) {
      header = cells;
      continue;
    }
    const double beta = std::stod(cells[1]);
    const double total = std::stod(cells[10]);
    const double model = std::stod(cells[11]);
    EXPECT_NEAR(model, total, 1e-9 * (1.0 + total));
    EXPECT_LE(beta, prev_beta);
    prev_beta = beta;
    ++rows;
  }
  EXPECT_GE(rows, 21u);
}

TEST(Pipeline, FrozenMainDigestUnchanged) {
  const auto& run = pipeline_run();
  std::ifstream in(run.common.out_dir / files::kParamsReport);
  std::string line, stage1, final_digest;
  while (std::getline(in, line)) {
    if (line.rfind("# main_digest_stage1: ", 0) == 0) stage1 = line.substr(22);
    if (line.rfind("# main_digest_final: ", 0) == 0) final_digest = line.substr(21);
  }
  EXPECT_FALSE(stage1.empty());
  EXPECT_EQ(stage1, final_digest);
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto& first = pipeline_run();
  const auto dir = fresh_dir("pipeline_again");
  CommonOptions common{first.common.config, dir / "out", std::nullopt};
  std::ostringstream log;
  cmd_pipeline(common, {}, {}, log);
  std::size_t compared = 0;
  for (const auto& entry : fs::directory_iterator(first.common.out_dir)) {
    const auto name = entry.path().filename();
    ASSERT_TRUE(fs::exists(common.out_dir / name)) << name;
    EXPECT_EQ(slurp(entry.path()), slurp(common.out_dir / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 12u);
}

TEST(Pipeline, CheckpointEqualsLibraryAlgorithm) {
  const auto& run = pipeline_run();
  const auto config = load_config(run.common.config);
  const auto data = load_data(config);
  trainer::Algorithm1Options o;
  o.config = config.mea_config(data.train.dim, data.train.num_classes);
  o.main_sgd = config.main_sgd();
  o.edge_sgd = config.edge_sgd();
  o.main_epochs = config.main_stage.epochs;
  o.edge_epochs = config.edge_stage.epochs;
  o.val_fraction = config.val_fraction;
  o.seed = config.seed;
  const auto lib = trainer::run_algorithm1(data.train, o);
  const auto cli = arch::load_mea_checkpoint(run.common.out_dir / files::kMeaCheckpoint);
  const auto partition = complexity::ClassPartition::load(run.common.out_dir / files::kPartition);
  EXPECT_EQ(partition.hard_classes(), lib.partition.hard_classes());
  auto same = [](const nn::Network& a, const nn::Network& b) {
    if (a.depth() != b.depth()) return false;
    for (std::size_t l = 0; l < a.depth(); ++l) {
      const auto wa = a.layers()[l].weights.values();
      const auto wb = b.layers()[l].weights.values();
      if (!std::equal(wa.begin(), wa.end(), wb.begin(), wb.end())) return false;
      if (a.layers()[l].bias != b.layers()[l].bias) return false;
    }
    return true;
  };
  EXPECT_TRUE(same(cli.main(), lib.net.main()));
  EXPECT_TRUE(same(cli.exit1(), lib.net.exit1()));
  EXPECT_TRUE(same(cli.adaptive(), lib.net.adaptive()));
  EXPECT_TRUE(same(cli.extension(), lib.net.extension()));
  EXPECT_TRUE(same(cli.exit2(), lib.net.exit2()));
  EXPECT_TRUE(cli.main_frozen());
}

TEST(Pipeline, EvalOverridesAndHardOnly) {
  const auto& run = pipeline_run();
  const auto dir = fresh_dir("eval_override");
  fs::copy(run.common.out_dir, dir / "out");
  CommonOptions common{run.common.config, dir / "out", std::nullopt};
  EvalOptions e;
  e.threshold = 0.0;
  e.cloud_mode = router::CloudMode::kOracle;
  e.failure_rate = 0.0;
  e.hard_only = true;
  std::ostringstream log;
  cmd_eval(common, e, log);
  std::ifstream in(common.out_dir / files::kEvalReport);
  std::string line;
  std::vector<std::string> header, row;
  while (std::getline(in, line)) {
    if (line.rfind("#", 0) == 0) continue;
    (header.empty() ? header : row) = split_csv_line(line);
  }
  auto col = [&](const std::string& name) {
    return row[std::find(header.begin(), header.end(), name) - header.begin()];
  };
  EXPECT_EQ(col("cloud_mode"), "oracle");
  EXPECT_EQ(col("hard_only"), "1");
  EXPECT_EQ(col("instances"), "60");
  EXPECT_EQ(col("hard_instances"), "60");
  EXPECT_EQ(col("beta"), "1");
  EXPECT_EQ(col("accuracy"), "1");

  e.failure_rate = 2.0;
  EXPECT_THROW(cmd_eval(common, e, log), ConfigError);
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MEA_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodesAndMessages) {
  const auto dir = fresh_dir("binary");
  const auto cfg = write_config(dir, small_config());
  const auto log = dir / "log.txt";
  EXPECT_EQ(run_cli("cost --strategy edge --n 10 --x 2", log), 0);
  EXPECT_NE(slurp(log).find("edge,20,0,0,20"), std::string::npos);
  EXPECT_EQ(run_cli("cost --strategy edge-cloud-features --n 10 --x 2", log), 1);
  EXPECT_NE(slurp(log).find("error:"), std::string::npos);
  EXPECT_EQ(run_cli("eval --config " + cfg.string() + " --out-dir " + (dir / "out").string(), log), 1);
  EXPECT_NE(slurp(log).find("run 'train-mea' first"), std::string::npos);
  EXPECT_NE(run_cli("no-such-command", log), 0);
  EXPECT_EQ(run_cli("gen-data --config " + cfg.string() + " --out-dir " + (dir / "data").string(), log), 0);
  EXPECT_TRUE(fs::exists(dir / "data" / "train.csv"));
  EXPECT_TRUE(fs::exists(dir / "data" / "manifest.json"));
}

TEST(Binary, StagesMatchInProcessPipeline) {
  const auto& run = pipeline_run();
  const auto dir = fresh_dir("binary_stages");
  const auto log = dir / "log.txt";
  const std::string common = "--config " + run.common.config.string() + " --out-dir " + (dir / "out").string();
  for (const char* stage : {"train-main", "train-cloud", "analyze-classes", "train-mea", "eval",
                            "sweep-threshold"}) {
    ASSERT_EQ(run_cli(std::string(stage) + " " + common, log), 0) << stage << ": " << slurp(log);
  }
  for (const char* name : {files::kMeaCheckpoint, files::kPartition, files::kRecords, files::kSweep}) {
    const auto a = slurp(run.common.out_dir / name);
    auto b = slurp(dir / "out" / name);
    if (std::string(name) == files::kSweep) {
      // The provenance line names the command that wrote the file.
      EXPECT_NE(a.find("# command: sweep-threshold"), std::string::npos);
    }
    EXPECT_EQ(a, b) << name;
  }
}

}  // namespace
