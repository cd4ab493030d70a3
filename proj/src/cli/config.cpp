#include "mea/cli/config.hpp"

#include <fstream>
#include <set>

#include "mea/complexity/complexity.hpp"
#include "mea/errors.hpp"

namespace mea::cli {

namespace {

using nlohmann::json;

constexpr std::uint64_t kMainSgdSeedOffset = 11;
constexpr std::uint64_t kCloudSgdSeedOffset = 12;
constexpr std::uint64_t kEdgeSgdSeedOffset = 13;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items()) {
    if (!ok.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

std::filesystem::path resolve(const json& j, const char* key, const std::filesystem::path& base,
                              const std::string& where) {
  std::string s;
  read(j, key, s, where);
  if (s.empty()) return {};
  std::filesystem::path p(s);
  return p.is_relative() && !base.empty() ? base / p : p;
}

void parse_stage(const json& j, StageConfig& stage, const std::string& where) {
  check_keys(j, where,
             {"epochs", "lr", "milestones", "decay", "momentum", "batch_size"});
  read(j, "epochs", stage.epochs, where);
  read(j, "lr", stage.sgd.initial_lr, where);
  read(j, "milestones", stage.sgd.milestones, where);
  read(j, "decay", stage.sgd.decay_factor, where);
  read(j, "momentum", stage.sgd.momentum, where);
  read(j, "batch_size", stage.sgd.batch_size, where);
  if (stage.epochs < 0) throw ConfigError(where + ".epochs must be non-negative");
  try {
    stage.sgd.validate();
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json stage_json(const StageConfig& s) {
  return json{{"epochs", s.epochs},
              {"lr", s.sgd.initial_lr},
              {"milestones", s.sgd.milestones},
              {"decay", s.sgd.decay_factor},
              {"momentum", s.sgd.momentum},
              {"batch_size", s.sgd.batch_size}};
}

void parse_dataset(const json& j, DatasetConfig& d, const std::filesystem::path& base) {
  const std::string w = "dataset";
  check_keys(j, w,
             {"kind", "num_classes", "dim", "num_hard", "separation", "overlap", "hard_modes",
              "noise", "samples_per_class", "test_samples_per_class", "train", "test",
              "train_images", "train_labels", "test_images", "test_labels"});
  read(j, "kind", d.kind, w);
  if (d.kind != "synthetic" && d.kind != "csv" && d.kind != "idx") {
    throw ConfigError("dataset.kind must be synthetic, csv or idx, got '" + d.kind + "'");
  }
  auto& s = d.synthetic;
  if (d.kind == "synthetic") {
    read(j, "num_classes", s.num_classes, w);
  } else if (j.contains("num_classes")) {
    std::size_t k = 0;
    read(j, "num_classes", k, w);
    d.num_classes = k;
  }
  read(j, "dim", s.dim, w);
  read(j, "num_hard", s.num_hard, w);
  read(j, "separation", s.separation, w);
  read(j, "overlap", s.overlap, w);
  read(j, "hard_modes", s.hard_modes, w);
  read(j, "noise", s.noise, w);
  read(j, "samples_per_class", s.samples_per_class, w);
  read(j, "test_samples_per_class", d.test_samples_per_class, w);
  d.train = resolve(j, "train", base, w);
  d.test = resolve(j, "test", base, w);
  d.train_images = resolve(j, "train_images", base, w);
  d.train_labels = resolve(j, "train_labels", base, w);
  d.test_images = resolve(j, "test_images", base, w);
  d.test_labels = resolve(j, "test_labels", base, w);
  if (d.kind == "synthetic") {
    try {
      s.validate();
    } catch (const Error& e) {
      throw ConfigError(std::string("dataset: ") + e.what());
    }
    if (d.test_samples_per_class == 0) throw ConfigError("dataset.test_samples_per_class must be positive");
  } else if (d.kind == "csv" && (d.train.empty() || d.test.empty())) {
    throw ConfigError("dataset: csv needs 'train' and 'test' paths");
  } else if (d.kind == "idx" && (d.train_images.empty() || d.train_labels.empty() ||
                                 d.test_images.empty() || d.test_labels.empty())) {
    throw ConfigError("dataset: idx needs train/test image and label paths");
  }
}

void parse_model(const json& j, ModelConfig& m) {
  const std::string w = "model";
  check_keys(j, w, {"variant", "merge", "main", "adaptive", "extension", "stack", "split", "num_hard"});
  std::string s;
  try {
    if (j.contains("variant")) m.variant = arch::parse_variant(j.at("variant").get<std::string>());
    if (j.contains("merge")) m.merge = arch::parse_merge(j.at("merge").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  read(j, "main", m.main, w);
  read(j, "adaptive", m.adaptive, w);
  read(j, "extension", m.extension, w);
  read(j, "stack", m.stack, w);
  read(j, "split", m.split, w);
  if (j.contains("num_hard") && !j.at("num_hard").is_null()) {
    std::size_t n = 0;
    read(j, "num_hard", n, w);
    m.num_hard = n;
  }
}

void parse_router(const json& j, RouterConfig& r) {
  const std::string w = "router";
  check_keys(j, w, {"threshold", "cloud_mode", "failure_rate", "threads"});
  if (j.contains("threshold") && !j.at("threshold").is_null()) {
    double t = 0.0;
    read(j, "threshold", t, w);
    if (!(t >= 0.0)) throw ConfigError("router.threshold must be non-negative");
    r.threshold = t;
  }
  if (j.contains("cloud_mode")) {
    std::string mode;
    read(j, "cloud_mode", mode, w);
    r.cloud_mode = router::parse_cloud_mode(mode);
  }
  read(j, "failure_rate", r.failure_rate, w);
  read(j, "threads", r.threads, w);
  if (r.failure_rate < 0.0 || r.failure_rate > 1.0) {
    throw ConfigError("router.failure_rate must lie in [0, 1]");
  }
  if (r.threads == 0) throw ConfigError("router.threads must be positive");
}

void parse_energy(const json& j, cost::EnergyParams& e) {
  const std::string w = "cost";
  check_keys(j, w, {"s_upload_mbps", "gpu_power_w", "t_cp_ms", "raw_bytes", "feature_bytes",
                    "cloud_mj", "q"});
  read(j, "s_upload_mbps", e.s_upload_mbps, w);
  read(j, "gpu_power_w", e.gpu_power_w, w);
  read(j, "t_cp_ms", e.t_cp_ms, w);
  read(j, "raw_bytes", e.raw_bytes, w);
  if (j.contains("feature_bytes") && !j.at("feature_bytes").is_null()) {
    double b = 0.0;
    read(j, "feature_bytes", b, w);
    e.feature_bytes = b;
  }
  read(j, "cloud_mj", e.cloud_mj, w);
  read(j, "q", e.q, w);
  if (!(e.s_upload_mbps > 0.0)) throw ConfigError("cost.s_upload_mbps must be positive");
  if (e.gpu_power_w < 0.0 || e.t_cp_ms < 0.0 || e.raw_bytes < 0.0 || e.cloud_mj < 0.0) {
    throw ConfigError("cost parameters must be non-negative");
  }
  if (e.q < 0.0 || e.q > 1.0) throw ConfigError("cost.q must lie in [0, 1]");
}

std::vector<std::size_t> layers_or_throw(const std::vector<std::size_t>& widths, const char* name) {
  if (widths.empty()) throw ConfigError(std::string(name) + " needs at least one layer");
  return widths;
}

}  // namespace

arch::MEAConfig ExperimentConfig::mea_config(std::size_t input_dim, std::size_t num_classes) const {
  const std::size_t n_hard = model.num_hard.value_or(complexity::default_num_hard(num_classes));
  auto adaptive = arch::BlockSpec::relu(layers_or_throw(model.adaptive, "model.adaptive"));
  arch::MEAConfig c;
  if (model.variant == arch::Variant::kA) {
    c = arch::MEAConfig::variant_a(input_dim, num_classes, n_hard,
                                   arch::BlockSpec::relu(layers_or_throw(model.stack, "model.stack")),
                                   model.split, std::move(adaptive), model.merge);
  } else {
    c = arch::MEAConfig::variant_b(input_dim, num_classes, n_hard,
                                   arch::BlockSpec::relu(layers_or_throw(model.main, "model.main")),
                                   std::move(adaptive), arch::BlockSpec::relu(model.extension),
                                   model.merge);
  }
  c.validate();
  return c;
}

arch::BlockSpec ExperimentConfig::cloud_spec() const { return arch::BlockSpec::relu(cloud); }
arch::BlockSpec ExperimentConfig::feature_tail_spec() const {
  return arch::BlockSpec::relu(feature_tail);
}

nn::SgdConfig ExperimentConfig::main_sgd() const {
  auto s = main_stage.sgd;
  s.seed = seed + kMainSgdSeedOffset;
  return s;
}
nn::SgdConfig ExperimentConfig::edge_sgd() const {
  auto s = edge_stage.sgd;
  s.seed = seed + kEdgeSgdSeedOffset;
  return s;
}
nn::SgdConfig ExperimentConfig::cloud_sgd() const {
  auto s = cloud_stage.sgd;
  s.seed = seed + kCloudSgdSeedOffset;
  return s;
}

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  check_keys(j, "config",
             {"seed", "val_fraction", "dataset", "model", "cloud", "feature_tail", "training",
              "router", "cost", "sweep"});
  read(j, "seed", c.seed, "config");
  read(j, "val_fraction", c.val_fraction, "config");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
    throw ConfigError("val_fraction must lie in (0, 1)");
  }
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), c.dataset, base_dir);
  if (j.contains("model")) parse_model(j.at("model"), c.model);
  if (j.contains("cloud")) {
    const auto& cl = j.at("cloud");
    check_keys(cl, "cloud", {"hidden"});
    read(cl, "hidden", c.cloud, "cloud");
  }
  if (j.contains("feature_tail")) {
    const auto& ft = j.at("feature_tail");
    check_keys(ft, "feature_tail", {"hidden"});
    read(ft, "hidden", c.feature_tail, "feature_tail");
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, "training", {"main", "edge", "cloud"});
    if (t.contains("main")) parse_stage(t.at("main"), c.main_stage, "training.main");
    if (t.contains("edge")) parse_stage(t.at("edge"), c.edge_stage, "training.edge");
    if (t.contains("cloud")) parse_stage(t.at("cloud"), c.cloud_stage, "training.cloud");
  }
  if (j.contains("router")) parse_router(j.at("router"), c.router);
  if (j.contains("cost")) parse_energy(j.at("cost"), c.energy);
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    check_keys(s, "sweep", {"grid"});
    read(s, "grid", c.sweep_grid, "sweep");
    for (double t : c.sweep_grid) {
      if (!(t >= 0.0)) throw ConfigError("sweep.grid thresholds must be non-negative");
    }
  }
  if (c.cloud.empty()) throw ConfigError("cloud.hidden needs at least one layer");
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.dataset.synthetic;
  json dataset{{"kind", c.dataset.kind}};
  if (c.dataset.kind == "synthetic") {
    dataset.update(json{{"num_classes", s.num_classes},
                        {"dim", s.dim},
                        {"num_hard", s.num_hard},
                        {"separation", s.separation},
                        {"overlap", s.overlap},
                        {"hard_modes", s.hard_modes},
                        {"noise", s.noise},
                        {"samples_per_class", s.samples_per_class},
                        {"test_samples_per_class", c.dataset.test_samples_per_class}});
  } else if (c.dataset.kind == "csv") {
    dataset["train"] = c.dataset.train.string();
    dataset["test"] = c.dataset.test.string();
  } else {
    dataset["train_images"] = c.dataset.train_images.string();
    dataset["train_labels"] = c.dataset.train_labels.string();
    dataset["test_images"] = c.dataset.test_images.string();
    dataset["test_labels"] = c.dataset.test_labels.string();
  }
  if (c.dataset.kind != "synthetic") {
    dataset["num_classes"] = c.dataset.num_classes ? json(*c.dataset.num_classes) : json(nullptr);
  }
  const auto& e = c.energy;
  return json{
      {"seed", c.seed},
      {"val_fraction", c.val_fraction},
      {"dataset", dataset},
      {"model",
       {{"variant", arch::variant_name(c.model.variant)},
        {"merge", arch::merge_name(c.model.merge)},
        {"main", c.model.main},
        {"adaptive", c.model.adaptive},
        {"extension", c.model.extension},
        {"stack", c.model.stack},
        {"split", c.model.split},
        {"num_hard", c.model.num_hard ? json(*c.model.num_hard) : json(nullptr)}}},
      {"cloud", {{"hidden", c.cloud}}},
      {"feature_tail", {{"hidden", c.feature_tail}}},
      {"training",
       {{"main", stage_json(c.main_stage)},
        {"edge", stage_json(c.edge_stage)},
        {"cloud", stage_json(c.cloud_stage)}}},
      {"router",
       {{"threshold", c.router.threshold ? json(*c.router.threshold) : json(nullptr)},
        {"cloud_mode", router::cloud_mode_name(c.router.cloud_mode)},
        {"failure_rate", c.router.failure_rate},
        {"threads", c.router.threads}}},
      {"cost",
       {{"s_upload_mbps", e.s_upload_mbps},
        {"gpu_power_w", e.gpu_power_w},
        {"t_cp_ms", e.t_cp_ms},
        {"raw_bytes", e.raw_bytes},
        {"feature_bytes", e.feature_bytes ? json(*e.feature_bytes) : json(nullptr)},
        {"cloud_mj", e.cloud_mj},
        {"q", e.q}}},
      {"sweep", {{"grid", c.sweep_grid}}}};
}

LoadedData load_data(const ExperimentConfig& c) {
  LoadedData out;
  const auto& d = c.dataset;
  if (d.kind == "synthetic") {
    auto spec = d.synthetic;
    spec.seed = c.seed;
    spec.stream = 0;
    out.train = data::gen_synthetic(spec);
    spec.stream = 1;
    spec.samples_per_class = d.test_samples_per_class;
    out.test = data::gen_synthetic(spec);
  } else if (d.kind == "csv") {
    out.train = data::load_csv(d.train, d.num_classes);
    out.test = data::load_csv(d.test, d.num_classes ? d.num_classes : out.train.num_classes);
  } else {
    out.train = data::load_idx(d.train_images, d.train_labels, d.num_classes);
    out.test = data::load_idx(d.test_images, d.test_labels,
                              d.num_classes ? d.num_classes : out.train.num_classes);
  }
  if (out.train.dim != out.test.dim) {
    throw FormatError("train and test feature dimensions differ (" + std::to_string(out.train.dim) +
                      " vs " + std::to_string(out.test.dim) + ")");
  }
  if (out.test.num_classes > out.train.num_classes) {
    throw FormatError("test set has more classes than the training set");
  }
  out.test.num_classes = out.train.num_classes;
  return out;
}

}  // namespace mea::cli
