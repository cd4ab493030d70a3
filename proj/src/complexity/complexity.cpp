#include "mea/complexity/complexity.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mea/errors.hpp"
#include "mea/nn/functional.hpp"

namespace mea::complexity {

std::size_t ClassStats::column_sum(std::size_t c) const {
  std::size_t s = 0;
  for (const auto& row : confusion) s += row.at(c);
  return s;
}

std::size_t ClassStats::row_sum(std::size_t c) const {
  const auto& row = confusion.at(c);
  return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

ClassStats build_class_stats(std::span<const std::size_t> predictions,
                             std::span<const std::size_t> labels, std::size_t num_classes) {
  if (predictions.size() != labels.size()) {
    throw InvalidInputError("predictions and labels differ in length");
  }
  ClassStats stats;
  stats.num_classes = num_classes;
  stats.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predictions[i] >= num_classes) {
      throw InvalidInputError("class id out of range at index " + std::to_string(i));
    }
    ++stats.confusion[labels[i]][predictions[i]];
  }
  stats.precision.resize(num_classes);
  stats.fdr.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t predicted = stats.column_sum(c);
    // A never-predicted class gets precision 0 and therefore ranks hardest.
    stats.precision[c] = predicted == 0 ? 0.0
                                        : static_cast<double>(stats.confusion[c][c]) /
                                              static_cast<double>(predicted);
    stats.fdr[c] = 1.0 - stats.precision[c];
  }
  return stats;
}

ClassPartition::ClassPartition(std::size_t num_classes, std::vector<std::size_t> hard)
    : num_classes_(num_classes), hard_(std::move(hard)) {
  std::sort(hard_.begin(), hard_.end());
  if (std::adjacent_find(hard_.begin(), hard_.end()) != hard_.end()) {
    throw InvalidInputError("hard class set contains duplicates");
  }
  if (!hard_.empty() && hard_.back() >= num_classes_) {
    throw InvalidInputError("hard class id outside [0, K)");
  }
  for (std::size_t label = 0; label < hard_.size(); ++label) class_dict_[hard_[label]] = label;
}

std::size_t ClassPartition::to_hard_label(std::size_t c) const {
  auto it = class_dict_.find(c);
  if (it == class_dict_.end()) throw IndexError("class " + std::to_string(c) + " is not hard");
  return it->second;
}

std::size_t ClassPartition::to_original(std::size_t hard_label) const {
  if (hard_label >= hard_.size()) {
    throw IndexError("hard label " + std::to_string(hard_label) + " out of range");
  }
  return hard_[hard_label];
}

std::string ClassPartition::to_json() const {
  nlohmann::json dict = nlohmann::json::object();
  for (const auto& [c, label] : class_dict_) dict[std::to_string(c)] = label;
  std::vector<std::size_t> all(num_classes_);
  std::iota(all.begin(), all.end(), std::size_t{0});
  nlohmann::json j{{"format", "mea-class-partition"},
                   {"version", 1},
                   {"num_classes", num_classes_},
                   {"classes", all},
                   {"hard_classes", hard_},
                   {"class_dict", dict}};
  return j.dump(2) + "\n";
}

ClassPartition ClassPartition::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "mea-class-partition" ||
        j.at("version").get<int>() != 1) {
      throw FormatError("not a version-1 class partition");
    }
    ClassPartition p(j.at("num_classes").get<std::size_t>(),
                     j.at("hard_classes").get<std::vector<std::size_t>>());
    for (const auto& [key, value] : j.at("class_dict").items()) {
      if (p.to_hard_label(std::stoul(key)) != value.get<std::size_t>()) {
        throw FormatError("class_dict disagrees with ascending hard-class order");
      }
    }
    if (j.at("class_dict").size() != p.num_hard()) throw FormatError("class_dict size mismatch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("class partition: ") + e.what());
  } catch (const IndexError& e) {
    throw FormatError(std::string("class partition: ") + e.what());
  }
}

void ClassPartition::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string());
  out << to_json();
}

ClassPartition ClassPartition::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

ClassPartition select_hard_classes(const ClassStats& stats, std::size_t num_hard) {
  if (num_hard < 1 || num_hard > stats.num_classes) {
    throw InvalidInputError("N_hard must lie in [1, K]");
  }
  std::vector<std::size_t> order(stats.num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return stats.precision[a] < stats.precision[b];
  });
  order.resize(num_hard);
  return ClassPartition(stats.num_classes, std::move(order));
}

ClassPartition select_random_classes(std::size_t num_classes, std::size_t num_hard,
                                     std::uint64_t seed) {
  if (num_hard < 1 || num_hard > num_classes) throw InvalidInputError("N_hard must lie in [1, K]");
  std::vector<std::size_t> order(num_classes);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(num_hard);
  return ClassPartition(num_classes, std::move(order));
}

std::size_t default_num_hard(std::size_t num_classes) { return std::max<std::size_t>(1, num_classes / 2); }

HardSubset filter_hard_subset(std::span<const std::size_t> labels,
                              const ClassPartition& partition) {
  HardSubset out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= partition.num_classes()) {
      throw InvalidInputError("label out of range at index " + std::to_string(i));
    }
    if (partition.is_hard_class(labels[i])) {
      out.indices.push_back(i);
      out.hard_labels.push_back(partition.to_hard_label(labels[i]));
    }
  }
  return out;
}

bool is_hard(std::span<const double> main_logits, const ClassPartition& partition) {
  if (main_logits.size() != partition.num_classes()) {
    throw ShapeError("main logits length differs from the number of classes");
  }
  // Softmax is monotone, so argmax over logits equals argmax over p1.
  return partition.is_hard_class(nn::argmax(nn::softmax(main_logits)));
}

double confidence(std::span<const double> logits) {
  const auto p = nn::softmax(logits);
  return *std::max_element(p.begin(), p.end());
}

std::string_view error_type_name(ErrorType t) {
  switch (t) {
    case ErrorType::kCorrect:
      return "correct";
    case ErrorType::kTypeI:
      return "type_i";
    case ErrorType::kTypeII:
      return "type_ii";
    case ErrorType::kTypeIII:
      return "type_iii";
    case ErrorType::kTypeIV:
      return "type_iv";
  }
  return "correct";
}

ErrorType classify_error(std::size_t predicted, std::size_t truth,
                         const ClassPartition& partition) {
  if (predicted >= partition.num_classes() || truth >= partition.num_classes()) {
    throw InvalidInputError("class id out of range");
  }
  if (predicted == truth) return ErrorType::kCorrect;
  const bool true_hard = partition.is_hard_class(truth);
  const bool pred_hard = partition.is_hard_class(predicted);
  if (!true_hard && pred_hard) return ErrorType::kTypeI;
  if (true_hard && !pred_hard) return ErrorType::kTypeII;
  if (!true_hard) return ErrorType::kTypeIII;
  return ErrorType::kTypeIV;
}

double detection_accuracy(std::span<const DetectionSample> samples) {
  if (samples.empty()) throw InvalidInputError("detection accuracy of an empty record set");
  const auto hits = std::count_if(samples.begin(), samples.end(), [](const DetectionSample& s) {
    return s.predicted_hard == s.truly_hard;
  });
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

}  // namespace mea::complexity
