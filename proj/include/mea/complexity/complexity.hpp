#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace mea::complexity {

// Validation statistics of the main block. Rows of `confusion` are true
// classes, columns predicted classes.
struct ClassStats {
  std::size_t num_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;
  std::vector<double> precision;
  std::vector<double> fdr;

  std::size_t column_sum(std::size_t c) const;
  std::size_t row_sum(std::size_t c) const;
};

ClassStats build_class_stats(std::span<const std::size_t> predictions,
                             std::span<const std::size_t> labels, std::size_t num_classes);

class ClassPartition {
 public:
  ClassPartition() = default;
  // `hard` may be in any order; labels are assigned in ascending class id.
  ClassPartition(std::size_t num_classes, std::vector<std::size_t> hard);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t num_hard() const { return hard_.size(); }
  const std::vector<std::size_t>& hard_classes() const { return hard_; }
  const std::map<std::size_t, std::size_t>& class_dict() const { return class_dict_; }
  const std::vector<std::size_t>& inverse_dict() const { return hard_; }

  bool is_hard_class(std::size_t c) const { return class_dict_.contains(c); }
  std::size_t to_hard_label(std::size_t c) const;
  std::size_t to_original(std::size_t hard_label) const;

  std::string to_json() const;
  static ClassPartition from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ClassPartition load(const std::filesystem::path& path);

  friend bool operator==(const ClassPartition& a, const ClassPartition& b) {
    return a.num_classes_ == b.num_classes_ && a.hard_ == b.hard_;
  }

 private:
  std::size_t num_classes_ = 0;
  std::vector<std::size_t> hard_;  // ascending; hard_[label] = original class
  std::map<std::size_t, std::size_t> class_dict_;
};

// The N_hard lowest-precision classes; ties go to the lower class id.
ClassPartition select_hard_classes(const ClassStats& stats, std::size_t num_hard);
ClassPartition select_random_classes(std::size_t num_classes, std::size_t num_hard,
                                     std::uint64_t seed);
std::size_t default_num_hard(std::size_t num_classes);

struct HardSubset {
  std::vector<std::size_t> indices;
  std::vector<std::size_t> hard_labels;
};

// Instances whose label is a hard class, in original order, with labels
// remapped through the class dictionary.
HardSubset filter_hard_subset(std::span<const std::size_t> labels, const ClassPartition& partition);

// argmax(softmax(logits)) lies in the hard set.
bool is_hard(std::span<const double> main_logits, const ClassPartition& partition);

// max softmax probability.
double confidence(std::span<const double> logits);

enum class ErrorType { kCorrect, kTypeI, kTypeII, kTypeIII, kTypeIV };

std::string_view error_type_name(ErrorType t);

ErrorType classify_error(std::size_t predicted, std::size_t truth, const ClassPartition& partition);

struct DetectionSample {
  bool predicted_hard;
  bool truly_hard;
};

double detection_accuracy(std::span<const DetectionSample> samples);

}  // namespace mea::complexity
