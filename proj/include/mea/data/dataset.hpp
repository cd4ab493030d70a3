#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mea::data {

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;  // size() x dim, row-major
  std::vector<std::size_t> labels;
  std::string provenance;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  // Checks rows x dim == features and every label < num_classes.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> class_counts() const;
};

// Points in the unit of difficulty: easy classes sit on distinct coordinate
// axes at distance `separation` from the origin; designated-hard classes sit
// on a ring in a shared 2-D plane whose radius shrinks by 1 / (1 + overlap).
// With hard_modes > 1 each hard class owns several ring positions spread
// around the circle, which makes the hard group non-linearly separable.
struct SyntheticSpec {
  std::size_t num_classes = 8;
  std::size_t dim = 16;
  std::size_t num_hard = 4;
  double separation = 6.0;
  double overlap = 1.0;
  std::size_t hard_modes = 1;
  double noise = 1.0;
  std::size_t samples_per_class = 200;
  std::uint64_t seed = 0;
  // Independent sample streams share class geometry (train = 0, test = 1).
  std::uint64_t stream = 0;

  void validate() const;
};

std::vector<std::size_t> designed_hard_classes(const SyntheticSpec& spec);

// Generating centres, one list of mode centres per class.
std::vector<std::vector<std::vector<double>>> mode_centers(const SyntheticSpec& spec);
// Mean of each class's mode centres.
std::vector<std::vector<double>> class_means(const SyntheticSpec& spec);

Dataset gen_synthetic(const SyntheticSpec& spec);

// IDX (big-endian) image + label files. Pixel bytes are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::optional<std::size_t> num_classes = std::nullopt);
void write_idx(const Dataset& dataset, const std::filesystem::path& images,
               const std::filesystem::path& labels, std::size_t rows, std::size_t cols);

// Label-first CSV, one instance per line, optional "label,..." header line.
Dataset load_csv(const std::filesystem::path& path,
                 std::optional<std::size_t> num_classes = std::nullopt);
void write_csv(const Dataset& dataset, const std::filesystem::path& path);

struct Manifest {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::size_t size = 0;
  std::string provenance;
  std::string format;  // "csv" or "idx"
  std::vector<std::string> files;
};

void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

struct Split {
  Dataset train;
  Dataset val;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

// Stratified seeded split; each class contributes round(fraction * count)
// validation instances (at least one, leaving at least one for training).
Split split_train_val(const Dataset& dataset, double val_fraction, std::uint64_t seed);

}  // namespace mea::data
