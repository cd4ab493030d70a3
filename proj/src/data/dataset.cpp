#include "mea/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "mea/errors.hpp"

namespace mea::data {

void Dataset::validate() const {
  if (dim == 0 && !labels.empty()) throw InvalidInputError("dataset has zero feature dimension");
  if (features.size() != labels.size() * dim) {
    throw InvalidInputError("dataset has " + std::to_string(features.size()) +
                            " feature values for " + std::to_string(labels.size()) + " rows of " +
                            std::to_string(dim));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw InvalidInputError("label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " is outside [0, " +
                              std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.provenance = provenance;
  out.features.reserve(indices.size() * dim);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw IndexError("subset index out of range");
    auto r = row(i);
    out.features.insert(out.features.end(), r.begin(), r.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) ++counts.at(y);
  return counts;
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (num_hard > num_classes) throw ConfigError("more designated-hard classes than classes");
  if (dim < num_classes - num_hard + 2) {
    throw ConfigError("synthetic dim must be at least (easy classes + 2)");
  }
  if (!(separation > 0.0)) throw ConfigError("separation must be positive");
  if (!(overlap >= 0.0)) throw ConfigError("overlap must be nonnegative");
  if (hard_modes == 0) throw ConfigError("hard_modes must be positive");
  if (!(noise >= 0.0)) throw ConfigError("noise must be nonnegative");
  if (samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
}

std::vector<std::size_t> designed_hard_classes(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<std::size_t> order(spec.num_classes);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(spec.num_hard);
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::vector<std::vector<double>>> mode_centers(const SyntheticSpec& spec) {
  const auto hard = designed_hard_classes(spec);
  const std::size_t n_easy = spec.num_classes - spec.num_hard;
  const std::size_t ring_slots = spec.num_hard * spec.hard_modes;
  const double radius = spec.separation / std::numbers::sqrt2 / (1.0 + spec.overlap);

  std::vector<std::vector<std::vector<double>>> centers(spec.num_classes);
  std::size_t easy_axis = 0;
  std::size_t hard_rank = 0;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    if (std::binary_search(hard.begin(), hard.end(), k)) {
      for (std::size_t m = 0; m < spec.hard_modes; ++m) {
        const std::size_t slot = m * spec.num_hard + hard_rank;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(slot) /
                             static_cast<double>(ring_slots);
        std::vector<double> c(spec.dim, 0.0);
        c[n_easy] = radius * std::cos(angle);
        c[n_easy + 1] = radius * std::sin(angle);
        centers[k].push_back(std::move(c));
      }
      ++hard_rank;
    } else {
      std::vector<double> c(spec.dim, 0.0);
      c[easy_axis++] = spec.separation;
      centers[k].push_back(std::move(c));
    }
  }
  return centers;
}

std::vector<std::vector<double>> class_means(const SyntheticSpec& spec) {
  const auto centers = mode_centers(spec);
  std::vector<std::vector<double>> means;
  for (const auto& modes : centers) {
    std::vector<double> mean(spec.dim, 0.0);
    for (const auto& c : modes) {
      for (std::size_t j = 0; j < spec.dim; ++j) mean[j] += c[j] / static_cast<double>(modes.size());
    }
    means.push_back(std::move(mean));
  }
  return means;
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  const auto centers = mode_centers(spec);
  std::seed_seq seq{spec.seed, spec.stream, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset out;
  out.dim = spec.dim;
  out.num_classes = spec.num_classes;
  out.provenance = "synthetic(seed=" + std::to_string(spec.seed) +
                   ",stream=" + std::to_string(spec.stream) + ")";
  out.features.reserve(spec.num_classes * spec.samples_per_class * spec.dim);
  // Interleave classes so that prefixes stay balanced. Randomness is consumed
  // identically for every overlap value.
  for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      const auto& modes = centers[k];
      const std::size_t m = rng() % spec.hard_modes;
      const auto& c = modes[m % modes.size()];
      for (std::size_t j = 0; j < spec.dim; ++j) out.features.push_back(c[j] + spec.noise * gauss(rng));
      out.labels.push_back(k);
    }
  }
  return out;
}

Split split_train_val(const Dataset& dataset, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw InvalidInputError("validation fraction must lie in (0, 1)");
  }
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.labels[i]).push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<char> is_val(dataset.size(), 0);
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    if (idx.empty()) continue;
    if (idx.size() < 2) {
      throw InvalidInputError("class " + std::to_string(k) +
                              " has fewer than 2 samples; cannot stratify");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(idx.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_val; ++j) is_val[idx[j]] = 1;
  }

  Split split;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    (is_val[i] ? split.val_indices : split.train_indices).push_back(i);
  }
  split.train = dataset.subset(split.train_indices);
  split.val = dataset.subset(split.val_indices);
  return split;
}

}  // namespace mea::data
