#include "mea/nn/functional.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mea/errors.hpp"

namespace mea::nn {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInputError("softmax of an empty vector");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInputError("softmax input is not finite");
  }
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double entropy(std::span<const double> probs) {
  if (probs.empty()) throw InvalidInputError("entropy of an empty distribution");
  double sum = 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidInputError("probability entries must be finite and nonnegative");
    }
    sum += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw InvalidInputError("probabilities sum to " + std::to_string(sum) + ", not 1");
  }
  return std::clamp(h, 0.0, std::log(static_cast<double>(probs.size())));
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InvalidInputError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

CrossEntropy cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw IndexError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(logits.size()) + " logits");
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInputError("cross-entropy logits are not finite");
  }
  // log-sum-exp form keeps the loss accurate when the true class is unlikely.
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - peak);
  const double log_norm = peak + std::log(total);

  CrossEntropy out{log_norm - logits[label], std::vector<double>(logits.size())};
  for (std::size_t i = 0; i < logits.size(); ++i) out.grad[i] = std::exp(logits[i] - log_norm);
  out.grad[label] -= 1.0;
  return out;
}

}  // namespace mea::nn
