#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mea::nn {

// Max-subtracted softmax. Throws InvalidInputError on empty or non-finite input.
std::vector<double> softmax(std::span<const double> logits);

// Shannon entropy in nats, with 0 ln 0 = 0. The input must be a probability
// vector (nonnegative, summing to 1 within 1e-9).
double entropy(std::span<const double> probs);

// Index of the largest element; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

struct CrossEntropy {
  double loss;
  std::vector<double> grad;  // d loss / d logits
};

CrossEntropy cross_entropy_loss(std::span<const double> logits, std::size_t label);

}  // namespace mea::nn
