#pragma once

#include <cstddef>
#include <span>

#include "mea/nn/network.hpp"

namespace mea::nn {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
};

// Compares backward() against central finite differences of the
// cross-entropy loss at the network output, for every trainable parameter.
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckReport check_gradients(const Network& network, std::span<const double> x,
                                std::size_t label, double epsilon = 1e-5);

}  // namespace mea::nn
