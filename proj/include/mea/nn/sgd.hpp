#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mea/nn/network.hpp"

namespace mea::nn {

struct SgdConfig {
  double initial_lr = 0.05;
  std::vector<int> milestones{50, 80};
  double decay_factor = 0.1;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  std::size_t batch_size = 32;

  void validate() const;
};

// initial_lr * decay_factor ^ (number of milestones <= epoch)
double learning_rate(const SgdConfig& config, int epoch);

// Velocity buffers for one network, shaped lazily on first use.
struct MomentumState {
  NetworkGradients velocity;
};

// p <- p - lr(epoch) * v,  v <- momentum * v + g. Frozen layers are never
// written. A gradient set that does not line up with the trainable layers is
// a contract violation.
void sgd_step(Network& network, const NetworkGradients& grads, int epoch, const SgdConfig& config,
              MomentumState& state);

}  // namespace mea::nn
