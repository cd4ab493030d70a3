#include "mea/nn/sgd.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mea/errors.hpp"
#include "mea/simd/kernels.hpp"

namespace mea::nn {

void SgdConfig::validate() const {
  if (!(initial_lr > 0.0) || !std::isfinite(initial_lr)) {
    throw ConfigError("initial learning rate must be positive");
  }
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw ConfigError("learning-rate decay factor must lie in (0, 1)");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!std::is_sorted(milestones.begin(), milestones.end())) {
    throw ConfigError("learning-rate milestones must be sorted");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

double learning_rate(const SgdConfig& config, int epoch) {
  const auto passed = std::count_if(config.milestones.begin(), config.milestones.end(),
                                    [epoch](int m) { return m <= epoch; });
  return config.initial_lr * std::pow(config.decay_factor, static_cast<double>(passed));
}

void sgd_step(Network& network, const NetworkGradients& grads, int epoch, const SgdConfig& config,
              MomentumState& state) {
  const std::size_t depth = network.depth();
  if (grads.layers.size() != depth) {
    throw ContractViolation("gradient set has " + std::to_string(grads.layers.size()) +
                            " slots for a network of depth " + std::to_string(depth));
  }
  for (std::size_t i = 0; i < depth; ++i) {
    const DenseLayer& layer = network.layer(i);
    const auto& slot = grads.layers[i];
    if (layer.frozen && slot) {
      throw ContractViolation("gradient supplied for frozen layer " + std::to_string(i));
    }
    if (!layer.frozen && (!slot || slot->weights.size() != layer.weights.size() ||
                          slot->bias.size() != layer.bias.size())) {
      throw ContractViolation("gradient for layer " + std::to_string(i) + " is missing or misshapen");
    }
  }
  if (state.velocity.layers.size() != depth) state.velocity = network.zero_gradients();

  const double lr = learning_rate(config, epoch);
  const auto& kernels = simd::active();
  for (std::size_t i = 0; i < depth; ++i) {
    const auto& slot = grads.layers[i];
    if (!slot) continue;
    auto& vel = state.velocity.layers[i];
    if (!vel) vel = LayerGradient{std::vector<double>(slot->weights.size(), 0.0),
                                  std::vector<double>(slot->bias.size(), 0.0)};
    kernels.scale_add(config.momentum, slot->weights.data(), vel->weights.data(),
                      vel->weights.size());
    kernels.scale_add(config.momentum, slot->bias.data(), vel->bias.data(), vel->bias.size());
    DenseLayer& layer = network.mutable_layer(i);
    kernels.axpy(-lr, vel->weights.data(), layer.weights.values().data(), vel->weights.size());
    kernels.axpy(-lr, vel->bias.data(), layer.bias.values().data(), vel->bias.size());
  }
}

}  // namespace mea::nn
