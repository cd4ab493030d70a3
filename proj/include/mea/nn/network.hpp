#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "mea/nn/tensor.hpp"

namespace mea::nn {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1 };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Tensor weights;  // out x in
  Tensor bias;     // out
  Activation activation = Activation::kIdentity;
  bool frozen = false;

  DenseLayer() = default;
  DenseLayer(Tensor w, Tensor b, Activation act, bool is_frozen = false);

  // He-style fan-in uniform weights, zero bias.
  static DenseLayer random(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng);

  std::size_t in_dim() const { return weights.dim(1); }
  std::size_t out_dim() const { return weights.dim(0); }
  std::size_t param_count() const { return weights.size() + bias.size(); }
  std::size_t macs() const { return weights.size(); }

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights == b.weights && a.bias == b.bias && a.activation == b.activation &&
           a.frozen == b.frozen;
  }
};

struct LayerGradient {
  std::vector<double> weights;
  std::vector<double> bias;
};

// One slot per layer; frozen layers never get a slot.
struct NetworkGradients {
  std::vector<std::optional<LayerGradient>> layers;

  std::size_t tensor_count() const;
  bool empty() const { return tensor_count() == 0; }
  void scale(double factor);
};

// Cached intermediates of one forward pass, tied to the parameter generation
// they were computed with.
struct ForwardTrace {
  std::uint64_t network_id = 0;
  std::uint64_t generation = 0;
  std::vector<std::vector<double>> inputs;       // input to each layer
  std::vector<std::vector<double>> preactivations;
  std::vector<double> output;
};

// An ordered stack of dense layers. An empty stack is the identity map on
// input_dim values.
class Network {
 public:
  Network() = default;
  Network(std::size_t input_dim, std::vector<DenseLayer> layers);

  static Network random(std::size_t input_dim, std::span<const std::size_t> widths,
                        std::span<const Activation> activations, std::mt19937_64& rng);

  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<DenseLayer>& layers() const { return layers_; }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  // Mutable access invalidates outstanding traces.
  DenseLayer& mutable_layer(std::size_t i);

  void freeze();
  bool all_frozen() const;
  bool any_trainable() const;

  std::size_t param_count() const;
  std::size_t macs() const;
  std::uint64_t generation() const { return generation_; }
  void bump_generation() { ++generation_; }

  std::vector<double> predict(std::span<const double> x) const;
  ForwardTrace forward(std::span<const double> x) const;

  NetworkGradients zero_gradients() const;

  // Accumulates parameter gradients for non-frozen layers into `grads` and
  // returns d loss / d input when `want_input_grad` is set (empty otherwise).
  std::vector<double> backward_into(const ForwardTrace& trace, std::span<const double> output_grad,
                                    NetworkGradients& grads, bool want_input_grad = false) const;

  NetworkGradients backward(const ForwardTrace& trace, std::span<const double> output_grad) const;

  friend bool operator==(const Network& a, const Network& b) {
    return a.input_dim_ == b.input_dim_ && a.layers_ == b.layers_;
  }

 private:
  void check_trace(const ForwardTrace& trace) const;

  std::size_t input_dim_ = 0;
  std::vector<DenseLayer> layers_;
  std::uint64_t id_ = 0;
  std::uint64_t generation_ = 0;
};

}  // namespace mea::nn
