#include "mea/nn/network.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "mea/errors.hpp"
#include "mea/simd/kernels.hpp"

namespace mea::nn {
namespace {

std::uint64_t next_network_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

std::string_view activation_name(Activation a) {
  return a == Activation::kRelu ? "relu" : "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

DenseLayer::DenseLayer(Tensor w, Tensor b, Activation act, bool is_frozen)
    : weights(std::move(w)), bias(std::move(b)), activation(act), frozen(is_frozen) {
  if (weights.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ShapeError("dense layer needs weights (out x in) and bias (out)");
  }
}

DenseLayer DenseLayer::random(std::size_t in, std::size_t out, Activation act,
                              std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({out, in});
  for (double& v : w.values()) v = dist(rng);
  return DenseLayer(std::move(w), Tensor({out}), act);
}

std::size_t NetworkGradients::tensor_count() const {
  std::size_t n = 0;
  for (const auto& slot : layers) n += slot ? 2 : 0;
  return n;
}

void NetworkGradients::scale(double factor) {
  for (auto& slot : layers) {
    if (!slot) continue;
    for (double& v : slot->weights) v *= factor;
    for (double& v : slot->bias) v *= factor;
  }
}

Network::Network(std::size_t input_dim, std::vector<DenseLayer> layers)
    : input_dim_(input_dim), layers_(std::move(layers)), id_(next_network_id()) {
  if (input_dim_ == 0) throw ShapeError("network input dimension must be positive");
  std::size_t width = input_dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].in_dim() != width) {
      throw ShapeError("layer " + std::to_string(i) + " expects " +
                       std::to_string(layers_[i].in_dim()) + " inputs but receives " +
                       std::to_string(width));
    }
    width = layers_[i].out_dim();
  }
}

Network Network::random(std::size_t input_dim, std::span<const std::size_t> widths,
                        std::span<const Activation> activations, std::mt19937_64& rng) {
  if (widths.size() != activations.size()) {
    throw ConfigError("one activation per layer width is required");
  }
  std::vector<DenseLayer> layers;
  std::size_t in = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0) throw ConfigError("layer widths must be positive");
    layers.push_back(DenseLayer::random(in, widths[i], activations[i], rng));
    in = widths[i];
  }
  return Network(input_dim, std::move(layers));
}

Network::Network(const Network& other)
    : input_dim_(other.input_dim_), layers_(other.layers_), id_(next_network_id()) {}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    input_dim_ = other.input_dim_;
    layers_ = other.layers_;
    id_ = next_network_id();
    generation_ = 0;
  }
  return *this;
}

std::size_t Network::output_dim() const {
  return layers_.empty() ? input_dim_ : layers_.back().out_dim();
}

DenseLayer& Network::mutable_layer(std::size_t i) {
  ++generation_;
  return layers_.at(i);
}

void Network::freeze() {
  for (auto& layer : layers_) layer.frozen = true;
}

bool Network::all_frozen() const {
  for (const auto& layer : layers_) {
    if (!layer.frozen) return false;
  }
  return true;
}

bool Network::any_trainable() const { return !all_frozen(); }

std::size_t Network::param_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.param_count();
  return n;
}

std::size_t Network::macs() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.macs();
  return n;
}

namespace {

void dense_apply(const DenseLayer& layer, std::span<const double> in, std::vector<double>& pre,
                 std::vector<double>& out) {
  const std::size_t n_out = layer.out_dim();
  const std::size_t n_in = layer.in_dim();
  const auto& kernels = simd::active();
  const double* w = layer.weights.values().data();
  pre.resize(n_out);
  out.resize(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    pre[o] = kernels.dot(w + o * n_in, in.data(), n_in) + layer.bias[o];
    out[o] = (layer.activation == Activation::kRelu && pre[o] <= 0.0) ? 0.0 : pre[o];
  }
}

}  // namespace

std::vector<double> Network::predict(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw ShapeError("network expects " + std::to_string(input_dim_) + " inputs, got " +
                     std::to_string(x.size()));
  }
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> pre;
  std::vector<double> next;
  for (const auto& layer : layers_) {
    dense_apply(layer, current, pre, next);
    current.swap(next);
  }
  return current;
}

ForwardTrace Network::forward(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw ShapeError("network expects " + std::to_string(input_dim_) + " inputs, got " +
                     std::to_string(x.size()));
  }
  ForwardTrace trace;
  trace.network_id = id_;
  trace.generation = generation_;
  trace.inputs.reserve(layers_.size());
  trace.preactivations.resize(layers_.size());
  std::vector<double> current(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    trace.inputs.push_back(current);
    dense_apply(layers_[i], current, trace.preactivations[i], next);
    current.swap(next);
  }
  trace.output = std::move(current);
  return trace;
}

NetworkGradients Network::zero_gradients() const {
  NetworkGradients grads;
  grads.layers.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].frozen) continue;
    grads.layers[i] = LayerGradient{std::vector<double>(layers_[i].weights.size(), 0.0),
                                    std::vector<double>(layers_[i].bias.size(), 0.0)};
  }
  return grads;
}

void Network::check_trace(const ForwardTrace& trace) const {
  if (trace.network_id != id_ || trace.generation != generation_ ||
      trace.inputs.size() != layers_.size()) {
    throw ContractViolation("forward trace is stale or belongs to a different network");
  }
}

std::vector<double> Network::backward_into(const ForwardTrace& trace,
                                           std::span<const double> output_grad,
                                           NetworkGradients& grads, bool want_input_grad) const {
  check_trace(trace);
  if (output_grad.size() != output_dim()) {
    throw ShapeError("output gradient has " + std::to_string(output_grad.size()) +
                     " entries, expected " + std::to_string(output_dim()));
  }
  if (grads.layers.size() != layers_.size()) {
    throw ContractViolation("gradient set is not aligned with the network");
  }

  // Lowest layer index that still needs a gradient; below it nothing is read.
  std::size_t stop = layers_.size();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!layers_[i].frozen) {
      stop = i;
      break;
    }
  }
  if (want_input_grad) stop = 0;

  const auto& kernels = simd::active();
  std::vector<double> upstream(output_grad.begin(), output_grad.end());
  std::vector<double> dz;
  for (std::size_t i = layers_.size(); i-- > stop;) {
    const DenseLayer& layer = layers_[i];
    const std::size_t n_out = layer.out_dim();
    const std::size_t n_in = layer.in_dim();
    const auto& pre = trace.preactivations[i];
    const auto& in = trace.inputs[i];

    dz.assign(upstream.begin(), upstream.end());
    if (layer.activation == Activation::kRelu) {
      for (std::size_t o = 0; o < n_out; ++o) {
        if (pre[o] <= 0.0) dz[o] = 0.0;
      }
    }

    if (!layer.frozen) {
      auto& slot = grads.layers[i];
      if (!slot || slot->weights.size() != layer.weights.size()) {
        throw ContractViolation("gradient slot missing for trainable layer " + std::to_string(i));
      }
      for (std::size_t o = 0; o < n_out; ++o) {
        if (dz[o] == 0.0) continue;
        kernels.axpy(dz[o], in.data(), slot->weights.data() + o * n_in, n_in);
        slot->bias[o] += dz[o];
      }
    }

    if (i == stop && !want_input_grad) break;
    upstream.assign(n_in, 0.0);
    const double* w = layer.weights.values().data();
    for (std::size_t o = 0; o < n_out; ++o) {
      if (dz[o] == 0.0) continue;
      kernels.axpy(dz[o], w + o * n_in, upstream.data(), n_in);
    }
  }
  if (!want_input_grad) return {};
  if (layers_.empty()) return std::vector<double>(output_grad.begin(), output_grad.end());
  return upstream;
}

NetworkGradients Network::backward(const ForwardTrace& trace,
                                   std::span<const double> output_grad) const {
  NetworkGradients grads = zero_gradients();
  backward_into(trace, output_grad, grads, false);
  return grads;
}

}  // namespace mea::nn
