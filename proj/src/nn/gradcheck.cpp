#include "mea/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mea/nn/functional.hpp"

namespace mea::nn {
namespace {

double loss_at(const Network& net, std::span<const double> x, std::size_t label) {
  return cross_entropy_loss(net.predict(x), label).loss;
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

GradCheckReport check_gradients(const Network& network, std::span<const double> x,
                                std::size_t label, double epsilon) {
  const ForwardTrace trace = network.forward(x);
  const CrossEntropy ce = cross_entropy_loss(trace.output, label);
  const NetworkGradients analytic = network.backward(trace, ce.grad);

  GradCheckReport report;
  Network probe = network;
  auto central = [&](double& param) {
    const double saved = param;
    param = saved + epsilon;
    const double up = loss_at(probe, x, label);
    param = saved - epsilon;
    const double down = loss_at(probe, x, label);
    param = saved;
    return (up - down) / (2.0 * epsilon);
  };

  for (std::size_t i = 0; i < network.depth(); ++i) {
    const auto& slot = analytic.layers[i];
    if (!slot) continue;
    DenseLayer& layer = probe.mutable_layer(i);
    for (std::size_t k = 0; k < slot->weights.size(); ++k) {
      report.max_relative_error = std::max(
          report.max_relative_error, relative_error(slot->weights[k], central(layer.weights[k])));
      ++report.parameters_checked;
    }
    for (std::size_t k = 0; k < slot->bias.size(); ++k) {
      report.max_relative_error = std::max(report.max_relative_error,
                                           relative_error(slot->bias[k], central(layer.bias[k])));
      ++report.parameters_checked;
    }
  }
  return report;
}

}  // namespace mea::nn
