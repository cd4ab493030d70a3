#include "mea/nn/tensor.hpp"

#include <functional>
#include <numeric>
#include <string>

#include "mea/errors.hpp"

namespace mea::nn {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const std::vector<std::size_t>& shape) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(shape_product(shape_), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (shape_product(shape_) != values_.size()) {
    throw ShapeError("tensor shape product " + std::to_string(shape_product(shape_)) +
                     " does not match " + std::to_string(values_.size()) + " values");
  }
}

std::span<double> Tensor::row(std::size_t r) {
  if (rank() != 2 || r >= shape_[0]) throw IndexError("row index out of range");
  return std::span<double>(values_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const {
  if (rank() != 2 || r >= shape_[0]) throw IndexError("row index out of range");
  return std::span<const double>(values_).subspan(r * shape_[1], shape_[1]);
}

double& Tensor::at(std::size_t r, std::size_t c) { return row(r)[c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return row(r)[c]; }

void Tensor::enable_grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
}

std::span<double> Tensor::grad() {
  if (!grad_) throw ContractViolation("tensor has no gradient buffer");
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) throw ContractViolation("tensor has no gradient buffer");
  return *grad_;
}

}  // namespace mea::nn
