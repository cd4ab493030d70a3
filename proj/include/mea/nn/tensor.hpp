#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace mea::nn {

// Dense row-major array of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  // Row view of a rank-2 tensor.
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool has_grad() const { return grad_.has_value(); }
  void enable_grad();
  void drop_grad() { grad_.reset(); }
  std::span<double> grad();
  std::span<const double> grad() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

}  // namespace mea::nn
