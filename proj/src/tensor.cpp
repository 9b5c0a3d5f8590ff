#include "rffi/tensor.hpp"

#include <algorithm>

#include "rffi/errors.hpp"

namespace rffi {

namespace {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw InvalidInputError("Tensor: data size does not match shape");
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void sgd_update(std::vector<ParamBlock>& params, double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd_update: learning rate must be > 0");
  for (auto& p : params) {
    if (!p.trainable) {
      p.zero_grad();
      continue;
    }
    for (std::size_t i = 0; i < p.values.size(); ++i)
      p.values[i] -= lr * p.grad[i];
    p.zero_grad();
  }
}

} // namespace rffi
