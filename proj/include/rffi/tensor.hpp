#ifndef RFFI_TENSOR_HPP
#define RFFI_TENSOR_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace rffi {

// Dense row-major tensor of doubles. Shape is a list of extents; data size
// always equals the product of the extents.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2-d and 3-d accessors; caller guarantees rank matches.
  double& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  void fill(double v);

private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// Named trainable buffer with a gradient accumulator of identical length.
struct ParamBlock {
  std::string name;
  std::vector<double> values;
  std::vector<double> grad;
  bool trainable = true;

  ParamBlock() = default;
  ParamBlock(std::string n, std::size_t size, bool train = true)
      : name(std::move(n)), values(size, 0.0), grad(size, 0.0),
        trainable(train) {}

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// values -= lr * grad, then grads are cleared. lr must be positive.
void sgd_update(std::vector<ParamBlock>& params, double lr);

} // namespace rffi

#endif
