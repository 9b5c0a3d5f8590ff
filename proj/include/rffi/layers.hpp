#ifndef RFFI_LAYERS_HPP
#define RFFI_LAYERS_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "rffi/rng.hpp"
#include "rffi/tensor.hpp"

namespace rffi {

enum class LayerKind { Dense, Conv1D, ReLU, BatchNorm1D, GlobalAvgPool, Softmax };

enum class Mode { Train, Infer };

struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;

  static LayerSpec dense(std::size_t in, std::size_t out);
  static LayerSpec conv1d(std::size_t in, std::size_t out, std::size_t k,
                          std::size_t s);
  static LayerSpec relu();
  static LayerSpec batchnorm(std::size_t ch);
  static LayerSpec gap();
  static LayerSpec softmax();
};

// One layer instance: spec, parameters, BatchNorm running statistics, and
// the caches written by the latest forward pass.
struct Layer {
  LayerSpec spec;
  std::vector<ParamBlock> params;       // dense/conv: {w, b}; bn: {gamma, beta}
  std::vector<double> running_mean;     // bn only
  std::vector<double> running_var;

  Tensor cache_x;
  Tensor cache_y;                       // softmax output
  Tensor cache_xhat;                    // bn normalized activations
  std::vector<double> cache_mean;       // bn stats used in the forward pass
  std::vector<double> cache_var;
  Mode cache_mode = Mode::Train;
};

// Sequential stack with explicit per-kind backward passes. BatchNorm uses
// batch statistics in Train mode (momentum 0.1 running update, biased
// variance, eps 1e-5) and running statistics in Infer mode. An empty stack
// is the identity.
class LayerStack {
public:
  static constexpr double kBnEps = 1e-5;
  static constexpr double kBnMomentum = 0.1;

  LayerStack() = default;
  explicit LayerStack(std::vector<LayerSpec> specs, std::string name = "stack");

  // Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases,
  // gamma 1, beta 0. Draw order is fixed by layer order and buffer index.
  void init_params(RngStream& rng);

  Tensor forward(const Tensor& x, Mode mode);
  // Consumes the caches of the latest forward. Accumulates parameter
  // gradients with += and returns the input gradient.
  Tensor backward(const Tensor& dy);

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<ParamBlock*> param_blocks();
  std::size_t param_count() const;
  void zero_grads();
  const std::string& name() const { return name_; }

  // Flattened copies of all trainable values / grads, in block order.
  std::vector<double> flatten_values() const;
  std::vector<double> flatten_grads() const;
  void assign_values(const std::vector<double>& flat);

private:
  std::vector<Layer> layers_;
  std::string name_;
};

// Central-difference gradient check. For each coordinate i in [0, n),
// perturbs values[i] by +-step, re-evaluates loss_fn, and compares
// (f+ - f-)/(2 step) against analytic[i]. Returns the maximum
// |analytic - numeric| / max(1e-8, |numeric|). step must be positive.
double finite_diff_check(const std::function<double()>& loss_fn,
                         double* values, const double* analytic,
                         std::size_t n, double step);

} // namespace rffi

#endif
