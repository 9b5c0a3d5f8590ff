#include "rffi/layers.hpp"

#include <cmath>

#include "rffi/errors.hpp"
#include "rffi/kernels.hpp"

namespace rffi {

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
  return {LayerKind::Dense, in, out, 0, 1};
}
LayerSpec LayerSpec::conv1d(std::size_t in, std::size_t out, std::size_t k,
                            std::size_t s) {
  return {LayerKind::Conv1D, in, out, k, s};
}
LayerSpec LayerSpec::relu() { return {LayerKind::ReLU, 0, 0, 0, 1}; }
LayerSpec LayerSpec::batchnorm(std::size_t ch) {
  return {LayerKind::BatchNorm1D, ch, ch, 0, 1};
}
LayerSpec LayerSpec::gap() { return {LayerKind::GlobalAvgPool, 0, 0, 0, 1}; }
LayerSpec LayerSpec::softmax() { return {LayerKind::Softmax, 0, 0, 0, 1}; }

LayerStack::LayerStack(std::vector<LayerSpec> specs, std::string name)
    : name_(std::move(name)) {
  for (const LayerSpec& s : specs) {
    Layer layer;
    layer.spec = s;
    const std::string prefix = name_ + ".l" + std::to_string(layers_.size());
    switch (s.kind) {
      case LayerKind::Dense:
        if (s.in_ch == 0 || s.out_ch == 0)
          throw ConfigError("dense layer needs positive in/out sizes");
        layer.params.emplace_back(prefix + ".w", s.out_ch * s.in_ch);
        layer.params.emplace_back(prefix + ".b", s.out_ch);
        break;
      case LayerKind::Conv1D:
        if (s.in_ch == 0 || s.out_ch == 0 || s.kernel == 0 || s.stride == 0)
          throw ConfigError("conv1d layer needs positive dims and stride");
        layer.params.emplace_back(prefix + ".w", s.out_ch * s.in_ch * s.kernel);
        layer.params.emplace_back(prefix + ".b", s.out_ch);
        break;
      case LayerKind::BatchNorm1D:
        if (s.in_ch == 0) throw ConfigError("batchnorm layer needs channels");
        layer.params.emplace_back(prefix + ".gamma", s.in_ch);
        layer.params.emplace_back(prefix + ".beta", s.in_ch);
        std::fill(layer.params[0].values.begin(), layer.params[0].values.end(),
                  1.0);
        layer.running_mean.assign(s.in_ch, 0.0);
        layer.running_var.assign(s.in_ch, 1.0);
        break;
      default:
        break;
    }
    layers_.push_back(std::move(layer));
  }
}

void LayerStack::init_params(RngStream& rng) {
  for (Layer& layer : layers_) {
    const LayerSpec& s = layer.spec;
    if (s.kind == LayerKind::Dense || s.kind == LayerKind::Conv1D) {
      const double fan_in = static_cast<double>(
          s.kind == LayerKind::Dense ? s.in_ch : s.in_ch * s.kernel);
      const double fan_out = static_cast<double>(
          s.kind == LayerKind::Dense ? s.out_ch : s.out_ch * s.kernel);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : layer.params[0].values) v = rng.uniform(-limit, limit);
      std::fill(layer.params[1].values.begin(), layer.params[1].values.end(),
                0.0);
    } else if (s.kind == LayerKind::BatchNorm1D) {
      std::fill(layer.params[0].values.begin(), layer.params[0].values.end(),
                1.0);
      std::fill(layer.params[1].values.begin(), layer.params[1].values.end(),
                0.0);
      std::fill(layer.running_mean.begin(), layer.running_mean.end(), 0.0);
      std::fill(layer.running_var.begin(), layer.running_var.end(), 1.0);
    }
  }
}

namespace {

void expect(bool cond, const char* msg) {
  if (!cond) throw ConfigError(msg);
}

} // namespace

Tensor LayerStack::forward(const Tensor& x, Mode mode) {
  Tensor cur = x;
  for (Layer& layer : layers_) {
    const LayerSpec& s = layer.spec;
    layer.cache_x = cur;
    layer.cache_mode = mode;
    switch (s.kind) {
      case LayerKind::Dense: {
        expect(cur.rank() == 2 && cur.dim(1) == s.in_ch,
               "dense: input must be [B, in]");
        Tensor y({cur.dim(0), s.out_ch});
        kernels::dense_forward(cur.data(), layer.params[0].values.data(),
                               layer.params[1].values.data(), y.data(),
                               cur.dim(0), s.in_ch, s.out_ch);
        cur = std::move(y);
        break;
      }
      case LayerKind::Conv1D: {
        expect(cur.rank() == 3 && cur.dim(1) == s.in_ch &&
                   cur.dim(2) >= s.kernel,
               "conv1d: input must be [B, in, L>=kernel]");
        const std::size_t lout = (cur.dim(2) - s.kernel) / s.stride + 1;
        Tensor y({cur.dim(0), s.out_ch, lout});
        kernels::conv1d_forward(cur.data(), layer.params[0].values.data(),
                                layer.params[1].values.data(), y.data(),
                                cur.dim(0), s.in_ch, cur.dim(2), s.out_ch,
                                s.kernel, s.stride);
        cur = std::move(y);
        break;
      }
      case LayerKind::ReLU: {
        Tensor y(cur.shape());
        kernels::relu_forward(cur.data(), y.data(), cur.size());
        cur = std::move(y);
        break;
      }
      case LayerKind::BatchNorm1D: {
        expect((cur.rank() == 3 || cur.rank() == 2) && cur.dim(1) == s.in_ch,
               "batchnorm: input must be [B, C] or [B, C, L]");
        const std::size_t B = cur.dim(0);
        const std::size_t C = s.in_ch;
        const std::size_t L = cur.rank() == 3 ? cur.dim(2) : 1;
        layer.cache_mean.assign(C, 0.0);
        layer.cache_var.assign(C, 0.0);
        if (mode == Mode::Train) {
          kernels::batchnorm_stats(cur.data(), B, C, L,
                                   layer.cache_mean.data(),
                                   layer.cache_var.data());
          for (std::size_t c = 0; c < C; ++c) {
            layer.running_mean[c] = (1.0 - kBnMomentum) * layer.running_mean[c] +
                                    kBnMomentum * layer.cache_mean[c];
            layer.running_var[c] = (1.0 - kBnMomentum) * layer.running_var[c] +
                                   kBnMomentum * layer.cache_var[c];
          }
        } else {
          layer.cache_mean = layer.running_mean;
          layer.cache_var = layer.running_var;
        }
        Tensor y(cur.shape());
        layer.cache_xhat = Tensor(cur.shape());
        kernels::batchnorm_forward(cur.data(), layer.params[0].values.data(),
                                   layer.params[1].values.data(),
                                   layer.cache_mean.data(),
                                   layer.cache_var.data(), kBnEps, y.data(),
                                   layer.cache_xhat.data(), B, C, L);
        cur = std::move(y);
        break;
      }
      case LayerKind::GlobalAvgPool: {
        expect(cur.rank() == 3, "gap: input must be [B, C, L]");
        Tensor y({cur.dim(0), cur.dim(1)});
        kernels::gap_forward(cur.data(), y.data(), cur.dim(0), cur.dim(1),
                             cur.dim(2));
        cur = std::move(y);
        break;
      }
      case LayerKind::Softmax: {
        expect(cur.rank() == 2, "softmax: input must be [B, N]");
        Tensor y(cur.shape());
        kernels::softmax_forward(cur.data(), y.data(), cur.dim(0), cur.dim(1));
        layer.cache_y = y;
        cur = std::move(y);
        break;
      }
    }
  }
  return cur;
}

Tensor LayerStack::backward(const Tensor& dy) {
  Tensor cur = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    Layer& layer = *it;
    const LayerSpec& s = layer.spec;
    const Tensor& x = layer.cache_x;
    switch (s.kind) {
      case LayerKind::Dense: {
        expect(cur.rank() == 2 && cur.dim(0) == x.dim(0) &&
                   cur.dim(1) == s.out_ch,
               "dense backward: gradient shape mismatch");
        Tensor dx(x.shape());
        kernels::dense_backward(x.data(), layer.params[0].values.data(),
                                cur.data(), dx.data(),
                                layer.params[0].grad.data(),
                                layer.params[1].grad.data(), x.dim(0), s.in_ch,
                                s.out_ch);
        cur = std::move(dx);
        break;
      }
      case LayerKind::Conv1D: {
        Tensor dx(x.shape());
        kernels::conv1d_backward(x.data(), layer.params[0].values.data(),
                                 cur.data(), dx.data(),
                                 layer.params[0].grad.data(),
                                 layer.params[1].grad.data(), x.dim(0),
                                 s.in_ch, x.dim(2), s.out_ch, s.kernel,
                                 s.stride);
        cur = std::move(dx);
        break;
      }
      case LayerKind::ReLU: {
        Tensor dx(x.shape());
        kernels::relu_backward(x.data(), cur.data(), dx.data(), x.size());
        cur = std::move(dx);
        break;
      }
      case LayerKind::BatchNorm1D: {
        const std::size_t B = x.dim(0);
        const std::size_t C = s.in_ch;
        const std::size_t L = x.rank() == 3 ? x.dim(2) : 1;
        Tensor dx(x.shape());
        kernels::batchnorm_backward(
            layer.cache_xhat.data(), layer.params[0].values.data(),
            layer.cache_var.data(), kBnEps, cur.data(), dx.data(),
            layer.params[0].grad.data(), layer.params[1].grad.data(), B, C, L,
            layer.cache_mode == Mode::Train);
        cur = std::move(dx);
        break;
      }
      case LayerKind::GlobalAvgPool: {
        Tensor dx(x.shape());
        kernels::gap_backward(cur.data(), dx.data(), x.dim(0), x.dim(1),
                              x.dim(2));
        cur = std::move(dx);
        break;
      }
      case LayerKind::Softmax: {
        Tensor dx(x.shape());
        kernels::softmax_backward(layer.cache_y.data(), cur.data(), dx.data(),
                                  x.dim(0), x.dim(1));
        cur = std::move(dx);
        break;
      }
    }
  }
  return cur;
}

std::vector<ParamBlock*> LayerStack::param_blocks() {
  std::vector<ParamBlock*> out;
  for (Layer& layer : layers_)
    for (ParamBlock& p : layer.params) out.push_back(&p);
  return out;
}

std::size_t LayerStack::param_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_)
    for (const ParamBlock& p : layer.params) n += p.values.size();
  return n;
}

void LayerStack::zero_grads() {
  for (Layer& layer : layers_)
    for (ParamBlock& p : layer.params) p.zero_grad();
}

std::vector<double> LayerStack::flatten_values() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const Layer& layer : layers_)
    for (const ParamBlock& p : layer.params)
      flat.insert(flat.end(), p.values.begin(), p.values.end());
  return flat;
}

std::vector<double> LayerStack::flatten_grads() const {
  std::vector<double> flat;
  flat.reserve(param_count());
  for (const Layer& layer : layers_)
    for (const ParamBlock& p : layer.params)
      flat.insert(flat.end(), p.grad.begin(), p.grad.end());
  return flat;
}

void LayerStack::assign_values(const std::vector<double>& flat) {
  if (flat.size() != param_count())
    throw ConfigError("assign_values: size mismatch for stack " + name_);
  std::size_t off = 0;
  for (Layer& layer : layers_)
    for (ParamBlock& p : layer.params) {
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                flat.begin() + static_cast<std::ptrdiff_t>(off + p.values.size()),
                p.values.begin());
      off += p.values.size();
    }
}

double finite_diff_check(const std::function<double()>& loss_fn,
                         double* values, const double* analytic,
                         std::size_t n, double step) {
  if (!(step > 0.0))
    throw InvalidInputError("finite_diff_check: step must be positive");
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double orig = values[i];
    values[i] = orig + step;
    const double fp = loss_fn();
    values[i] = orig - step;
    const double fm = loss_fn();
    values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * step);
    const double rel =
        std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
    if (rel > worst) worst = rel;
  }
  return worst;
}

} // namespace rffi
