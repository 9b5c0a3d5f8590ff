#ifndef RFFI_RIEI_HPP
#define RFFI_RIEI_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "rffi/layers.hpp"
#include "rffi/synth.hpp"
#include "rffi/tensor.hpp"

namespace rffi::riei {

// Layer stacks of the model. FED maps [n, 2, L] inputs to F_E + F_R
// features; the first F_E columns are the emitter-dependent part, the rest
// the receiver-dependent part. EC/RC are softmax-terminated dense heads over
// those parts. In baseline mode the full feature width feeds EC and there is
// no RC head.
struct Architecture {
  std::vector<LayerSpec> fed;
  std::vector<LayerSpec> ec;
  std::vector<LayerSpec> rc;
  std::size_t F_E = 32;
  std::size_t F_R = 32;
  std::size_t M = 4;
  std::size_t K = 3;
  bool baseline = false;

  static Architecture standard(std::size_t M, std::size_t K,
                               std::size_t F_E = 32, std::size_t F_R = 32);
  static Architecture baseline_arch(std::size_t M, std::size_t K,
                                    std::size_t F_E = 32,
                                    std::size_t F_R = 32);
  // Same stacks with every BatchNorm removed (federated equivalence tests).
  Architecture without_batchnorm() const;
};

struct RieiParams {
  Architecture arch;
  LayerStack fed;
  LayerStack ec;
  LayerStack rc;

  explicit RieiParams(Architecture a);
  RieiParams() = default;

  // Glorot init in stack order fed, ec, rc.
  void init(RngStream& rng);
  void zero_grads();
};

struct Batch {
  Tensor x;                   // [n, 2, L]
  std::vector<int> emitter;   // 1..M
  std::vector<int> receiver;  // 1..K
  std::size_t size() const { return emitter.size(); }
};

enum class Aggregation { Mean, Sum };

struct TrainConfig {
  double lambda1 = 1.2;
  double lambda2 = 1.2;
  double eta_F = 1e-4;
  double eta_E = 1e-4;
  double eta_R = 1e-4;
  std::size_t batch = 64;
  std::size_t epochs = 0;
  // Epochs trained with lambda1 = lambda2 = 0 before the disentanglement
  // losses engage; stabilizes the feature space on difficult draws.
  std::size_t warmup_epochs = 0;
  double epsilon_log = 1e-12;
  double epsilon_norm = 1e-12;
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::Mean;
  // Single-objective SGD on the combined loss instead of the alternating
  // scheme (kept behind a flag; not the supported acceptance path).
  bool joint_sgd = false;
};

void validate(const Architecture& arch, const TrainConfig& cfg);

struct FeaturePair {
  std::vector<double> z_emitter;
  std::vector<double> z_receiver;
};

// Forward passes. fed_forward returns the full feature matrix [n, F_E+F_R];
// split_features views it as per-sample pairs.
Tensor fed_forward(RieiParams& model, const Tensor& x, Mode mode);
std::vector<FeaturePair> split_features(const Architecture& arch,
                                        const Tensor& feats);
Tensor ec_forward(RieiParams& model, const Tensor& z, Mode mode);
Tensor rc_forward(RieiParams& model, const Tensor& z, Mode mode);

struct LossValues {
  double ce = 0.0;
  double ie = 0.0;
  double mi = 0.0;
};

// Loss evaluation without gradient side effects (grads untouched).
LossValues eval_losses(RieiParams& model, const Batch& batch,
                       const TrainConfig& cfg, Mode mode);
double loss_ce(RieiParams& model, const Batch& batch, const TrainConfig& cfg);
double loss_ie(RieiParams& model, const Batch& batch, const TrainConfig& cfg);
double loss_mi(RieiParams& model, const Batch& batch, const TrainConfig& cfg);

// Gradient accumulation without parameter updates (for the step functions
// and the finite-difference suite). ce_backward adds dL_CE/dtheta to every
// stack's grads and returns L_CE. feature_backward adds
// d(lambda1 L_MI - lambda2 L_IE)/dtheta_F to the FED grads only (EC/RC
// grads are cleared before returning) and returns the two loss values.
// When correct is non-null it receives the number of samples whose EC
// argmax (ties toward the smaller index) matches the emitter label at the
// pre-step point.
double ce_backward(RieiParams& model, const Batch& batch,
                   const TrainConfig& cfg, Mode mode,
                   std::size_t* correct = nullptr);
std::pair<double, double> feature_backward(RieiParams& model,
                                           const Batch& batch,
                                           const TrainConfig& cfg, Mode mode);

// One alternating iteration, Train mode. classifier_step updates theta_E,
// theta_R and theta_F from dL_CE evaluated at the pre-step point;
// feature_step then updates only theta_F from the combined MI/IE objective.
double classifier_step(RieiParams& model, const Batch& batch,
                       const TrainConfig& cfg,
                       std::size_t* correct = nullptr);
std::pair<double, double> feature_step(RieiParams& model, const Batch& batch,
                                       const TrainConfig& cfg);

struct EpochStats {
  double ce = 0.0;
  double ie = 0.0;
  double mi = 0.0;
  double train_acc = 0.0;
};

using EpochHook =
    std::function<void(std::size_t epoch, RieiParams& model)>;

// Epoch loop: shuffle, minibatches, classifier_step then feature_step (or a
// joint step when cfg.joint_sgd). forbid_receiver asserts train/test
// hygiene: a batch containing that receiver label is a contract violation.
std::vector<EpochStats> fit(RieiParams& model,
                            const std::vector<const synth::LabeledSample*>& train,
                            const TrainConfig& cfg, RngStream& rng,
                            const EpochHook& hook = nullptr,
                            int forbid_receiver = 0);

// CE-only training of a baseline-mode model (full feature width into EC).
std::vector<EpochStats> fit_baseline(
    RieiParams& model, const std::vector<const synth::LabeledSample*>& train,
    const TrainConfig& cfg, RngStream& rng, const EpochHook& hook = nullptr,
    int forbid_receiver = 0);

// Emitter labels (1..M), Infer mode, ties broken toward the smaller label.
std::vector<int> predict(RieiParams& model, const Tensor& x);
double accuracy(RieiParams& model, const Batch& batch);

// Tensor packing: frame i -> x[i, 0, :] = I, x[i, 1, :] = Q.
Batch make_batch(const std::vector<const synth::LabeledSample*>& samples);
Batch make_batch(const std::vector<synth::LabeledSample>& samples);

// Checkpoint file: "RIEI" magic, version, architecture record, then named
// blocks (parameters and BatchNorm running statistics) as little-endian
// 64-bit reals.
void save_checkpoint(const std::string& path, const RieiParams& model);
RieiParams load_checkpoint(const std::string& path);

} // namespace rffi::riei

#endif
