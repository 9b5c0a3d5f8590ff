#include "rffi/riei.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "bytes.hpp"
#include "rffi/errors.hpp"

namespace rffi::riei {

namespace {

double agg_factor(const TrainConfig& cfg, std::size_t n) {
  return cfg.aggregation == Aggregation::Mean ? 1.0 / static_cast<double>(n)
                                              : 1.0;
}

void check_labels(const Batch& batch, const Architecture& arch) {
  if (batch.emitter.size() != batch.receiver.size() ||
      batch.emitter.size() != batch.x.dim(0))
    throw InvalidInputError("batch: label/input length mismatch");
  for (std::size_t i = 0; i < batch.emitter.size(); ++i) {
    if (batch.emitter[i] < 1 || batch.emitter[i] > static_cast<int>(arch.M))
      throw InvalidInputError("batch: emitter label out of range");
    if (batch.receiver[i] < 1 || batch.receiver[i] > static_cast<int>(arch.K))
      throw InvalidInputError("batch: receiver label out of range");
  }
}

// Per-sample |<z_e, z_r>| / max(eps, |z_e||z_r|) summed over the batch.
// When dfeats is given, coeff * d(term)/d(feats) is accumulated into it.
// The subgradient of |dot| at dot = 0 is taken as 0.
double mi_terms(const Tensor& feats, std::size_t F_E, std::size_t F_R,
                double eps_norm, double coeff, Tensor* dfeats) {
  const std::size_t n = feats.dim(0);
  const std::size_t F = F_E + F_R;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* ze = feats.data() + i * F;
    const double* zr = ze + F_E;
    double dot = 0.0, ne2 = 0.0, nr2 = 0.0;
    for (std::size_t j = 0; j < F_E; ++j) dot += ze[j] * zr[j];
    for (std::size_t j = 0; j < F_E; ++j) ne2 += ze[j] * ze[j];
    for (std::size_t j = 0; j < F_R; ++j) nr2 += zr[j] * zr[j];
    const double prod = std::sqrt(ne2) * std::sqrt(nr2);
    const double den = std::max(eps_norm, prod);
    const double adot = std::abs(dot);
    total += adot / den;
    if (!dfeats) continue;
    const double sgn = (dot > 0.0) ? 1.0 : (dot < 0.0 ? -1.0 : 0.0);
    double* dze = dfeats->data() + i * F;
    double* dzr = dze + F_E;
    if (prod > eps_norm) {
      const double fe = adot / (den * ne2);
      const double fr = adot / (den * nr2);
      for (std::size_t j = 0; j < F_E; ++j) {
        dze[j] += coeff * (sgn * zr[j] / den - fe * ze[j]);
        dzr[j] += coeff * (sgn * ze[j] / den - fr * zr[j]);
      }
    } else {
      for (std::size_t j = 0; j < F_E; ++j) {
        dze[j] += coeff * sgn * zr[j] / den;
        dzr[j] += coeff * sgn * ze[j] / den;
      }
    }
  }
  return total;
}

// Entropy of each probability row, summed; optionally writes
// coeff * dH/dp into dprobs (overwrites).
double entropy_terms(const Tensor& probs, double eps_log, double coeff,
                     Tensor* dprobs) {
  const std::size_t n = probs.dim(0);
  const std::size_t C = probs.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      const double p = probs.at2(i, j);
      const double lg = std::log(p + eps_log);
      total -= p * lg;
      if (dprobs) dprobs->at2(i, j) = coeff * (-(lg + p / (p + eps_log)));
    }
  return total;
}

Tensor slice_cols(const Tensor& feats, std::size_t from, std::size_t width) {
  const std::size_t n = feats.dim(0);
  Tensor out({n, width});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < width; ++j)
      out.at2(i, j) = feats.at2(i, from + j);
  return out;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw TrainingDivergedError(std::string(what) + " is not finite");
}

void update_blocks(LayerStack& stack, double lr) {
  if (!(lr > 0.0)) throw ConfigError("update: stepsize must be > 0");
  for (ParamBlock* p : stack.param_blocks()) {
    if (p->trainable)
      for (std::size_t i = 0; i < p->values.size(); ++i)
        p->values[i] -= lr * p->grad[i];
    p->zero_grad();
  }
}

// Shared accumulation for feature_backward and the joint step.
std::pair<double, double> feature_backward_impl(RieiParams& model,
                                                const Batch& batch,
                                                const TrainConfig& cfg,
                                                Mode mode,
                                                bool keep_head_grads) {
  const Architecture& arch = model.arch;
  const std::size_t n = batch.size();
  const double a = agg_factor(cfg, n);
  const Tensor feats = model.fed.forward(batch.x, mode);
  Tensor dfeats(feats.shape());

  const double mi = a * mi_terms(feats, arch.F_E, arch.F_R, cfg.epsilon_norm,
                                 cfg.lambda1 * a, &dfeats);

  // Cross feeds: receiver features into EC, emitter features into RC. The
  // objective is lambda1 L_MI - lambda2 L_IE; head parameter gradients from
  // the cross feeds are discarded unless the joint variant asks otherwise.
  const Tensor z_e = slice_cols(feats, 0, arch.F_E);
  const Tensor z_r = slice_cols(feats, arch.F_E, arch.F_R);
  const Tensor pe_cross = model.ec.forward(z_r, mode);
  const Tensor pr_cross = model.rc.forward(z_e, mode);
  Tensor dpe(pe_cross.shape());
  Tensor dpr(pr_cross.shape());
  double ie = entropy_terms(pe_cross, cfg.epsilon_log, -cfg.lambda2 * a, &dpe);
  ie += entropy_terms(pr_cross, cfg.epsilon_log, -cfg.lambda2 * a, &dpr);
  ie *= a;

  const Tensor dz_r = model.ec.backward(dpe);
  const Tensor dz_e = model.rc.backward(dpr);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < arch.F_E; ++j) {
      dfeats.at2(i, j) += dz_e.at2(i, j);
      dfeats.at2(i, arch.F_E + j) += dz_r.at2(i, j);
    }
  model.fed.backward(dfeats);
  if (!keep_head_grads) {
    model.ec.zero_grads();
    model.rc.zero_grads();
  }
  return {mi, ie};
}

} // namespace

Architecture Architecture::standard(std::size_t M, std::size_t K,
                                    std::size_t F_E, std::size_t F_R) {
  Architecture a;
  a.M = M;
  a.K = K;
  a.F_E = F_E;
  a.F_R = F_R;
  a.fed = {LayerSpec::conv1d(2, 16, 7, 2), LayerSpec::batchnorm(16),
           LayerSpec::relu(), LayerSpec::conv1d(16, 32, 5, 2),
           LayerSpec::batchnorm(32),        LayerSpec::relu(),
           LayerSpec::conv1d(32, 32, 3, 2), LayerSpec::batchnorm(32),
           LayerSpec::relu(),               LayerSpec::gap(),
           LayerSpec::dense(32, F_E + F_R)};
  a.ec = {LayerSpec::dense(F_E, 32), LayerSpec::relu(),
          LayerSpec::dense(32, 32),  LayerSpec::relu(),
          LayerSpec::dense(32, M),   LayerSpec::softmax()};
  a.rc = {LayerSpec::dense(F_R, 32), LayerSpec::relu(),
          LayerSpec::dense(32, 32),  LayerSpec::relu(),
          LayerSpec::dense(32, K),   LayerSpec::softmax()};
  return a;
}

Architecture Architecture::baseline_arch(std::size_t M, std::size_t K,
                                         std::size_t F_E, std::size_t F_R) {
  Architecture a = standard(M, K, F_E, F_R);
  a.ec[0] = LayerSpec::dense(F_E + F_R, 32);
  a.rc.clear();
  a.baseline = true;
  return a;
}

Architecture Architecture::without_batchnorm() const {
  Architecture a = *this;
  const auto strip = [](std::vector<LayerSpec>& specs) {
    specs.erase(std::remove_if(specs.begin(), specs.end(),
                               [](const LayerSpec& s) {
                                 return s.kind == LayerKind::BatchNorm1D;
                               }),
                specs.end());
  };
  strip(a.fed);
  strip(a.ec);
  strip(a.rc);
  return a;
}

RieiParams::RieiParams(Architecture a)
    : arch(std::move(a)), fed(arch.fed, "fed"), ec(arch.ec, "ec"),
      rc(arch.rc, "rc") {}

void RieiParams::init(RngStream& rng) {
  fed.init_params(rng);
  ec.init_params(rng);
  rc.init_params(rng);
}

void RieiParams::zero_grads() {
  fed.zero_grads();
  ec.zero_grads();
  rc.zero_grads();
}

void validate(const Architecture& arch, const TrainConfig& cfg) {
  if (!(cfg.eta_F > 0.0 && cfg.eta_E > 0.0 && cfg.eta_R > 0.0))
    throw ConfigError("train: stepsizes must be positive");
  if (cfg.batch < 2) throw ConfigError("train: batch must be >= 2");
  if (!(cfg.epsilon_log > 0.0 && cfg.epsilon_norm > 0.0))
    throw ConfigError("train: epsilons must be positive");
  if (cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0)
    throw ConfigError("train: lambda1, lambda2 must be nonnegative");
  if (!arch.baseline && (cfg.lambda1 > 0.0 || cfg.lambda2 > 0.0) &&
      arch.F_E != arch.F_R)
    throw ConfigError("train: MI/IE losses require F_E == F_R");
}

Tensor fed_forward(RieiParams& model, const Tensor& x, Mode mode) {
  return model.fed.forward(x, mode);
}

std::vector<FeaturePair> split_features(const Architecture& arch,
                                        const Tensor& feats) {
  if (feats.rank() != 2 || feats.dim(1) != arch.F_E + arch.F_R)
    throw ConfigError("split_features: width mismatch");
  std::vector<FeaturePair> out(feats.dim(0));
  for (std::size_t i = 0; i < feats.dim(0); ++i) {
    out[i].z_emitter.assign(feats.data() + i * feats.dim(1),
                            feats.data() + i * feats.dim(1) + arch.F_E);
    out[i].z_receiver.assign(
        feats.data() + i * feats.dim(1) + arch.F_E,
        feats.data() + (i + 1) * feats.dim(1));
  }
  return out;
}

Tensor ec_forward(RieiParams& model, const Tensor& z, Mode mode) {
  return model.ec.forward(z, mode);
}

Tensor rc_forward(RieiParams& model, const Tensor& z, Mode mode) {
  return model.rc.forward(z, mode);
}

LossValues eval_losses(RieiParams& model, const Batch& batch,
                       const TrainConfig& cfg, Mode mode) {
  const Architecture& arch = model.arch;
  check_labels(batch, arch);
  const std::size_t n = batch.size();
  const double a = agg_factor(cfg, n);
  LossValues out;
  const Tensor feats = model.fed.forward(batch.x, mode);

  if (arch.baseline) {
    const Tensor pe = model.ec.forward(feats, mode);
    for (std::size_t i = 0; i < n; ++i)
      out.ce -= std::log(
          pe.at2(i, static_cast<std::size_t>(batch.emitter[i] - 1)) +
          cfg.epsilon_log);
    out.ce *= a;
    return out;
  }

  const Tensor z_e = slice_cols(feats, 0, arch.F_E);
  const Tensor z_r = slice_cols(feats, arch.F_E, arch.F_R);
  const Tensor pe = model.ec.forward(z_e, mode);
  const Tensor pr = model.rc.forward(z_r, mode);
  for (std::size_t i = 0; i < n; ++i) {
    out.ce -= std::log(
        pe.at2(i, static_cast<std::size_t>(batch.emitter[i] - 1)) +
        cfg.epsilon_log);
    out.ce -= std::log(
        pr.at2(i, static_cast<std::size_t>(batch.receiver[i] - 1)) +
        cfg.epsilon_log);
  }
  out.ce *= a;

  out.mi = a * mi_terms(feats, arch.F_E, arch.F_R, cfg.epsilon_norm, 0.0,
                        nullptr);

  const Tensor pe_cross = model.ec.forward(z_r, mode);
  const Tensor pr_cross = model.rc.forward(z_e, mode);
  out.ie = entropy_terms(pe_cross, cfg.epsilon_log, 0.0, nullptr) +
           entropy_terms(pr_cross, cfg.epsilon_log, 0.0, nullptr);
  out.ie *= a;
  return out;
}

double loss_ce(RieiParams& model, const Batch& batch, const TrainConfig& cfg) {
  return eval_losses(model, batch, cfg, Mode::Infer).ce;
}
double loss_ie(RieiParams& model, const Batch& batch, const TrainConfig& cfg) {
  return eval_losses(model, batch, cfg, Mode::Infer).ie;
}
double loss_mi(RieiParams& model, const Batch& batch, const TrainConfig& cfg) {
  return eval_losses(model, batch, cfg, Mode::Infer).mi;
}

namespace {

std::size_t count_correct(const Tensor& pe, const std::vector<int>& emitter) {
  const std::size_t n = emitter.size();
  const std::size_t M = pe.shape()[1];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < M; ++j)
      if (pe.at2(i, j) > pe.at2(i, best)) best = j;
    if (best == static_cast<std::size_t>(emitter[i] - 1)) ++correct;
  }
  return correct;
}

}  // namespace

double ce_backward(RieiParams& model, const Batch& batch,
                   const TrainConfig& cfg, Mode mode, std::size_t* correct) {
  const Architecture& arch = model.arch;
  check_labels(batch, arch);
  const std::size_t n = batch.size();
  const double a = agg_factor(cfg, n);
  const Tensor feats = model.fed.forward(batch.x, mode);
  double loss = 0.0;

  if (arch.baseline) {
    const Tensor pe = model.ec.forward(feats, mode);
    if (correct) *correct = count_correct(pe, batch.emitter);
    Tensor dpe(pe.shape());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t y = static_cast<std::size_t>(batch.emitter[i] - 1);
      loss -= std::log(pe.at2(i, y) + cfg.epsilon_log);
      dpe.at2(i, y) = -a / (pe.at2(i, y) + cfg.epsilon_log);
    }
    const Tensor dfeats = model.ec.backward(dpe);
    model.fed.backward(dfeats);
    return a * loss;
  }

  const Tensor z_e = slice_cols(feats, 0, arch.F_E);
  const Tensor z_r = slice_cols(feats, arch.F_E, arch.F_R);
  const Tensor pe = model.ec.forward(z_e, mode);
  const Tensor pr = model.rc.forward(z_r, mode);
  if (correct) *correct = count_correct(pe, batch.emitter);
  Tensor dpe(pe.shape());
  Tensor dpr(pr.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = static_cast<std::size_t>(batch.emitter[i] - 1);
    const std::size_t k = static_cast<std::size_t>(batch.receiver[i] - 1);
    loss -= std::log(pe.at2(i, y) + cfg.epsilon_log);
    loss -= std::log(pr.at2(i, k) + cfg.epsilon_log);
    dpe.at2(i, y) = -a / (pe.at2(i, y) + cfg.epsilon_log);
    dpr.at2(i, k) = -a / (pr.at2(i, k) + cfg.epsilon_log);
  }
  const Tensor dz_e = model.ec.backward(dpe);
  const Tensor dz_r = model.rc.backward(dpr);
  Tensor dfeats(feats.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < arch.F_E; ++j)
      dfeats.at2(i, j) = dz_e.at2(i, j);
    for (std::size_t j = 0; j < arch.F_R; ++j)
      dfeats.at2(i, arch.F_E + j) = dz_r.at2(i, j);
  }
  model.fed.backward(dfeats);
  return a * loss;
}

std::pair<double, double> feature_backward(RieiParams& model,
                                           const Batch& batch,
                                           const TrainConfig& cfg, Mode mode) {
  check_labels(batch, model.arch);
  return feature_backward_impl(model, batch, cfg, mode, false);
}

double classifier_step(RieiParams& model, const Batch& batch,
                       const TrainConfig& cfg, std::size_t* correct) {
  validate(model.arch, cfg);
  model.zero_grads();
  const double loss = ce_backward(model, batch, cfg, Mode::Train, correct);
  require_finite(loss, "L_CE");
  // All gradients were taken at the pre-step point; apply the three updates.
  update_blocks(model.ec, cfg.eta_E);
  if (!model.arch.baseline) update_blocks(model.rc, cfg.eta_R);
  update_blocks(model.fed, cfg.eta_F);
  return loss;
}

std::pair<double, double> feature_step(RieiParams& model, const Batch& batch,
                                       const TrainConfig& cfg) {
  validate(model.arch, cfg);
  if (model.arch.baseline)
    throw ConfigError("feature_step: baseline model has no feature objective");
  if (cfg.lambda1 == 0.0 && cfg.lambda2 == 0.0) return {0.0, 0.0};
  model.zero_grads();
  const auto [mi, ie] = feature_backward(model, batch, cfg, Mode::Train);
  require_finite(mi, "L_MI");
  require_finite(ie, "L_IE");
  update_blocks(model.fed, cfg.eta_F);
  return {mi, ie};
}

namespace {

double joint_step(RieiParams& model, const Batch& batch,
                  const TrainConfig& cfg, std::size_t* correct) {
  model.zero_grads();
  const double ce = ce_backward(model, batch, cfg, Mode::Train, correct);
  const auto [mi, ie] = feature_backward_impl(model, batch, cfg, Mode::Train,
                                              true);
  const double total = ce + cfg.lambda1 * mi - cfg.lambda2 * ie;
  require_finite(total, "joint loss");
  update_blocks(model.ec, cfg.eta_E);
  update_blocks(model.rc, cfg.eta_R);
  update_blocks(model.fed, cfg.eta_F);
  return total;
}

std::vector<EpochStats> fit_loop(
    RieiParams& model, const std::vector<const synth::LabeledSample*>& train,
    const TrainConfig& cfg, RngStream& rng, const EpochHook& hook,
    int forbid_receiver, bool baseline) {
  validate(model.arch, cfg);
  if (train.empty()) throw ConfigError("fit: empty training set");
  {
    std::vector<int> seen;
    for (const auto* s : train)
      if (std::find(seen.begin(), seen.end(), s->receiver) == seen.end())
        seen.push_back(s->receiver);
    if (seen.size() < 2)
      throw ConfigError("fit: need samples from at least 2 receivers");
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochStats> history;
  history.reserve(cfg.epochs);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double ce_sum = 0.0, ie_sum = 0.0, mi_sum = 0.0;
    std::size_t n_batches = 0;
    std::size_t n_correct = 0;
    for (std::size_t ofs = 0; ofs < order.size(); ofs += cfg.batch) {
      const std::size_t end = std::min(ofs + cfg.batch, order.size());
      std::vector<const synth::LabeledSample*> chunk;
      chunk.reserve(end - ofs);
      for (std::size_t i = ofs; i < end; ++i) chunk.push_back(train[order[i]]);
      Batch batch = make_batch(chunk);
      if (forbid_receiver > 0)
        for (int rcv : batch.receiver)
          if (rcv == forbid_receiver)
            throw ConfigError("fit: held-out receiver leaked into training");
      std::size_t correct = 0;
      try {
        if (baseline) {
          ce_sum += classifier_step(model, batch, cfg, &correct);
        } else if (cfg.joint_sgd) {
          ce_sum += joint_step(model, batch, cfg, &correct);
        } else {
          ce_sum += classifier_step(model, batch, cfg, &correct);
          TrainConfig fcfg = cfg;
          if (epoch < cfg.warmup_epochs) fcfg.lambda1 = fcfg.lambda2 = 0.0;
          const auto [mi, ie] = feature_step(model, batch, fcfg);
          mi_sum += mi;
          ie_sum += ie;
        }
      } catch (const TrainingDivergedError& e) {
        throw TrainingDivergedError(std::string(e.what()) + " at epoch " +
                                    std::to_string(epoch));
      }
      n_correct += correct;
      ++n_batches;
    }
    EpochStats stats;
    const double nb = static_cast<double>(n_batches);
    stats.ce = ce_sum / nb;
    stats.ie = ie_sum / nb;
    stats.mi = mi_sum / nb;
    // Pre-update accuracy accumulated over the epoch's minibatches.
    stats.train_acc =
        static_cast<double>(n_correct) / static_cast<double>(train.size());
    history.push_back(stats);
    if (hook) hook(epoch, model);
  }
  return history;
}

} // namespace

std::vector<EpochStats> fit(RieiParams& model,
                            const std::vector<const synth::LabeledSample*>& train,
                            const TrainConfig& cfg, RngStream& rng,
                            const EpochHook& hook, int forbid_receiver) {
  if (model.arch.baseline)
    throw ConfigError("fit: use fit_baseline for baseline models");
  return fit_loop(model, train, cfg, rng, hook, forbid_receiver, false);
}

std::vector<EpochStats> fit_baseline(
    RieiParams& model, const std::vector<const synth::LabeledSample*>& train,
    const TrainConfig& cfg, RngStream& rng, const EpochHook& hook,
    int forbid_receiver) {
  if (!model.arch.baseline)
    throw ConfigError("fit_baseline: model must be in baseline mode");
  return fit_loop(model, train, cfg, rng, hook, forbid_receiver, true);
}

std::vector<int> predict(RieiParams& model, const Tensor& x) {
  if (x.rank() != 3) throw ConfigError("predict: input must be [n, 2, L]");
  const std::size_t n = x.dim(0);
  std::vector<int> labels(n);
  constexpr std::size_t kChunk = 256;
  for (std::size_t ofs = 0; ofs < n; ofs += kChunk) {
    const std::size_t len = std::min(kChunk, n - ofs);
    Tensor part({len, x.dim(1), x.dim(2)});
    std::copy(x.data() + ofs * x.dim(1) * x.dim(2),
              x.data() + (ofs + len) * x.dim(1) * x.dim(2), part.data());
    const Tensor feats = model.fed.forward(part, Mode::Infer);
    const Tensor z = model.arch.baseline
                         ? feats
                         : slice_cols(feats, 0, model.arch.F_E);
    const Tensor pe = model.ec.forward(z, Mode::Infer);
    for (std::size_t i = 0; i < len; ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < pe.dim(1); ++j)
        if (pe.at2(i, j) > pe.at2(i, best)) best = j;
      labels[ofs + i] = static_cast<int>(best) + 1;
    }
  }
  return labels;
}

double accuracy(RieiParams& model, const Batch& batch) {
  const std::vector<int> pred = predict(model, batch.x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == batch.emitter[i]) ++hits;
  return pred.empty() ? 0.0
                      : static_cast<double>(hits) /
                            static_cast<double>(pred.size());
}

Batch make_batch(const std::vector<const synth::LabeledSample*>& samples) {
  if (samples.empty()) throw InvalidInputError("make_batch: empty sample set");
  const std::size_t L = samples[0]->frame.size();
  Batch batch;
  batch.x = Tensor({samples.size(), 2, L});
  batch.emitter.resize(samples.size());
  batch.receiver.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const synth::LabeledSample& s = *samples[i];
    if (s.frame.size() != L)
      throw InvalidInputError("make_batch: inconsistent frame lengths");
    for (std::size_t l = 0; l < L; ++l) {
      batch.x.at3(i, 0, l) = s.frame[l].real();
      batch.x.at3(i, 1, l) = s.frame[l].imag();
    }
    batch.emitter[i] = s.emitter;
    batch.receiver[i] = s.receiver;
  }
  return batch;
}

Batch make_batch(const std::vector<synth::LabeledSample>& samples) {
  std::vector<const synth::LabeledSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

void put_specs(std::vector<unsigned char>& buf,
               const std::vector<LayerSpec>& specs) {
  bytes::put_u32(buf, static_cast<std::uint32_t>(specs.size()));
  for (const LayerSpec& s : specs) {
    buf.push_back(static_cast<unsigned char>(s.kind));
    bytes::put_u32(buf, static_cast<std::uint32_t>(s.in_ch));
    bytes::put_u32(buf, static_cast<std::uint32_t>(s.out_ch));
    bytes::put_u32(buf, static_cast<std::uint32_t>(s.kernel));
    bytes::put_u32(buf, static_cast<std::uint32_t>(s.stride));
  }
}

template <typename Fn>
void for_each_buffer(RieiParams& model, Fn&& fn) {
  for (LayerStack* stack : {&model.fed, &model.ec, &model.rc}) {
    std::size_t idx = 0;
    for (Layer& layer : stack->layers()) {
      for (ParamBlock& p : layer.params) fn(p.name, p.values);
      if (layer.spec.kind == LayerKind::BatchNorm1D) {
        const std::string prefix =
            stack->name() + ".l" + std::to_string(idx);
        fn(prefix + ".running_mean", layer.running_mean);
        fn(prefix + ".running_var", layer.running_var);
      }
      ++idx;
    }
  }
}

} // namespace

void save_checkpoint(const std::string& path, const RieiParams& model) {
  std::vector<unsigned char> buf;
  buf.insert(buf.end(), {'R', 'I', 'E', 'I'});
  bytes::put_u32(buf, kCheckpointVersion);
  bytes::put_u32(buf, static_cast<std::uint32_t>(model.arch.M));
  bytes::put_u32(buf, static_cast<std::uint32_t>(model.arch.K));
  bytes::put_u32(buf, static_cast<std::uint32_t>(model.arch.F_E));
  bytes::put_u32(buf, static_cast<std::uint32_t>(model.arch.F_R));
  buf.push_back(model.arch.baseline ? 1 : 0);
  put_specs(buf, model.arch.fed);
  put_specs(buf, model.arch.ec);
  put_specs(buf, model.arch.rc);

  std::vector<std::pair<std::string, const std::vector<double>*>> blocks;
  for_each_buffer(const_cast<RieiParams&>(model),
                  [&blocks](const std::string& name,
                            std::vector<double>& values) {
                    blocks.emplace_back(name, &values);
                  });
  bytes::put_u32(buf, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& [name, values] : blocks) {
    bytes::put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    bytes::put_u32(buf, static_cast<std::uint32_t>(values->size()));
    for (double v : *values) bytes::put_f64(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInputError("save_checkpoint: cannot open " + path);
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out)
    throw InvalidInputError("save_checkpoint: write failed for " + path);
}

RieiParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw InvalidInputError("load_checkpoint: cannot open " + path);
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<unsigned char> buf(static_cast<std::size_t>(size));
  if (size > 0) in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw InvalidInputError("load_checkpoint: read failed for " + path);

  bytes::Reader r(buf.data(), buf.size());
  if (r.str(4, "magic") != "RIEI")
    throw InvalidInputError("checkpoint: bad magic at byte offset 0");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw InvalidInputError("checkpoint: unsupported version " +
                            std::to_string(version));
  Architecture arch;
  arch.M = r.u32("M");
  arch.K = r.u32("K");
  arch.F_E = r.u32("F_E");
  arch.F_R = r.u32("F_R");
  r.need(1, "baseline flag");
  arch.baseline = r.str(1, "baseline flag")[0] != 0;

  const auto read_stack = [&r]() {
    const std::uint32_t n = r.u32("layer count");
    std::vector<LayerSpec> specs;
    specs.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      const std::string kind_byte = r.str(1, "layer kind");
      LayerSpec s;
      s.kind = static_cast<LayerKind>(
          static_cast<unsigned char>(kind_byte[0]));
      s.in_ch = r.u32("in_ch");
      s.out_ch = r.u32("out_ch");
      s.kernel = r.u32("kernel");
      s.stride = r.u32("stride");
      specs.push_back(s);
    }
    return specs;
  };
  arch.fed = read_stack();
  arch.ec = read_stack();
  arch.rc = read_stack();

  RieiParams model(arch);
  std::map<std::string, std::vector<double>> loaded;
  const std::uint32_t nblocks = r.u32("block count");
  for (std::uint32_t i = 0; i < nblocks; ++i) {
    const std::uint16_t name_len = r.u16("block name length");
    const std::string name = r.str(name_len, "block name");
    const std::uint32_t count = r.u32("block length");
    std::vector<double> values(count);
    for (std::uint32_t j = 0; j < count; ++j) values[j] = r.f64("block value");
    loaded[name] = std::move(values);
  }
  for_each_buffer(model, [&loaded](const std::string& name,
                                   std::vector<double>& values) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw InvalidInputError("checkpoint: missing block " + name);
    if (it->second.size() != values.size())
      throw InvalidInputError("checkpoint: size mismatch for block " + name);
    values = it->second;
    loaded.erase(it);
  });
  if (!loaded.empty())
    throw InvalidInputError("checkpoint: unexpected block " +
                            loaded.begin()->first);
  return model;
}

} // namespace rffi::riei
