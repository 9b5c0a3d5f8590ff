#include "rffi/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>

#include <json.hpp>

#include "rffi/config.hpp"
#include "rffi/dataset_io.hpp"
#include "rffi/errors.hpp"

namespace rffi::experiment {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  } catch (const InvalidInputError& e) {
    throw InvalidInputError(std::string(name) + ": " + e.what());
  } catch (const TrainingDivergedError& e) {
    throw TrainingDivergedError(std::string(name) + ": " + e.what());
  }
}

// Training data stays in the dataset; evaluation frames are copied out raw
// (post-resample, pre-normalization) so sweeps can re-derive perturbed
// evaluation sets from the same material.
struct Prepared {
  synth::Dataset ds;
  std::vector<synth::LabeledSample> eval_raw;
  std::vector<synth::LabeledSample> eval_proc;
  std::vector<const synth::LabeledSample*> train_pool;
  std::vector<std::vector<const synth::LabeledSample*>> client_pools;
  std::vector<int> client_ids;
  std::vector<const synth::LabeledSample*> source_test;

  std::vector<const synth::LabeledSample*> eval_ptrs() const {
    std::vector<const synth::LabeledSample*> out;
    out.reserve(eval_proc.size());
    for (const auto& s : eval_proc) out.push_back(&s);
    return out;
  }
};

std::vector<synth::LabeledSample> process_eval(
    const std::vector<synth::LabeledSample>& raw,
    const dsp::InterferenceConfig* icfg, double ratio, bool normalize,
    std::uint64_t seed) {
  std::vector<synth::LabeledSample> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    synth::LabeledSample s = raw[i];
    if (ratio != 1.0) s.frame = dsp::resample_cubic(s.frame, ratio);
    if (icfg != nullptr) {
      RngStream rng = RngStream::derive(
          seed, "experiment.interference",
          static_cast<std::uint64_t>(s.receiver), i);
      s.frame = icfg->kind == dsp::InterferenceKind::NarrowbandHopping
                    ? dsp::inject_narrowband(s.frame, *icfg, rng)
                    : dsp::inject_broadband(s.frame, *icfg, rng);
    }
    if (normalize) s.frame = dsp::normalize_rms(s.frame);
    out.push_back(std::move(s));
  }
  return out;
}

void validate_shape(const ExperimentConfig& cfg, std::size_t K,
                    std::size_t frames) {
  if (K < 3)
    throw ConfigError(
        "run_experiment: leave-one-receiver-out needs at least 3 receivers");
  if (cfg.held_out_receiver < 1 || cfg.held_out_receiver > K)
    throw ConfigError("run_experiment: held_out_receiver must be in 1.." +
                      std::to_string(K));
  if (cfg.test_frames < 1 || cfg.test_frames >= frames)
    throw ConfigError(
        "run_experiment: test_frames must be in 1..frames_per_pair-1");
  if (!cfg.resample_ratios.empty() && cfg.resample_ratios.size() != K)
    throw ConfigError(
        "run_experiment: resample_ratios must list one ratio per receiver");
}

// Loaded datasets must store each receiver's records pair-major: all frames
// of emitter 1, then emitter 2, ... with equal counts.
std::size_t frames_per_pair_of(const synth::Dataset& ds) {
  if (ds.per_receiver.empty() || ds.per_receiver[0].empty())
    throw InvalidInputError("dataset: no records");
  const std::size_t per_rx = ds.per_receiver[0].size();
  if (per_rx % ds.M != 0)
    throw InvalidInputError(
        "dataset: record count is not a multiple of the emitter count");
  const std::size_t frames = per_rx / ds.M;
  for (std::size_t k = 0; k < ds.K; ++k) {
    if (ds.per_receiver[k].size() != per_rx)
      throw InvalidInputError("dataset: unequal record counts per receiver");
    for (std::size_t m = 0; m < ds.M; ++m)
      for (std::size_t i = 0; i < frames; ++i)
        if (ds.per_receiver[k][m * frames + i].emitter !=
            static_cast<int>(m) + 1)
          throw InvalidInputError("dataset: records are not pair-major");
  }
  return frames;
}

Prepared prepare(const ExperimentConfig& cfg) {
  Prepared p;
  std::size_t frames;
  if (cfg.dataset_path.empty()) {
    validate_shape(cfg, cfg.synth.K, cfg.synth.frames_per_pair);
    synth::SynthConfig scfg = cfg.synth;
    scfg.seed = RngStream::derive(cfg.seed, "experiment.synth").next_u64();
    p.ds = synth::synthesize_dataset(scfg);
    frames = scfg.frames_per_pair;
  } else {
    p.ds = io::load_dataset(cfg.dataset_path);
    frames = frames_per_pair_of(p.ds);
    validate_shape(cfg, p.ds.K, frames);
  }

  const std::size_t K = p.ds.K;
  const std::size_t split = frames - cfg.test_frames;
  const std::size_t held = cfg.held_out_receiver;

  if (!cfg.resample_ratios.empty())
    for (std::size_t k = 0; k < K; ++k) {
      const double r = cfg.resample_ratios[k];
      if (r == 1.0) continue;
      for (auto& s : p.ds.per_receiver[k])
        s.frame = dsp::resample_cubic(s.frame, r);
    }

  for (std::size_t k = 1; k <= K; ++k) {
    auto& samples = p.ds.per_receiver[k - 1];
    if (k == held) {
      for (std::size_t m = 0; m < p.ds.M; ++m)
        for (std::size_t i = split; i < frames; ++i)
          p.eval_raw.push_back(samples[m * frames + i]);
      continue;
    }
    p.client_pools.emplace_back();
    p.client_ids.push_back(static_cast<int>(k));
    auto& pool = p.client_pools.back();
    for (std::size_t m = 0; m < p.ds.M; ++m)
      for (std::size_t i = 0; i < frames; ++i) {
        synth::LabeledSample& s = samples[m * frames + i];
        if (cfg.preproc.normalize) s.frame = dsp::normalize_rms(s.frame);
        if (i < split) {
          p.train_pool.push_back(&s);
          pool.push_back(&s);
        } else {
          p.source_test.push_back(&s);
        }
      }
  }
  p.eval_proc = process_eval(
      p.eval_raw, cfg.has_interference ? &cfg.interference : nullptr, 1.0,
      cfg.preproc.normalize, cfg.seed);
  return p;
}

riei::TrainConfig resolve_train(const ExperimentConfig& cfg) {
  riei::TrainConfig tc = cfg.train;
  if (cfg.ablation == Ablation::IEOnly) tc.lambda1 = 0.0;
  if (cfg.ablation == Ablation::MIOnly) tc.lambda2 = 0.0;
  return tc;
}

Tensor extract_features(riei::RieiParams& model, const Tensor& x) {
  const std::size_t n = x.dim(0);
  const std::size_t L = x.dim(2);
  const std::size_t F = model.arch.F_E + model.arch.F_R;
  Tensor out({n, F});
  constexpr std::size_t kChunk = 256;
  for (std::size_t ofs = 0; ofs < n; ofs += kChunk) {
    const std::size_t m = std::min(kChunk, n - ofs);
    Tensor slice({m, 2, L});
    std::copy_n(x.data() + ofs * 2 * L, m * 2 * L, slice.data());
    const Tensor f = riei::fed_forward(model, slice, Mode::Infer);
    std::copy_n(f.data(), m * F, out.data() + ofs * F);
  }
  return out;
}

std::vector<std::vector<double>> emitter_features(
    const riei::Architecture& arch, const Tensor& feats) {
  std::vector<std::vector<double>> out;
  out.reserve(feats.dim(0));
  for (const auto& pair : riei::split_features(arch, feats))
    out.push_back(pair.z_emitter);
  return out;
}

void compute_diagnostics(const ExperimentConfig& cfg, const Prepared& p,
                         riei::RieiParams& model, MetricsReport& report) {
  const riei::Batch eval_batch = riei::make_batch(p.eval_ptrs());
  const Tensor eval_feats = extract_features(model, eval_batch.x);
  const auto eval_pairs = riei::split_features(model.arch, eval_feats);
  report.diag.independence = independence_score(eval_pairs);
  report.diag.cross_cov_norm = cross_cov_spectral_norm(eval_pairs);

  const riei::Batch src_batch = riei::make_batch(p.source_test);
  const Tensor src_feats = extract_features(model, src_batch.x);
  RngStream rng = RngStream::derive(cfg.seed, "experiment.proxy");
  report.diag.proxy_divergence =
      proxy_divergence(emitter_features(model.arch, src_feats),
                       emitter_features(model.arch, eval_feats), rng);
}

void fill_last5(MetricsReport& report) {
  if (report.history.size() >= 5) {
    std::tie(report.last5_mean, report.last5_std) =
        last5_metric(report.history);
  } else if (!report.history.empty()) {
    double mean = 0.0;
    for (double v : report.history) mean += v;
    mean /= static_cast<double>(report.history.size());
    double var = 0.0;
    for (double v : report.history) var += (v - mean) * (v - mean);
    report.last5_mean = mean;
    report.last5_std =
        std::sqrt(var / static_cast<double>(report.history.size()));
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInputError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw InvalidInputError("write failed for " + path);
}

std::string summary_json(const ExperimentConfig& cfg,
                         const MetricsReport& report) {
  nlohmann::json doc;
  doc["config"] = nlohmann::json::parse(config::canonical_json(cfg));
  char fp[32];
  std::snprintf(fp, sizeof(fp), "%016llx",
                static_cast<unsigned long long>(report.fingerprint));
  doc["fingerprint"] = fp;
  doc["seed"] = report.seed;
  doc["history"] = report.history;
  doc["final_accuracy"] =
      report.history.empty() ? 0.0 : report.history.back();
  doc["last5_mean"] = report.last5_mean;
  doc["last5_std"] = report.last5_std;
  doc["diagnostics"] =
      nlohmann::json{{"proxy_divergence", report.diag.proxy_divergence},
                     {"independence", report.diag.independence},
                     {"cross_cov_norm", report.diag.cross_cov_norm}};
  if (!report.round_logs.empty())
    doc["cumulative_bits"] = report.cumulative_bits;
  return doc.dump(2) + "\n";
}

void write_artifacts(const ExperimentConfig& cfg, const MetricsReport& report,
                     const riei::RieiParams& model) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const std::string base = cfg.out_dir + "/";
  write_text(base + "metrics.csv", metrics_csv(report));
  write_text(base + "summary.json", summary_json(cfg, report));
  if (!report.round_logs.empty())
    write_text(base + "rounds.csv", fed::round_log_csv(report.round_logs));
  riei::save_checkpoint(base + "model.riei", model);
}

struct RunOutput {
  MetricsReport report;
  riei::RieiParams model;
  Prepared data;
};

RunOutput run_core(const ExperimentConfig& cfg, bool diagnostics) {
  RunOutput out;
  out.data = stage("prepare", [&] { return prepare(cfg); });
  Prepared& p = out.data;

  const riei::TrainConfig tc = resolve_train(cfg);
  const riei::Architecture arch =
      cfg.ablation == Ablation::BaselineCE
          ? riei::Architecture::baseline_arch(p.ds.M, p.ds.K)
          : riei::Architecture::standard(p.ds.M, p.ds.K);
  out.model = riei::RieiParams(arch);
  RngStream init_rng = RngStream::derive(cfg.seed, "experiment.init");
  out.model.init(init_rng);

  MetricsReport& report = out.report;
  report.seed = cfg.seed;
  report.fingerprint = config::config_fingerprint(cfg);

  const riei::Batch eval_batch = riei::make_batch(p.eval_ptrs());
  stage("train", [&] {
    if (cfg.scenario == Scenario::Centralized) {
      RngStream fit_rng = RngStream::derive(cfg.seed, "experiment.fit");
      const riei::EpochHook hook = [&](std::size_t, riei::RieiParams& m) {
        report.history.push_back(riei::accuracy(m, eval_batch));
      };
      report.train_stats =
          cfg.ablation == Ablation::BaselineCE
              ? riei::fit_baseline(out.model, p.train_pool, tc, fit_rng, hook,
                                   static_cast<int>(cfg.held_out_receiver))
              : riei::fit(out.model, p.train_pool, tc, fit_rng, hook,
                          static_cast<int>(cfg.held_out_receiver));
    } else {
      fed::FedConfig fc = cfg.fed;
      fc.train = tc;
      fc.seed = RngStream::derive(cfg.seed, "experiment.fed").next_u64();
      std::vector<fed::ClientState> clients(p.client_pools.size());
      for (std::size_t c = 0; c < clients.size(); ++c) {
        clients[c].client_id = p.client_ids[c];
        clients[c].data = p.client_pools[c];
      }
      report.round_logs =
          fed::fed_fit(out.model, clients, fc, [&](riei::RieiParams& m) {
            return riei::accuracy(m, eval_batch);
          });
      for (const auto& log : report.round_logs)
        report.history.push_back(log.eval_accuracy);
      if (!report.round_logs.empty())
        report.cumulative_bits = report.round_logs.back().cumulative_bits;
    }
    return 0;
  });

  fill_last5(report);
  if (diagnostics)
    stage("diagnostics", [&] {
      compute_diagnostics(cfg, p, out.model, report);
      return 0;
    });
  if (!cfg.out_dir.empty())
    stage("artifacts", [&] {
      write_artifacts(cfg, report, out.model);
      return 0;
    });
  return out;
}

double eval_accuracy_on(riei::RieiParams& model,
                        const std::vector<synth::LabeledSample>& samples) {
  const riei::Batch batch = riei::make_batch(samples);
  return riei::accuracy(model, batch);
}

const char* compressor_label(fed::Compressor c) {
  switch (c) {
    case fed::Compressor::None: return "none";
    case fed::Compressor::Sign: return "sign";
    case fed::Compressor::NoisySignGaussian: return "noisy_sign_gaussian";
    case fed::Compressor::NoisySignUniform: return "noisy_sign_uniform";
  }
  return "none";
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

} // namespace

MetricsReport run_experiment(const ExperimentConfig& cfg) {
  return run_core(cfg, true).report;
}

std::pair<double, double> last5_metric(const std::vector<double>& history) {
  if (history.size() < 5)
    throw InvalidInputError("last5_metric: need at least 5 entries");
  double mean = 0.0;
  for (std::size_t i = history.size() - 5; i < history.size(); ++i)
    mean += history[i];
  mean /= 5.0;
  double var = 0.0;
  for (std::size_t i = history.size() - 5; i < history.size(); ++i)
    var += (history[i] - mean) * (history[i] - mean);
  return {mean, std::sqrt(var / 5.0)};
}

double proxy_divergence(const std::vector<std::vector<double>>& features_a,
                        const std::vector<std::vector<double>>& features_b,
                        RngStream& rng) {
  if (features_a.empty() || features_b.empty())
    throw InvalidInputError("proxy_divergence: empty feature set");
  const std::size_t F = features_a[0].size();
  for (const auto& f : features_a)
    if (f.size() != F)
      throw InvalidInputError("proxy_divergence: inconsistent feature width");
  for (const auto& f : features_b)
    if (f.size() != F)
      throw InvalidInputError("proxy_divergence: feature width mismatch");

  // Balanced subsample, then a 50/50 train/test split per set.
  std::vector<std::size_t> ia(features_a.size()), ib(features_b.size());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), 0);
  rng.shuffle(ia);
  rng.shuffle(ib);
  const std::size_t n = std::min(ia.size(), ib.size());
  const std::size_t n_train = n - n / 2;

  std::vector<const std::vector<double>*> train_x, test_x;
  std::vector<std::size_t> train_y, test_y;
  for (std::size_t i = 0; i < n; ++i) {
    const bool tr = i < n_train;
    (tr ? train_x : test_x).push_back(&features_a[ia[i]]);
    (tr ? train_y : test_y).push_back(0);
    (tr ? train_x : test_x).push_back(&features_b[ib[i]]);
    (tr ? train_y : test_y).push_back(1);
  }
  if (test_x.empty())
    throw InvalidInputError("proxy_divergence: sets too small to split");

  // Fixed discriminator: Dense(F,16)+ReLU+Dense(16,2)+Softmax, 20 epochs of
  // SGD at 0.05, batch 32.
  LayerStack head({LayerSpec::dense(F, 16), LayerSpec::relu(),
                   LayerSpec::dense(16, 2), LayerSpec::softmax()},
                  "proxy");
  head.init_params(rng);
  constexpr std::size_t kEpochs = 20;
  constexpr std::size_t kBatch = 32;
  constexpr double kLr = 0.05;
  constexpr double kEps = 1e-12;

  std::vector<std::size_t> order(train_x.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < kEpochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t ofs = 0; ofs < order.size(); ofs += kBatch) {
      const std::size_t m = std::min(kBatch, order.size() - ofs);
      Tensor x({m, F});
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(train_x[order[ofs + i]]->data(), F, x.data() + i * F);
      const Tensor probs = head.forward(x, Mode::Train);
      Tensor dy({m, 2});
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t y = train_y[order[ofs + i]];
        dy.at2(i, y) = -1.0 / ((probs.at2(i, y) + kEps) *
                               static_cast<double>(m));
      }
      head.backward(dy);
      for (ParamBlock* p : head.param_blocks()) {
        for (std::size_t i = 0; i < p->values.size(); ++i)
          p->values[i] -= kLr * p->grad[i];
        p->zero_grad();
      }
    }
  }

  Tensor x({test_x.size(), F});
  for (std::size_t i = 0; i < test_x.size(); ++i)
    std::copy_n(test_x[i]->data(), F, x.data() + i * F);
  const Tensor probs = head.forward(x, Mode::Infer);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < test_x.size(); ++i) {
    const std::size_t pred = probs.at2(i, 1) > probs.at2(i, 0) ? 1 : 0;
    if (pred != test_y[i]) ++wrong;
  }
  const double err =
      static_cast<double>(wrong) / static_cast<double>(test_x.size());
  return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

double independence_score(const std::vector<riei::FeaturePair>& pairs) {
  if (pairs.empty()) return 0.0;
  constexpr double kEps = 1e-12;
  double sum = 0.0;
  for (const auto& p : pairs) {
    double dot = 0.0, ne = 0.0, nr = 0.0;
    for (std::size_t i = 0; i < p.z_emitter.size(); ++i) {
      dot += p.z_emitter[i] * p.z_receiver[i];
      ne += p.z_emitter[i] * p.z_emitter[i];
      nr += p.z_receiver[i] * p.z_receiver[i];
    }
    sum += std::abs(dot) / std::max(kEps, std::sqrt(ne) * std::sqrt(nr));
  }
  return sum / static_cast<double>(pairs.size());
}

double cross_cov_spectral_norm(const std::vector<riei::FeaturePair>& pairs) {
  if (pairs.empty()) return 0.0;
  const std::size_t fe = pairs[0].z_emitter.size();
  const std::size_t fr = pairs[0].z_receiver.size();
  const double n = static_cast<double>(pairs.size());
  std::vector<double> me(fe, 0.0), mr(fr, 0.0);
  for (const auto& p : pairs) {
    for (std::size_t i = 0; i < fe; ++i) me[i] += p.z_emitter[i] / n;
    for (std::size_t j = 0; j < fr; ++j) mr[j] += p.z_receiver[j] / n;
  }
  std::vector<double> C(fe * fr, 0.0);
  for (const auto& p : pairs)
    for (std::size_t i = 0; i < fe; ++i)
      for (std::size_t j = 0; j < fr; ++j)
        C[i * fr + j] += (p.z_emitter[i] - me[i]) * (p.z_receiver[j] - mr[j]) / n;

  // Power iteration on C^T C from a deterministic start.
  std::vector<double> v(fr, 1.0 / std::sqrt(static_cast<double>(fr)));
  std::vector<double> u(fe, 0.0);
  double sigma = 0.0;
  for (int it = 0; it < 200; ++it) {
    for (std::size_t i = 0; i < fe; ++i) {
      u[i] = 0.0;
      for (std::size_t j = 0; j < fr; ++j) u[i] += C[i * fr + j] * v[j];
    }
    for (std::size_t j = 0; j < fr; ++j) {
      v[j] = 0.0;
      for (std::size_t i = 0; i < fe; ++i) v[j] += C[i * fr + j] * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
    double un = 0.0;
    for (double x : u) un += x * x;
    sigma = std::sqrt(un);
  }
  return sigma;
}

void export_features(riei::RieiParams& model,
                     const std::vector<const synth::LabeledSample*>& samples,
                     const std::string& path) {
  const riei::Batch batch = riei::make_batch(samples);
  const Tensor feats = extract_features(model, batch.x);
  const std::size_t F = feats.dim(1);
  std::string csv = "emitter,receiver";
  for (std::size_t j = 0; j < F; ++j) csv += ",f" + std::to_string(j + 1);
  csv += "\n";
  char buf[64];
  for (std::size_t i = 0; i < feats.dim(0); ++i) {
    csv += std::to_string(batch.emitter[i]) + "," +
           std::to_string(batch.receiver[i]);
    for (std::size_t j = 0; j < F; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.9g", feats.at2(i, j));
      csv += buf;
    }
    csv += "\n";
  }
  write_text(path, csv);
}

std::vector<SweepPoint> run_sweep(SweepKind kind, const ExperimentConfig& base,
                                  const SweepGrid& grid) {
  std::vector<SweepPoint> points;

  if (kind == SweepKind::Compression) {
    if (grid.compressors.empty())
      throw ConfigError("run_sweep: empty compressor grid");
    for (std::size_t i = 0; i < grid.compressors.size(); ++i) {
      ExperimentConfig cfg = base;
      cfg.scenario = Scenario::Federated;
      cfg.fed.compressor = grid.compressors[i];
      SweepPoint pt;
      pt.label = compressor_label(grid.compressors[i]);
      pt.x = static_cast<double>(i);
      if (!base.out_dir.empty()) cfg.out_dir = base.out_dir + "/" + pt.label;
      try {
        pt.report = run_experiment(cfg);
        pt.ok = true;
      } catch (const std::exception& e) {
        pt.error = e.what();
      }
      points.push_back(std::move(pt));
    }
    return points;
  }

  if (kind == SweepKind::ISR && grid.isr_db.empty())
    throw ConfigError("run_sweep: empty isr_db grid");
  if (kind == SweepKind::SamplingRate && grid.ratios.empty())
    throw ConfigError("run_sweep: empty ratio grid");

  // Shared model: train once without test-time perturbations.
  ExperimentConfig tcfg = base;
  tcfg.has_interference = false;
  if (!base.out_dir.empty()) tcfg.out_dir = base.out_dir + "/base";
  RunOutput out = run_core(tcfg, false);

  const auto evaluate = [&](const dsp::InterferenceConfig* icfg,
                            double ratio) {
    const auto eval = process_eval(out.data.eval_raw, icfg, ratio,
                                   base.preproc.normalize, base.seed);
    return eval_accuracy_on(out.model, eval);
  };
  const auto point_report = [&](double acc) {
    MetricsReport r;
    r.history = {acc};
    r.last5_mean = acc;
    r.seed = base.seed;
    r.fingerprint = out.report.fingerprint;
    return r;
  };

  if (kind == SweepKind::ISR) {
    std::vector<dsp::InterferenceKind> kinds = grid.kinds;
    if (kinds.empty())
      kinds = {dsp::InterferenceKind::NarrowbandHopping,
               dsp::InterferenceKind::BroadbandGaussian};
    for (dsp::InterferenceKind k : kinds)
      for (double isr : grid.isr_db) {
        SweepPoint pt;
        pt.label = k == dsp::InterferenceKind::NarrowbandHopping
                       ? "narrowband"
                       : "broadband";
        pt.x = isr;
        dsp::InterferenceConfig icfg = base.interference;
        icfg.kind = k;
        icfg.isr_db = isr;
        try {
          pt.report = point_report(evaluate(&icfg, 1.0));
          pt.ok = true;
        } catch (const std::exception& e) {
          pt.error = e.what();
        }
        points.push_back(std::move(pt));
      }
    return points;
  }

  for (double ratio : grid.ratios) {
    SweepPoint pt;
    pt.label = "ratio";
    pt.x = ratio;
    try {
      pt.report = point_report(evaluate(nullptr, ratio));
      pt.ok = true;
    } catch (const std::exception& e) {
      pt.error = e.what();
    }
    points.push_back(std::move(pt));
  }
  return points;
}

std::string metrics_csv(const MetricsReport& report) {
  std::string csv;
  if (!report.round_logs.empty()) {
    csv = "round,test_accuracy,mean_client_loss,cumulative_bits\n";
    for (std::size_t i = 0; i < report.round_logs.size(); ++i) {
      const fed::RoundLog& log = report.round_logs[i];
      double mean = 0.0;
      for (double l : log.client_losses) mean += l;
      if (!log.client_losses.empty())
        mean /= static_cast<double>(log.client_losses.size());
      csv += std::to_string(log.round) + "," + fmt(report.history[i]) + "," +
             fmt(mean) + "," + std::to_string(log.cumulative_bits) + "\n";
    }
    return csv;
  }
  csv = "epoch,test_accuracy,train_accuracy,ce,ie,mi\n";
  for (std::size_t i = 0; i < report.history.size(); ++i) {
    const riei::EpochStats stats = i < report.train_stats.size()
                                       ? report.train_stats[i]
                                       : riei::EpochStats{};
    csv += std::to_string(i + 1) + "," + fmt(report.history[i]) + "," +
           fmt(stats.train_acc) + "," + fmt(stats.ce) + "," + fmt(stats.ie) +
           "," + fmt(stats.mi) + "\n";
  }
  return csv;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::string csv =
      "label,x,accuracy,last5_mean,last5_std,cumulative_bits,ok,error\n";
  for (const SweepPoint& pt : points) {
    const double acc =
        pt.report.history.empty() ? 0.0 : pt.report.history.back();
    csv += csv_quote(pt.label) + "," + fmt(pt.x) + "," + fmt(acc) + "," +
           fmt(pt.report.last5_mean) + "," + fmt(pt.report.last5_std) + "," +
           std::to_string(pt.report.cumulative_bits) + "," +
           (pt.ok ? "1" : "0") + "," + csv_quote(pt.error) + "\n";
  }
  return csv;
}

} // namespace rffi::experiment
