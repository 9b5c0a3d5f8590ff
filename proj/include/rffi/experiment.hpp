#ifndef RFFI_EXPERIMENT_HPP
#define RFFI_EXPERIMENT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rffi/dsp.hpp"
#include "rffi/fed.hpp"
#include "rffi/riei.hpp"
#include "rffi/synth.hpp"

namespace rffi::experiment {

enum class Scenario { Centralized, Federated };

// IEOnly keeps lambda2 and zeroes lambda1; MIOnly conversely. BaselineCE
// trains the emitter classifier on the full feature width with no RC head
// and no MI/IE terms.
enum class Ablation { Full, BaselineCE, IEOnly, MIOnly };

struct PreprocConfig {
  bool normalize = true;  // per-frame unit RMS
};

struct ExperimentConfig {
  Scenario scenario = Scenario::Centralized;
  // When set, frames come from this dataset file (pair-major record order)
  // instead of the synthesizer; the synth block is then ignored.
  std::string dataset_path;
  synth::SynthConfig synth;
  PreprocConfig preproc;
  riei::TrainConfig train;
  fed::FedConfig fed;
  std::size_t held_out_receiver = 0;  // 1..K
  Ablation ablation = Ablation::Full;
  // Per (emitter, receiver) pair the last test_frames frames are test data;
  // the rest train the model (held-out receiver: evaluation only).
  std::size_t test_frames = 100;
  bool has_interference = false;      // applied to the evaluation frames
  dsp::InterferenceConfig interference;
  // Per-receiver capture-rate ratios (index k-1); empty means all 1.0.
  std::vector<double> resample_ratios;
  std::string out_dir;                // empty: no artifacts written
  std::uint64_t seed = 0;
};

struct Diagnostics {
  double proxy_divergence = 0.0;   // source vs held-out emitter features
  double independence = 0.0;       // mean |cos(z_emitter, z_receiver)|
  double cross_cov_norm = 0.0;     // spectral norm of the cross-covariance
};

struct MetricsReport {
  std::vector<double> history;  // held-out accuracy per epoch or round
  double last5_mean = 0.0;
  double last5_std = 0.0;
  Diagnostics diag;
  std::uint64_t fingerprint = 0;
  std::uint64_t seed = 0;
  std::vector<riei::EpochStats> train_stats;  // centralized runs
  std::vector<fed::RoundLog> round_logs;      // federated runs
  std::uint64_t cumulative_bits = 0;          // uplink total (federated)
};

// Synthesize, split, preprocess, train per scenario/ablation excluding the
// held-out receiver, evaluate on it every epoch/round, and write artifacts
// (metrics.csv, summary.json, model.riei, rounds.csv) when out_dir is set.
MetricsReport run_experiment(const ExperimentConfig& cfg);

// Mean and population standard deviation of the final five entries.
std::pair<double, double> last5_metric(const std::vector<double>& history);

// Domain-discriminator proxy 2 (1 - 2 err) clipped to [0, 2], err the
// held-out error of a fixed Dense(F,16)+ReLU+Dense(16,2) head trained 20
// epochs on a 50/50 split of each set. Hyperparameters are deliberately not
// configurable so values compare across runs.
double proxy_divergence(const std::vector<std::vector<double>>& features_a,
                        const std::vector<std::vector<double>>& features_b,
                        RngStream& rng);

// Primary score: mean per-sample |cos(z_emitter, z_receiver)|, in [0, 1].
double independence_score(const std::vector<riei::FeaturePair>& pairs);
// Companion diagnostic: spectral norm of the emitter/receiver feature
// cross-covariance.
double cross_cov_spectral_norm(const std::vector<riei::FeaturePair>& pairs);

// CSV with header emitter,receiver,f1..fF (F = full feature width).
void export_features(riei::RieiParams& model,
                     const std::vector<const synth::LabeledSample*>& samples,
                     const std::string& path);

enum class SweepKind { ISR, SamplingRate, Compression };

struct SweepGrid {
  // ISR sweep: every kind x isr_db cell, evaluated on a shared trained
  // model; -inf disables injection.
  std::vector<dsp::InterferenceKind> kinds;
  std::vector<double> isr_db;
  // SamplingRate sweep: evaluation-time ratios on the shared model.
  std::vector<double> ratios;
  // Compression sweep: one full federated run per scheme.
  std::vector<fed::Compressor> compressors;
};

struct SweepPoint {
  std::string label;  // e.g. narrowband / ratio / sign
  double x = 0.0;     // isr_db or ratio; scheme index for compression
  bool ok = false;
  std::string error;
  MetricsReport report;
};

// One evaluation (or run, for Compression) per grid point; failures are
// recorded on the point and the sweep continues.
std::vector<SweepPoint> run_sweep(SweepKind kind, const ExperimentConfig& base,
                                  const SweepGrid& grid);

std::string metrics_csv(const MetricsReport& report);
std::string sweep_csv(const std::vector<SweepPoint>& points);

} // namespace rffi::experiment

#endif
