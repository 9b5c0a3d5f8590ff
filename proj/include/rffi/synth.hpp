#ifndef RFFI_SYNTH_HPP
#define RFFI_SYNTH_HPP

#include <cstdint>
#include <vector>

#include "rffi/iq.hpp"
#include "rffi/rng.hpp"

namespace rffi::synth {

// Memoryless impairment core shared by emitters and receivers: odd-order
// polynomial nonlinearity, IQ imbalance, carrier frequency offset
// (cycles/sample) and a phase offset.
struct ImpairmentParams {
  double a3 = 0.0;
  double a5 = 0.0;
  double iq_gain_mismatch = 0.0;
  double iq_phase_mismatch = 0.0;
  double cfo = 0.0;
  double phase0 = 0.0;
};

struct EmitterFingerprint : ImpairmentParams {};

struct ReceiverSignature : ImpairmentParams {
  std::complex<double> dc_offset{0.0, 0.0};
  std::vector<double> fir_taps{1.0};  // unit energy
  double noise_figure_db = 0.0;
};

struct ChannelModel {
  CVec taps{{1.0, 0.0}};
};

enum class Modulation { BFSK, QPSK };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
};

struct ImpairmentRanges {
  Range a3, a5, gain, phase, cfo, phase0;
};

struct SynthConfig {
  std::size_t M = 4;
  std::size_t K = 3;
  std::size_t frames_per_pair = 500;
  std::size_t L = 256;
  double snr_db = 15.0;
  Modulation modulation = Modulation::BFSK;
  std::uint64_t seed = 0;
  // When nonzero, fingerprints and signatures are drawn from this seed
  // instead of `seed`, modeling a fixed testbed whose devices stay put
  // while frame content and noise vary run to run.
  std::uint64_t device_seed = 0;

  ImpairmentRanges emitter_ranges;
  ImpairmentRanges receiver_ranges;
  Range receiver_nf;           // noise figure range, dB (>= 0)
  Range receiver_dc;           // per-component dc offset range
  std::size_t fir_len = 5;
  double fir_jitter = 0.0;     // deviation scale of receiver FIR from identity
  // Minimum normalized L-inf distance between sampled records; fields with
  // zero-width ranges do not contribute.
  double min_gap = 0.15;

  ChannelModel channel;
  std::size_t samples_per_symbol = 8;
  double bfsk_fdev = 0.0625;   // cycles/sample

  // Defaults fall back to calibrated ranges when both range sets are empty.
  bool has_ranges() const;
};

// Calibrated default impairment ranges for the synthetic acceptance
// scenario (see README): emitter fields carry the identity, receiver fields
// create a strong covariate shift across receivers.
SynthConfig calibrated_scenario();

struct LabeledSample {
  CVec frame;
  int emitter = 0;   // 1..M
  int receiver = 0;  // 1..K
};

struct Dataset {
  std::size_t M = 0;
  std::size_t K = 0;
  std::size_t L = 0;
  std::vector<std::vector<LabeledSample>> per_receiver;  // index k-1

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& v : per_receiver) n += v.size();
    return n;
  }
};

// Rejection-sampled records, pairwise separated by cfg.min_gap in the
// normalized L-inf metric. Deterministic given the stream.
std::vector<EmitterFingerprint> sample_fingerprints(const SynthConfig& cfg,
                                                    RngStream& rng);
std::vector<ReceiverSignature> sample_signatures(const SynthConfig& cfg,
                                                 RngStream& rng);

// Unit-RMS clean baseband frame. BFSK is phase-continuous with tone
// frequencies +-fdev; QPSK is Gray-mapped with rectangular pulses.
CVec modulate(const std::vector<int>& bits, Modulation scheme, std::size_t L,
              std::size_t samples_per_symbol, double bfsk_fdev);

// Per sample n (at absolute time start_n + n):
//   v = iq_imbalance(s), w = v + a3 v|v|^2 + a5 v|v|^4,
//   u = w exp(j(2 pi cfo (start_n + n) + phase0)).
CVec apply_emitter(const EmitterFingerprint& fp, const CVec& s,
                   std::size_t start_n = 0);

// Linear convolution truncated to the input length (zero-padded head).
CVec apply_channel(const ChannelModel& ch, const CVec& u);

// Receiver FIR, then the impairment core with the signature fields, then the
// dc offset, then complex white Gaussian noise with power
// 10^((noise_figure_db - snr_db)/10) relative to unit signal power.
// snr_db = +infinity disables the noise.
CVec apply_receiver(const ReceiverSignature& sig, const CVec& u,
                    double snr_db, RngStream& rng, std::size_t start_n = 0);

// Full pipeline for every (emitter, receiver, frame) triple; each triple
// draws from its own stream derived from (seed, m, k, i), so the result is
// independent of evaluation order.
Dataset synthesize_dataset(const SynthConfig& cfg);

} // namespace rffi::synth

#endif
