#include "rffi/synth.hpp"

#include <cmath>
#include <numbers>

#include "rffi/errors.hpp"

namespace rffi {

double mean_power(const CVec& v) {
  double p = 0.0;
  for (const auto& s : v) p += std::norm(s);
  return v.empty() ? 0.0 : p / static_cast<double>(v.size());
}

double rms(const CVec& v) { return std::sqrt(mean_power(v)); }

} // namespace rffi

namespace rffi::synth {

namespace {

constexpr double kPi = std::numbers::pi;

ImpairmentParams sample_core(const ImpairmentRanges& r, RngStream& rng) {
  ImpairmentParams p;
  p.a3 = rng.uniform(r.a3.lo, r.a3.hi);
  p.a5 = rng.uniform(r.a5.lo, r.a5.hi);
  p.iq_gain_mismatch = rng.uniform(r.gain.lo, r.gain.hi);
  p.iq_phase_mismatch = rng.uniform(r.phase.lo, r.phase.hi);
  p.cfo = rng.uniform(r.cfo.lo, r.cfo.hi);
  p.phase0 = rng.uniform(r.phase0.lo, r.phase0.hi);
  return p;
}

void add_field_distance(double a, double b, double width, double* dist) {
  if (width == 0.0) return;
  const double d = std::abs(a - b) / std::abs(width);
  if (d > *dist) *dist = d;
}

double core_distance(const ImpairmentParams& a, const ImpairmentParams& b,
                     const ImpairmentRanges& r) {
  double d = 0.0;
  add_field_distance(a.a3, b.a3, r.a3.width(), &d);
  add_field_distance(a.a5, b.a5, r.a5.width(), &d);
  add_field_distance(a.iq_gain_mismatch, b.iq_gain_mismatch, r.gain.width(),
                     &d);
  add_field_distance(a.iq_phase_mismatch, b.iq_phase_mismatch, r.phase.width(),
                     &d);
  add_field_distance(a.cfo, b.cfo, r.cfo.width(), &d);
  add_field_distance(a.phase0, b.phase0, r.phase0.width(), &d);
  return d;
}

constexpr int kMaxGapAttempts = 1000;

std::complex<double> iq_imbalance(const std::complex<double>& s, double gain,
                                  double eps) {
  const double g = 1.0 + gain;
  return {g * s.real(), s.imag() * std::cos(eps) + s.real() * std::sin(eps)};
}

std::complex<double> impair_sample(const ImpairmentParams& p,
                                   const std::complex<double>& s,
                                   std::size_t abs_n) {
  const std::complex<double> v =
      iq_imbalance(s, p.iq_gain_mismatch, p.iq_phase_mismatch);
  const double m2 = std::norm(v);
  const std::complex<double> w = v + p.a3 * v * m2 + p.a5 * v * m2 * m2;
  const double ang = 2.0 * kPi * p.cfo * static_cast<double>(abs_n) + p.phase0;
  return w * std::complex<double>(std::cos(ang), std::sin(ang));
}

void validate(const SynthConfig& cfg) {
  if (cfg.M < 2 || cfg.K < 2) throw ConfigError("synth: need M >= 2, K >= 2");
  if (cfg.L < 32) throw ConfigError("synth: need L >= 32");
  if (cfg.frames_per_pair == 0)
    throw ConfigError("synth: frames_per_pair must be positive");
  if (cfg.samples_per_symbol == 0)
    throw ConfigError("synth: samples_per_symbol must be positive");
  if (cfg.receiver_nf.lo < 0.0)
    throw ConfigError("synth: noise figure must be >= 0 dB");
  if (cfg.fir_len == 0) throw ConfigError("synth: fir_len must be positive");
  if (cfg.channel.taps.empty())
    throw ConfigError("synth: channel needs at least one tap");
}

} // namespace

bool SynthConfig::has_ranges() const {
  const auto any = [](const ImpairmentRanges& r) {
    return r.a3.width() != 0.0 || r.a5.width() != 0.0 ||
           r.gain.width() != 0.0 || r.phase.width() != 0.0 ||
           r.cfo.width() != 0.0 || r.phase0.width() != 0.0;
  };
  return any(emitter_ranges) || any(receiver_ranges);
}

SynthConfig calibrated_scenario() {
  SynthConfig cfg;
  cfg.M = 4;
  cfg.K = 3;
  cfg.L = 256;
  cfg.frames_per_pair = 500;  // 400 train + 100 test per pair
  cfg.snr_db = 15.0;
  cfg.modulation = Modulation::BFSK;
  cfg.samples_per_symbol = 8;
  cfg.bfsk_fdev = 0.0625;
  // Fixed testbed: device draw pinned; run seeds vary frame content, noise,
  // and training streams, mirroring repeated trials on one bench of hardware.
  // Chosen by scripts/calibrate.sh.
  cfg.device_seed = 13;
  // Constant-envelope BFSK hides a3/a5, so those widths stay zero; identity
  // rides on IQ imbalance and CFO, which receiver impairments overlap.
  cfg.emitter_ranges.a3 = {0.0, 0.0};
  cfg.emitter_ranges.a5 = {0.0, 0.0};
  cfg.emitter_ranges.gain = {-0.25, 0.25};
  cfg.emitter_ranges.phase = {-0.45, 0.45};
  cfg.emitter_ranges.cfo = {-0.02, 0.02};
  cfg.emitter_ranges.phase0 = {0.0, 0.0};
  cfg.receiver_ranges.a3 = {0.0, 0.0};
  cfg.receiver_ranges.a5 = {0.0, 0.0};
  cfg.receiver_ranges.gain = {-0.11, 0.11};
  cfg.receiver_ranges.phase = {-0.20, 0.20};
  cfg.receiver_ranges.cfo = {-0.0045, 0.0045};
  cfg.receiver_ranges.phase0 = {0.0, 0.0};
  cfg.receiver_nf = {0.0, 2.5};
  cfg.receiver_dc = {-0.1, 0.1};
  cfg.fir_len = 5;
  cfg.fir_jitter = 0.20;
  cfg.min_gap = 0.55;
  return cfg;
}

std::vector<EmitterFingerprint> sample_fingerprints(const SynthConfig& cfg,
                                                    RngStream& rng) {
  std::vector<EmitterFingerprint> out;
  for (std::size_t m = 0; m < cfg.M; ++m) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxGapAttempts && !placed; ++attempt) {
      EmitterFingerprint fp;
      static_cast<ImpairmentParams&>(fp) =
          sample_core(cfg.emitter_ranges, rng);
      placed = true;
      for (const auto& prev : out)
        if (core_distance(fp, prev, cfg.emitter_ranges) < cfg.min_gap) {
          placed = false;
          break;
        }
      if (placed) out.push_back(fp);
    }
    if (!placed)
      throw ConfigError("sample_fingerprints: min_gap unsatisfiable after " +
                        std::to_string(kMaxGapAttempts) + " attempts");
  }
  return out;
}

std::vector<ReceiverSignature> sample_signatures(const SynthConfig& cfg,
                                                 RngStream& rng) {
  std::vector<ReceiverSignature> out;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxGapAttempts && !placed; ++attempt) {
      ReceiverSignature sig;
      static_cast<ImpairmentParams&>(sig) =
          sample_core(cfg.receiver_ranges, rng);
      sig.noise_figure_db = rng.uniform(cfg.receiver_nf.lo, cfg.receiver_nf.hi);
      sig.dc_offset = {rng.uniform(cfg.receiver_dc.lo, cfg.receiver_dc.hi),
                       rng.uniform(cfg.receiver_dc.lo, cfg.receiver_dc.hi)};
      sig.fir_taps.assign(cfg.fir_len, 0.0);
      for (std::size_t t = 0; t < cfg.fir_len; ++t)
        sig.fir_taps[t] = (t == 0 ? 1.0 : 0.0) + cfg.fir_jitter * rng.normal();
      double energy = 0.0;
      for (double h : sig.fir_taps) energy += h * h;
      for (double& h : sig.fir_taps) h /= std::sqrt(energy);

      // Gap over the core fields; noise figure, DC offset, and FIR taps are
      // receiver-identity cues and do not count toward separation.
      placed = true;
      for (const auto& prev : out) {
        double d = core_distance(sig, prev, cfg.receiver_ranges);
        if (d < cfg.min_gap) {
          placed = false;
          break;
        }
      }
      if (placed) out.push_back(std::move(sig));
    }
    if (!placed)
      throw ConfigError("sample_signatures: min_gap unsatisfiable after " +
                        std::to_string(kMaxGapAttempts) + " attempts");
  }
  return out;
}

CVec modulate(const std::vector<int>& bits, Modulation scheme, std::size_t L,
              std::size_t samples_per_symbol, double bfsk_fdev) {
  if (samples_per_symbol == 0)
    throw ConfigError("modulate: samples_per_symbol must be positive");
  const std::size_t nsym = (L + samples_per_symbol - 1) / samples_per_symbol;
  const std::size_t need =
      scheme == Modulation::QPSK ? 2 * nsym : nsym;
  if (bits.size() < need)
    throw InvalidInputError("modulate: need " + std::to_string(need) +
                            " bits, got " + std::to_string(bits.size()));
  CVec s(L);
  if (scheme == Modulation::BFSK) {
    double phase = 0.0;
    for (std::size_t n = 0; n < L; ++n) {
      s[n] = {std::cos(phase), std::sin(phase)};
      const std::size_t sym = n / samples_per_symbol;
      const double f = bits[sym] ? bfsk_fdev : -bfsk_fdev;
      phase += 2.0 * kPi * f;
    }
  } else {
    static const double r = 1.0 / std::numbers::sqrt2;
    for (std::size_t n = 0; n < L; ++n) {
      const std::size_t sym = n / samples_per_symbol;
      const int b0 = bits[2 * sym];
      const int b1 = bits[2 * sym + 1];
      // Gray map: 00 01 11 10 -> quadrants 1 2 3 4 (one bit flips per step).
      s[n] = {(b1 == 0) ? r : -r, (b0 == 0) ? r : -r};
    }
  }
  return s;
}

CVec apply_emitter(const EmitterFingerprint& fp, const CVec& s,
                   std::size_t start_n) {
  CVec u(s.size());
  for (std::size_t n = 0; n < s.size(); ++n)
    u[n] = impair_sample(fp, s[n], start_n + n);
  return u;
}

CVec apply_channel(const ChannelModel& ch, const CVec& u) {
  if (ch.taps.empty()) throw ConfigError("apply_channel: empty taps");
  CVec y(u.size());
  for (std::size_t n = 0; n < u.size(); ++n) {
    std::complex<double> acc = 0.0;
    const std::size_t tmax = std::min(ch.taps.size() - 1, n);
    for (std::size_t t = 0; t <= tmax; ++t) acc += ch.taps[t] * u[n - t];
    y[n] = acc;
  }
  return y;
}

CVec apply_receiver(const ReceiverSignature& sig, const CVec& u,
                    double snr_db, RngStream& rng, std::size_t start_n) {
  CVec filt(u.size());
  for (std::size_t n = 0; n < u.size(); ++n) {
    std::complex<double> acc = 0.0;
    const std::size_t tmax = std::min(sig.fir_taps.size() - 1, n);
    for (std::size_t t = 0; t <= tmax; ++t) acc += sig.fir_taps[t] * u[n - t];
    filt[n] = acc;
  }
  CVec y(u.size());
  const bool noisy = !std::isinf(snr_db);
  const double sigma2 =
      noisy ? std::pow(10.0, (sig.noise_figure_db - snr_db) / 10.0) : 0.0;
  const double s = std::sqrt(sigma2 / 2.0);
  for (std::size_t n = 0; n < u.size(); ++n) {
    y[n] = impair_sample(sig, filt[n], start_n + n) + sig.dc_offset;
    if (noisy) {
      const double nr = rng.normal();
      const double ni = rng.normal();
      y[n] += std::complex<double>(s * nr, s * ni);
    }
  }
  return y;
}

Dataset synthesize_dataset(const SynthConfig& cfg) {
  validate(cfg);
  const std::uint64_t dev_seed = cfg.device_seed ? cfg.device_seed : cfg.seed;
  RngStream fp_rng = RngStream::derive(dev_seed, "synth.fingerprints");
  RngStream sig_rng = RngStream::derive(dev_seed, "synth.signatures");
  const auto fps = sample_fingerprints(cfg, fp_rng);
  const auto sigs = sample_signatures(cfg, sig_rng);

  Dataset ds;
  ds.M = cfg.M;
  ds.K = cfg.K;
  ds.L = cfg.L;
  ds.per_receiver.resize(cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k)
    ds.per_receiver[k].resize(cfg.M * cfg.frames_per_pair);

  const std::size_t nsym =
      (cfg.L + cfg.samples_per_symbol - 1) / cfg.samples_per_symbol;
  const std::size_t bits_per_frame =
      cfg.modulation == Modulation::QPSK ? 2 * nsym : nsym;
  const std::int64_t total =
      static_cast<std::int64_t>(cfg.M * cfg.K * cfg.frames_per_pair);

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (std::int64_t idx = 0; idx < total; ++idx) {
    const std::size_t m =
        static_cast<std::size_t>(idx) / (cfg.K * cfg.frames_per_pair);
    const std::size_t rem =
        static_cast<std::size_t>(idx) % (cfg.K * cfg.frames_per_pair);
    const std::size_t k = rem / cfg.frames_per_pair;
    const std::size_t i = rem % cfg.frames_per_pair;

    RngStream bits_rng = RngStream::derive(cfg.seed, "synth.bits", m, k, i);
    std::vector<int> bits(bits_per_frame);
    for (int& b : bits) b = static_cast<int>(bits_rng.uniform_int(2));
    const std::size_t start_n = i * cfg.L;

    CVec s = modulate(bits, cfg.modulation, cfg.L, cfg.samples_per_symbol,
                      cfg.bfsk_fdev);
    CVec u = apply_emitter(fps[m], s, start_n);
    u = apply_channel(cfg.channel, u);
    RngStream noise_rng = RngStream::derive(cfg.seed, "synth.noise", m, k, i);
    u = apply_receiver(sigs[k], u, cfg.snr_db, noise_rng, start_n);

    LabeledSample& slot = ds.per_receiver[k][m * cfg.frames_per_pair + i];
    slot.frame = std::move(u);
    slot.emitter = static_cast<int>(m) + 1;
    slot.receiver = static_cast<int>(k) + 1;
  }
  return ds;
}

} // namespace rffi::synth
