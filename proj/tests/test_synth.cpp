#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "rffi/dsp.hpp"
#include "rffi/errors.hpp"
#include "rffi/rng.hpp"
#include "rffi/synth.hpp"

using namespace rffi;
using namespace rffi::synth;

namespace {

constexpr double kPi = 3.14159265358979323846;

SynthConfig small_config() {
  SynthConfig cfg;
  cfg.M = 2;
  cfg.K = 2;
  cfg.L = 64;
  cfg.frames_per_pair = 6;
  cfg.snr_db = 20.0;
  cfg.seed = 5;
  cfg.modulation = Modulation::BFSK;
  cfg.samples_per_symbol = 8;
  cfg.bfsk_fdev = 0.0625;
  cfg.emitter_ranges.gain = {-0.2, 0.2};
  cfg.emitter_ranges.phase = {-0.3, 0.3};
  cfg.emitter_ranges.cfo = {-0.01, 0.01};
  cfg.receiver_ranges.gain = {-0.1, 0.1};
  cfg.receiver_ranges.phase = {-0.15, 0.15};
  cfg.receiver_ranges.cfo = {-0.004, 0.004};
  cfg.receiver_nf = {0.0, 2.0};
  cfg.receiver_dc = {-0.05, 0.05};
  cfg.fir_len = 3;
  cfg.fir_jitter = 0.1;
  cfg.min_gap = 0.1;
  return cfg;
}

bool frames_equal(const Dataset& a, const Dataset& b) {
  if (a.per_receiver.size() != b.per_receiver.size()) return false;
  for (std::size_t k = 0; k < a.per_receiver.size(); ++k) {
    if (a.per_receiver[k].size() != b.per_receiver[k].size()) return false;
    for (std::size_t i = 0; i < a.per_receiver[k].size(); ++i) {
      const auto& fa = a.per_receiver[k][i].frame;
      const auto& fb = b.per_receiver[k][i].frame;
      if (fa != fb) return false;
    }
  }
  return true;
}

// Chebyshev distance over the range-normalized core fields, zero-width
// fields excluded.
double gap_distance(const ImpairmentParams& a, const ImpairmentParams& b,
                    const ImpairmentRanges& r) {
  double d = 0.0;
  auto upd = [&](double x, double y, double w) {
    if (w == 0.0) return;
    d = std::max(d, std::abs(x - y) / std::abs(w));
  };
  upd(a.a3, b.a3, r.a3.width());
  upd(a.a5, b.a5, r.a5.width());
  upd(a.iq_gain_mismatch, b.iq_gain_mismatch, r.gain.width());
  upd(a.iq_phase_mismatch, b.iq_phase_mismatch, r.phase.width());
  upd(a.cfo, b.cfo, r.cfo.width());
  upd(a.phase0, b.phase0, r.phase0.width());
  return d;
}

} // namespace

TEST_CASE("bfsk all-zero bits is a pure tone at minus fdev") {
  const std::size_t L = 256;
  std::vector<int> bits(L / 8, 0);
  CVec s = modulate(bits, Modulation::BFSK, L, 8, 0.0625);
  CVec S = dsp::fft(s);
  // -1/16 cycles/sample lands on bin L - L/16 = 240 exactly.
  for (std::size_t k = 0; k < L; ++k) {
    if (k == 240)
      CHECK(std::abs(S[k]) == doctest::Approx(double(L)).epsilon(1e-12));
    else
      CHECK(std::abs(S[k]) < 1e-9);
  }
}

TEST_CASE("bfsk alternating bits switch the tone sign per symbol") {
  std::vector<int> bits = {0, 1};
  CVec s = modulate(bits, Modulation::BFSK, 16, 8, 0.05);
  // First symbol runs at -fdev, second at +fdev, phase continuous.
  double phase = 0.0;
  for (std::size_t n = 0; n < 16; ++n) {
    CHECK(s[n].real() == doctest::Approx(std::cos(phase)).epsilon(1e-12));
    CHECK(s[n].imag() == doctest::Approx(std::sin(phase)).epsilon(1e-12));
    phase += 2.0 * kPi * (n < 8 ? -0.05 : 0.05);
  }
}

TEST_CASE("qpsk maps 00 to the first-quadrant point") {
  std::vector<int> bits(32, 0);
  CVec s = modulate(bits, Modulation::QPSK, 16, 8, 0.0);
  const double r = 1.0 / std::sqrt(2.0);
  for (const auto& v : s) {
    CHECK(v.real() == doctest::Approx(r).epsilon(1e-15));
    CHECK(v.imag() == doctest::Approx(r).epsilon(1e-15));
  }
}

TEST_CASE("modulated frames have unit envelope") {
  RngStream rng = RngStream::derive(3, "test.bits");
  for (Modulation scheme : {Modulation::BFSK, Modulation::QPSK}) {
    std::vector<int> bits(64);
    for (int& b : bits) b = int(rng.uniform_int(2));
    CVec s = modulate(bits, scheme, 128, 4, 0.1);
    for (const auto& v : s)
      CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("modulate rejects short bit vectors and zero sps") {
  std::vector<int> bits(3, 0);
  CHECK_THROWS_AS(modulate(bits, Modulation::BFSK, 64, 8, 0.1),
                  InvalidInputError);
  CHECK_THROWS_AS(modulate(bits, Modulation::QPSK, 16, 8, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS(modulate(bits, Modulation::BFSK, 16, 0, 0.1), ConfigError);
}

TEST_CASE("zero fingerprint leaves the frame untouched") {
  RngStream rng = RngStream::derive(4, "test.id");
  std::vector<int> bits(16);
  for (int& b : bits) b = int(rng.uniform_int(2));
  CVec s = modulate(bits, Modulation::BFSK, 64, 4, 0.05);
  EmitterFingerprint fp;
  CVec y = apply_emitter(fp, s, 123);
  REQUIRE(y.size() == s.size());
  for (std::size_t n = 0; n < s.size(); ++n) CHECK(y[n] == s[n]);
}

TEST_CASE("cfo-only fingerprint rotates by the absolute sample index") {
  CVec s(8, {1.0, 0.0});
  EmitterFingerprint fp;
  fp.cfo = 0.01;
  fp.phase0 = 0.2;
  CVec y = apply_emitter(fp, s, 5);
  for (std::size_t n = 0; n < s.size(); ++n) {
    const double ang = 2.0 * kPi * 0.01 * double(5 + n) + 0.2;
    CHECK(y[n].real() == doctest::Approx(std::cos(ang)).epsilon(1e-12));
    CHECK(y[n].imag() == doctest::Approx(std::sin(ang)).epsilon(1e-12));
  }
}

TEST_CASE("channel taps convolve causally") {
  ChannelModel ch;
  ch.taps = {{0.0, 0.0}, {1.0, 0.0}};
  CVec u = {{1, 0}, {2, 0}, {3, 0}};
  CVec y = apply_channel(ch, u);
  CHECK(y[0] == std::complex<double>(0, 0));
  CHECK(y[1] == std::complex<double>(1, 0));
  CHECK(y[2] == std::complex<double>(2, 0));
  ChannelModel id;
  CVec z = apply_channel(id, u);
  for (std::size_t n = 0; n < u.size(); ++n) CHECK(z[n] == u[n]);
}

TEST_CASE("identity receiver at infinite snr is transparent") {
  ReceiverSignature sig;
  RngStream rng = RngStream::derive(6, "test.rx");
  CVec u = {{0.3, -0.4}, {1.0, 0.25}, {-0.7, 0.1}};
  CVec y = apply_receiver(sig, u, std::numeric_limits<double>::infinity(), rng,
                          0);
  for (std::size_t n = 0; n < u.size(); ++n) CHECK(y[n] == u[n]);
}

TEST_CASE("receiver noise power follows snr minus noise figure") {
  ReceiverSignature sig;
  sig.noise_figure_db = 3.0;
  RngStream rng = RngStream::derive(8, "test.noise");
  const std::size_t n = 20000;
  CVec u(n, {0.0, 0.0});
  CVec y = apply_receiver(sig, u, 10.0, rng, 0);
  double p = 0.0;
  for (const auto& v : y) p += std::norm(v);
  p /= double(n);
  // Expected noise power 10^((nf - snr)/10) \approx 0.2, a chi-square mean
  // with relative sd sqrt(1/n) = 0.7%.
  CHECK(p == doctest::Approx(std::pow(10.0, -0.7)).epsilon(0.05));
}

TEST_CASE("fingerprints and signatures respect the pairwise gap") {
  SynthConfig cfg = small_config();
  RngStream fr = RngStream::derive(cfg.seed, "synth.fingerprints");
  RngStream sr = RngStream::derive(cfg.seed, "synth.signatures");
  auto fps = sample_fingerprints(cfg, fr);
  auto sigs = sample_signatures(cfg, sr);
  REQUIRE(fps.size() == cfg.M);
  REQUIRE(sigs.size() == cfg.K);
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = i + 1; j < fps.size(); ++j)
      CHECK(gap_distance(fps[i], fps[j], cfg.emitter_ranges) >= cfg.min_gap);
  for (std::size_t i = 0; i < sigs.size(); ++i)
    for (std::size_t j = i + 1; j < sigs.size(); ++j)
      CHECK(gap_distance(sigs[i], sigs[j], cfg.receiver_ranges) >= cfg.min_gap);
  for (const auto& sig : sigs) {
    double e = 0.0;
    for (double h : sig.fir_taps) e += h * h;
    CHECK(e == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sig.fir_taps.size() == cfg.fir_len);
  }
}

TEST_CASE("all-zero ranges make a positive gap unsatisfiable") {
  SynthConfig cfg = small_config();
  cfg.emitter_ranges = ImpairmentRanges{};
  cfg.min_gap = 0.5;
  RngStream fr = RngStream::derive(1, "synth.fingerprints");
  CHECK_THROWS_AS(sample_fingerprints(cfg, fr), ConfigError);
}

TEST_CASE("config validation rejects degenerate setups") {
  SynthConfig cfg = small_config();
  cfg.M = 1;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
  cfg = small_config();
  cfg.L = 16;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
  cfg = small_config();
  cfg.frames_per_pair = 0;
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
  cfg = small_config();
  cfg.receiver_nf = {-1.0, 2.0};
  CHECK_THROWS_AS(synthesize_dataset(cfg), ConfigError);
}

TEST_CASE("dataset shape, labels, and counts") {
  SynthConfig cfg = small_config();
  Dataset ds = synthesize_dataset(cfg);
  CHECK(ds.M == cfg.M);
  CHECK(ds.K == cfg.K);
  CHECK(ds.L == cfg.L);
  CHECK(ds.total() == cfg.M * cfg.K * cfg.frames_per_pair);
  REQUIRE(ds.per_receiver.size() == cfg.K);
  for (std::size_t k = 0; k < cfg.K; ++k) {
    REQUIRE(ds.per_receiver[k].size() == cfg.M * cfg.frames_per_pair);
    std::vector<std::size_t> per_emitter(cfg.M, 0);
    for (const auto& s : ds.per_receiver[k]) {
      CHECK(s.frame.size() == cfg.L);
      CHECK(s.receiver == int(k) + 1);
      REQUIRE(s.emitter >= 1);
      REQUIRE(s.emitter <= int(cfg.M));
      ++per_emitter[s.emitter - 1];
    }
    for (std::size_t m = 0; m < cfg.M; ++m)
      CHECK(per_emitter[m] == cfg.frames_per_pair);
  }
}

TEST_CASE("synthesis is deterministic in the config") {
  SynthConfig cfg = small_config();
  Dataset a = synthesize_dataset(cfg);
  Dataset b = synthesize_dataset(cfg);
  CHECK(frames_equal(a, b));
}

TEST_CASE("device seed pins the hardware draw") {
  SynthConfig cfg = small_config();

  // device_seed == 0 falls back to the run seed.
  SynthConfig explicit_dev = cfg;
  explicit_dev.device_seed = cfg.seed;
  CHECK(frames_equal(synthesize_dataset(cfg), synthesize_dataset(explicit_dev)));

  // Same run seed, different devices: frames differ.
  SynthConfig other_dev = cfg;
  other_dev.device_seed = 99;
  CHECK_FALSE(frames_equal(synthesize_dataset(cfg),
                           synthesize_dataset(other_dev)));

  // Same devices, different run seed: frame content differs.
  SynthConfig other_run = other_dev;
  other_run.seed = cfg.seed + 1;
  CHECK_FALSE(frames_equal(synthesize_dataset(other_dev),
                           synthesize_dataset(other_run)));
}

TEST_CASE("calibrated scenario synthesizes and separates devices") {
  SynthConfig cfg = calibrated_scenario();
  CHECK(cfg.M == 4);
  CHECK(cfg.K == 3);
  CHECK(cfg.L == 256);
  CHECK(cfg.frames_per_pair == 500);
  cfg.frames_per_pair = 2;  // keep the smoke test fast
  Dataset ds = synthesize_dataset(cfg);
  CHECK(ds.total() == cfg.M * cfg.K * 2);
  RngStream fr = RngStream::derive(cfg.device_seed, "synth.fingerprints");
  auto fps = sample_fingerprints(cfg, fr);
  for (std::size_t i = 0; i < fps.size(); ++i)
    for (std::size_t j = i + 1; j < fps.size(); ++j)
      CHECK(gap_distance(fps[i], fps[j], cfg.emitter_ranges) >= cfg.min_gap);
}
