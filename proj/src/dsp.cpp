#include "rffi/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rffi/errors.hpp"

namespace rffi::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

double window_value(Win w, std::size_t n, std::size_t N) {
  if (w == Win::Rect || N < 2) return 1.0;
  return 0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(n) /
                               static_cast<double>(N - 1)));
}

// Natural cubic spline on knots x = 0..n-1: tridiagonal solve for the
// second derivatives with M_0 = M_{n-1} = 0 (Thomas algorithm).
std::vector<double> spline_second_derivs(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> m(n, 0.0);
  if (n < 3) return m;
  std::vector<double> diag(n, 0.0), rhs(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    diag[i] = 4.0;
    rhs[i] = 6.0 * (y[i + 1] - 2.0 * y[i] + y[i - 1]);
  }
  for (std::size_t i = 2; i + 1 < n; ++i) {
    const double f = 1.0 / diag[i - 1];
    diag[i] -= f;
    rhs[i] -= f * rhs[i - 1];
  }
  for (std::size_t i = n - 2; i >= 1; --i) {
    const double upper = (i + 2 < n) ? m[i + 1] : 0.0;
    m[i] = (rhs[i] - upper) / diag[i];
    if (i == 1) break;
  }
  return m;
}

double spline_eval(const std::vector<double>& y, const std::vector<double>& m,
                   double u) {
  const std::size_t n = y.size();
  double uc = std::clamp(u, 0.0, static_cast<double>(n - 1));
  std::size_t i = static_cast<std::size_t>(uc);
  if (i >= n - 1) i = n - 2;
  const double t = uc - static_cast<double>(i);
  const double a = 1.0 - t;
  return m[i] * a * a * a / 6.0 + m[i + 1] * t * t * t / 6.0 +
         (y[i] - m[i] / 6.0) * a + (y[i + 1] - m[i + 1] / 6.0) * t;
}

} // namespace

std::vector<std::pair<std::size_t, std::size_t>> energy_detect(
    const CVec& stream, std::size_t window, double threshold_factor) {
  if (stream.empty()) throw InvalidInputError("energy_detect: empty stream");
  if (window == 0 || window > stream.size())
    throw InvalidInputError("energy_detect: window must be in [1, length]");
  const std::size_t n_win = stream.size() - window + 1;
  std::vector<double> power(n_win);
  for (std::size_t i = 0; i < n_win; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < window; ++j) acc += std::norm(stream[i + j]);
    power[i] = acc / static_cast<double>(window);
  }
  std::vector<double> sorted = power;
  std::sort(sorted.begin(), sorted.end());
  const double median =
      (n_win % 2 == 1)
          ? sorted[n_win / 2]
          : 0.5 * (sorted[n_win / 2 - 1] + sorted[n_win / 2]);
  const double threshold = threshold_factor * median;

  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t run_start = 0;
  bool in_run = false;
  for (std::size_t i = 0; i < n_win; ++i) {
    if (power[i] > threshold) {
      if (!in_run) {
        run_start = i;
        in_run = true;
      }
    } else if (in_run) {
      segments.emplace_back(run_start, i - 1 + window);
      in_run = false;
    }
  }
  if (in_run) segments.emplace_back(run_start, n_win - 1 + window);
  return segments;
}

CVec lowpass_filter(const CVec& stream, double cutoff, std::size_t taps) {
  if (!(cutoff > 0.0 && cutoff < 0.5))
    throw ConfigError("lowpass_filter: cutoff must be in (0, 0.5)");
  if (taps == 0 || taps % 2 == 0)
    throw ConfigError("lowpass_filter: taps must be odd");
  const std::size_t mid = taps / 2;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (std::size_t i = 0; i < taps; ++i) {
    const double t = static_cast<double>(i) - static_cast<double>(mid);
    const double x = 2.0 * kPi * cutoff * t;
    const double sinc = (t == 0.0) ? 2.0 * cutoff : std::sin(x) / (kPi * t);
    const double ham =
        taps == 1 ? 1.0
                  : 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                           static_cast<double>(taps - 1));
    h[i] = sinc * ham;
    sum += h[i];
  }
  for (double& v : h) v /= sum;  // exact unit DC gain

  CVec out(stream.size());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(stream.size());
  const std::ptrdiff_t mi = static_cast<std::ptrdiff_t>(mid);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < taps; ++t) {
      const std::ptrdiff_t src = i + mi - static_cast<std::ptrdiff_t>(t);
      if (src >= 0 && src < n) acc += h[t] * stream[static_cast<std::size_t>(src)];
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

std::vector<CVec> frame_stream(const CVec& stream, std::size_t L,
                               std::size_t hop) {
  if (hop == 0) throw ConfigError("frame_stream: hop must be >= 1");
  if (L == 0) throw ConfigError("frame_stream: L must be >= 1");
  std::vector<CVec> frames;
  for (std::size_t ofs = 0; ofs + L <= stream.size(); ofs += hop)
    frames.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(ofs),
                        stream.begin() + static_cast<std::ptrdiff_t>(ofs + L));
  return frames;
}

CVec normalize_rms(const CVec& frame) {
  const double r = rms(frame);
  if (r == 0.0) throw InvalidInputError("normalize_rms: all-zero frame");
  CVec out(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = frame[i] / r;
  return out;
}

CVec dft_naive(const CVec& x) {
  const std::size_t n = x.size();
  CVec out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * static_cast<double>(k * t) /
                         static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

CVec fft(const CVec& x) {
  const std::size_t n = x.size();
  if (!is_pow2(n)) return dft_naive(x);
  CVec a = x;
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const std::complex<double> u = a[i + j];
        const std::complex<double> v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  return a;
}

CVec ifft(const CVec& x) {
  CVec c(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) c[i] = std::conj(x[i]);
  CVec f = fft(c);
  const double inv = 1.0 / static_cast<double>(x.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::conj(f[i]) * inv;
  return f;
}

Spectrogram stft(const CVec& frame, std::size_t window_len, std::size_t hop,
                 Win window) {
  if (hop == 0) throw ConfigError("stft: hop must be >= 1");
  if (window_len == 0 || window_len > frame.size())
    throw ConfigError("stft: window_len must be in [1, frame length]");
  Spectrogram sg;
  sg.window_len = window_len;
  sg.hop = hop;
  sg.rows = (frame.size() - window_len) / hop + 1;
  sg.cols = window_len;
  sg.mag.assign(sg.rows * sg.cols, 0.0);
  CVec buf(window_len);
  for (std::size_t r = 0; r < sg.rows; ++r) {
    for (std::size_t i = 0; i < window_len; ++i)
      buf[i] = frame[r * hop + i] * window_value(window, i, window_len);
    const CVec spec = fft(buf);
    for (std::size_t c = 0; c < window_len; ++c)
      sg.mag[r * sg.cols + c] = std::abs(spec[c]);
  }
  return sg;
}

CVec inject_narrowband(const CVec& frame, const InterferenceConfig& cfg,
                       RngStream& rng) {
  if (std::isinf(cfg.isr_db) && cfg.isr_db < 0.0) return frame;
  if (cfg.n_select >= cfg.n_bins)
    throw ConfigError("inject_narrowband: n_select must be < n_bins");
  if (cfg.n_bins == 0 || cfg.n_bins > frame.size() ||
      frame.size() % cfg.n_bins != 0)
    throw ConfigError("inject_narrowband: n_bins must divide frame length");

  const std::size_t n = frame.size();
  const std::size_t group = n / cfg.n_bins;
  // Distinct bins, fixed for this frame.
  std::vector<std::size_t> chosen;
  while (chosen.size() < cfg.n_select) {
    const std::size_t b = static_cast<std::size_t>(rng.uniform_int(cfg.n_bins));
    if (std::find(chosen.begin(), chosen.end(), b) == chosen.end())
      chosen.push_back(b);
  }
  CVec noise(n, {0.0, 0.0});
  double freq_energy = 0.0;
  for (std::size_t b : chosen)
    for (std::size_t j = 0; j < group; ++j) {
      const std::complex<double> g(rng.normal(), rng.normal());
      noise[b * group + j] = g;
      freq_energy += std::norm(g);
    }
  const double p_sig = mean_power(frame);
  const double target_power = std::pow(10.0, cfg.isr_db / 10.0) * p_sig;
  // Parseval: time-domain power of the injected spectrum is
  // freq_energy / n^2; scale to land exactly on the target.
  const double realized = freq_energy / (static_cast<double>(n) *
                                         static_cast<double>(n));
  if (realized == 0.0) return frame;
  const double scale = std::sqrt(target_power / realized);

  CVec spec = fft(frame);
  for (std::size_t i = 0; i < n; ++i) spec[i] += scale * noise[i];
  return ifft(spec);
}

CVec inject_broadband(const CVec& frame, const InterferenceConfig& cfg,
                      RngStream& rng) {
  if (std::isinf(cfg.isr_db) && cfg.isr_db < 0.0) return frame;
  const std::size_t n = frame.size();
  CVec noise(n);
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    noise[i] = {rng.normal(), rng.normal()};
    energy += std::norm(noise[i]);
  }
  if (energy == 0.0) return frame;
  const double p_sig = mean_power(frame);
  const double target_power = std::pow(10.0, cfg.isr_db / 10.0) * p_sig;
  const double scale =
      std::sqrt(target_power / (energy / static_cast<double>(n)));
  CVec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = frame[i] + scale * noise[i];
  return out;
}

CVec resample_cubic(const CVec& frame, double ratio) {
  if (frame.size() < 4)
    throw InvalidInputError("resample_cubic: need at least 4 samples");
  if (!(ratio >= 0.1 && ratio <= 10.0))
    throw ConfigError("resample_cubic: ratio must be in [0.1, 10]");
  const std::size_t n = frame.size();
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = frame[i].real();
    im[i] = frame[i].imag();
  }
  const std::vector<double> mre = spline_second_derivs(re);
  const std::vector<double> mim = spline_second_derivs(im);
  CVec out(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double u = static_cast<double>(j) * ratio;
    out[j] = {spline_eval(re, mre, u), spline_eval(im, mim, u)};
  }
  return out;
}

} // namespace rffi::dsp
