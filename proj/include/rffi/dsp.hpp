#ifndef RFFI_DSP_HPP
#define RFFI_DSP_HPP

#include <cstddef>
#include <utility>
#include <vector>

#include "rffi/iq.hpp"
#include "rffi/rng.hpp"

namespace rffi::dsp {

// Maximal contiguous runs of sliding windows whose mean power exceeds
// threshold_factor times the median window power. Segments are half-open
// sample ranges [start, end) covering the qualifying windows.
std::vector<std::pair<std::size_t, std::size_t>> energy_detect(
    const CVec& stream, std::size_t window, double threshold_factor);

// Windowed-sinc (Hamming) FIR lowpass with unit DC gain, group delay
// compensated; output has the input's length. cutoff in cycles/sample,
// 0 < cutoff < 0.5; taps odd.
CVec lowpass_filter(const CVec& stream, double cutoff, std::size_t taps);

// Full frames at offsets 0, hop, 2 hop, ...; trailing partial discarded.
std::vector<CVec> frame_stream(const CVec& stream, std::size_t L,
                               std::size_t hop);

// frame / rms(frame). All-zero input is an error.
CVec normalize_rms(const CVec& frame);

enum class Win { Hann, Rect };

struct Spectrogram {
  std::size_t rows = 0;  // time
  std::size_t cols = 0;  // frequency bins (= window_len)
  std::vector<double> mag;
  std::size_t window_len = 0;
  std::size_t hop = 0;
  double at(std::size_t r, std::size_t c) const { return mag[r * cols + c]; }
};

Spectrogram stft(const CVec& frame, std::size_t window_len, std::size_t hop,
                 Win window);

// O(N^2) reference DFT (oracle for the fast transform).
CVec dft_naive(const CVec& x);
// Forward DFT: radix-2 when the length is a power of two, naive otherwise.
CVec fft(const CVec& x);
CVec ifft(const CVec& x);

enum class InterferenceKind { NarrowbandHopping, BroadbandGaussian };

struct InterferenceConfig {
  InterferenceKind kind = InterferenceKind::NarrowbandHopping;
  double isr_db = 0.0;  // -infinity disables injection
  std::size_t n_bins = 256;
  std::size_t n_select = 2;
};

// Adds complex Gaussian interference to n_select of n_bins frequency groups
// (selection fixed within the frame, drawn from the stream), scaled so the
// realized interference-to-signal power ratio is exactly 10^(isr_db/10).
CVec inject_narrowband(const CVec& frame, const InterferenceConfig& cfg,
                       RngStream& rng);
// Time-domain complex white Gaussian interference, scaled the same way.
CVec inject_broadband(const CVec& frame, const InterferenceConfig& cfg,
                      RngStream& rng);

// The frame is treated as captured at ratio x the nominal rate. A natural
// cubic spline through the capture samples (knots at integer indices) is
// evaluated at the nominal grid positions j*ratio, clamped to the capture
// extent, returning a frame of the original length.
CVec resample_cubic(const CVec& frame, double ratio);

} // namespace rffi::dsp

#endif
