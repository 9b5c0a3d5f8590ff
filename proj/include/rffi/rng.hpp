#ifndef RFFI_RNG_HPP
#define RFFI_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace rffi {

// Hierarchically derived random stream. Every stochastic component draws from
// a stream keyed by (seed, purpose, indices), so results do not depend on
// scheduling or thread count. All draws are bit-exact across platforms:
// mt19937_64 is fully specified and the real-valued transforms below avoid
// the implementation-defined std distributions.
class RngStream {
public:
  explicit RngStream(std::uint64_t key);

  static RngStream derive(std::uint64_t seed, std::string_view purpose,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1).
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (one draw per call).
  double normal();
  double normal(double mean, double stddev);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_int(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer used for key derivation and config fingerprints.
std::uint64_t mix64(std::uint64_t x);

} // namespace rffi

#endif
