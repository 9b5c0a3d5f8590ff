#include "rffi/rng.hpp"

#include <cmath>
#include <numbers>

#include "rffi/errors.hpp"

namespace rffi {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

std::uint64_t hash_purpose(std::string_view purpose) {
  // FNV-1a over the purpose label keeps distinct stream families apart.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : purpose) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace

RngStream::RngStream(std::uint64_t key) : engine_(key) {}

RngStream RngStream::derive(std::uint64_t seed, std::string_view purpose,
                            std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t key = mix64(seed);
  key = mix64(key ^ hash_purpose(purpose));
  key = mix64(key ^ a);
  key = mix64(key ^ b);
  key = mix64(key ^ c);
  return RngStream(key);
}

std::uint64_t RngStream::next_u64() { return engine_(); }

double RngStream::uniform() {
  // 53-bit mantissa; result lies in [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
  // Box-Muller with u1 in (0, 1] so the log argument is never zero.
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::normal(double mean, double stddev) {
  return mean + stddev * normal();
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
  if (n == 0) throw ConfigError("uniform_int: n must be positive");
  // Masked rejection keeps the draw unbiased without 128-bit arithmetic.
  std::uint64_t mask = ~0ULL;
  if ((n & (n - 1)) == 0) return next_u64() & (n - 1);
  int bits = 0;
  for (std::uint64_t m = n - 1; m != 0; m >>= 1) ++bits;
  mask = (bits == 64) ? ~0ULL : ((1ULL << bits) - 1);
  for (;;) {
    std::uint64_t v = next_u64() & mask;
    if (v < n) return v;
  }
}

} // namespace rffi
