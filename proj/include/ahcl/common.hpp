#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace ahcl {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and read/written directly");

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed file contents. Messages identify the offending byte or line.
struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Named sub-streams of the user-facing seed. Every consumer draws from its
/// own derived stream, so adding a consumer never shifts existing ones.
enum class SeedStream : uint64_t {
  param_init = 1,
  synthetic_centers = 2,
  synthetic_noise = 3,
  omega_sampling = 4,
  code_init = 5,
  batch_shuffle = 6,
};

inline constexpr uint64_t derive_seed(uint64_t base, SeedStream stream,
                                      uint64_t index = 0) {
  uint64_t s = base ^ (0x9e3779b97f4a7c15ull * (static_cast<uint64_t>(stream) + 1));
  splitmix64(s);
  s ^= 0xd6e8feb86659fd93ull * (index + 1);
  return splitmix64(s);
}

/// splitmix64-backed generator. Self-contained so that streams are
/// bit-reproducible across standard libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Unbiased integer in [0, bound) by rejection.
  uint64_t below(uint64_t bound) {
    const uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via Marsaglia's polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform(-1.0, 1.0);
      v = uniform(-1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  int8_t sign() { return (next_u64() & 1u) ? int8_t{1} : int8_t{-1}; }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ahcl
