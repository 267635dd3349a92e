#ifndef XSTFT_RNG_HPP_
#define XSTFT_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace xstft {

// splitmix64 counter generator. Self-contained so that datasets, shuffles and
// initializers are byte-stable across platforms and standard libraries.
// Independent streams are derived from (seed, tag, index) so workers and
// resumed runs never need to replay a shared sequence.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  static Rng stream(uint64_t seed, uint64_t tag, uint64_t index = 0) {
    // One mixing round per component keeps distinct (tag,index) pairs decorrelated.
    uint64_t s = mix(seed + 0x9e3779b97f4a7c15ULL);
    s = mix(s ^ mix(tag + 0xbf58476d1ce4e5b9ULL));
    s = mix(s ^ mix(index + 0x94d049bb133111ebULL));
    return Rng(s);
  }

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Modulo bias is < 2^-53 for the n used here.
  uint64_t next_below(uint64_t n) { return n <= 1 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller; one value per call, deterministic.
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) {
    state_ = s;
    have_spare_ = false;
  }

 private:
  static uint64_t mix(uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  uint64_t state_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace xstft

#endif  // XSTFT_RNG_HPP_
