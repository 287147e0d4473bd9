#ifndef SSEP_RNG_HPP
#define SSEP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace ssep {

/// Deterministic random source. Draws map to the mt19937_64 stream in a
/// fixed way (no distribution-object state), so serialized state resumes
/// bit-exactly and results do not depend on the C++ library version of
/// std::normal_distribution et al.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

  /// Independent child stream; used to give each consumer (init, sampler,
  /// noise, ...) its own decorrelated sequence from one master seed.
  Rng derive(std::uint64_t stream_tag) const {
    std::mt19937_64 probe = gen_;
    std::uint64_t base = probe();
    // splitmix64 of (base ^ tag)
    std::uint64_t z = (base ^ stream_tag) + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0,1) with 53 random bits.
  double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // rejection sampling to avoid modulo bias
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (cosine branch only, so one call
  /// consumes exactly two uniforms and the generator carries no cache).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  static Rng deserialize(const std::string& s) {
    Rng r;
    std::istringstream is(s);
    is >> r.gen_;
    return r;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ssep

#endif  // SSEP_RNG_HPP
