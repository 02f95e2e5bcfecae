#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace abcu {

// Distinct deterministic substreams derived from one run seed. Each consumer
// (block selection, delay draws, per-worker generators, data generation) gets
// its own generator so adding a consumer never perturbs the others.
enum class RngStream : std::uint64_t {
  Blocks = 1,
  Delays = 2,
  Data = 3,
  Worker = 16,  // worker w uses Worker + w
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream,
                                std::uint64_t offset = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(
      static_cast<std::uint64_t>(stream) + offset));
  return std::mt19937_64(s);
}

// Uniform double in [0, 1) built from the top 53 bits; pinned bit pattern
// regardless of the standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; exact and portable.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Box-Muller pair; callers that need a stream should use NormalSampler.
class NormalSampler {
 public:
  explicit NormalSampler(std::mt19937_64& rng) : rng_(rng) {}

  double operator()() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform01(rng_);
    } while (u1 <= 0.0);
    const double u2 = uniform01(rng_);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace abcu
