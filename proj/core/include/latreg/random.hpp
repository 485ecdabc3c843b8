#ifndef LATREG_RANDOM_HPP
#define LATREG_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

namespace latreg {

// All sampling goes through the helpers below instead of the standard
// <random> distributions, whose output is implementation-defined. Results
// are then reproducible from a seed independently of the standard library.

inline double u64_to_unit_double(std::uint64_t bits) {
  // 53 uniform bits -> [0, 1)
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// splitmix64 finalizer, used both to derive sub-seeds and as the mixing
// function of the counter-based stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// Sequential generator: a seeded mt19937_64 engine with hand-rolled
// distributions on top.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t bits() { return engine_(); }

  double uniform() { return u64_to_unit_double(engine_()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; draws are consumed in pairs and cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double mag = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = mag * std::sin(ang);
    have_spare_ = true;
    return mag * std::cos(ang);
  }

  Eigen::Vector3d normal3() {
    Eigen::Vector3d v;
    v << normal(), normal(), normal();
    return v;
  }

  // Uniform direction on the unit sphere.
  Eigen::Vector3d unit_vector() {
    while (true) {
      const Eigen::Vector3d v = normal3();
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    // modulo bias is < 2^-40 for every n used here (n << 2^64)
    return engine_() % n;
  }

  // Derived generator, independent of draws already made from this one.
  Rng substream(std::uint64_t stream) const {
    return Rng(derive_seed(seed_, stream));
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Counter-based stream: stateless draws addressed by a key tuple. Safe to
// evaluate from any thread in any order; the value depends only on
// (seed, k1, k2, k3, counter).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t bits(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3,
                     std::uint64_t counter) const {
    std::uint64_t h = splitmix64(seed_ ^ 0x8824a3d6f9f4c512ULL);
    h = splitmix64(h ^ splitmix64(k1));
    h = splitmix64(h ^ splitmix64(k2 + 0x52a379a33c1e4096ULL));
    h = splitmix64(h ^ splitmix64(k3 + 0xd6e8feb86659fd93ULL));
    return splitmix64(h ^ splitmix64(counter + 0xa5a5a5a5a5a5a5a5ULL));
  }

  double uniform(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3,
                 std::uint64_t counter) const {
    return u64_to_unit_double(bits(k1, k2, k3, counter));
  }

  // One standard normal per counter value (Box-Muller, cosine branch).
  double normal(std::uint64_t k1, std::uint64_t k2, std::uint64_t k3,
                std::uint64_t counter) const {
    double u1 = uniform(k1, k2, k3, 2 * counter);
    const double u2 = uniform(k1, k2, k3, 2 * counter + 1);
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

}  // namespace latreg

#endif  // LATREG_RANDOM_HPP
