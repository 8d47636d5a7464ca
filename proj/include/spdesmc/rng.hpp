#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace spdesmc {

// Stream keys are derived by hashing a (seed, id...) tuple, so any worker can
// reconstruct the exact same stream regardless of execution order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t k = splitmix64(seed);
  for (std::uint64_t p : path) k = splitmix64(k ^ (p + 0x632be59bd9b4e019ULL));
  return k;
}

// stream purposes, first element of every derivation path
inline constexpr std::uint64_t kStreamTruthPath = 1;
inline constexpr std::uint64_t kStreamObsNoise = 2;
inline constexpr std::uint64_t kStreamPfInit = 3;
inline constexpr std::uint64_t kStreamPfPropagate = 4;
inline constexpr std::uint64_t kStreamPfMove = 5;
inline constexpr std::uint64_t kStreamPfResample = 6;
inline constexpr std::uint64_t kStreamMcmc = 7;

// Seeded random stream: xoshiro256++ with splitmix64 state expansion and an
// explicit Box-Muller transform, so draws are reproducible independent of the
// standard library version.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) {
    std::uint64_t x = splitmix64(key);
    for (int i = 0; i < 4; ++i) {
      x = splitmix64(x);
      s_[i] = x;
    }
  }

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path)
      : RngStream(derive_key(seed, path)) {}

  std::uint64_t next_u64() {
    const auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // bulk fill with a vectorized Box-Muller pass over thread-local scratch
  void fill_normal_flat(double* dst, Eigen::Index n) {
    if (n <= 0) return;
    const Eigen::Index pairs = (n + 1) / 2;
    thread_local Eigen::ArrayXd u1, u2, r, z1, z2;
    if (u1.size() < pairs) {
      u1.resize(pairs);
      u2.resize(pairs);
      r.resize(pairs);
      z1.resize(pairs);
      z2.resize(pairs);
    }
    auto u1h = u1.head(pairs), u2h = u2.head(pairs);
    for (Eigen::Index i = 0; i < pairs; ++i) u1h[i] = uniform();
    for (Eigen::Index i = 0; i < pairs; ++i) u2h[i] = uniform();
    r.head(pairs) = (-2.0 * u1h.max(1e-300).log()).sqrt();
    u2h *= 2.0 * M_PI;
    z1.head(pairs) = r.head(pairs) * u2h.cos();
    z2.head(pairs) = r.head(pairs) * u2h.sin();
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < pairs && k < n; ++i) {
      dst[k++] = z1[i];
      if (k < n) dst[k++] = z2[i];
    }
  }

  template <typename Derived>
  void fill_normal(Eigen::PlainObjectBase<Derived>& out) {
    fill_normal_flat(out.data(), out.size());
  }

  Eigen::ArrayXd normal_vector(Eigen::Index n) {
    Eigen::ArrayXd z(n);
    fill_normal_flat(z.data(), n);
    return z;
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace spdesmc
