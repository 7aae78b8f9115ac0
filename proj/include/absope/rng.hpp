#pragma once

// Counter-based random numbers. Every draw is a pure function of
// (seed, counter), so datasets can be generated in any order or in parallel
// and still come out bit-identical.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace absope {

/// Philox4x32-10 block cipher (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3", SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) {
    ctr = round(ctr, key);
    for (int r = 1; r < 10; ++r) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
      ctr = round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static Counter round(const Counter& c, const Key& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0],
            static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1],
            static_cast<std::uint32_t>(p0)};
  }
};

namespace rng_detail {

inline Philox4x32::Key key_of(std::uint64_t seed, std::uint32_t domain) {
  return {static_cast<std::uint32_t>(seed),
          static_cast<std::uint32_t>(seed >> 32) ^ (domain * 0x85EBCA6Bu)};
}

// 53-bit uniform in the open interval (0, 1).
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((std::uint64_t{hi} << 32) | std::uint64_t{lo}) >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

}  // namespace rng_detail

/// Two uniforms in (0,1) addressed by (seed, a, b, c). The simulator keys
/// draws by (seed, trajectory, step, purpose).
inline std::array<double, 2> keyed_uniforms(std::uint64_t seed,
                                            std::uint64_t a,
                                            std::uint32_t b,
                                            std::uint32_t c) {
  const Philox4x32::Counter ctr{b, static_cast<std::uint32_t>(a),
                                static_cast<std::uint32_t>(a >> 32), c};
  const auto out = Philox4x32::block(ctr, rng_detail::key_of(seed, 1));
  return {rng_detail::to_unit(out[0], out[1]),
          rng_detail::to_unit(out[2], out[3])};
}

/// Standard normal from two uniforms (Box-Muller, cosine branch).
inline double box_muller(double u1, double u2) {
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

/// Inverse-CDF draw from unnormalized nonnegative weights.
inline std::size_t sample_categorical(std::span<const double> weights,
                                      double u) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = u * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    target -= weights[i];
    if (target < 0.0) return i;
  }
  return last_positive;
}

/// Sequential stream over the Philox counter space; used by the model
/// generators. Distributions are implemented here rather than taken from
/// <random> because the standard leaves their algorithms unspecified.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(rng_detail::key_of(seed, 2)), stream_(stream) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  double uniform() {
    const std::uint32_t hi = next_u32();
    return rng_detail::to_unit(hi, next_u32());
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = uniform();
    return box_muller(u1, uniform());
  }

  // Marsaglia-Tsang; shape < 1 handled by the boost U^(1/shape).
  double gamma(double shape) {
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0);
      return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(std::size_t n, double concentration) {
    std::vector<double> out(n);
    double total = 0.0;
    for (auto& x : out) {
      x = gamma(concentration);
      total += x;
    }
    if (total <= 0.0) {
      // All draws underflowed (tiny concentration): fall back to a vertex.
      std::fill(out.begin(), out.end(), 0.0);
      out[index(n)] = 1.0;
      return out;
    }
    for (auto& x : out) x /= total;
    return out;
  }

  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  std::size_t categorical(std::span<const double> weights) {
    return sample_categorical(weights, uniform());
  }

 private:
  void refill() {
    const Philox4x32::Counter ctr{
        static_cast<std::uint32_t>(counter_),
        static_cast<std::uint32_t>(counter_ >> 32),
        static_cast<std::uint32_t>(stream_),
        static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = Philox4x32::block(ctr, key_);
    ++counter_;
    pos_ = 0;
  }

  Philox4x32::Key key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  Philox4x32::Counter buffer_{};
  std::size_t pos_ = 4;
};

/// Mixes several integers into one seed (splitmix64 finalizer chain). Used
/// to derive per-cell seeds in sweeps.
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::uint64_t p : parts) {
    std::uint64_t z = h ^ (p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2));
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    h = z ^ (z >> 31);
  }
  return h;
}

}  // namespace absope
