#pragma once

// Counter-based Philox4x32-10. Every normal variate is a pure function of
// (seed, trajectory, step, stream), so ensembles do not depend on scheduling.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace qgle {

class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter generate(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += 0x9E3779B9u;
        key[1] += 0xBB67AE85u;
      }
      const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const auto lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const auto lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }
};

/// Stream ids separate the per-step increments from initial-condition draws.
enum class RngStream : std::uint32_t { kIncrement = 0, kInitial = 1, kBootstrap = 2 };

/// Standard normals (Box-Muller on pairs of 53-bit uniforms) for one
/// (seed, trajectory, step, stream) cell.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t trajectory, std::uint64_t step,
               RngStream stream = RngStream::kIncrement)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        ctr_{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
             static_cast<std::uint32_t>(trajectory),
             (static_cast<std::uint32_t>(stream) << 24) ^
                 (static_cast<std::uint32_t>(trajectory >> 32) << 16)} {}

  double normal() {
    if (cached_) {
      cached_ = false;
      return cache_;
    }
    const auto [u1, u2] = uniform_pair();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1-u1 in (0, 1]
    const double a = 2.0 * std::numbers::pi * u2;
    cache_ = r * std::sin(a);
    cached_ = true;
    return r * std::cos(a);
  }

  /// Uniform on [0, 1).
  double uniform() {
    if (!have_uniform_) {
      const auto [u1, u2] = uniform_pair();
      spare_uniform_ = u2;
      have_uniform_ = true;
      return u1;
    }
    have_uniform_ = false;
    return spare_uniform_;
  }

 private:
  std::array<double, 2> uniform_pair() {
    Philox4x32::Counter c = ctr_;
    c[3] += block_++;
    const Philox4x32::Counter r = Philox4x32::generate(c, key_);
    return {to_unit(r[0], r[1]), to_unit(r[2], r[3])};
  }

  static double to_unit(std::uint32_t a, std::uint32_t b) {
    return (static_cast<double>(a >> 5) * 67108864.0 + static_cast<double>(b >> 6)) *
           (1.0 / 9007199254740992.0);
  }

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_;
  std::uint32_t block_ = 0;
  bool cached_ = false;
  double cache_ = 0.0;
  bool have_uniform_ = false;
  double spare_uniform_ = 0.0;
};

}  // namespace qgle
