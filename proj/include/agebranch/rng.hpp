#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace agebranch {

/// Philox4x64-10 counter-based generator (Salmon et al., Random123).
///
/// A stream is identified by (seed, purpose, replicate): the seed and purpose
/// form the key, the replicate index occupies one counter word and the block
/// index another, so every replicate owns an independent, reproducible stream
/// with no shared mutable state.
class Philox4x64 {
 public:
  using result_type = std::uint64_t;
  using Block = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  Philox4x64(std::uint64_t seed, std::uint64_t replicate, std::uint64_t purpose = 0)
      : key_{seed, purpose}, counter_{0, replicate, 0, 0} {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 4) {
      buffer_ = block(counter_, key_);
      ++counter_[0];
      pos_ = 0;
    }
    return buffer_[pos_++];
  }

  /// The bijection itself: ten Philox rounds of counter under key.
  static constexpr Block block(Block ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kW0;
        key[1] += kW1;
      }
      const unsigned __int128 p0 = static_cast<unsigned __int128>(kM0) * ctr[0];
      const unsigned __int128 p1 = static_cast<unsigned __int128>(kM1) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64), lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64), lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
  }

 private:
  static constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ULL;
  static constexpr std::uint64_t kM1 = 0xCA5A826395121157ULL;
  static constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73BULL;

  Key key_;
  Block counter_;
  Block buffer_{};
  int pos_ = 4;
};

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Philox4x64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Exponential waiting time with the given rate (> 0).
inline double exponential(Philox4x64& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

/// Stream purposes, so independent checks never share replicate streams.
namespace stream {
inline constexpr std::uint64_t simulate = 0;
inline constexpr std::uint64_t laplace = 1;
inline constexpr std::uint64_t mean = 2;
inline constexpr std::uint64_t bounds = 3;
inline constexpr std::uint64_t martingale = 4;
inline constexpr std::uint64_t ergodic = 5;
inline constexpr std::uint64_t sampling = 6;
inline constexpr std::uint64_t extinction = 7;
}  // namespace stream

}  // namespace agebranch
