#pragma once

// Counter-based random number generation. Every draw is a pure function of
// (seed, step, slot, stream, draw counter), so simulations are bit-reproducible
// regardless of thread schedule or worker count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace fv {

/// Philox-4x64, 10 rounds (Salmon et al., SC'11 reference constants).
struct Philox4x64 {
  using Counter = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  static constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
  static constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
  static constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
  static constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

  static Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      const auto p0 = static_cast<unsigned __int128>(kMul0) * ctr[0];
      const auto p1 = static_cast<unsigned __int128>(kMul1) * ctr[2];
      const auto hi0 = static_cast<std::uint64_t>(p0 >> 64);
      const auto lo0 = static_cast<std::uint64_t>(p0);
      const auto hi1 = static_cast<std::uint64_t>(p1 >> 64);
      const auto lo1 = static_cast<std::uint64_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent 64-bit seed from a base seed and a context tag.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(splitmix64(seed) ^ splitmix64(tag));
}

/// Substream identifiers; distinct values give statistically independent
/// streams for the same (seed, step, slot).
enum class StreamId : std::uint64_t {
  kEvolve = 0,   // single-system particle updates
  kInit = 1,     // initial configuration draws
  kCoupled = 2,  // two-system coupled updates
  kScratch = 3,  // tests, diagnostics, auxiliary sampling
};

/// One logical random stream, keyed by (seed; step, slot, stream).
/// Draw order within a stream is up to the caller; values depend only on the
/// key and the number of preceding draws on this instance.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t step, std::uint64_t slot,
            StreamId stream = StreamId::kEvolve)
      : key_{seed, splitmix64(seed ^ 0xA3EC4E6C89ULL)},
        base_{0, slot, step, static_cast<std::uint64_t>(stream)} {}

  std::uint64_t next_u64() {
    if (word_ == 4) {
      auto ctr = base_;
      ctr[0] = block_index_++;
      buffer_ = Philox4x64::block(ctr, key_);
      word_ = 0;
    }
    return buffer_[word_++];
  }

  /// Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on {0, 1, ..., n-1}.
  std::uint64_t pick(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  void fill_gaussian(std::span<double> out) {
    for (double& v : out) v = gaussian();
  }

 private:
  Philox4x64::Key key_;
  Philox4x64::Counter base_;
  Philox4x64::Counter buffer_{};
  std::uint64_t block_index_ = 0;
  int word_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fv
