#pragma once

#include <cstdint>

namespace pdgibbs {

/// Streams are keyed by what they drive so that two consumers never share one.
enum class StreamPurpose : std::uint64_t {
  Init = 1,
  InitDual = 2,
  Primal = 3,
  Dual = 4,
  Sequential = 5,
  Partition = 6,
  Chain = 7,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// SplitMix64 sequence started from a hashed key. Cheap to construct, so one
/// is created per (entity, sweep) pair.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t key) : state_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n), n > 0 (Lemire's nearly-divisionless method).
  std::uint64_t below(std::uint64_t n) {
    unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>((*this)()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

 private:
  std::uint64_t state_;
};

/// Counter-based family of streams. The stream for (purpose, entity, sweep)
/// depends on nothing else, so results do not depend on how work is scheduled.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Stream stream(StreamPurpose purpose, std::uint64_t entity, std::uint64_t sweep) const {
    std::uint64_t h = detail::mix64(seed_ ^ 0x6a09e667f3bcc909ULL);
    h = detail::mix64(h ^ static_cast<std::uint64_t>(purpose));
    h = detail::mix64(h ^ (entity + 0x3c6ef372fe94f82bULL));
    h = detail::mix64(h ^ (sweep + 0xa54ff53a5f1d36f1ULL));
    return Stream(h);
  }

  /// Independent family for a child task, e.g. one chain of many.
  RngStreams derive(std::uint64_t child) const {
    return RngStreams(detail::mix64(detail::mix64(seed_ + 0x510e527fade682d1ULL) ^ child));
  }

 private:
  std::uint64_t seed_;
};

}  // namespace pdgibbs
