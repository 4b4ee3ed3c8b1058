#pragma once

#include <cstdint>
#include <limits>

namespace kuq {

enum class StreamPurpose : std::uint32_t {
  particles = 1,
  z_draw = 2,
  reference = 3,
  surrogate = 4,
  test = 100,
};

/// Identity of a random stream. Distinct ids give statistically independent
/// streams; identical ids give identical streams on every platform.
struct StreamId {
  std::uint64_t master_seed = 0;
  StreamPurpose purpose = StreamPurpose::particles;
  std::uint32_t level = 0;
  std::uint64_t index = 0;       ///< z-sample or quadrature-node index
  std::uint64_t resolution = 0;  ///< particle count of the run
  std::uint32_t replication = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

/// 64-bit key of a stream id; also used for cache keys.
std::uint64_t stream_key(const StreamId& id) noexcept;

/// Counter-based generator: output n is a SplitMix64 finalizer applied to
/// key + n * golden. Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng() = default;
  explicit CounterRng(const StreamId& id) noexcept : key_(stream_key(id)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix(key_ + (++counter_) * kGolden); }

  /// Uniform double in [0,1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const noexcept { return counter_; }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  friend bool operator==(const CounterRng&, const CounterRng&) = default;

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace kuq
