#pragma once

// Counter-based random streams.  A stream is identified by (seed, iteration,
// purpose); its k-th draw is a pure function of that key and k, so traces do
// not depend on thread scheduling or on how many draws other streams made.

#include <cstdint>
#include <limits>

namespace ngvi {

enum class StreamPurpose : std::uint64_t {
  kInit = 1,
  kBatchIndex = 2,
  kLatentSample = 3,
  kGradientNoise = 4,
  kOutputIndex = 5,
  kData = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// UniformRandomBitGenerator over a keyed counter.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  CounterStream(std::uint64_t seed, std::uint64_t iteration, StreamPurpose purpose)
      : key_(splitmix64(splitmix64(splitmix64(seed) ^ iteration) ^ static_cast<std::uint64_t>(purpose))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace ngvi
