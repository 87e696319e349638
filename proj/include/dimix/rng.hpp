#pragma once

#include <cstdint>
#include <limits>

namespace dimix {

// Counter-based random source. Every random draw in a simulation is keyed by
// (run seed, iteration, receiving agent, source agent, stream), so results do
// not depend on the order in which agents are evaluated.
class KeyedRng {
public:
  using result_type = std::uint64_t;

  enum class Stream : std::uint64_t {
    channel = 1,
    minibatch = 2,
    data = 3,
    topology = 4,
    test = 5,
  };

  explicit KeyedRng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ULL)) {}

  KeyedRng(std::uint64_t seed, std::int64_t t, std::int64_t i, std::int64_t j, Stream stream)
  {
    std::uint64_t h = mix(seed ^ 0x9e3779b97f4a7c15ULL);
    h = mix(h ^ static_cast<std::uint64_t>(t));
    h = mix(h ^ (static_cast<std::uint64_t>(i) << 1));
    h = mix(h ^ (static_cast<std::uint64_t>(j) << 2));
    h = mix(h ^ static_cast<std::uint64_t>(stream));
    state_ = h;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  // splitmix64 step
  result_type operator()()
  {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
  static constexpr std::uint64_t mix(std::uint64_t z)
  {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
};

} // namespace dimix
