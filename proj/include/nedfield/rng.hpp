#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace nedfield {

//! SplitMix64 finaliser. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//! Derives an independent stream key from a seed and a stream index
//! (replication number, field component, ...).
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
{
  return mix64(mix64(seed ^ 0x6a09e667f3bcc909ULL) + mix64(stream + 0x9e3779b97f4a7c15ULL));
}

//! Counter-based generator: the i-th draw of a stream is mix64(key + (i+1)*golden).
//! Draws depend only on (key, counter), so streams can be split across workers
//! without changing any value.
class CounterRng
{
public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
    : key_(key), counter_(counter)
  {}

  std::uint64_t next_u64() noexcept
  {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  //! Uniform on the open interval (0, 1).
  double uniform() noexcept
  {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  //! Standard normal via Box-Muller (cosine branch only, two uniforms per draw).
  double normal() noexcept
  {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

} // namespace nedfield
