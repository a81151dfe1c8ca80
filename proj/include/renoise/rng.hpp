#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "renoise/latent.hpp"

namespace renoise {

// SplitMix64 finalizer. Output i of a SplitMix64 stream seeded with s is
// mix64(s + (i + 1) * kGolden), which makes the generator counter-based:
// any draw can be produced from (seed, position) alone.
inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Explicit, copyable generator state. Identical (seed, position) always
/// yields identical draws.
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t position = 0;

  std::uint64_t next_u64() noexcept {
    ++position;
    return mix64(seed + position * kGolden);
  }

  // Uniform in (0, 1].
  double next_unit() noexcept {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Independent sub-stream keyed by `stream`; does not advance this state.
  RngState fork(std::uint64_t stream) const noexcept {
    return RngState{mix64(seed ^ mix64(stream * kGolden + 0x632BE59BD9B4E019ULL)), 0};
  }

  friend bool operator==(const RngState&, const RngState&) = default;
};

/// I.i.d. standard normal entries via Box-Muller, two uniforms per pair of
/// outputs. Results depend on libm's log/sqrt/cos/sin, which are correctly
/// rounded on glibc but not guaranteed identical on every platform.
inline Latent sample_gaussian(RngState& rng, const Shape& shape) {
  Latent out(shape);
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const double u1 = rng.next_unit();
    const double u2 = rng.next_unit();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    data[i] = radius * std::cos(angle);
    if (i + 1 < data.size()) data[i + 1] = radius * std::sin(angle);
  }
  return out;
}

}  // namespace renoise
