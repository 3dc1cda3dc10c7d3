#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace resdiff {

/// Philox4x32-10 block function (Salmon et al., "Parallel random numbers: as
/// easy as 1, 2, 3", SC'11).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Independent random streams used by the simulators. Keys are derived from
/// (seed, domain) so noise, initial positions and defragmenting shifts never
/// share counters.
enum class StreamDomain : std::uint64_t {
  Noise = 0x6e6f697365ULL,
  Initial = 0x696e6974ULL,
  Shift = 0x7368696674ULL,
  Sampling = 0x73616d70ULL,
};

/// Counter-based random stream keyed by (seed, domain, stream index).
///
/// Draw layout: the stream reads consecutive 128-bit Philox blocks starting at
/// block `counter`. Each block yields two 53-bit uniforms in the open interval
/// (0, 1), u = ((w >> 11) + 0.5) * 2^-53 for the two 64-bit halves w. A pair of
/// Gaussians is produced from one block by Box-Muller,
///   z0 = sqrt(-2 ln u0) cos(2 pi u1),  z1 = sqrt(-2 ln u0) sin(2 pi u1),
/// and z1 is cached for the next gaussian() call. uniform() uses its own
/// two-slot cache. Identical (seed, domain, stream, counter) and call sequence
/// reproduce identical draws.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0,
              StreamDomain domain = StreamDomain::Noise) noexcept;

  double uniform() noexcept;
  double gaussian() noexcept;
  void gaussian(std::span<double> out) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  /// Index of the next unread 128-bit block.
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::array<double, 2> next_block() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_;
  std::array<std::uint32_t, 2> key_;
  double cached_gaussian_ = 0.0;
  bool has_gaussian_ = false;
  std::array<double, 2> cached_uniform_{};
  int uniform_left_ = 0;
};

}  // namespace resdiff
