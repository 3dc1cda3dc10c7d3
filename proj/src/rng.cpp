#include "resdiff/rng.hpp"

#include <cmath>
#include <numbers>

namespace resdiff {
namespace {

constexpr std::uint32_t kPhiloxW32A = 0x9E3779B9;
constexpr std::uint32_t kPhiloxW32B = 0xBB67AE85;
constexpr std::uint32_t kPhiloxM4x32A = 0xD2511F53;
constexpr std::uint32_t kPhiloxM4x32B = 0xCD9E8D57;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& lo, std::uint32_t& hi) {
  std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  lo = static_cast<std::uint32_t>(p);
  hi = static_cast<std::uint32_t>(p >> 32);
}

inline double to_open_unit(std::uint64_t w) {
  return (static_cast<double>(w >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t lo0, hi0, lo1, hi1;
    mulhilo(kPhiloxM4x32A, ctr[0], lo0, hi0);
    mulhilo(kPhiloxM4x32B, ctr[2], lo1, hi1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kPhiloxW32A;
    key[1] += kPhiloxW32B;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

NoiseStream::NoiseStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                         StreamDomain domain) noexcept
    : seed_(seed), stream_(stream), counter_(counter) {
  std::uint64_t k = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(domain)));
  key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
}

std::array<double, 2> NoiseStream::next_block() noexcept {
  auto out = philox4x32({static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
                         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                        key_);
  ++counter_;
  std::uint64_t w0 = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  std::uint64_t w1 = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  return {to_open_unit(w0), to_open_unit(w1)};
}

double NoiseStream::uniform() noexcept {
  if (uniform_left_ == 0) {
    cached_uniform_ = next_block();
    uniform_left_ = 2;
  }
  return cached_uniform_[2 - uniform_left_--];
}

double NoiseStream::gaussian() noexcept {
  if (has_gaussian_) {
    has_gaussian_ = false;
    return cached_gaussian_;
  }
  auto [u0, u1] = next_block();
  double r = std::sqrt(-2.0 * std::log(u0));
  double angle = 2.0 * std::numbers::pi * u1;
  cached_gaussian_ = r * std::sin(angle);
  has_gaussian_ = true;
  return r * std::cos(angle);
}

void NoiseStream::gaussian(std::span<double> out) noexcept {
  for (double& z : out) z = gaussian();
}

}  // namespace resdiff
