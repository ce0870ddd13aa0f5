#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace vaudit {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Combines two 64-bit values into a well-mixed child seed.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept;

/// FNV-1a over the bytes, passed through mix64.
std::uint64_t hash_text(std::string_view text) noexcept;

/// Counter-based random stream.
///
/// Element `i` of the stream depends only on (seed, i): it is the i-th output
/// of a SplitMix64 sequence started at `seed`, i.e.
/// `mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)`. Uniforms take the top 53 bits
/// and are shifted by half an ulp so they lie strictly inside (0, 1).
/// Gaussian sample `i` uses Box-Muller on the uniform pair (2p, 2p + 1) with
/// p = i / 2: even i takes the cosine branch, odd i the sine branch.
///
/// Any implementation following these rules reproduces the same noise, which
/// is what makes denoising scores comparable across backends.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t bits(std::uint64_t counter) const noexcept;
  double uniform(std::uint64_t counter) const noexcept;
  double gaussian(std::uint64_t index) const noexcept;

  /// out[i] = scale * gaussian(i).
  void fill_gaussian(std::span<float> out, double scale = 1.0) const noexcept;

 private:
  std::uint64_t seed_;
};

}  // namespace vaudit
