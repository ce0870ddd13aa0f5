#include "vaudit/rng.hpp"

#include <cmath>
#include <numbers>

namespace vaudit {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t salt) noexcept {
  return mix64(parent ^ mix64(salt + kGolden));
}

std::uint64_t hash_text(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(h);
}

std::uint64_t NoiseStream::bits(std::uint64_t counter) const noexcept {
  return mix64(seed_ + (counter + 1) * kGolden);
}

double NoiseStream::uniform(std::uint64_t counter) const noexcept {
  return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
}

double NoiseStream::gaussian(std::uint64_t index) const noexcept {
  const std::uint64_t pair = index / 2;
  const double u1 = uniform(2 * pair);
  const double u2 = uniform(2 * pair + 1);
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  return (index % 2 == 0) ? r * std::cos(angle) : r * std::sin(angle);
}

void NoiseStream::fill_gaussian(std::span<float> out, double scale) const noexcept {
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(scale * gaussian(i));
  }
}

}  // namespace vaudit
