#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vaudit/captions.hpp"
#include "vaudit/imaging.hpp"

namespace vaudit {

struct GeneratorCapabilities {
  std::string model;
  std::size_t width = 0;
  std::size_t height = 0;
  bool supports_timesteps = false;
  std::uint32_t default_timesteps = 0;
  double sigma_max = 0.0;
  std::string dcs_space;  // "pixel" or "latent"; informational
};

/// Gen(c, r, T): deterministic per (caption, seed, timesteps). Implementations
/// must be safe to call from several threads at once.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual GeneratorCapabilities capabilities() const = 0;
  virtual Image generate(const CaptionRecord& caption, std::uint64_t seed,
                         std::uint32_t timesteps) = 0;
};

/// D(z, c): shape-preserving, deterministic denoiser over a flat tensor.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t tensor_size() const = 0;
  virtual std::vector<float> denoise(std::span<const float> z,
                                     const CaptionRecord& caption) = 0;
};

/// A backend that evaluates the one-step denoising score itself so that
/// latents never leave it (the remote /dcs endpoint).
class DcsEndpoint {
 public:
  virtual ~DcsEndpoint() = default;
  virtual double dcs(const CaptionRecord& caption, std::uint64_t noise_seed,
                     double sigma) = 0;
};

}  // namespace vaudit
