#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vaudit/backend.hpp"
#include "vaudit/captions.hpp"
#include "vaudit/imaging.hpp"

namespace vaudit {

/// Mean squared one-step denoising residual for a caption. High values mark
/// prompts whose one-step denoise ignores the noise (memorization candidates).
struct DcsScore {
  CaptionId caption_id = 0;
  double value = 0.0;
  friend bool operator==(const DcsScore&, const DcsScore&) = default;
};

/// Number of pixels that are edges in at least ceil(gamma_frac * j) of the
/// j one-step generations.
struct EcsScore {
  CaptionId caption_id = 0;
  std::uint64_t value = 0;
  std::uint32_t j_used = 0;
  friend bool operator==(const EcsScore&, const EcsScore&) = default;
};

/// Which side of tau_dcs is flagged. The default flags high residuals.
enum class ScoreDirection { kHighIsVerbatim, kLowIsVerbatim };

struct ScoreThresholds {
  double tau_dcs = 0.0;
  std::uint64_t tau_ecs = 1;
  double gamma_frac = 0.75;
  std::uint32_t j = 4;
  double t_edge = kDefaultEdgeThreshold;
  ScoreDirection dcs_direction = ScoreDirection::kHighIsVerbatim;

  /// Throws kConfig when j == 0, gamma_frac is outside (0,1], the rounded
  /// vote count is zero, or t_edge is outside (0,1].
  void validate() const;
};

/// ceil(gamma_frac * j), robust to representation error (0.75 * 4 == 3).
std::uint32_t vote_threshold(double gamma_frac, std::uint32_t j);

/// The shared noise draw: out[i] = sigma1 * NoiseStream(noise_seed).gaussian(i).
std::vector<float> dcs_noise(std::size_t size, double sigma1, std::uint64_t noise_seed);

/// mean((z - d)^2). Throws kInvalidScore if the result is not finite.
double mean_squared_residual(std::span<const float> z, std::span<const float> d);

DcsScore dcs_score(Denoiser& denoiser, const CaptionRecord& caption, double sigma1,
                   std::uint64_t noise_seed);
DcsScore dcs_score(DcsEndpoint& endpoint, const CaptionRecord& caption, double sigma1,
                   std::uint64_t noise_seed);

/// Adapts a local denoiser to the DcsEndpoint interface.
class DenoiserDcs final : public DcsEndpoint {
 public:
  explicit DenoiserDcs(Denoiser& denoiser) : denoiser_(denoiser) {}
  double dcs(const CaptionRecord& caption, std::uint64_t noise_seed, double sigma) override;

 private:
  Denoiser& denoiser_;
};

bool dcs_classify(const DcsScore& score, double tau_dcs,
                  ScoreDirection direction = ScoreDirection::kHighIsVerbatim);

/// Vote counting over precomputed edge maps (all the same shape).
EcsScore ecs_from_edges(CaptionId caption_id, std::span<const EdgeMap> edges,
                        double gamma_frac);

/// Generates one image per seed at timesteps=1 and scores edge consistency.
/// Requires seeds.size() == thresholds.j.
EcsScore ecs_score(Generator& gen, const CaptionRecord& caption,
                   const ScoreThresholds& thresholds, std::span<const std::uint64_t> seeds);

bool ecs_classify(const EcsScore& score, std::uint64_t tau_ecs);

/// Seeds r_1..r_count derived from a base seed.
std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::uint32_t count);

}  // namespace vaudit
