#include "vaudit/scoring.hpp"

#include <cmath>
#include <string>

#include "vaudit/error.hpp"
#include "vaudit/rng.hpp"

namespace vaudit {

void ScoreThresholds::validate() const {
  if (j == 0) throw Error(ErrorCode::kConfig, "j must be >= 1");
  if (!(gamma_frac > 0.0 && gamma_frac <= 1.0)) {
    throw Error(ErrorCode::kConfig, "gamma_frac must lie in (0,1]");
  }
  if (vote_threshold(gamma_frac, j) == 0) {
    throw Error(ErrorCode::kConfig, "gamma_frac * j rounds to zero votes");
  }
  if (!(t_edge > 0.0 && t_edge <= 1.0)) throw Error(ErrorCode::kConfig, "t_edge must lie in (0,1]");
  if (!std::isfinite(tau_dcs)) throw Error(ErrorCode::kConfig, "tau_dcs must be finite");
}

std::uint32_t vote_threshold(double gamma_frac, std::uint32_t j) {
  const double raw = gamma_frac * static_cast<double>(j);
  return static_cast<std::uint32_t>(std::ceil(raw - 1e-9));
}

std::vector<float> dcs_noise(std::size_t size, double sigma1, std::uint64_t noise_seed) {
  std::vector<float> z(size);
  NoiseStream(noise_seed).fill_gaussian(z, sigma1);
  return z;
}

double mean_squared_residual(std::span<const float> z, std::span<const float> d) {
  if (z.size() != d.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "denoiser changed the tensor shape");
  }
  if (z.empty()) throw Error(ErrorCode::kInvalidScore, "empty tensor");
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double r = static_cast<double>(z[i]) - d[i];
    sum += r * r;
  }
  const double mean = sum / static_cast<double>(z.size());
  if (!std::isfinite(mean)) throw Error(ErrorCode::kInvalidScore, "non-finite denoising residual");
  return mean;
}

DcsScore dcs_score(Denoiser& denoiser, const CaptionRecord& caption, double sigma1,
                   std::uint64_t noise_seed) {
  if (!(sigma1 > 0.0) || !std::isfinite(sigma1)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma1 must be finite and > 0");
  }
  const auto z = dcs_noise(denoiser.tensor_size(), sigma1, noise_seed);
  const auto d = denoiser.denoise(z, caption);
  return {caption.id, mean_squared_residual(z, d)};
}

DcsScore dcs_score(DcsEndpoint& endpoint, const CaptionRecord& caption, double sigma1,
                   std::uint64_t noise_seed) {
  if (!(sigma1 > 0.0) || !std::isfinite(sigma1)) {
    throw Error(ErrorCode::kInvalidArgument, "sigma1 must be finite and > 0");
  }
  const double v = endpoint.dcs(caption, noise_seed, sigma1);
  if (!std::isfinite(v) || v < 0.0) {
    throw Error(ErrorCode::kInvalidScore, "backend returned an invalid score");
  }
  return {caption.id, v};
}

double DenoiserDcs::dcs(const CaptionRecord& caption, std::uint64_t noise_seed, double sigma) {
  return dcs_score(denoiser_, caption, sigma, noise_seed).value;
}

bool dcs_classify(const DcsScore& score, double tau_dcs, ScoreDirection direction) {
  return direction == ScoreDirection::kHighIsVerbatim ? score.value >= tau_dcs
                                                      : score.value <= tau_dcs;
}

EcsScore ecs_from_edges(CaptionId caption_id, std::span<const EdgeMap> edges,
                        double gamma_frac) {
  if (edges.empty()) throw Error(ErrorCode::kInvalidArgument, "no edge maps to vote");
  const auto j = static_cast<std::uint32_t>(edges.size());
  const std::uint32_t needed = vote_threshold(gamma_frac, j);
  const std::size_t n = edges.front().size();
  std::vector<std::uint32_t> votes(n, 0);
  for (const auto& e : edges) {
    if (e.width() != edges.front().width() || e.height() != edges.front().height()) {
      throw Error(ErrorCode::kDimensionMismatch, "generation resolution changed across seeds");
    }
    for (std::size_t p = 0; p < n; ++p) votes[p] += e[p] ? 1u : 0u;
  }
  std::uint64_t score = 0;
  for (auto v : votes) score += v >= needed ? 1 : 0;
  return {caption_id, score, j};
}

EcsScore ecs_score(Generator& gen, const CaptionRecord& caption,
                   const ScoreThresholds& thresholds, std::span<const std::uint64_t> seeds) {
  thresholds.validate();
  if (seeds.size() != thresholds.j) {
    throw Error(ErrorCode::kInvalidArgument,
                "ecs needs exactly j=" + std::to_string(thresholds.j) + " seeds");
  }
  std::vector<EdgeMap> edges;
  edges.reserve(seeds.size());
  for (auto seed : seeds) {
    edges.push_back(edge_map(gen.generate(caption, seed, 1), thresholds.t_edge));
  }
  return ecs_from_edges(caption.id, edges, thresholds.gamma_frac);
}

bool ecs_classify(const EcsScore& score, std::uint64_t tau_ecs) {
  return score.value >= tau_ecs;
}

std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::uint32_t count) {
  std::vector<std::uint64_t> seeds(count);
  for (std::uint32_t i = 0; i < count; ++i) seeds[i] = derive_seed(base, i);
  return seeds;
}

}  // namespace vaudit
