#include "vaudit/ledger.hpp"

#include "vaudit/error.hpp"

namespace vaudit {

void CallLedger::record_generate(const std::string& stage, std::uint32_t timesteps) {
  std::lock_guard lock(mu_);
  auto& s = stages_[stage];
  ++s.generate_calls;
  s.timestep_sum += timesteps;
  if (timesteps == 1) ++s.one_step_calls;
}

void CallLedger::record_denoise(const std::string& stage) {
  std::lock_guard lock(mu_);
  ++stages_[stage].denoise_calls;
}

StageCounts CallLedger::stage(const std::string& name) const {
  std::lock_guard lock(mu_);
  auto it = stages_.find(name);
  return it == stages_.end() ? StageCounts{} : it->second;
}

StageCounts CallLedger::totals() const {
  std::lock_guard lock(mu_);
  StageCounts total;
  for (const auto& [name, counts] : stages_) total += counts;
  return total;
}

std::map<std::string, StageCounts> CallLedger::stages() const {
  std::lock_guard lock(mu_);
  return stages_;
}

double efficiency_ratio(std::uint64_t baseline_generations, std::uint64_t baseline_steps,
                        std::uint64_t seeds) {
  if (seeds == 0) throw Error(ErrorCode::kInvalidArgument, "seed count must be > 0");
  return static_cast<double>(baseline_generations * baseline_steps) /
         static_cast<double>(seeds);
}

// Calls are recorded before delegating: a failed backend call still consumed
// a request.
Image CountingGenerator::generate(const CaptionRecord& caption, std::uint64_t seed,
                                  std::uint32_t timesteps) {
  ledger_.record_generate(stage_, timesteps);
  return inner_.generate(caption, seed, timesteps);
}

std::vector<float> CountingDenoiser::denoise(std::span<const float> z,
                                             const CaptionRecord& caption) {
  ledger_.record_denoise(stage_);
  return inner_.denoise(z, caption);
}

double CountingDcsEndpoint::dcs(const CaptionRecord& caption, std::uint64_t noise_seed,
                                double sigma) {
  ledger_.record_denoise(stage_);
  return inner_.dcs(caption, noise_seed, sigma);
}

}  // namespace vaudit
