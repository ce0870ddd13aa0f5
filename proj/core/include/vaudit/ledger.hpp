#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>

#include "vaudit/backend.hpp"

namespace vaudit {

struct StageCounts {
  std::uint64_t generate_calls = 0;
  std::uint64_t timestep_sum = 0;
  std::uint64_t one_step_calls = 0;  // generate calls with timesteps == 1
  std::uint64_t denoise_calls = 0;

  StageCounts& operator+=(const StageCounts& o) {
    generate_calls += o.generate_calls;
    timestep_sum += o.timestep_sum;
    one_step_calls += o.one_step_calls;
    denoise_calls += o.denoise_calls;
    return *this;
  }
  friend bool operator==(const StageCounts&, const StageCounts&) = default;
};

/// Exact per-stage counts of backend evaluations. Thread-safe.
class CallLedger {
 public:
  void record_generate(const std::string& stage, std::uint32_t timesteps);
  void record_denoise(const std::string& stage);

  StageCounts stage(const std::string& name) const;
  StageCounts totals() const;
  std::map<std::string, StageCounts> stages() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, StageCounts> stages_;
};

/// (baseline_generations * baseline_steps) / (seeds * 1): network evaluations
/// of a many-sample full-synthesis attack relative to a one-step, `seeds`-sample
/// score.
double efficiency_ratio(std::uint64_t baseline_generations,
                        std::uint64_t baseline_steps, std::uint64_t seeds);

/// Generator decorator that records every call under `stage`.
class CountingGenerator final : public Generator {
 public:
  CountingGenerator(Generator& inner, CallLedger& ledger, std::string stage)
      : inner_(inner), ledger_(ledger), stage_(std::move(stage)) {}

  GeneratorCapabilities capabilities() const override { return inner_.capabilities(); }
  Image generate(const CaptionRecord& caption, std::uint64_t seed,
                 std::uint32_t timesteps) override;

 private:
  Generator& inner_;
  CallLedger& ledger_;
  std::string stage_;
};

class CountingDenoiser final : public Denoiser {
 public:
  CountingDenoiser(Denoiser& inner, CallLedger& ledger, std::string stage)
      : inner_(inner), ledger_(ledger), stage_(std::move(stage)) {}

  std::size_t tensor_size() const override { return inner_.tensor_size(); }
  std::vector<float> denoise(std::span<const float> z,
                             const CaptionRecord& caption) override;

 private:
  Denoiser& inner_;
  CallLedger& ledger_;
  std::string stage_;
};

class CountingDcsEndpoint final : public DcsEndpoint {
 public:
  CountingDcsEndpoint(DcsEndpoint& inner, CallLedger& ledger, std::string stage)
      : inner_(inner), ledger_(ledger), stage_(std::move(stage)) {}

  double dcs(const CaptionRecord& caption, std::uint64_t noise_seed,
             double sigma) override;

 private:
  DcsEndpoint& inner_;
  CallLedger& ledger_;
  std::string stage_;
};

}  // namespace vaudit
