#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vaudit/backend.hpp"
#include "vaudit/captions.hpp"
#include "vaudit/groundtruth.hpp"
#include "vaudit/ledger.hpp"
#include "vaudit/scoring.hpp"

namespace vaudit {

/// Runs fn(i) for i in [0, n) on up to `workers` threads. fn must not throw;
/// results are written by index so output order never depends on scheduling.
void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn);

struct CaptionFailure {
  CaptionId caption_id = 0;
  std::string stage;
  std::string code;
  std::string message;

  friend bool operator==(const CaptionFailure&, const CaptionFailure&) = default;
};

/// Throws kFailureBudget when failures exceed `budget` (a fraction) of `total`.
void enforce_failure_budget(std::span<const CaptionFailure> failures, std::size_t total,
                            double budget, const std::string& stage);

template <typename Score>
struct StageResult {
  std::vector<Score> ranked;  // descending score, ties by ascending caption id
  std::vector<CaptionFailure> failures;
};

/// One DCS evaluation per caption with noise seed derive_seed(run_seed, id).
StageResult<DcsScore> whitebox_attack(std::span<const CaptionRecord> candidates,
                                      DcsEndpoint& dcs, double sigma1, std::uint64_t run_seed,
                                      unsigned workers, const std::string& stage = "whitebox");

/// j one-step generations per caption, scored by edge consistency.
StageResult<EcsScore> blackbox_attack(std::span<const CaptionRecord> candidates, Generator& gen,
                                      const ScoreThresholds& thresholds,
                                      std::span<const std::uint64_t> seeds, unsigned workers,
                                      const std::string& stage = "blackbox");

struct PostfilterConfig {
  bool enabled = false;
  std::uint32_t n_samples = 32;
  double pair_delta = 0.12;
  double component_min_frac = 0.1;
  std::size_t candidates = 100;   // top of the ECS ranking to test
  bool use_masked = true;         // decide on the masked graph when a mask exists
  double theta_var = 0.05;
  double min_stable_frac = 0.1;

  void validate() const;
};

struct PostfilterResult {
  CaptionId caption_id = 0;
  std::size_t n_samples = 0;
  std::size_t largest = 0;          // largest component, unmasked rmse
  std::optional<std::size_t> largest_masked;
  std::string mask_reason;          // why no mask was estimated from the samples
  bool flagged_unmasked = false;
  bool flagged_masked = false;
  bool flagged = false;             // the decision used for filtering

  friend bool operator==(const PostfilterResult&, const PostfilterResult&) = default;
};

/// Size of the largest connected component of the graph joining samples
/// whose (masked) rmse is <= delta.
std::size_t largest_component(std::span<const Image> samples, double delta,
                              const Mask* mask = nullptr);

/// Repetition test: n_samples full generations per caption; a caption is
/// flagged when its largest near-duplicate component reaches
/// component_min_frac * n_samples. Both unmasked and masked (mask estimated
/// from the samples) outcomes are reported.
std::vector<PostfilterResult> carlini_postfilter(std::span<const CaptionRecord> candidates,
                                                 Generator& gen, const PostfilterConfig& cfg,
                                                 std::uint32_t timesteps, std::uint64_t seed,
                                                 unsigned workers,
                                                 std::vector<CaptionFailure>& failures,
                                                 const std::string& stage = "postfilter");

struct CurvePoint {
  std::size_t n_selected = 0;
  std::size_t n_true = 0;
  double precision = 0.0;

  friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

struct PrecisionCurve {
  std::vector<CurvePoint> points;
  friend bool operator==(const PrecisionCurve&, const PrecisionCurve&) = default;
};

using LabelMap = std::unordered_map<CaptionId, VerbatimLabel>;

/// Precision of every prefix of `ranked`. With `kind` set only that kind
/// counts as a hit. Throws kMissingLabel for unlabeled captions.
PrecisionCurve evaluate_precision(std::span<const CaptionId> ranked, const LabelMap& labels,
                                  std::optional<VerbatimKind> kind = std::nullopt);

struct StageCurves {
  PrecisionCurve all;
  PrecisionCurve exact;
  PrecisionCurve templates;
  PrecisionCurve retrieval;

  friend bool operator==(const StageCurves&, const StageCurves&) = default;
};

StageCurves evaluate_stage(std::span<const CaptionId> ranked, const LabelMap& labels);

struct LabelOutcome {
  std::vector<VerbatimLabel> labels;        // input order, failures omitted
  std::vector<CaptionFailure> failures;
};

LabelOutcome label_captions(std::span<const CaptionRecord> captions, const Labeler& labeler,
                            unsigned workers, const std::string& stage = "label");

struct TransferTable {
  std::size_t retrieval = 0;
  std::size_t templates = 0;
  std::size_t exact = 0;
  std::size_t non_verbatim = 0;
  std::size_t failed = 0;

  friend bool operator==(const TransferTable&, const TransferTable&) = default;
};

TransferTable tally(std::span<const VerbatimLabel> labels);

template <typename Score>
std::vector<CaptionId> ids_of(std::span<const Score> ranked) {
  std::vector<CaptionId> ids;
  ids.reserve(ranked.size());
  for (const auto& s : ranked) ids.push_back(s.caption_id);
  return ids;
}

}  // namespace vaudit
