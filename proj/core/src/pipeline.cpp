#include "vaudit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "vaudit/error.hpp"
#include "vaudit/rng.hpp"

namespace vaudit {

namespace {

CaptionFailure failure_from(CaptionId id, const std::string& stage, std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    return {id, stage, to_string(e.code()), e.what()};
  } catch (const std::exception& e) {
    return {id, stage, "internal", e.what()};
  }
}

template <typename Score, typename Key>
void rank_scores(std::vector<Score>& scores, Key key) {
  std::sort(scores.begin(), scores.end(), [&](const Score& a, const Score& b) {
    if (key(a) != key(b)) return key(a) > key(b);
    return a.caption_id < b.caption_id;
  });
}

// Scores each caption independently; slots for failed captions stay empty.
template <typename Score>
StageResult<Score> run_stage(std::span<const CaptionRecord> candidates, unsigned workers,
                             const std::string& stage,
                             const std::function<Score(const CaptionRecord&)>& score) {
  std::vector<std::optional<Score>> slots(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
  parallel_for(candidates.size(), workers, [&](std::size_t i) {
    try {
      slots[i] = score(candidates[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  StageResult<Score> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (slots[i]) {
      out.ranked.push_back(*slots[i]);
    } else {
      out.failures.push_back(failure_from(candidates[i].id, stage, errors[i]));
    }
  }
  return out;
}

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n), size(n, 1) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size[a] < size[b]) std::swap(a, b);
    parent[b] = a;
    size[a] += size[b];
  }
  std::vector<std::size_t> parent;
  std::vector<std::size_t> size;
};

}  // namespace

void parallel_for(std::size_t n, unsigned workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(std::max(1u, workers), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

void enforce_failure_budget(std::span<const CaptionFailure> failures, std::size_t total,
                            double budget, const std::string& stage) {
  if (static_cast<double>(failures.size()) > budget * static_cast<double>(total)) {
    std::string message = stage + ": " + std::to_string(failures.size()) + " of " +
                          std::to_string(total) + " captions failed";
    if (!failures.empty()) message += " (first: " + failures.front().message + ")";
    throw Error(ErrorCode::kFailureBudget, message);
  }
}

StageResult<DcsScore> whitebox_attack(std::span<const CaptionRecord> candidates,
                                      DcsEndpoint& dcs, double sigma1, std::uint64_t run_seed,
                                      unsigned workers, const std::string& stage) {
  auto out = run_stage<DcsScore>(candidates, workers, stage, [&](const CaptionRecord& c) {
    return dcs_score(dcs, c, sigma1, derive_seed(run_seed, c.id));
  });
  rank_scores(out.ranked, [](const DcsScore& s) { return s.value; });
  return out;
}

StageResult<EcsScore> blackbox_attack(std::span<const CaptionRecord> candidates, Generator& gen,
                                      const ScoreThresholds& thresholds,
                                      std::span<const std::uint64_t> seeds, unsigned workers,
                                      const std::string& stage) {
  thresholds.validate();
  auto out = run_stage<EcsScore>(candidates, workers, stage, [&](const CaptionRecord& c) {
    return ecs_score(gen, c, thresholds, seeds);
  });
  rank_scores(out.ranked, [](const EcsScore& s) { return s.value; });
  return out;
}

void PostfilterConfig::validate() const {
  if (n_samples < 2) throw Error(ErrorCode::kConfig, "postfilter n_samples must be >= 2");
  if (!(pair_delta > 0.0)) throw Error(ErrorCode::kConfig, "postfilter pair_delta must be > 0");
  if (!(component_min_frac > 0.0 && component_min_frac <= 1.0)) {
    throw Error(ErrorCode::kConfig, "postfilter component_min_frac must lie in (0,1]");
  }
}

std::size_t largest_component(std::span<const Image> samples, double delta, const Mask* mask) {
  DisjointSets sets(samples.size());
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      if (sets.find(a) == sets.find(b)) continue;
      const double d = mask ? masked_rmse(samples[a], samples[b], *mask)
                            : rmse(samples[a], samples[b]);
      if (d <= delta) sets.unite(a, b);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (sets.find(i) == i) best = std::max(best, sets.size[i]);
  }
  return best;
}

std::vector<PostfilterResult> carlini_postfilter(std::span<const CaptionRecord> candidates,
                                                 Generator& gen, const PostfilterConfig& cfg,
                                                 std::uint32_t timesteps, std::uint64_t seed,
                                                 unsigned workers,
                                                 std::vector<CaptionFailure>& failures,
                                                 const std::string& stage) {
  cfg.validate();
  const auto seeds = derive_seeds(seed, cfg.n_samples);
  // A singleton is never repetition: at least one edge is required.
  const double needed =
      std::max(2.0, cfg.component_min_frac * static_cast<double>(cfg.n_samples));
  auto result = run_stage<PostfilterResult>(candidates, workers, stage, [&](const CaptionRecord& c) {
    std::vector<Image> samples;
    samples.reserve(seeds.size());
    for (auto s : seeds) samples.push_back(gen.generate(c, s, timesteps));

    PostfilterResult r;
    r.caption_id = c.id;
    r.n_samples = samples.size();
    r.largest = largest_component(samples, cfg.pair_delta);
    r.flagged_unmasked = static_cast<double>(r.largest) >= needed;
    try {
      const Mask m = estimate_variation_mask(samples, cfg.theta_var, cfg.min_stable_frac);
      r.largest_masked = largest_component(samples, cfg.pair_delta, &m);
      r.flagged_masked = static_cast<double>(*r.largest_masked) >= needed;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateMask) throw;
      r.mask_reason = to_string(e.code());
    }
    r.flagged = cfg.use_masked && r.largest_masked ? r.flagged_masked : r.flagged_unmasked;
    return r;
  });
  failures.insert(failures.end(), result.failures.begin(), result.failures.end());
  return std::move(result.ranked);
}

PrecisionCurve evaluate_precision(std::span<const CaptionId> ranked, const LabelMap& labels,
                                  std::optional<VerbatimKind> kind) {
  PrecisionCurve curve;
  curve.points.reserve(ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    auto it = labels.find(ranked[i]);
    if (it == labels.end()) {
      throw Error(ErrorCode::kMissingLabel, "caption " + std::to_string(ranked[i]) + " has no label");
    }
    const bool hit = kind ? it->second.kind == *kind : it->second.is_verbatim();
    hits += hit ? 1 : 0;
    curve.points.push_back({i + 1, hits, static_cast<double>(hits) / static_cast<double>(i + 1)});
  }
  return curve;
}

StageCurves evaluate_stage(std::span<const CaptionId> ranked, const LabelMap& labels) {
  return {evaluate_precision(ranked, labels),
          evaluate_precision(ranked, labels, VerbatimKind::kExact),
          evaluate_precision(ranked, labels, VerbatimKind::kTemplate),
          evaluate_precision(ranked, labels, VerbatimKind::kRetrieval)};
}

LabelOutcome label_captions(std::span<const CaptionRecord> captions, const Labeler& labeler,
                            unsigned workers, const std::string& stage) {
  auto result = run_stage<VerbatimLabel>(captions, workers, stage,
                                         [&](const CaptionRecord& c) { return labeler.label(c); });
  return {std::move(result.ranked), std::move(result.failures)};
}

TransferTable tally(std::span<const VerbatimLabel> labels) {
  TransferTable t;
  for (const auto& l : labels) {
    switch (l.kind) {
      case VerbatimKind::kExact: ++t.exact; break;
      case VerbatimKind::kTemplate: ++t.templates; break;
      case VerbatimKind::kRetrieval: ++t.retrieval; break;
      case VerbatimKind::kNonVerbatim: ++t.non_verbatim; break;
    }
  }
  return t;
}

}  // namespace vaudit
