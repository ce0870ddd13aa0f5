#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/pipeline.hpp"
#include "vaudit/rng.hpp"

using namespace vaudit;

namespace {

VerbatimLabel label_of(CaptionId id, VerbatimKind kind) {
  VerbatimLabel l;
  l.caption_id = id;
  l.kind = kind;
  if (kind != VerbatimKind::kNonVerbatim) l.witness = Witness{};
  return l;
}

// Fails every generate call for captions whose id is divisible by `every`.
class FlakyGenerator final : public Generator {
 public:
  FlakyGenerator(Generator& inner, CaptionId every) : inner_(inner), every_(every) {}
  GeneratorCapabilities capabilities() const override { return inner_.capabilities(); }
  Image generate(const CaptionRecord& c, std::uint64_t seed, std::uint32_t t) override {
    if (c.id % every_ == 0) throw Error(ErrorCode::kTransport, "injected failure");
    return inner_.generate(c, seed, t);
  }

 private:
  Generator& inner_;
  CaptionId every_;
};

}  // namespace

TEST(Precision, HandWorkedPrefixCurve) {
  LabelMap labels;
  labels[1] = label_of(1, VerbatimKind::kExact);
  labels[2] = label_of(2, VerbatimKind::kTemplate);
  labels[3] = label_of(3, VerbatimKind::kExact);
  labels[4] = label_of(4, VerbatimKind::kNonVerbatim);
  const std::vector<CaptionId> ranked = {1, 2, 3, 4};
  const auto all = evaluate_precision(ranked, labels);
  EXPECT_EQ(all.points, (std::vector<CurvePoint>{{1, 1, 1.0}, {2, 2, 1.0}, {3, 3, 1.0}, {4, 3, 0.75}}));
  const auto exact = evaluate_precision(ranked, labels, VerbatimKind::kExact);
  EXPECT_EQ(exact.points, (std::vector<CurvePoint>{{1, 1, 1.0}, {2, 1, 0.5}, {3, 2, 2.0 / 3.0}, {4, 2, 0.5}}));
  const auto stage = evaluate_stage(ranked, labels);
  EXPECT_EQ(stage.all, all);
  EXPECT_EQ(stage.exact, exact);
  EXPECT_EQ(stage.templates.points.back().n_true, 1u);
  EXPECT_EQ(stage.retrieval.points.back().n_true, 0u);
}

TEST(Precision, MissingLabelThrowsAndEmptyRankingIsEmpty) {
  LabelMap labels;
  labels[1] = label_of(1, VerbatimKind::kExact);
  try {
    evaluate_precision(std::vector<CaptionId>{1, 2}, labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingLabel);
  }
  EXPECT_TRUE(evaluate_precision(std::vector<CaptionId>{}, labels).points.empty());
}

TEST(Tally, CountsKinds) {
  const std::vector<VerbatimLabel> labels = {
      label_of(1, VerbatimKind::kExact), label_of(2, VerbatimKind::kExact),
      label_of(3, VerbatimKind::kTemplate), label_of(4, VerbatimKind::kRetrieval),
      label_of(5, VerbatimKind::kNonVerbatim)};
  EXPECT_EQ(tally(labels), (TransferTable{1, 1, 2, 1, 0}));
}

TEST(FailureBudget, StrictFraction) {
  std::vector<CaptionFailure> f(2);
  EXPECT_NO_THROW(enforce_failure_budget(f, 200, 0.01, "s"));
  f.resize(3);
  try {
    enforce_failure_budget(f, 200, 0.01, "s");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kFailureBudget);
  }
  EXPECT_NO_THROW(enforce_failure_budget({}, 0, 0.0, "s"));
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (unsigned w : {0u, 1u, 3u, 16u}) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), w, [&](std::size_t i) { ++hits[i]; });
    EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 1000);
  }
}

TEST(Stages, RankingIsIndependentOfWorkerCount) {
  Simulation sim(vaudit::testing::small_sim());
  ScoreThresholds t;
  const auto seeds = derive_seeds(3, t.j);
  const auto a = blackbox_attack(sim.captions(), sim, t, seeds, 1);
  const auto b = blackbox_attack(sim.captions(), sim, t, seeds, 8);
  EXPECT_EQ(a.ranked, b.ranked);
  DenoiserDcs dcs(sim);
  const auto w1 = whitebox_attack(sim.captions(), dcs, 14.6, 9, 1);
  const auto w8 = whitebox_attack(sim.captions(), dcs, 14.6, 9, 8);
  EXPECT_EQ(w1.ranked, w8.ranked);
  for (std::size_t i = 1; i < a.ranked.size(); ++i) {
    const auto& p = a.ranked[i - 1];
    const auto& q = a.ranked[i];
    EXPECT_TRUE(p.value > q.value || (p.value == q.value && p.caption_id < q.caption_id));
  }
}

TEST(Stages, WhiteboxRanksPlantsFirst) {
  Simulation sim(vaudit::testing::small_sim());
  DenoiserDcs dcs(sim);
  const auto r = whitebox_attack(sim.captions(), dcs, 14.6, 0x5EED, 4);
  const std::size_t plants = sim.manifest().exact.size() + sim.manifest().templates.size();
  for (std::size_t i = 0; i < plants; ++i) {
    EXPECT_NE(sim.kind(r.ranked[i].caption_id), PlantKind::kNone) << i;
  }
  // Noise seed per caption is derive_seed(run_seed, id).
  const auto& top = r.ranked.front();
  EXPECT_EQ(top, dcs_score(sim, sim.caption(top.caption_id), 14.6, derive_seed(0x5EED, top.caption_id)));
}

TEST(Stages, FailuresAreRecordedNotRanked) {
  Simulation sim(vaudit::testing::small_sim(100));
  FlakyGenerator flaky(sim, 10);
  ScoreThresholds t;
  const auto r = blackbox_attack(sim.captions(), flaky, t, derive_seeds(1, t.j), 4);
  std::set<CaptionId> failed;
  for (const auto& f : r.failures) {
    EXPECT_EQ(f.stage, "blackbox");
    EXPECT_EQ(f.code, "transport");
    failed.insert(f.caption_id);
  }
  std::size_t expected = 0;
  for (const auto& c : sim.captions()) expected += c.id % 10 == 0 ? 1 : 0;
  EXPECT_EQ(failed.size(), expected);
  EXPECT_EQ(r.ranked.size() + r.failures.size(), sim.captions().size());
  for (const auto& s : r.ranked) EXPECT_FALSE(failed.contains(s.caption_id));
}

TEST(LargestComponent, ChainsThroughTransitiveLinks) {
  // a-b and b-c are within delta, a-c is not: one component of three.
  const Image a = Image::filled(8, 8, 1, 0.30f);
  const Image b = Image::filled(8, 8, 1, 0.38f);
  const Image c = Image::filled(8, 8, 1, 0.46f);
  const Image d = Image::filled(8, 8, 1, 0.90f);
  const std::vector<Image> s = {a, d, c, b};
  EXPECT_EQ(largest_component(s, 0.1), 3u);
  EXPECT_EQ(largest_component(s, 0.05), 1u);
  EXPECT_EQ(largest_component(s, 1.0), 4u);
  Mask m(8, 8, true);
  EXPECT_EQ(largest_component(s, 0.1, &m), 3u);
}

TEST(Postfilter, FlagsMemorizedCaptionsOnly) {
  Simulation sim(vaudit::testing::small_sim());
  PostfilterConfig cfg;
  cfg.enabled = true;
  cfg.n_samples = 8;
  std::vector<CaptionRecord> cands;
  for (CaptionId id : sim.manifest().exact) cands.push_back(sim.caption(id));
  for (CaptionId id : sim.manifest().templates) cands.push_back(sim.caption(id));
  for (const auto& c : sim.captions()) {
    if (sim.kind(c.id) == PlantKind::kNone && cands.size() < 40) cands.push_back(c);
  }
  std::vector<CaptionFailure> failures;
  const auto results = carlini_postfilter(cands, sim, cfg, 16, 0xCA21, 4, failures);
  ASSERT_TRUE(failures.empty());
  ASSERT_EQ(results.size(), cands.size());
  for (const auto& r : results) {
    EXPECT_EQ(r.n_samples, 8u);
    const auto kind = sim.kind(r.caption_id);
    if (kind == PlantKind::kExact) {
      EXPECT_EQ(r.largest, 8u);
      EXPECT_TRUE(r.flagged);
    } else if (kind == PlantKind::kTemplate) {
      ASSERT_TRUE(r.largest_masked.has_value());
      EXPECT_TRUE(r.flagged_masked);
      EXPECT_TRUE(r.flagged);
    } else {
      EXPECT_FALSE(r.flagged) << r.caption_id;
    }
  }
  cfg.use_masked = false;
  const auto unmasked = carlini_postfilter(cands, sim, cfg, 16, 0xCA21, 1, failures);
  for (std::size_t i = 0; i < unmasked.size(); ++i) {
    EXPECT_EQ(unmasked[i].flagged, unmasked[i].flagged_unmasked);
    EXPECT_EQ(unmasked[i].largest, results[i].largest);
  }
}

TEST(Postfilter, ConfigValidation) {
  PostfilterConfig cfg;
  cfg.n_samples = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.component_min_frac = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.pair_delta = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(LabelCaptions, PreservesInputOrderAndReportsFailures) {
  Simulation sim(vaudit::testing::small_sim(100));
  GtConfig gt;
  vaudit::testing::SimReference ref(sim, gt);
  FlakyGenerator flaky(sim, 7);
  Labeler labeler(flaky, ref.index, ref.store, ref.embedder, *ref.masks, gt);
  std::vector<CaptionRecord> caps(sim.captions().rbegin(), sim.captions().rend());
  const auto out = label_captions(caps, labeler, 4);
  std::vector<CaptionId> want;
  for (const auto& c : caps)
    if (c.id % 7 != 0) want.push_back(c.id);
  std::vector<CaptionId> got;
  for (const auto& l : out.labels) got.push_back(l.caption_id);
  EXPECT_EQ(got, want);
  EXPECT_EQ(out.failures.size(), caps.size() - want.size());
  for (const auto& f : out.failures) EXPECT_EQ(f.stage, "label");
}
