#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/groundtruth.hpp"
#include "vaudit/scoring.hpp"

using namespace vaudit;
using vaudit::testing::make_mask_fixture;
using vaudit::testing::SimReference;
using vaudit::testing::variation_iou;

namespace {

SimulationConfig labeled_sim() {
  auto cfg = vaudit::testing::small_sim(400);
  cfg.retrieval_frac = 0.0125;
  return cfg;
}

}  // namespace

TEST(MvDistance, MinimumOverSeeds) {
  std::mt19937_64 rng(11);
  const Image x = vaudit::testing::random_image(rng, 8, 8, 3);
  const std::vector<Image> gens = {vaudit::testing::random_image(rng, 8, 8, 3), x,
                                   vaudit::testing::random_image(rng, 8, 8, 3)};
  const std::vector<std::uint64_t> seeds = {10, 20, 30};
  const auto d = mv_distance(x, gens, seeds);
  EXPECT_EQ(d.distance, 0.0);
  EXPECT_EQ(d.seed_index, 1u);
  EXPECT_EQ(d.seed, 20u);
  EXPECT_THROW(mv_distance(x, gens, std::vector<std::uint64_t>{1}), Error);
  EXPECT_THROW(mv_distance(x, std::vector<Image>{}, std::vector<std::uint64_t>{}), Error);
}

TEST(MatchingVerbatim, ExactPlantsMatchAndOthersDoNot) {
  Simulation sim(vaudit::testing::small_sim());
  GtConfig gt;
  for (const auto& cap : sim.captions()) {
    const auto kind = sim.kind(cap.id);
    if (kind != PlantKind::kExact && cap.id % 17 != 0) continue;
    const auto label = label_matching_verbatim(sim.image(cap.id), cap, sim, gt);
    EXPECT_EQ(label.is_verbatim(), kind == PlantKind::kExact) << cap.id;
    if (label.is_verbatim()) {
      EXPECT_LE(label.distance, gt.delta_v);
      ASSERT_TRUE(label.witness && label.witness->seed);
    }
  }
}

TEST(MajoritySmooth, FixedPointsAndIsolatedPixels) {
  Mask m(9, 9, true);
  m.put(4, 4, false);  // isolated hole is filled
  EXPECT_EQ(majority_smooth(m), Mask(9, 9, true));
  EXPECT_EQ(majority_smooth(Mask(9, 9, false)), Mask(9, 9, false));
  // Rectangle minus its corners survives unchanged.
  const Mask v = variation_mask(16, 16, Rect{3, 4, 7, 6});
  EXPECT_EQ(majority_smooth(v), v);
}

TEST(MajoritySmooth, EdgeTieKeepsBit) {
  // Corner pixel: 4 in-bounds cells; 2 ones vs 2 zeros keeps the center bit.
  Mask m(4, 4, true);
  m.put(1, 0, false);
  m.put(1, 1, false);
  EXPECT_TRUE(majority_smooth(m).get(0, 0));
  Mask z(4, 4, true);
  z.put(0, 0, false);
  z.put(1, 0, false);
  EXPECT_FALSE(majority_smooth(z).get(0, 0));
}

TEST(VariationMask, RecoversPlantedRegionOnHundredFixtures) {
  double worst = 1.0;
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto f = make_mask_fixture(1000 + seed);
    const Mask est = estimate_variation_mask(f.images);
    const double iou = variation_iou(est, f.planted());
    worst = std::min(worst, iou);
    total += iou;
  }
  EXPECT_GE(worst, 0.9);
  EXPECT_GE(total / 100.0, 0.9);
}

TEST(VariationMask, Errors) {
  const auto f = make_mask_fixture(5);
  EXPECT_THROW(estimate_variation_mask(std::span(f.images).first(2)), Error);
  std::vector<Image> mixed = f.images;
  mixed[1] = Image::filled(16, 16, 3, 0.5f);
  EXPECT_THROW(estimate_variation_mask(mixed), Error);
  std::mt19937_64 rng(6);
  std::vector<Image> noise;
  for (int i = 0; i < 5; ++i) noise.push_back(vaudit::testing::random_image(rng, 32, 32, 3));
  try {
    estimate_variation_mask(noise);
    FAIL() << "expected a degenerate mask";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateMask);
  }
}

TEST(Screen, RejectsWhiteAndFlatImages) {
  GtConfig gt;
  EXPECT_EQ(screen_candidate(Image::filled(32, 32, 3, 1.0f), gt).reason,
            ScreenReason::kWhiteBackground);
  EXPECT_EQ(screen_candidate(Image::filled(32, 32, 3, 0.4f), gt).reason,
            ScreenReason::kLowEdgeDensity);
  const Image mosaic = mosaic_image(32, 32, 4, 9);
  EXPECT_TRUE(candidate_screen(mosaic, gt));
  const auto r = screen_candidate(mosaic, gt);
  EXPECT_EQ(r.white_frac, 0.0);
  EXPECT_GT(r.edge_density, gt.min_edge_density);
}

TEST(GtConfig, ValidateRejectsOutOfRange) {
  GtConfig gt;
  EXPECT_NO_THROW(gt.validate());
  auto bad = gt;
  bad.delta_v = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = gt;
  bad.k = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = gt;
  bad.dup_threshold = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Labeler, KindsFollowPlantsWithPrecedence) {
  Simulation sim(labeled_sim());
  ASSERT_FALSE(sim.manifest().retrieval.empty());
  GtConfig gt;
  SimReference ref(sim, gt);
  Labeler labeler(sim, ref.index, ref.store, ref.embedder, *ref.masks, gt);
  std::size_t false_positives = 0;
  for (const auto& cap : sim.captions()) {
    const auto label = labeler.label(cap);
    switch (sim.kind(cap.id)) {
      case PlantKind::kExact:
        EXPECT_EQ(label.kind, VerbatimKind::kExact) << cap.id;
        break;
      case PlantKind::kTemplate:
        EXPECT_EQ(label.kind, VerbatimKind::kTemplate) << cap.id;
        if (label.witness) EXPECT_TRUE(label.witness->mask_id.has_value());
        break;
      case PlantKind::kRetrieval:
        EXPECT_EQ(label.kind, VerbatimKind::kRetrieval) << cap.id;
        if (label.witness) EXPECT_TRUE(label.witness->rank.has_value());
        break;
      case PlantKind::kNone:
        false_positives += label.is_verbatim() ? 1 : 0;
        EXPECT_FALSE(label.reason.empty());
        break;
    }
    if (label.is_verbatim()) {
      ASSERT_TRUE(label.witness.has_value());
      EXPECT_TRUE(std::isfinite(label.distance));
    }
  }
  EXPECT_EQ(false_positives, 0u);
}

TEST(Labeler, DeduplicatedBackendForgetsExactPlants) {
  Simulation sim(vaudit::testing::small_sim());
  Simulation dedup = sim.deduplicated();
  GtConfig gt;
  SimReference ref(sim, gt);
  Labeler labeler(dedup, ref.index, ref.store, ref.embedder, *ref.masks, gt);
  for (CaptionId id : sim.manifest().exact) {
    EXPECT_FALSE(labeler.label(sim.caption(id)).is_verbatim()) << id;
  }
  for (CaptionId id : sim.manifest().templates) {
    EXPECT_EQ(labeler.label(sim.caption(id)).kind, VerbatimKind::kTemplate) << id;
  }
}

TEST(GroupMasks, UngroupedItemsHaveNoMask) {
  MemoryImageStore store;
  const auto f = make_mask_fixture(3);
  std::vector<DuplicateGroup> groups(2);
  groups[0].id = 3;
  groups[0].members = {1, 2, 3};
  groups[1].id = 5;
  groups[1].members = {4, 5};
  for (ItemId i = 1; i <= 5; ++i) store.put(i, f.images[i - 1]);
  GroupMasks masks(groups, store, 0.05, 0.1);
  const auto a = masks.for_item(2);
  EXPECT_EQ(a.group_id, 3u);
  ASSERT_TRUE(a.mask.has_value());
  const auto b = masks.for_item(4);
  EXPECT_FALSE(b.mask.has_value());
  EXPECT_EQ(b.reason, "too_few_images");
  EXPECT_EQ(masks.for_item(99).reason, "ungrouped");
  EXPECT_EQ(masks.estimated().size(), 1u);
}

TEST(ImageStore, MissingImagesThrow) {
  MemoryImageStore store;
  try {
    store.get(7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingImage);
  }
}
