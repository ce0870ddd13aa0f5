#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/rng.hpp"
#include "vaudit/scoring.hpp"
#include "vaudit/simulation.hpp"

using namespace vaudit;

namespace {

// Independent restatement of the shared noise draw.
std::uint64_t splitmix(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + (i + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<float> oracle_noise(std::size_t n, double sigma, std::uint64_t seed) {
  std::vector<float> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t p = i / 2;
    const double u1 = (static_cast<double>(splitmix(seed, 2 * p) >> 11) + 0.5) / 9007199254740992.0;
    const double u2 = (static_cast<double>(splitmix(seed, 2 * p + 1) >> 11) + 0.5) / 9007199254740992.0;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    z[i] = static_cast<float>(sigma * (i % 2 == 0 ? r * std::cos(a) : r * std::sin(a)));
  }
  return z;
}

class HalfDenoiser final : public Denoiser {
 public:
  std::size_t tensor_size() const override { return 300; }
  std::vector<float> denoise(std::span<const float> z, const CaptionRecord&) override {
    std::vector<float> out(z.begin(), z.end());
    for (auto& v : out) v *= 0.5f;
    return out;
  }
};

class ShapeChanger final : public Denoiser {
 public:
  std::size_t tensor_size() const override { return 10; }
  std::vector<float> denoise(std::span<const float>, const CaptionRecord&) override {
    return std::vector<float>(9, 0.0f);
  }
};

class BadEndpoint final : public DcsEndpoint {
 public:
  explicit BadEndpoint(double v) : v_(v) {}
  double dcs(const CaptionRecord&, std::uint64_t, double) override { return v_; }

 private:
  double v_;
};

EdgeMap bits(std::size_t w, std::size_t h, std::initializer_list<int> on) {
  EdgeMap e(w, h, false);
  for (int i : on) e.put(static_cast<std::size_t>(i) % w, static_cast<std::size_t>(i) / w, true);
  return e;
}

}  // namespace

TEST(VoteThreshold, CeilingWithoutRepresentationDrift) {
  EXPECT_EQ(vote_threshold(0.75, 4), 3u);
  EXPECT_EQ(vote_threshold(0.5, 4), 2u);
  EXPECT_EQ(vote_threshold(0.5, 3), 2u);
  EXPECT_EQ(vote_threshold(1.0, 4), 4u);
  EXPECT_EQ(vote_threshold(0.1, 4), 1u);
  EXPECT_EQ(vote_threshold(0.7, 10), 7u);
}

TEST(ScoreThresholds, ValidateRejectsOutOfRange) {
  ScoreThresholds t;
  EXPECT_NO_THROW(t.validate());
  auto bad = t;
  bad.j = 0;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.gamma_frac = 0.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.gamma_frac = 1.5;
  EXPECT_THROW(bad.validate(), Error);
  bad = t;
  bad.t_edge = 0.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Dcs, NoiseMatchesIndependentOracle) {
  const auto z = dcs_noise(3 * 32 * 32, 14.6, 0xABCDEF);
  const auto want = oracle_noise(z.size(), 14.6, 0xABCDEF);
  EXPECT_EQ(z, want);
}

TEST(Dcs, RecomputedFromNoiseAndDenoiserOutput) {
  Simulation sim(vaudit::testing::small_sim());
  for (std::size_t i = 0; i < 30; ++i) {
    const auto& cap = sim.captions()[i * 13];
    const std::uint64_t seed = derive_seed(0x5EED, cap.id);
    const auto z = oracle_noise(sim.tensor_size(), 14.6, seed);
    const auto d = sim.denoise_text(z, cap.text);
    double sum = 0.0;
    for (std::size_t k = 0; k < z.size(); ++k) {
      const double r = static_cast<double>(z[k]) - static_cast<double>(d[k]);
      sum += r * r;
    }
    const double want = sum / static_cast<double>(z.size());
    const auto got = dcs_score(sim, cap, 14.6, seed);
    EXPECT_EQ(got.caption_id, cap.id);
    EXPECT_NEAR(got.value, want, 1e-12 * want);
    DenoiserDcs endpoint(sim);
    EXPECT_EQ(dcs_score(endpoint, cap, 14.6, seed), got);
  }
}

TEST(Dcs, HalfDenoiserResidualIsQuarterEnergy) {
  HalfDenoiser d;
  const CaptionRecord cap{1, "x", {}};
  const auto z = dcs_noise(300, 2.0, 42);
  double energy = 0.0;
  for (float v : z) {
    const double r = static_cast<double>(v) - static_cast<double>(v * 0.5f);
    energy += r * r;
  }
  EXPECT_DOUBLE_EQ(dcs_score(d, cap, 2.0, 42).value, energy / 300.0);
}

TEST(Dcs, Errors) {
  HalfDenoiser d;
  ShapeChanger bad;
  const CaptionRecord cap{1, "x", {}};
  EXPECT_THROW(dcs_score(d, cap, 0.0, 1), Error);
  EXPECT_THROW(dcs_score(d, cap, std::nan(""), 1), Error);
  EXPECT_THROW(dcs_score(bad, cap, 1.0, 1), Error);
  BadEndpoint nan_ep(std::nan(""));
  BadEndpoint neg_ep(-1.0);
  EXPECT_THROW(dcs_score(nan_ep, cap, 1.0, 1), Error);
  EXPECT_THROW(dcs_score(neg_ep, cap, 1.0, 1), Error);
  EXPECT_THROW(mean_squared_residual(std::vector<float>{}, std::vector<float>{}), Error);
}

TEST(Dcs, ClassifyHonorsDirection) {
  const DcsScore s{1, 5.0};
  EXPECT_TRUE(dcs_classify(s, 5.0));
  EXPECT_FALSE(dcs_classify(s, 5.1));
  EXPECT_TRUE(dcs_classify(s, 5.0, ScoreDirection::kLowIsVerbatim));
  EXPECT_FALSE(dcs_classify(s, 4.9, ScoreDirection::kLowIsVerbatim));
}

TEST(Ecs, HandCountedVotes) {
  // 4x2 rasters, j = 4, gamma 0.75 -> 3 votes needed.
  // pixel 0: 4 votes, 1: 3, 2: 2, 3: 1, 5: 3, 7: 4 -> pixels 0, 1, 5, 7.
  const std::vector<EdgeMap> maps = {
      bits(4, 2, {0, 1, 2, 3, 5, 7}),
      bits(4, 2, {0, 1, 2, 5, 7}),
      bits(4, 2, {0, 1, 7}),
      bits(4, 2, {0, 5, 7}),
  };
  const auto s = ecs_from_edges(9, maps, 0.75);
  EXPECT_EQ(s.caption_id, 9u);
  EXPECT_EQ(s.value, 4u);
  EXPECT_EQ(s.j_used, 4u);
  EXPECT_EQ(ecs_from_edges(9, maps, 1.0).value, 2u);   // pixels 0, 7
  EXPECT_EQ(ecs_from_edges(9, maps, 0.25).value, 6u);  // any vote
}

TEST(Ecs, VoteCountIsMonotoneInGamma) {
  std::mt19937_64 rng(8);
  std::vector<EdgeMap> maps;
  for (int i = 0; i < 6; ++i) maps.push_back(edge_map(vaudit::testing::random_image(rng, 16, 16, 3), 0.5));
  std::uint64_t prev = ~0ULL;
  for (double g : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const auto v = ecs_from_edges(1, maps, g).value;
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Ecs, ShapeAndSeedErrors) {
  const std::vector<EdgeMap> mixed = {EdgeMap(4, 4), EdgeMap(4, 5)};
  EXPECT_THROW(ecs_from_edges(1, mixed, 0.75), Error);
  EXPECT_THROW(ecs_from_edges(1, std::vector<EdgeMap>{}, 0.75), Error);
  Simulation sim(vaudit::testing::small_sim());
  ScoreThresholds t;
  const auto seeds = derive_seeds(1, 3);
  EXPECT_THROW(ecs_score(sim, sim.captions().front(), t, seeds), Error);
}

TEST(Ecs, ScoreEqualsVotesOverGeneratedEdges) {
  Simulation sim(vaudit::testing::small_sim());
  ScoreThresholds t;
  const auto seeds = derive_seeds(77, t.j);
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& cap = sim.captions()[i * 37];
    std::vector<EdgeMap> maps;
    for (auto s : seeds) maps.push_back(edge_map(sim.generate(cap, s, 1), t.t_edge));
    EXPECT_EQ(ecs_score(sim, cap, t, seeds), ecs_from_edges(cap.id, maps, t.gamma_frac));
  }
}

TEST(Ecs, PlantsScoreAboveNonPlants) {
  Simulation sim(vaudit::testing::small_sim());
  ScoreThresholds t;
  const auto seeds = derive_seeds(5, t.j);
  std::uint64_t min_exact = ~0ULL;
  std::uint64_t max_none = 0;
  for (const auto& cap : sim.captions()) {
    const auto v = ecs_score(sim, cap, t, seeds).value;
    if (sim.kind(cap.id) == PlantKind::kExact) min_exact = std::min(min_exact, v);
    if (sim.kind(cap.id) == PlantKind::kNone) max_none = std::max(max_none, v);
  }
  EXPECT_EQ(max_none, 0u);
  EXPECT_GT(min_exact, 0u);
}

TEST(DeriveSeeds, DistinctAndStable) {
  const auto a = derive_seeds(123, 8);
  EXPECT_EQ(a, derive_seeds(123, 8));
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], derive_seed(123, i));
    for (std::size_t k = i + 1; k < a.size(); ++k) EXPECT_NE(a[i], a[k]);
  }
}
