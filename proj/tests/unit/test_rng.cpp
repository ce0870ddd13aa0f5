#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "vaudit/rng.hpp"

using namespace vaudit;

// Published SplitMix64 outputs: state 0 gives 0xE220A8397B1DCDAF first;
// state 1234567 gives the sequence below.
TEST(NoiseStream, BitsFollowSplitMix64Reference) {
  EXPECT_EQ(NoiseStream(0).bits(0), 0xE220A8397B1DCDAFULL);
  const NoiseStream s(1234567);
  EXPECT_EQ(s.bits(0), 6457827717110365317ULL);
  EXPECT_EQ(s.bits(1), 3203168211198807973ULL);
  EXPECT_EQ(s.bits(2), 9817491932198370423ULL);
  EXPECT_EQ(s.bits(3), 4593380528125082431ULL);
  EXPECT_EQ(s.bits(4), 16408922859458223821ULL);
}

TEST(NoiseStream, UniformIsTop53BitsPlusHalfUlp) {
  const NoiseStream s(99);
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double want = (static_cast<double>(s.bits(i) >> 11) + 0.5) / 9007199254740992.0;
    ASSERT_EQ(s.uniform(i), want);
    ASSERT_GT(s.uniform(i), 0.0);
    ASSERT_LT(s.uniform(i), 1.0);
  }
}

TEST(NoiseStream, GaussianIsBoxMullerOnPairs) {
  const NoiseStream s(5);
  for (std::uint64_t i = 0; i < 200; ++i) {
    const std::uint64_t p = i / 2;
    const double r = std::sqrt(-2.0 * std::log(s.uniform(2 * p)));
    const double a = 2.0 * M_PI * s.uniform(2 * p + 1);
    ASSERT_DOUBLE_EQ(s.gaussian(i), i % 2 == 0 ? r * std::cos(a) : r * std::sin(a));
  }
}

TEST(NoiseStream, GaussianMomentsAreStandard) {
  const NoiseStream s(0xDEADBEEF);
  const int n = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = s.gaussian(static_cast<std::uint64_t>(i));
    sum += g;
    sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
}

TEST(NoiseStream, FillScalesAndIsIndexAddressable) {
  const NoiseStream s(11);
  std::vector<float> out(64);
  s.fill_gaussian(out, 2.5);
  for (std::size_t i = 0; i < out.size(); ++i) {
    EXPECT_EQ(out[i], static_cast<float>(2.5 * s.gaussian(i)));
  }
}

TEST(DeriveSeed, DeterministicAndSpread) {
  EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
  std::set<std::uint64_t> seen;
  for (std::uint64_t parent = 0; parent < 50; ++parent)
    for (std::uint64_t salt = 0; salt < 50; ++salt) seen.insert(derive_seed(parent, salt));
  EXPECT_EQ(seen.size(), 2500u);
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
}

TEST(HashText, Fnv1aThenMix) {
  // FNV-1a of the empty string is the offset basis.
  EXPECT_EQ(hash_text(""), mix64(0xCBF29CE484222325ULL));
  // FNV-1a("a") = 0xAF63DC4C8601EC8C.
  EXPECT_EQ(hash_text("a"), mix64(0xAF63DC4C8601EC8CULL));
  EXPECT_NE(hash_text("ab"), hash_text("ba"));
}
