#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/imaging.hpp"

using namespace vaudit;
using vaudit::testing::random_image;

namespace {

// Direct 3x3 Sobel with replicate padding, written out tap by tap.
double sobel_oracle(const Image& gray, long x, long y) {
  const long w = static_cast<long>(gray.width());
  const long h = static_cast<long>(gray.height());
  auto p = [&](long xx, long yy) {
    xx = std::min(std::max(xx, 0L), w - 1);
    yy = std::min(std::max(yy, 0L), h - 1);
    return static_cast<double>(gray.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy)));
  };
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  double gx = 0.0;
  double gy = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      gx += kx[dy + 1][dx + 1] * p(x + dx, y + dy);
      gy += ky[dy + 1][dx + 1] * p(x + dx, y + dy);
    }
  }
  return std::hypot(gx, gy);
}

// Full 2-D Gaussian convolution with replicate padding.
double blur_oracle(const Image& img, double sigma, long x, long y, std::size_t c) {
  const long r = static_cast<long>(std::ceil(3.0 * sigma));
  const long w = static_cast<long>(img.width());
  const long h = static_cast<long>(img.height());
  double acc = 0.0;
  double norm = 0.0;
  for (long dy = -r; dy <= r; ++dy) {
    for (long dx = -r; dx <= r; ++dx) {
      const double wt = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      const long xx = std::min(std::max(x + dx, 0L), w - 1);
      const long yy = std::min(std::max(y + dy, 0L), h - 1);
      acc += wt * img.at(static_cast<std::size_t>(xx), static_cast<std::size_t>(yy), c);
      norm += wt;
    }
  }
  return std::clamp(acc / norm, 0.0, 1.0);
}

}  // namespace

TEST(Image, RejectsOutOfRangeAndTinyRasters) {
  EXPECT_THROW(Image(4, 16, 1, std::vector<float>(64, 0.5f)), Error);
  EXPECT_THROW(Image(8, 8, 1, std::vector<float>(64, 1.5f)), Error);
  EXPECT_THROW(Image(8, 8, 2, std::vector<float>(128, 0.5f)), Error);
  EXPECT_THROW(Image(8, 8, 3, std::vector<float>(10, 0.5f)), Error);
  EXPECT_NO_THROW(Image(8, 8, 3, std::vector<float>(192, 0.5f)));
}

TEST(Image, SetClampsToUnitRange) {
  Image img = Image::filled(8, 8, 1, 0.5f);
  img.set(0, 0, 0, 2.0f);
  img.set(1, 0, 0, -1.0f);
  EXPECT_EQ(img.at(0, 0), 1.0f);
  EXPECT_EQ(img.at(1, 0), 0.0f);
}

TEST(Grayscale, MatchesBt601Weights) {
  std::mt19937_64 rng(1);
  const Image img = random_image(rng, 9, 11, 3);
  const Image g = to_grayscale(img);
  ASSERT_EQ(g.channels(), 1u);
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::size_t x = 0; x < img.width(); ++x) {
      const double want = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
      EXPECT_NEAR(g.at(x, y), want, 1e-6);
    }
  }
}

TEST(Sobel, MatchesTapByTapOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Image img = random_image(rng, 8 + trial, 8 + (trial * 3) % 7, trial % 2 ? 3 : 1);
    const Image gray = to_grayscale(img);
    const auto mag = gradient_magnitude(img);
    for (std::size_t y = 0; y < img.height(); ++y) {
      for (std::size_t x = 0; x < img.width(); ++x) {
        ASSERT_NEAR(mag[y * img.width() + x],
                    sobel_oracle(gray, static_cast<long>(x), static_cast<long>(y)), 1e-12);
      }
    }
  }
}

TEST(Sobel, ConstantImageHasNoEdges) {
  const Image flat = Image::filled(16, 16, 3, 0.37f);
  for (double m : gradient_magnitude(flat)) EXPECT_EQ(m, 0.0);
  EXPECT_EQ(edge_map(flat).count(), 0u);
}

TEST(Sobel, VerticalStepResponse) {
  // Step from 0 to 1 between columns 3 and 4: the two columns beside the step
  // see gx = 4 (1+2+1), everything else 0.
  std::vector<float> data(16 * 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 16; ++x) data[y * 16 + x] = x >= 4 ? 1.0f : 0.0f;
  const Image img(16, 8, 1, data);
  const auto mag = gradient_magnitude(img);
  for (std::size_t y = 0; y < 8; ++y) {
    for (std::size_t x = 0; x < 16; ++x) {
      EXPECT_DOUBLE_EQ(mag[y * 16 + x], (x == 3 || x == 4) ? 4.0 : 0.0);
    }
  }
  const auto edges = edge_map(img, 0.25);
  EXPECT_EQ(edges.count(), 16u);
}

TEST(EdgeMap, ThresholdIsStrictAndMonotone) {
  std::mt19937_64 rng(3);
  const Image img = random_image(rng, 20, 20, 3);
  const auto mag = gradient_magnitude(img);
  std::size_t prev_count = 0;
  for (double t : {0.9, 0.6, 0.3, 0.1, 0.05}) {
    const auto e = edge_map(img, t);
    for (std::size_t i = 0; i < mag.size(); ++i) EXPECT_EQ(e[i], mag[i] > t);
    EXPECT_GE(e.count(), prev_count);
    prev_count = e.count();
  }
  EXPECT_THROW(edge_map(img, 0.0), Error);
  EXPECT_THROW(edge_map(img, 1.5), Error);
}

TEST(Rmse, HandComputed) {
  std::vector<float> a(64, 0.0f);
  std::vector<float> b(64, 0.0f);
  b[0] = 0.8f;
  b[1] = 0.6f;
  // sqrt((0.64 + 0.36) / 64) = 1/8
  EXPECT_NEAR(rmse(Image(8, 8, 1, a), Image(8, 8, 1, b)), 0.125, 1e-7);
  EXPECT_THROW(rmse(Image(8, 8, 1, a), Image::filled(8, 8, 3, 0.0f)), Error);
}

TEST(Rmse, SymmetricAndZeroOnSelf) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10; ++i) {
    const Image a = random_image(rng, 12, 10, 3);
    const Image b = random_image(rng, 12, 10, 3);
    EXPECT_EQ(rmse(a, a), 0.0);
    EXPECT_DOUBLE_EQ(rmse(a, b), rmse(b, a));
    EXPECT_LE(rmse(a, b), 1.0);
  }
}

TEST(MaskedRmse, HandComputedOverRgb) {
  // Two masked-in pixels; only one channel differs by 0.6 in one of them:
  // sqrt(0.36 / (2 pixels * 3 channels)) = sqrt(0.06).
  Image a = Image::filled(8, 8, 3, 0.2f);
  Image b = a;
  b.set(1, 1, 2, 0.8f);
  b.set(5, 5, 0, 0.9f);  // masked out
  Mask m(8, 8, false);
  m.put(1, 1, true);
  m.put(2, 1, true);
  EXPECT_NEAR(masked_rmse(a, b, m), std::sqrt(0.06), 1e-7);
  EXPECT_NEAR(masked_sum_squares(a, b, m), 0.36, 1e-7);
}

TEST(MaskedRmse, AllOnesEqualsRmseAndEmptyMaskThrows) {
  std::mt19937_64 rng(5);
  const Image a = random_image(rng, 16, 9, 3);
  const Image b = random_image(rng, 16, 9, 3);
  EXPECT_NEAR(masked_rmse(a, b, Mask::all_ones(16, 9)), rmse(a, b), 1e-12);
  EXPECT_THROW(masked_rmse(a, b, Mask(16, 9, false)), Error);
  EXPECT_THROW(masked_rmse(a, b, Mask::all_ones(8, 8)), Error);
}

TEST(GaussianBlur, SeparableMatchesFull2dConvolution) {
  std::mt19937_64 rng(6);
  const Image img = random_image(rng, 14, 11, 3);
  for (double sigma : {0.7, 1.5, 3.0}) {
    const Image out = gaussian_blur(img, sigma);
    for (std::size_t y = 0; y < img.height(); ++y)
      for (std::size_t x = 0; x < img.width(); ++x)
        for (std::size_t c = 0; c < 3; ++c)
          ASSERT_NEAR(out.at(x, y, c), blur_oracle(img, sigma, static_cast<long>(x),
                                                   static_cast<long>(y), c), 1e-5);
  }
  EXPECT_EQ(gaussian_blur(img, 0.0), img);
  EXPECT_THROW(gaussian_blur(img, -1.0), Error);
}

TEST(GaussianKernel, NormalizedSymmetricWithExpectedRadius) {
  for (double sigma : {0.5, 1.0, 2.2}) {
    const auto taps = gaussian_kernel(sigma);
    EXPECT_EQ(taps.size(), 2 * static_cast<std::size_t>(std::ceil(3 * sigma)) + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
      sum += taps[i];
      EXPECT_DOUBLE_EQ(taps[i], taps[taps.size() - 1 - i]);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Quantize, LandsOnGridAndIsIdempotent) {
  std::mt19937_64 rng(7);
  const Image img = random_image(rng, 10, 10, 3);
  const Image q = quantize_u8(img);
  EXPECT_EQ(quantize_u8(q), q);
  for (std::size_t i = 0; i < q.data().size(); ++i) {
    const double k = q.data()[i] * 255.0;
    EXPECT_NEAR(k, std::round(k), 1e-4);
    EXPECT_LE(std::abs(q.data()[i] - img.data()[i]), 0.5 / 255.0 + 1e-6);
  }
}

TEST(BitRaster, CountAndShape) {
  EXPECT_THROW(Mask(4, 4, std::vector<std::uint8_t>(3, 1)), Error);
  Mask m(8, 8, false);
  m.put(3, 4, true);
  m.put(7, 7, true);
  EXPECT_EQ(m.count(), 2u);
  EXPECT_TRUE(m.get(3, 4));
  EXPECT_TRUE(m[7 * 8 + 7]);
}
