#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/png_io.hpp"

using namespace vaudit;

TEST(Png, U8GridImagesRoundTripExactly) {
  std::mt19937_64 rng(21);
  for (std::size_t c : {1u, 3u}) {
    const Image img = vaudit::testing::random_u8_image(rng, 17, 9, c);
    const auto bytes = encode_png(img);
    EXPECT_EQ(decode_png(bytes), img);
    EXPECT_EQ(encode_png(decode_png(bytes)), bytes);
  }
}

TEST(Png, EncodingIsDeterministic) {
  std::mt19937_64 rng(22);
  const Image img = vaudit::testing::random_u8_image(rng, 32, 32, 3);
  EXPECT_EQ(encode_png(img), encode_png(img));
}

TEST(Png, MalformedBytesAreRejected) {
  const std::vector<std::uint8_t> junk = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  try {
    decode_png(junk);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMalformedImage);
  }
  std::mt19937_64 rng(23);
  auto bytes = encode_png(vaudit::testing::random_u8_image(rng, 16, 16, 3));
  bytes.resize(bytes.size() / 2);
  EXPECT_THROW(decode_png(bytes), Error);
}

TEST(Png, MaskRoundTrip) {
  vaudit::testing::TempDir dir("png");
  Mask m(12, 10, false);
  for (std::size_t i = 0; i < 12; ++i) m.put(i, i % 10, true);
  save_mask_png(m, dir / "m.png");
  EXPECT_EQ(load_mask_png(dir / "m.png"), m);
  EXPECT_THROW(load_png(dir / "nope.png"), Error);
}
