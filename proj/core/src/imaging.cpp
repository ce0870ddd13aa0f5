#include "vaudit/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vaudit/error.hpp"

namespace vaudit {

namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  if (i < 0) return 0;
  if (static_cast<std::size_t>(i) >= n) return n - 1;
  return static_cast<std::size_t>(i);
}

void require_same_shape(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "image shapes differ: " + std::to_string(a.width()) + "x" +
                    std::to_string(a.height()) + "x" + std::to_string(a.channels()) +
                    " vs " + std::to_string(b.width()) + "x" +
                    std::to_string(b.height()) + "x" + std::to_string(b.channels()));
  }
}

}  // namespace

Image::Image(std::size_t width, std::size_t height, std::size_t channels,
             std::vector<float> data)
    : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
  if (channels_ != 1 && channels_ != 3) {
    throw Error(ErrorCode::kInvalidArgument, "image channels must be 1 or 3");
  }
  if (width_ < kMinImageSide || height_ < kMinImageSide) {
    throw Error(ErrorCode::kInvalidArgument, "image sides must be at least 8 pixels");
  }
  if (data_.size() != width_ * height_ * channels_) {
    throw Error(ErrorCode::kInvalidArgument, "image data length does not match shape");
  }
  for (float v : data_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kInvalidArgument, "image sample outside [0,1]");
    }
  }
}

Image Image::filled(std::size_t width, std::size_t height, std::size_t channels,
                    float value) {
  return Image(width, height, channels,
               std::vector<float>(width * height * channels, value));
}

void Image::set(std::size_t x, std::size_t y, std::size_t c, float value) noexcept {
  data_[(y * width_ + x) * channels_ + c] = std::clamp(value, 0.0f, 1.0f);
}

BitRaster::BitRaster(std::size_t width, std::size_t height,
                     std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (bits_.size() != width_ * height_) {
    throw Error(ErrorCode::kInvalidArgument, "bit raster length does not match shape");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t BitRaster::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  std::vector<float> luma(img.pixel_count());
  auto src = img.data();
  for (std::size_t i = 0; i < luma.size(); ++i) {
    const double v = 0.299 * src[3 * i] + 0.587 * src[3 * i + 1] + 0.114 * src[3 * i + 2];
    luma[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  return Image(img.width(), img.height(), 1, std::move(luma));
}

std::vector<double> gradient_magnitude(const Image& img) {
  const Image gray = to_grayscale(img);
  const std::size_t w = gray.width();
  const std::size_t h = gray.height();
  std::vector<double> mag(w * h);
  auto px = [&](std::ptrdiff_t x, std::ptrdiff_t y) -> double {
    return gray.at(clamp_index(x, w), clamp_index(y, h));
  };
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const auto xi = static_cast<std::ptrdiff_t>(x);
      const auto yi = static_cast<std::ptrdiff_t>(y);
      const double gx = (px(xi + 1, yi - 1) + 2.0 * px(xi + 1, yi) + px(xi + 1, yi + 1)) -
                        (px(xi - 1, yi - 1) + 2.0 * px(xi - 1, yi) + px(xi - 1, yi + 1));
      const double gy = (px(xi - 1, yi + 1) + 2.0 * px(xi, yi + 1) + px(xi + 1, yi + 1)) -
                        (px(xi - 1, yi - 1) + 2.0 * px(xi, yi - 1) + px(xi + 1, yi - 1));
      mag[y * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return mag;
}

EdgeMap edge_map(const Image& img, double t_edge) {
  if (!(t_edge > 0.0 && t_edge <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "edge threshold must lie in (0,1]");
  }
  const auto mag = gradient_magnitude(img);
  std::vector<std::uint8_t> bits(mag.size());
  for (std::size_t i = 0; i < mag.size(); ++i) bits[i] = mag[i] > t_edge ? 1 : 0;
  return EdgeMap(img.width(), img.height(), std::move(bits));
}

double rmse(const Image& a, const Image& b) {
  require_same_shape(a, b);
  auto da = a.data();
  auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(da.size()));
}

double masked_sum_squares(const Image& a, const Image& b, const Mask& m) {
  require_same_shape(a, b);
  if (m.width() != a.width() || m.height() != a.height()) {
    throw Error(ErrorCode::kDimensionMismatch, "mask shape differs from image shape");
  }
  const std::size_t c = a.channels();
  auto da = a.data();
  auto db = b.data();
  double sum = 0.0;
  for (std::size_t p = 0; p < m.size(); ++p) {
    if (!m[p]) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = static_cast<double>(da[p * c + k]) - db[p * c + k];
      sum += d * d;
    }
  }
  return sum;
}

double masked_rmse(const Image& a, const Image& b, const Mask& m) {
  const double sum = masked_sum_squares(a, b, m);
  const std::size_t set = m.count();
  if (set == 0) {
    throw Error(ErrorCode::kDegenerateMask, "mask has no set bits");
  }
  return std::sqrt(sum / static_cast<double>(set * a.channels()));
}

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& t : taps) t /= total;
  return taps;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "blur sigma must be finite and >= 0");
  }
  if (sigma == 0.0) return img;
  const auto taps = gaussian_kernel(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const std::size_t c = img.channels();
  auto src = img.data();

  std::vector<double> horiz(src.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const std::size_t sx = clamp_index(static_cast<std::ptrdiff_t>(x) + t, w);
          acc += taps[static_cast<std::size_t>(t + radius)] * src[(y * w + sx) * c + k];
        }
        horiz[(y * w + x) * c + k] = acc;
      }
    }
  }
  std::vector<float> out(src.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) {
        double acc = 0.0;
        for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
          const std::size_t sy = clamp_index(static_cast<std::ptrdiff_t>(y) + t, h);
          acc += taps[static_cast<std::size_t>(t + radius)] * horiz[(sy * w + x) * c + k];
        }
        out[(y * w + x) * c + k] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
    }
  }
  return Image(w, h, c, std::move(out));
}

Image quantize_u8(const Image& img) {
  std::vector<float> out(img.data().begin(), img.data().end());
  for (auto& v : out) {
    const double k = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    v = static_cast<float>(k) / 255.0f;
  }
  return Image(img.width(), img.height(), img.channels(), std::move(out));
}

}  // namespace vaudit
