#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace vaudit {

inline constexpr double kDefaultEdgeThreshold = 0.25;
inline constexpr std::size_t kMinImageSide = 8;

/// Row-major raster with 1 (luma) or 3 (interleaved RGB) channels.
/// Every sample lies in [0, 1]; both sides are at least 8 pixels.
class Image {
 public:
  Image() = default;
  Image(std::size_t width, std::size_t height, std::size_t channels,
        std::vector<float> data);

  static Image filled(std::size_t width, std::size_t height, std::size_t channels,
                      float value);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return width_ * height_; }
  bool empty() const noexcept { return data_.empty(); }

  float at(std::size_t x, std::size_t y, std::size_t c = 0) const noexcept {
    return data_[(y * width_ + x) * channels_ + c];
  }

  std::span<const float> data() const noexcept { return data_; }

  /// Writes clamp to [0, 1] so the invariant cannot be broken through here.
  void set(std::size_t x, std::size_t y, std::size_t c, float value) noexcept;

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t channels_ = 0;
  std::vector<float> data_;
};

/// Row-major bit raster shared by masks and edge maps.
class BitRaster {
 public:
  BitRaster() = default;
  BitRaster(std::size_t width, std::size_t height, bool value = false)
      : width_(width), height_(height), bits_(width * height, value ? 1 : 0) {}
  BitRaster(std::size_t width, std::size_t height, std::vector<std::uint8_t> bits);

  std::size_t width() const noexcept { return width_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool get(std::size_t x, std::size_t y) const noexcept {
    return bits_[y * width_ + x] != 0;
  }
  void put(std::size_t x, std::size_t y, bool v) noexcept {
    bits_[y * width_ + x] = v ? 1 : 0;
  }
  bool operator[](std::size_t i) const noexcept { return bits_[i] != 0; }

  std::size_t count() const noexcept;
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  friend bool operator==(const BitRaster&, const BitRaster&) = default;

 protected:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// 1 = compared region, 0 = region of permitted variation.
class Mask : public BitRaster {
 public:
  using BitRaster::BitRaster;

  static Mask all_ones(std::size_t width, std::size_t height) {
    return Mask(width, height, true);
  }
};

/// 1 = edge pixel.
class EdgeMap : public BitRaster {
 public:
  using BitRaster::BitRaster;
};

/// BT.601 luma; single-channel input is returned unchanged.
Image to_grayscale(const Image& img);

/// Per-pixel Sobel gradient magnitude of the luma channel with replicate
/// padding. Returned row-major, width*height entries.
std::vector<double> gradient_magnitude(const Image& img);

/// Bit set iff the Sobel gradient magnitude exceeds `t_edge`.
EdgeMap edge_map(const Image& img, double t_edge = kDefaultEdgeThreshold);

/// Root-mean-square difference over every sample. Throws on shape mismatch.
double rmse(const Image& a, const Image& b);

/// Root-mean-square difference restricted to pixels whose mask bit is set
/// (all channels of those pixels). Throws on an all-zero mask.
double masked_rmse(const Image& a, const Image& b, const Mask& m);

/// Sum of squared differences over masked-in samples.
double masked_sum_squares(const Image& a, const Image& b, const Mask& m);

/// Separable Gaussian, radius ceil(3 sigma), replicate borders, clamped output.
Image gaussian_blur(const Image& img, double sigma);

/// Normalized 1-D Gaussian taps of length 2*ceil(3 sigma)+1 (sigma > 0).
std::vector<double> gaussian_kernel(double sigma);

/// Rounds every sample to the nearest multiple of 1/255 (half-up).
Image quantize_u8(const Image& img);

}  // namespace vaudit
