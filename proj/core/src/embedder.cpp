#include "vaudit/embedder.hpp"

#include <cmath>

#include "vaudit/error.hpp"

namespace vaudit {

ThumbnailEmbedder::ThumbnailEmbedder(std::size_t grid) : grid_(grid) {
  if (grid == 0) throw Error(ErrorCode::kInvalidArgument, "thumbnail grid must be > 0");
}

std::string ThumbnailEmbedder::name() const {
  return "thumbnail-" + std::to_string(grid_);
}

std::vector<float> ThumbnailEmbedder::embed(const Image& img) const {
  if (img.width() < grid_ || img.height() < grid_) {
    throw Error(ErrorCode::kInvalidArgument, "image smaller than thumbnail grid");
  }
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const std::size_t c = img.channels();
  std::vector<double> sums(grid_ * grid_ * 3, 0.0);
  std::vector<double> counts(grid_ * grid_, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t gy = y * grid_ / h;
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t gx = x * grid_ / w;
      const std::size_t cell = gy * grid_ + gx;
      counts[cell] += 1.0;
      for (std::size_t k = 0; k < 3; ++k) {
        sums[cell * 3 + k] += img.at(x, y, c == 1 ? 0 : k);
      }
    }
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < sums.size(); ++i) {
    sums[i] /= counts[i / 3];
    mean += sums[i];
  }
  mean /= static_cast<double>(sums.size());
  double norm = 0.0;
  for (auto& v : sums) {
    v -= mean;
    norm += v * v;
  }
  norm = std::sqrt(norm);
  std::vector<float> out(sums.size(), 0.0f);
  if (norm < 1e-12) {
    out[0] = 1.0f;
    return out;
  }
  for (std::size_t i = 0; i < sums.size(); ++i) out[i] = static_cast<float>(sums[i] / norm);
  return out;
}

}  // namespace vaudit
