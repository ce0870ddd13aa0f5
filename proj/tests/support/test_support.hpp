#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vaudit/embedder.hpp"
#include "vaudit/groundtruth.hpp"
#include "vaudit/imaging.hpp"
#include "vaudit/retrieval.hpp"
#include "vaudit/simulation.hpp"

namespace vaudit::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vaudit-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(std::mt19937_64& rng, std::size_t w, std::size_t h, std::size_t c) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> data(w * h * c);
  for (auto& v : data) v = u(rng);
  return Image(w, h, c, std::move(data));
}

inline Image random_u8_image(std::mt19937_64& rng, std::size_t w, std::size_t h, std::size_t c) {
  std::uniform_int_distribution<int> u(0, 255);
  std::vector<float> data(w * h * c);
  for (auto& v : data) v = static_cast<float>(u(rng)) / 255.0f;
  return Image(w, h, c, std::move(data));
}

/// Planted variation fixture: `count` near duplicates sharing a mosaic
/// outside `rect` (with +-1/255 jitter) and i.i.d. colors inside it.
struct MaskFixture {
  Rect rect;
  std::vector<Image> images;
  /// 1 outside the rectangle: the stable region an estimator should find.
  Mask planted() const {
    const std::size_t w = images.front().width();
    const std::size_t h = images.front().height();
    Mask m(w, h, true);
    for (std::size_t y = rect.y; y < rect.y + rect.h; ++y) {
      for (std::size_t x = rect.x; x < rect.x + rect.w; ++x) m.put(x, y, false);
    }
    return m;
  }
};

inline MaskFixture make_mask_fixture(std::uint64_t seed, std::size_t w = 32, std::size_t h = 32,
                                     std::size_t count = 6) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> side(8, 16);
  MaskFixture f;
  f.rect.w = side(rng);
  f.rect.h = side(rng);
  f.rect.x = std::uniform_int_distribution<std::size_t>(0, w - f.rect.w)(rng);
  f.rect.y = std::uniform_int_distribution<std::size_t>(0, h - f.rect.h)(rng);
  const Image base = mosaic_image(w, h, 4, seed ^ 0xABCDEF);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_real_distribution<float> color(0.0f, 1.0f);
  for (std::size_t i = 0; i < count; ++i) {
    Image img = base;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const bool inside = x >= f.rect.x && x < f.rect.x + f.rect.w && y >= f.rect.y &&
                            y < f.rect.y + f.rect.h;
        for (std::size_t c = 0; c < 3; ++c) {
          img.set(x, y, c, inside ? color(rng) : base.at(x, y, c) + jitter(rng) / 255.0f);
        }
      }
    }
    f.images.push_back(std::move(img));
  }
  return f;
}

/// Intersection over union of the zero bits (the variation regions).
inline double variation_iou(const Mask& a, const Mask& b) {
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool va = !a[i];
    const bool vb = !b[i];
    inter += (va && vb) ? 1 : 0;
    uni += (va || vb) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// A small simulated corpus configuration for fast tests.
inline SimulationConfig small_sim(std::size_t size = 400) {
  SimulationConfig cfg;
  cfg.corpus_size = size;
  cfg.exact_frac = 0.025;
  cfg.template_frac = 0.025;
  cfg.seed = 0x7E57;
  return cfg;
}

/// In-memory reference corpus for a simulation: paired images, thumbnail
/// index, duplicate groups and their variation masks.
struct SimReference {
  SimReference(const Simulation& sim, const GtConfig& gt = {}) : index(embedder.dim()) {
    for (const auto& c : sim.captions()) {
      store.put(c.id, sim.image(c.id));
      index.add(c.id, embedder.embed(sim.image(c.id)));
    }
    groups = group_duplicates(index, gt.dup_threshold);
    attach_prompts(groups, sim.captions());
    masks = std::make_unique<GroupMasks>(groups, store, gt.theta_var, gt.min_stable_frac);
  }

  ThumbnailEmbedder embedder;
  EmbeddingIndex index;
  MemoryImageStore store;
  std::vector<DuplicateGroup> groups;
  std::unique_ptr<GroupMasks> masks;
};

}  // namespace vaudit::testing
