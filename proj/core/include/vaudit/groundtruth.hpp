#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vaudit/backend.hpp"
#include "vaudit/embedder.hpp"
#include "vaudit/imaging.hpp"
#include "vaudit/retrieval.hpp"

namespace vaudit {

enum class VerbatimKind { kExact, kTemplate, kRetrieval, kNonVerbatim };

const char* to_string(VerbatimKind kind);
VerbatimKind verbatim_kind_from_string(std::string_view text);

struct Witness {
  std::optional<ItemId> reference_id;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> rank;     // 1-based neighbor rank
  std::optional<GroupId> mask_id;

  friend bool operator==(const Witness&, const Witness&) = default;
};

/// Ground-truth outcome for one caption. Any kind other than kNonVerbatim
/// carries a witness and a distance at or below its threshold; kNonVerbatim
/// records the closest distance seen and a reason code.
struct VerbatimLabel {
  CaptionId caption_id = 0;
  VerbatimKind kind = VerbatimKind::kNonVerbatim;
  double distance = 0.0;
  std::optional<Witness> witness;
  std::string reason;

  bool is_verbatim() const noexcept { return kind != VerbatimKind::kNonVerbatim; }
  friend bool operator==(const VerbatimLabel&, const VerbatimLabel&) = default;
};

struct GtConfig {
  double delta_v = 0.12;          // matching/retrieval threshold
  double delta_v_masked = 0.12;   // template (masked) threshold
  std::uint32_t j = 4;
  std::uint32_t k = 10;
  double theta_var = 0.05;
  double min_stable_frac = 0.1;
  double white_luma = 0.95;
  double white_frac_max = 0.6;
  double min_edge_density = 0.02;
  double t_edge = kDefaultEdgeThreshold;
  double dup_threshold = 0.6;     // similarity for duplicate groups
  std::uint32_t timesteps = 0;    // 0 = backend default
  std::uint64_t seed = 0x6A7E5EEDULL;

  void validate() const;
};

struct SeedDistance {
  double distance = 0.0;
  std::size_t seed_index = 0;
  std::uint64_t seed = 0;
};

/// min over generations of rmse(x, generation).
SeedDistance mv_distance(const Image& x, std::span<const Image> generations,
                         std::span<const std::uint64_t> seeds);
SeedDistance mv_distance(const Image& x, const CaptionRecord& caption, Generator& gen,
                         std::span<const std::uint64_t> seeds, std::uint32_t timesteps);

/// Exact iff the seed-minimum rmse against the paired image is <= delta_v.
VerbatimLabel label_matching_verbatim(const Image& x, const CaptionRecord& caption,
                                      Generator& gen, const GtConfig& cfg);

/// 3x3 majority vote over in-bounds neighbors; exact ties keep the bit.
Mask majority_smooth(const Mask& m);

/// Stable-region mask from a set of near duplicates: 1 where the grayscale
/// standard deviation across the set is <= theta_var, smoothed by majority
/// vote. Throws kTooFewImages (< 3), kDimensionMismatch, or kDegenerateMask
/// when fewer than min_stable_frac of the bits survive.
Mask estimate_variation_mask(std::span<const Image> dups, double theta_var = 0.05,
                             double min_stable_frac = 0.1);

enum class ScreenReason { kPass, kWhiteBackground, kLowEdgeDensity };
const char* to_string(ScreenReason reason);

struct ScreenResult {
  ScreenReason reason = ScreenReason::kPass;
  double white_frac = 0.0;
  double edge_density = 0.0;
  bool pass() const noexcept { return reason == ScreenReason::kPass; }
};

/// Rejects mostly-white backgrounds and edge-poor (flat/texture-free) images,
/// both of which make pixel distances unreliable.
ScreenResult screen_candidate(const Image& x, const GtConfig& cfg);
bool candidate_screen(const Image& x, const GtConfig& cfg);

/// Read access to reference images by item id. Thread-safe.
class ImageStore {
 public:
  virtual ~ImageStore() = default;
  /// Throws kMissingImage when the id has no image.
  virtual Image get(ItemId id) const = 0;
};

class MemoryImageStore final : public ImageStore {
 public:
  void put(ItemId id, Image img) { images_[id] = std::move(img); }
  Image get(ItemId id) const override;

 private:
  std::unordered_map<ItemId, Image> images_;
};

/// Loads `root / caption.image` on demand and caches it.
class DirectoryImageStore final : public ImageStore {
 public:
  DirectoryImageStore(std::filesystem::path root, std::span<const CaptionRecord> captions);
  Image get(ItemId id) const override;

 private:
  std::filesystem::path root_;
  std::unordered_map<ItemId, std::string> paths_;
  mutable std::mutex mu_;
  mutable std::unordered_map<ItemId, Image> cache_;
};

struct TvMatch {
  double distance = 0.0;
  std::uint32_t rank = 0;  // 1-based
  ItemId reference_id = 0;
};

/// min over the k nearest reference images of masked_rmse(neighbor, gen_img).
TvMatch tv_distance(const Image& gen_img, const EmbeddingIndex& index, const ImageStore& store,
                    const Embedder& embedder, const Mask& mask, std::size_t k);

/// Variation masks per duplicate group, estimated lazily and cached.
class GroupMasks {
 public:
  GroupMasks(std::vector<DuplicateGroup> groups, const ImageStore& store, double theta_var,
             double min_stable_frac);

  struct Entry {
    GroupId group_id = 0;
    std::optional<Mask> mask;
    std::string reason;  // "too_few_images" / "degenerate_mask" when absent
  };

  /// Mask for the group containing `item`. Items outside every group get an
  /// entry with no mask and reason "ungrouped".
  Entry for_item(ItemId item) const;

  std::span<const DuplicateGroup> groups() const noexcept { return groups_; }
  std::map<GroupId, Mask> estimated() const;

 private:
  std::vector<DuplicateGroup> groups_;
  std::unordered_map<ItemId, std::size_t> lookup_;
  const ImageStore& store_;
  double theta_var_;
  double min_stable_frac_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::size_t, std::shared_ptr<const Entry>> cache_;
};

/// Full ground-truth labeling of captions against a generator and a
/// reference corpus. Precedence: Exact > Retrieval > Template > NonVerbatim.
class Labeler {
 public:
  Labeler(Generator& gen, const EmbeddingIndex& index, const ImageStore& store,
          const Embedder& embedder, const GroupMasks& masks, GtConfig cfg);

  VerbatimLabel label(const CaptionRecord& caption) const;

  /// The retrieval-based stage on already generated full-synthesis images.
  VerbatimLabel label_template_or_retrieval(const CaptionRecord& caption,
                                            std::span<const Image> generations,
                                            std::span<const std::uint64_t> seeds) const;

  const GtConfig& config() const noexcept { return cfg_; }
  std::vector<std::uint64_t> seeds() const;

 private:
  Generator& gen_;
  const EmbeddingIndex& index_;
  const ImageStore& store_;
  const Embedder& embedder_;
  const GroupMasks& masks_;
  GtConfig cfg_;
};

}  // namespace vaudit
