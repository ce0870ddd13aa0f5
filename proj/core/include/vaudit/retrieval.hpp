#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vaudit/captions.hpp"
#include "vaudit/imaging.hpp"

namespace vaudit {

using ItemId = std::uint64_t;
using GroupId = std::uint64_t;

inline constexpr double kUnitNormTolerance = 1e-4;

struct EmbeddingRecord {
  ItemId id = 0;
  std::vector<float> vector;
};

struct Neighbor {
  ItemId id = 0;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct PartitionParams {
  std::size_t lists = 0;        // 0 = round(sqrt(n))
  std::size_t iterations = 15;
  std::uint64_t seed = 0x5EEDULL;
  // default_probes() is the smallest probe count whose leave-one-out recall
  // at calibration_k over up to calibration_queries stored rows reaches
  // target_recall.
  double target_recall = 0.97;
  std::size_t calibration_queries = 256;
  std::size_t calibration_k = 10;
};

/// Flat store of unit vectors with exact (exhaustive) cosine search and an
/// optional coarse k-means partitioning for probed search.
///
/// Writes (`add`, `build_partitions`) must not overlap with anything else;
/// once built, all const member functions may be called concurrently.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::size_t dim);

  /// Throws on dimension mismatch, non-unit vector, or duplicate id.
  void add(ItemId id, std::span<const float> vector);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool contains(ItemId id) const { return rows_.contains(id); }
  std::span<const ItemId> ids() const noexcept { return ids_; }
  std::span<const float> vector(ItemId id) const;
  std::span<const float> row(std::size_t r) const noexcept {
    return {data_.data() + r * dim_, dim_};
  }

  /// Top-k by cosine similarity, descending, ties by ascending id.
  /// Throws on an empty index or k > size().
  std::vector<Neighbor> search(std::span<const float> query, std::size_t k) const;

  void build_partitions(const PartitionParams& params = {});
  bool has_partitions() const noexcept { return !centroids_.empty(); }
  std::size_t partition_count() const noexcept { return lists_.size(); }
  std::size_t default_probes() const noexcept { return default_probes_; }

  /// Scans only the `probes` partitions whose centroids are closest to the
  /// query. Falls back to `search` when unpartitioned, when probes covers
  /// every list, or when the probed lists hold fewer than k items.
  std::vector<Neighbor> search_probed(std::span<const float> query, std::size_t k,
                                      std::size_t probes) const;

 private:
  std::vector<double> normalized_query(std::span<const float> query) const;
  static void rank(std::vector<Neighbor>& hits, std::size_t k);
  std::size_t calibrate_probes(std::span<const std::size_t> assign,
                               std::span<const std::size_t> order, std::size_t queries,
                               const PartitionParams& params) const;

  std::size_t dim_;
  std::vector<ItemId> ids_;
  std::vector<float> data_;
  std::unordered_map<ItemId, std::size_t> rows_;
  std::vector<float> centroids_;
  std::vector<std::vector<std::size_t>> lists_;
  std::size_t default_probes_ = 0;
};

/// Fraction of `exact` ids that also appear in `approx`.
double recall(std::span<const Neighbor> exact, std::span<const Neighbor> approx);

/// Embedding file: "EMB1" | u32 LE count | u32 LE dim | count x u64 LE ids |
/// count x dim f32 LE vectors.
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::filesystem::path& path,
                      std::span<const EmbeddingRecord> records);
EmbeddingIndex index_from_records(std::span<const EmbeddingRecord> records);

struct DuplicateGroup {
  GroupId id = 0;  // the leader's item id
  std::vector<ItemId> members;      // ascending
  std::vector<std::string> prompts; // parallel to members once attached
};

/// Greedy leader clustering. Items are visited in descending id order; each
/// joins the earliest-created leader with similarity >= sim_threshold or
/// becomes a new leader. Output is ordered by leader creation.
std::vector<DuplicateGroup> group_duplicates(const EmbeddingIndex& index,
                                             double sim_threshold);

/// Fills `prompts` for every group from the caption table (missing ids get "").
void attach_prompts(std::vector<DuplicateGroup>& groups,
                    std::span<const CaptionRecord> captions);

/// item id -> position in `groups`.
std::unordered_map<ItemId, std::size_t> group_lookup(std::span<const DuplicateGroup> groups);

/// Largest share of members whose normalized prompts coincide.
double multimodal_dup_rate(const DuplicateGroup& group);

/// Members ranked by their group's size (descending), ties by ascending id.
std::vector<CaptionId> topk_by_duplication(std::span<const DuplicateGroup> groups,
                                           std::size_t k);

/// Fraction of unordered image pairs with masked_rmse <= delta.
double masked_dup_rate(std::span<const Image> images, const Mask& mask, double delta);

}  // namespace vaudit
