#include "vaudit/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "vaudit/error.hpp"
#include "vaudit/rng.hpp"

namespace vaudit {

namespace {

double dot(std::span<const double> q, std::span<const float> v) {
  double acc = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) acc += q[i] * static_cast<double>(v[i]);
  return acc;
}

double dot(std::span<const float> a, std::span<const float> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return acc;
}

bool better(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

template <typename T>
void put_le(std::ofstream& out, T value) {
  static_assert(std::endian::native == std::endian::little,
                "embedding io assumes a little-endian host");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get_le(std::ifstream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorCode::kIo, "truncated embedding file " + path.string());
  return value;
}

}  // namespace

EmbeddingIndex::EmbeddingIndex(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be > 0");
}

void EmbeddingIndex::add(ItemId id, std::span<const float> vector) {
  if (vector.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch,
                "embedding has dimension " + std::to_string(vector.size()) +
                    ", index expects " + std::to_string(dim_));
  }
  const double norm = std::sqrt(dot(vector, vector));
  if (!(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
    throw Error(ErrorCode::kInvalidArgument,
                "embedding " + std::to_string(id) + " is not unit norm");
  }
  if (rows_.contains(id)) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate embedding id " + std::to_string(id));
  }
  rows_.emplace(id, ids_.size());
  ids_.push_back(id);
  data_.insert(data_.end(), vector.begin(), vector.end());
  centroids_.clear();
  lists_.clear();
}

std::span<const float> EmbeddingIndex::vector(ItemId id) const {
  auto it = rows_.find(id);
  if (it == rows_.end()) {
    throw Error(ErrorCode::kRetrieval, "no embedding for id " + std::to_string(id));
  }
  return row(it->second);
}

std::vector<double> EmbeddingIndex::normalized_query(std::span<const float> query) const {
  if (query.size() != dim_) {
    throw Error(ErrorCode::kDimensionMismatch, "query dimension mismatch");
  }
  double norm = 0.0;
  for (float v : query) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) {
    throw Error(ErrorCode::kInvalidArgument, "query vector has zero or non-finite norm");
  }
  std::vector<double> q(dim_);
  for (std::size_t i = 0; i < dim_; ++i) q[i] = static_cast<double>(query[i]) / norm;
  return q;
}

void EmbeddingIndex::rank(std::vector<Neighbor>& hits, std::size_t k) {
  const auto cut = hits.begin() + static_cast<std::ptrdiff_t>(std::min(k, hits.size()));
  std::partial_sort(hits.begin(), cut, hits.end(), better);
  hits.resize(static_cast<std::size_t>(cut - hits.begin()));
}

std::vector<Neighbor> EmbeddingIndex::search(std::span<const float> query,
                                             std::size_t k) const {
  if (ids_.empty()) throw Error(ErrorCode::kRetrieval, "search on an empty index");
  if (k > ids_.size()) {
    throw Error(ErrorCode::kRetrieval, "k=" + std::to_string(k) + " exceeds index size " +
                                           std::to_string(ids_.size()));
  }
  const auto q = normalized_query(query);
  std::vector<Neighbor> hits(ids_.size());
  for (std::size_t r = 0; r < ids_.size(); ++r) hits[r] = {ids_[r], dot(q, row(r))};
  rank(hits, k);
  return hits;
}

void EmbeddingIndex::build_partitions(const PartitionParams& params) {
  const std::size_t n = ids_.size();
  if (n == 0) throw Error(ErrorCode::kRetrieval, "cannot partition an empty index");
  if (!(params.target_recall > 0.0 && params.target_recall <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target_recall must lie in (0,1]");
  }
  std::size_t lists = params.lists;
  if (lists == 0) lists = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  lists = std::clamp<std::size_t>(lists, 1, n);

  // Seeds: a deterministic shuffle of rows.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  NoiseStream stream(params.seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = stream.bits(i) % (i + 1);
    std::swap(order[i], order[j]);
  }
  // The leading rows of `order` are held out of the centroid fit so the
  // probe calibration below sees them as out-of-sample queries.
  const std::size_t held = std::min(params.calibration_queries, (n - lists) / 4);
  std::vector<bool> fit(n, true);
  for (std::size_t i = 0; i < held; ++i) fit[order[i]] = false;
  std::vector<float> centroids(lists * dim_);
  for (std::size_t c = 0; c < lists; ++c) {
    auto src = row(order[held + c]);
    std::copy(src.begin(), src.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * dim_));
  }

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t iter = 0; iter <= params.iterations; ++iter) {
    for (std::size_t r = 0; r < n; ++r) {
      double best = -2.0;
      for (std::size_t c = 0; c < lists; ++c) {
        const double s = dot(row(r), std::span<const float>(centroids.data() + c * dim_, dim_));
        if (s > best) {
          best = s;
          assign[r] = c;
        }
      }
    }
    if (iter == params.iterations) break;
    std::vector<double> sums(lists * dim_, 0.0);
    std::vector<std::size_t> counts(lists, 0);
    for (std::size_t r = 0; r < n; ++r) {
      if (!fit[r]) continue;
      auto v = row(r);
      for (std::size_t d = 0; d < dim_; ++d) sums[assign[r] * dim_ + d] += v[d];
      ++counts[assign[r]];
    }
    for (std::size_t c = 0; c < lists; ++c) {
      if (counts[c] == 0) continue;  // keep the previous centroid
      double norm = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) norm += sums[c * dim_ + d] * sums[c * dim_ + d];
      norm = std::sqrt(norm);
      if (norm == 0.0) continue;
      for (std::size_t d = 0; d < dim_; ++d) {
        centroids[c * dim_ + d] = static_cast<float>(sums[c * dim_ + d] / norm);
      }
    }
  }
  lists_.assign(lists, {});
  for (std::size_t r = 0; r < n; ++r) lists_[assign[r]].push_back(r);
  centroids_ = std::move(centroids);
  default_probes_ = calibrate_probes(assign, order, held > 0 ? held : params.calibration_queries, params);
}

std::size_t EmbeddingIndex::calibrate_probes(std::span<const std::size_t> assign,
                                             std::span<const std::size_t> order,
                                             std::size_t queries,
                                             const PartitionParams& params) const {
  const std::size_t n = ids_.size();
  const std::size_t lists = lists_.size();
  const std::size_t k = std::min(params.calibration_k, n - 1);
  queries = std::min(queries, n);
  if (lists <= 1 || k == 0 || queries == 0) return lists;

  // needed[p] counts true neighbors first reached when p+1 lists are probed.
  std::vector<std::size_t> needed(lists, 0);
  std::vector<std::size_t> list_rank(lists);
  for (std::size_t qi = 0; qi < queries; ++qi) {
    const std::size_t qr = order[qi];
    const auto q = row(qr);
    std::vector<Neighbor> centroid_hits(lists);
    for (std::size_t c = 0; c < lists; ++c) {
      centroid_hits[c] = {c, dot(q, std::span<const float>(centroids_.data() + c * dim_, dim_))};
    }
    rank(centroid_hits, lists);
    for (std::size_t i = 0; i < lists; ++i) list_rank[centroid_hits[i].id] = i;

    std::vector<Neighbor> hits;
    hits.reserve(n - 1);
    for (std::size_t r = 0; r < n; ++r) {
      if (r != qr) hits.push_back({r, dot(q, row(r))});
    }
    rank(hits, k);
    for (const auto& h : hits) ++needed[list_rank[assign[h.id]]];
  }
  const double total = static_cast<double>(queries * k);
  std::size_t reached = 0;
  for (std::size_t p = 0; p < lists; ++p) {
    reached += needed[p];
    if (static_cast<double>(reached) / total >= params.target_recall) return p + 1;
  }
  return lists;
}

std::vector<Neighbor> EmbeddingIndex::search_probed(std::span<const float> query,
                                                    std::size_t k,
                                                    std::size_t probes) const {
  if (!has_partitions() || probes >= lists_.size()) return search(query, k);
  if (ids_.empty()) throw Error(ErrorCode::kRetrieval, "search on an empty index");
  if (k > ids_.size()) throw Error(ErrorCode::kRetrieval, "k exceeds index size");
  const auto q = normalized_query(query);
  std::vector<Neighbor> centroid_hits(lists_.size());
  for (std::size_t c = 0; c < lists_.size(); ++c) {
    centroid_hits[c] = {c, dot(q, std::span<const float>(centroids_.data() + c * dim_, dim_))};
  }
  rank(centroid_hits, std::max<std::size_t>(probes, 1));
  std::vector<Neighbor> hits;
  for (const auto& ch : centroid_hits) {
    for (std::size_t r : lists_[ch.id]) hits.push_back({ids_[r], dot(q, row(r))});
  }
  if (hits.size() < k) return search(query, k);
  rank(hits, k);
  return hits;
}

double recall(std::span<const Neighbor> exact, std::span<const Neighbor> approx) {
  if (exact.empty()) return 1.0;
  std::size_t found = 0;
  for (const auto& e : exact) {
    for (const auto& a : approx) {
      if (a.id == e.id) {
        ++found;
        break;
      }
    }
  }
  return static_cast<double>(found) / static_cast<double>(exact.size());
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open embedding file " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "EMB1", 4) != 0) {
    throw Error(ErrorCode::kIo, "bad embedding magic in " + path.string());
  }
  const auto count = get_le<std::uint32_t>(in, path);
  const auto dim = get_le<std::uint32_t>(in, path);
  std::vector<EmbeddingRecord> out(count);
  for (auto& rec : out) rec.id = get_le<std::uint64_t>(in, path);
  for (auto& rec : out) {
    rec.vector.resize(dim);
    for (auto& v : rec.vector) v = get_le<float>(in, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kIo, "trailing bytes in embedding file " + path.string());
  }
  return out;
}

void write_embeddings(const std::filesystem::path& path,
                      std::span<const EmbeddingRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write embedding file " + path.string());
  const std::uint32_t dim = records.empty() ? 0 : static_cast<std::uint32_t>(records[0].vector.size());
  out.write("EMB1", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(records.size()));
  put_le<std::uint32_t>(out, dim);
  for (const auto& r : records) put_le<std::uint64_t>(out, r.id);
  for (const auto& r : records) {
    if (r.vector.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "embedding records disagree on dimension");
    }
    for (float v : r.vector) put_le<float>(out, v);
  }
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

EmbeddingIndex index_from_records(std::span<const EmbeddingRecord> records) {
  if (records.empty()) throw Error(ErrorCode::kRetrieval, "no embedding records");
  EmbeddingIndex index(records[0].vector.size());
  for (const auto& r : records) index.add(r.id, r.vector);
  return index;
}

std::vector<DuplicateGroup> group_duplicates(const EmbeddingIndex& index,
                                             double sim_threshold) {
  if (!(sim_threshold > 0.0 && sim_threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "similarity threshold must lie in (0,1)");
  }
  const std::size_t n = index.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto ids = index.ids();
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ids[a] > ids[b]; });

  std::vector<DuplicateGroup> groups;
  std::vector<std::size_t> leader_rows;
  for (std::size_t r : order) {
    auto v = index.row(r);
    std::size_t joined = groups.size();
    for (std::size_t g = 0; g < leader_rows.size(); ++g) {
      if (dot(v, index.row(leader_rows[g])) >= sim_threshold) {
        joined = g;
        break;
      }
    }
    if (joined == groups.size()) {
      groups.push_back(DuplicateGroup{ids[r], {}, {}});
      leader_rows.push_back(r);
    }
    groups[joined].members.push_back(ids[r]);
  }
  for (auto& g : groups) std::sort(g.members.begin(), g.members.end());
  return groups;
}

void attach_prompts(std::vector<DuplicateGroup>& groups,
                    std::span<const CaptionRecord> captions) {
  std::unordered_map<CaptionId, const std::string*> text;
  text.reserve(captions.size());
  for (const auto& c : captions) text.emplace(c.id, &c.text);
  for (auto& g : groups) {
    g.prompts.clear();
    for (ItemId id : g.members) {
      auto it = text.find(id);
      g.prompts.push_back(it == text.end() ? std::string() : *it->second);
    }
  }
}

std::unordered_map<ItemId, std::size_t> group_lookup(std::span<const DuplicateGroup> groups) {
  std::unordered_map<ItemId, std::size_t> lookup;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (ItemId id : groups[g].members) lookup.emplace(id, g);
  }
  return lookup;
}

double multimodal_dup_rate(const DuplicateGroup& group) {
  if (group.members.empty()) throw Error(ErrorCode::kInvalidArgument, "empty duplicate group");
  if (group.prompts.size() != group.members.size()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate group prompts not attached");
  }
  std::map<std::string, std::size_t> counts;
  std::size_t best = 0;
  for (const auto& p : group.prompts) best = std::max(best, ++counts[normalize_prompt(p)]);
  return static_cast<double>(best) / static_cast<double>(group.members.size());
}

std::vector<CaptionId> topk_by_duplication(std::span<const DuplicateGroup> groups,
                                           std::size_t k) {
  std::vector<std::pair<std::size_t, CaptionId>> ranked;
  for (const auto& g : groups) {
    for (ItemId id : g.members) ranked.emplace_back(g.members.size(), id);
  }
  if (k > ranked.size()) {
    throw Error(ErrorCode::kInvalidArgument, "k exceeds the number of grouped items");
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<CaptionId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i].second);
  return out;
}

double masked_dup_rate(std::span<const Image> images, const Mask& mask, double delta) {
  if (images.size() < 2) {
    throw Error(ErrorCode::kTooFewImages, "masked duplication rate needs at least 2 images");
  }
  std::size_t close = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    for (std::size_t j = i + 1; j < images.size(); ++j) {
      ++pairs;
      if (masked_rmse(images[i], images[j], mask) <= delta) ++close;
    }
  }
  return static_cast<double>(close) / static_cast<double>(pairs);
}

}  // namespace vaudit
