#include "vaudit/groundtruth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vaudit/error.hpp"
#include "vaudit/png_io.hpp"
#include "vaudit/scoring.hpp"

namespace vaudit {

const char* to_string(VerbatimKind kind) {
  switch (kind) {
    case VerbatimKind::kExact: return "exact";
    case VerbatimKind::kTemplate: return "template";
    case VerbatimKind::kRetrieval: return "retrieval";
    case VerbatimKind::kNonVerbatim: return "non_verbatim";
  }
  return "non_verbatim";
}

VerbatimKind verbatim_kind_from_string(std::string_view text) {
  if (text == "exact") return VerbatimKind::kExact;
  if (text == "template") return VerbatimKind::kTemplate;
  if (text == "retrieval") return VerbatimKind::kRetrieval;
  if (text == "non_verbatim") return VerbatimKind::kNonVerbatim;
  throw Error(ErrorCode::kInvalidArgument, "unknown verbatim kind '" + std::string(text) + "'");
}

const char* to_string(ScreenReason reason) {
  switch (reason) {
    case ScreenReason::kPass: return "pass";
    case ScreenReason::kWhiteBackground: return "screened_white_background";
    case ScreenReason::kLowEdgeDensity: return "screened_low_edge_density";
  }
  return "pass";
}

void GtConfig::validate() const {
  if (!(delta_v > 0.0 && delta_v < 1.0)) throw Error(ErrorCode::kConfig, "delta_v must lie in (0,1)");
  if (!(delta_v_masked > 0.0 && delta_v_masked < 1.0)) {
    throw Error(ErrorCode::kConfig, "delta_v_masked must lie in (0,1)");
  }
  if (j == 0 || k == 0) throw Error(ErrorCode::kConfig, "gt j and k must be >= 1");
  if (!(theta_var >= 0.0)) throw Error(ErrorCode::kConfig, "theta_var must be >= 0");
  if (!(min_stable_frac > 0.0 && min_stable_frac <= 1.0)) {
    throw Error(ErrorCode::kConfig, "min_stable_frac must lie in (0,1]");
  }
  if (!(white_frac_max >= 0.0 && white_frac_max <= 1.0)) {
    throw Error(ErrorCode::kConfig, "white_frac_max must lie in [0,1]");
  }
  if (!(min_edge_density >= 0.0 && min_edge_density <= 1.0)) {
    throw Error(ErrorCode::kConfig, "min_edge_density must lie in [0,1]");
  }
  if (!(t_edge > 0.0 && t_edge <= 1.0)) throw Error(ErrorCode::kConfig, "t_edge must lie in (0,1]");
  if (!(dup_threshold > 0.0 && dup_threshold < 1.0)) {
    throw Error(ErrorCode::kConfig, "dup_threshold must lie in (0,1)");
  }
}

SeedDistance mv_distance(const Image& x, std::span<const Image> generations,
                         std::span<const std::uint64_t> seeds) {
  if (generations.empty() || generations.size() != seeds.size()) {
    throw Error(ErrorCode::kInvalidArgument, "need one seed per generation");
  }
  SeedDistance best{std::numeric_limits<double>::infinity(), 0, seeds[0]};
  for (std::size_t i = 0; i < generations.size(); ++i) {
    const double d = rmse(x, generations[i]);
    if (d < best.distance) best = {d, i, seeds[i]};
  }
  return best;
}

SeedDistance mv_distance(const Image& x, const CaptionRecord& caption, Generator& gen,
                         std::span<const std::uint64_t> seeds, std::uint32_t timesteps) {
  std::vector<Image> generations;
  generations.reserve(seeds.size());
  for (auto s : seeds) generations.push_back(gen.generate(caption, s, timesteps));
  return mv_distance(x, generations, seeds);
}

VerbatimLabel label_matching_verbatim(const Image& x, const CaptionRecord& caption,
                                      Generator& gen, const GtConfig& cfg) {
  const auto seeds = derive_seeds(cfg.seed, cfg.j);
  const std::uint32_t t = cfg.timesteps ? cfg.timesteps : gen.capabilities().default_timesteps;
  const SeedDistance mv = mv_distance(x, caption, gen, seeds, t);
  VerbatimLabel label{caption.id, VerbatimKind::kNonVerbatim, mv.distance, std::nullopt, "no_match"};
  if (mv.distance <= cfg.delta_v) {
    label.kind = VerbatimKind::kExact;
    label.witness = Witness{caption.id, mv.seed, std::nullopt, std::nullopt};
    label.reason.clear();
  }
  return label;
}

Mask majority_smooth(const Mask& m) {
  const std::size_t w = m.width();
  const std::size_t h = m.height();
  std::vector<std::uint8_t> out(m.size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      int ones = 0;
      int total = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
          const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
          if (nx < 0 || ny < 0 || nx >= static_cast<std::ptrdiff_t>(w) ||
              ny >= static_cast<std::ptrdiff_t>(h)) {
            continue;
          }
          ++total;
          ones += m.get(static_cast<std::size_t>(nx), static_cast<std::size_t>(ny)) ? 1 : 0;
        }
      }
      const bool keep = m.get(x, y);
      out[y * w + x] = 2 * ones > total ? 1 : (2 * ones < total ? 0 : (keep ? 1 : 0));
    }
  }
  return Mask(w, h, std::move(out));
}

Mask estimate_variation_mask(std::span<const Image> dups, double theta_var,
                             double min_stable_frac) {
  if (dups.size() < 3) {
    throw Error(ErrorCode::kTooFewImages, "mask estimation needs at least 3 images");
  }
  std::vector<Image> gray;
  gray.reserve(dups.size());
  for (const auto& img : dups) {
    if (img.width() != dups[0].width() || img.height() != dups[0].height()) {
      throw Error(ErrorCode::kDimensionMismatch, "duplicate set has mixed resolutions");
    }
    gray.push_back(to_grayscale(img));
  }
  const std::size_t n = gray[0].pixel_count();
  const double count = static_cast<double>(gray.size());
  std::vector<std::uint8_t> bits(n);
  for (std::size_t p = 0; p < n; ++p) {
    double mean = 0.0;
    for (const auto& g : gray) mean += g.data()[p];
    mean /= count;
    double var = 0.0;
    for (const auto& g : gray) {
      const double d = g.data()[p] - mean;
      var += d * d;
    }
    bits[p] = std::sqrt(var / count) <= theta_var ? 1 : 0;
  }
  Mask smoothed = majority_smooth(Mask(gray[0].width(), gray[0].height(), std::move(bits)));
  const double stable = static_cast<double>(smoothed.count()) / static_cast<double>(n);
  if (stable < min_stable_frac) {
    throw Error(ErrorCode::kDegenerateMask,
                "only " + std::to_string(stable) + " of pixels are stable across duplicates");
  }
  return smoothed;
}

ScreenResult screen_candidate(const Image& x, const GtConfig& cfg) {
  const Image gray = to_grayscale(x);
  std::size_t white = 0;
  for (float v : gray.data()) white += v > cfg.white_luma ? 1 : 0;
  ScreenResult r;
  r.white_frac = static_cast<double>(white) / static_cast<double>(gray.pixel_count());
  r.edge_density = static_cast<double>(edge_map(gray, cfg.t_edge).count()) /
                   static_cast<double>(gray.pixel_count());
  if (r.white_frac > cfg.white_frac_max) {
    r.reason = ScreenReason::kWhiteBackground;
  } else if (r.edge_density < cfg.min_edge_density) {
    r.reason = ScreenReason::kLowEdgeDensity;
  }
  return r;
}

bool candidate_screen(const Image& x, const GtConfig& cfg) {
  return screen_candidate(x, cfg).pass();
}

Image MemoryImageStore::get(ItemId id) const {
  auto it = images_.find(id);
  if (it == images_.end()) {
    throw Error(ErrorCode::kMissingImage, "no reference image for item " + std::to_string(id));
  }
  return it->second;
}

DirectoryImageStore::DirectoryImageStore(std::filesystem::path root,
                                         std::span<const CaptionRecord> captions)
    : root_(std::move(root)) {
  for (const auto& c : captions) {
    if (c.image) paths_.emplace(c.id, *c.image);
  }
}

Image DirectoryImageStore::get(ItemId id) const {
  {
    std::lock_guard lock(mu_);
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
  }
  auto p = paths_.find(id);
  if (p == paths_.end()) {
    throw Error(ErrorCode::kMissingImage, "caption " + std::to_string(id) + " has no image path");
  }
  const auto path = root_ / p->second;
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingImage, "missing corpus image " + path.string());
  }
  Image img = load_png(path);
  std::lock_guard lock(mu_);
  return cache_.emplace(id, std::move(img)).first->second;
}

TvMatch tv_distance(const Image& gen_img, const EmbeddingIndex& index, const ImageStore& store,
                    const Embedder& embedder, const Mask& mask, std::size_t k) {
  if (index.size() == 0) throw Error(ErrorCode::kRetrieval, "empty reference index");
  const auto neighbors = index.search(embedder.embed(gen_img), std::min(k, index.size()));
  TvMatch best{std::numeric_limits<double>::infinity(), 0, 0};
  for (std::size_t r = 0; r < neighbors.size(); ++r) {
    const double d = masked_rmse(store.get(neighbors[r].id), gen_img, mask);
    if (d < best.distance) best = {d, static_cast<std::uint32_t>(r + 1), neighbors[r].id};
  }
  return best;
}

GroupMasks::GroupMasks(std::vector<DuplicateGroup> groups, const ImageStore& store,
                       double theta_var, double min_stable_frac)
    : groups_(std::move(groups)),
      lookup_(group_lookup(groups_)),
      store_(store),
      theta_var_(theta_var),
      min_stable_frac_(min_stable_frac) {}

GroupMasks::Entry GroupMasks::for_item(ItemId item) const {
  auto it = lookup_.find(item);
  if (it == lookup_.end()) return Entry{0, std::nullopt, "ungrouped"};
  const std::size_t g = it->second;
  {
    std::lock_guard lock(mu_);
    auto c = cache_.find(g);
    if (c != cache_.end()) return *c->second;
  }
  Entry entry{groups_[g].id, std::nullopt, {}};
  if (groups_[g].members.size() < 3) {
    entry.reason = to_string(ErrorCode::kTooFewImages);
  } else {
    std::vector<Image> images;
    images.reserve(groups_[g].members.size());
    for (ItemId m : groups_[g].members) images.push_back(store_.get(m));
    try {
      entry.mask = estimate_variation_mask(images, theta_var_, min_stable_frac_);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateMask && e.code() != ErrorCode::kDimensionMismatch) throw;
      entry.reason = to_string(e.code());
    }
  }
  auto shared = std::make_shared<const Entry>(std::move(entry));
  std::lock_guard lock(mu_);
  return *cache_.emplace(g, shared).first->second;
}

std::map<GroupId, Mask> GroupMasks::estimated() const {
  std::lock_guard lock(mu_);
  std::map<GroupId, Mask> out;
  for (const auto& [g, entry] : cache_) {
    if (entry->mask) out.emplace(entry->group_id, *entry->mask);
  }
  return out;
}

Labeler::Labeler(Generator& gen, const EmbeddingIndex& index, const ImageStore& store,
                 const Embedder& embedder, const GroupMasks& masks, GtConfig cfg)
    : gen_(gen), index_(index), store_(store), embedder_(embedder), masks_(masks), cfg_(cfg) {
  cfg_.validate();
  if (embedder_.dim() != index_.dim()) {
    throw Error(ErrorCode::kConfig, "embedder dimension " + std::to_string(embedder_.dim()) +
                                        " does not match index dimension " +
                                        std::to_string(index_.dim()));
  }
}

std::vector<std::uint64_t> Labeler::seeds() const { return derive_seeds(cfg_.seed, cfg_.j); }

VerbatimLabel Labeler::label(const CaptionRecord& caption) const {
  const auto seeds = this->seeds();
  const std::uint32_t t = cfg_.timesteps ? cfg_.timesteps : gen_.capabilities().default_timesteps;
  std::vector<Image> generations;
  generations.reserve(seeds.size());
  for (auto s : seeds) generations.push_back(gen_.generate(caption, s, t));

  std::optional<SeedDistance> mv;
  if (caption.image) mv = mv_distance(store_.get(caption.id), generations, seeds);

  for (const auto& g : generations) {
    const ScreenResult screen = screen_candidate(g, cfg_);
    if (!screen.pass()) {
      return VerbatimLabel{caption.id, VerbatimKind::kNonVerbatim,
                           mv ? mv->distance : std::numeric_limits<double>::infinity(),
                           std::nullopt, to_string(screen.reason)};
    }
  }
  if (mv && mv->distance <= cfg_.delta_v) {
    return VerbatimLabel{caption.id, VerbatimKind::kExact, mv->distance,
                         Witness{caption.id, mv->seed, std::nullopt, std::nullopt}, {}};
  }
  VerbatimLabel rest = label_template_or_retrieval(caption, generations, seeds);
  if (!rest.is_verbatim() && mv) rest.distance = std::min(rest.distance, mv->distance);
  return rest;
}

VerbatimLabel Labeler::label_template_or_retrieval(const CaptionRecord& caption,
                                                   std::span<const Image> generations,
                                                   std::span<const std::uint64_t> seeds) const {
  if (generations.size() != seeds.size() || generations.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "need one seed per generation");
  }
  if (index_.size() == 0) throw Error(ErrorCode::kRetrieval, "empty reference index");
  const std::size_t k = std::min<std::size_t>(cfg_.k, index_.size());

  constexpr double kInf = std::numeric_limits<double>::infinity();
  struct Best {
    double distance = kInf;
    Witness witness;
  };
  Best unmasked;
  Best masked;
  bool any_mask = false;
  std::string mask_reason;

  for (std::size_t j = 0; j < generations.size(); ++j) {
    const Image& g = generations[j];
    const auto neighbors = index_.search(embedder_.embed(g), k);
    for (std::size_t r = 0; r < neighbors.size(); ++r) {
      const Image ref = store_.get(neighbors[r].id);
      const auto rank = static_cast<std::uint32_t>(r + 1);
      const double d = rmse(ref, g);
      if (d < unmasked.distance) {
        unmasked = {d, Witness{neighbors[r].id, seeds[j], rank, std::nullopt}};
      }
      const auto entry = masks_.for_item(neighbors[r].id);
      if (!entry.mask) {
        if (mask_reason.empty()) mask_reason = entry.reason;
        continue;
      }
      any_mask = true;
      const double md = masked_rmse(ref, g, *entry.mask);
      if (md < masked.distance) {
        masked = {md, Witness{neighbors[r].id, seeds[j], rank, entry.group_id}};
      }
    }
  }

  if (unmasked.distance <= cfg_.delta_v) {
    return {caption.id, VerbatimKind::kRetrieval, unmasked.distance, unmasked.witness, {}};
  }
  if (any_mask && masked.distance <= cfg_.delta_v_masked) {
    return {caption.id, VerbatimKind::kTemplate, masked.distance, masked.witness, {}};
  }
  const std::string reason = any_mask ? "no_match" : "mask_unavailable:" + mask_reason;
  return {caption.id, VerbatimKind::kNonVerbatim, std::min(unmasked.distance, masked.distance),
          std::nullopt, reason};
}

}  // namespace vaudit
