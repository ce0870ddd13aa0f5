#include "vaudit/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"
#include "vaudit/embedder.hpp"
#include "vaudit/error.hpp"
#include "vaudit/png_io.hpp"
#include "vaudit/retrieval.hpp"
#include "vaudit/rng.hpp"

namespace vaudit {

namespace {

using json = nlohmann::json;

constexpr float kMosaicLow = 0.15f;
constexpr float kMosaicHigh = 0.85f;

// RGB cube corners by parity of set channels. Corpus templates use even
// corners, generations odd ones, so every sample differs from every stored
// member in one or three channels of the variation region.
constexpr std::array<std::array<int, 3>, 4> kEvenCorners{{{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}}};
constexpr std::array<std::array<int, 3>, 4> kOddCorners{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}}};

constexpr std::array<const char*, 16> kAdjectives{
    "red", "quiet", "vintage", "glossy", "wooden", "misty", "bright", "tiny",
    "ancient", "modern", "striped", "golden", "rustic", "frozen", "velvet", "neon"};
constexpr std::array<const char*, 16> kNouns{
    "armchair", "lighthouse", "teapot", "bicycle", "harbor", "poster", "sneaker", "lantern",
    "canyon", "sofa", "violin", "orchard", "backpack", "cathedral", "rug", "kettle"};
constexpr std::array<const char*, 8> kSettings{
    "at dusk", "on a white table", "in the rain", "product photo", "studio lighting",
    "watercolor", "close-up", "from above"};

float quantized(double v) {
  return static_cast<float>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5) / 255.0);
}

double region_fraction(const SimulationConfig& cfg) {
  const double area = static_cast<double>(cfg.variation.w * cfg.variation.h - 4);
  return area / static_cast<double>(cfg.width * cfg.height);
}

float lift(float v) { return 2.0f * v - 1.0f; }

// Sequential draws from a counter-based stream.
class Draws {
 public:
  explicit Draws(std::uint64_t seed) : stream_(seed) {}
  std::uint64_t next() { return stream_.bits(counter_++); }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next() % n); }

 private:
  NoiseStream stream_;
  std::uint64_t counter_ = 0;
};

std::string image_path(CaptionId id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06llu.png", static_cast<unsigned long long>(id));
  return buf;
}

}  // namespace

const char* to_string(PlantKind kind) {
  switch (kind) {
    case PlantKind::kExact: return "exact";
    case PlantKind::kTemplate: return "template";
    case PlantKind::kRetrieval: return "retrieval";
    case PlantKind::kNone: return "none";
  }
  return "none";
}

void SimulationConfig::validate() const {
  auto frac_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
  if (!frac_ok(exact_frac) || !frac_ok(template_frac) || !frac_ok(retrieval_frac)) {
    throw Error(ErrorCode::kConfig, "plant fractions must lie in [0,1]");
  }
  if (exact_frac + template_frac + 2.0 * retrieval_frac > 1.0) {
    throw Error(ErrorCode::kConfig, "plant fractions (retrieval counted twice) exceed 1");
  }
  if (exact_group == 0 || template_family < 3 || max_dup == 0) {
    throw Error(ErrorCode::kConfig, "exact_group >= 1, template_family >= 3, max_dup >= 1");
  }
  if (width < kMinImageSide || height < kMinImageSide || block == 0) {
    throw Error(ErrorCode::kConfig, "image sides must be >= 8 and block >= 1");
  }
  if (variation.w < 3 || variation.h < 3 || variation.x + variation.w > width ||
      variation.y + variation.h > height) {
    throw Error(ErrorCode::kConfig, "variation rect must be at least 3x3 and inside the image");
  }
  if (!(delta_v > 0.0 && delta_v < 1.0)) throw Error(ErrorCode::kConfig, "delta_v must lie in (0,1)");
  if (!(amplitude >= 0.0 && amplitude <= 1.0)) {
    throw Error(ErrorCode::kConfig, "amplitude must lie in [0,1]");
  }
  if (!(calibration_margin >= 1.0)) throw Error(ErrorCode::kConfig, "calibration_margin must be >= 1");
  if (!(blur_sigma > 0.0)) throw Error(ErrorCode::kConfig, "blur_sigma must be > 0");
  if (!(max_blur_gradient > 0.0)) throw Error(ErrorCode::kConfig, "max_blur_gradient must be > 0");
  if (default_timesteps < 2) throw Error(ErrorCode::kConfig, "default_timesteps must be >= 2");
  if (!(sigma_max > 0.0) || !std::isfinite(sigma_max)) {
    throw Error(ErrorCode::kConfig, "sigma_max must be finite and > 0");
  }
}

Mask variation_mask(std::size_t width, std::size_t height, const Rect& r) {
  Mask m = Mask::all_ones(width, height);
  for (std::size_t y = r.y; y < r.y + r.h; ++y) {
    for (std::size_t x = r.x; x < r.x + r.w; ++x) {
      const bool corner = (x == r.x || x == r.x + r.w - 1) && (y == r.y || y == r.y + r.h - 1);
      if (!corner) m.put(x, y, false);
    }
  }
  return m;
}

double template_min_rmse(double a, double region_frac) {
  return a * std::sqrt(region_frac / 3.0);
}

double calibrate_amplitude(const SimulationConfig& cfg) {
  const double frac = region_fraction(cfg);
  double a = cfg.amplitude;
  if (a == 0.0) {
    a = cfg.calibration_margin * cfg.delta_v / std::sqrt(frac / 3.0);
    if (a > 1.0) {
      throw Error(ErrorCode::kConfig,
                  "variation region too small: amplitude " + std::to_string(a) +
                      " needed to clear delta_v");
    }
  }
  const double q = static_cast<double>(quantized(0.5 + a / 2)) - quantized(0.5 - a / 2);
  if (!(template_min_rmse(q, frac) > cfg.delta_v)) {
    throw Error(ErrorCode::kConfig, "template amplitude " + std::to_string(q) +
                                        " does not separate template samples at delta_v");
  }
  return q;
}

Image mosaic_image(std::size_t width, std::size_t height, std::size_t block,
                   std::uint64_t seed) {
  const NoiseStream stream(seed);
  const std::size_t cols = (width + block - 1) / block;
  std::vector<float> data(width * height * 3);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t cell = (y / block) * cols + x / block;
      for (std::size_t c = 0; c < 3; ++c) {
        const bool hi = (stream.bits(cell * 3 + c) >> 32) & 1;
        data[(y * width + x) * 3 + c] = quantized(hi ? kMosaicHigh : kMosaicLow);
      }
    }
  }
  return Image(width, height, 3, std::move(data));
}

Image blurry_field(std::size_t width, std::size_t height, double sigma, double max_gradient,
                   std::uint64_t seed) {
  const NoiseStream stream(seed);
  std::vector<float> noise(width * height * 3);
  for (std::size_t i = 0; i < noise.size(); ++i) {
    noise[i] = static_cast<float>(stream.uniform(i));
  }
  const Image blurred = gaussian_blur(Image(width, height, 3, std::move(noise)), sigma);
  double mean = 0.0;
  for (float v : blurred.data()) mean += v;
  mean /= static_cast<double>(blurred.data().size());

  const auto grad = gradient_magnitude(blurred);
  const double gmax = *std::max_element(grad.begin(), grad.end());
  double scale = gmax > 0.0 ? 0.75 * max_gradient / gmax : 0.0;
  for (;;) {
    std::vector<float> out(blurred.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = quantized(0.5 + scale * (blurred.data()[i] - mean));
    }
    Image img(width, height, 3, std::move(out));
    const auto g = gradient_magnitude(img);
    if (scale == 0.0 || *std::max_element(g.begin(), g.end()) < max_gradient) return img;
    scale *= 0.8;
    if (scale < 1e-6) scale = 0.0;
  }
}

Image roll_image(const Image& img, std::size_t dx, std::size_t dy) {
  const std::size_t w = img.width();
  const std::size_t h = img.height();
  const std::size_t ch = img.channels();
  std::vector<float> out(img.data().size());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t tx = (x + dx) % w;
      const std::size_t ty = (y + dy) % h;
      for (std::size_t c = 0; c < ch; ++c) {
        out[(ty * w + tx) * ch + c] = img.at(x, y, c);
      }
    }
  }
  return Image(w, h, ch, std::move(out));
}

Simulation::Simulation(SimulationConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  amplitude_ = calibrate_amplitude(cfg_);
  build();
}

void Simulation::build() {
  struct Slot {
    PlantKind kind;
    std::size_t paired;
    std::size_t memorized;
    std::string text;
    std::size_t group;  // exact group / template family index
  };

  const std::size_t n = cfg_.corpus_size;
  const auto count = [n](double frac) {
    return static_cast<std::size_t>(std::llround(static_cast<double>(n) * frac));
  };
  const std::size_t n_exact = count(cfg_.exact_frac);
  // Template families need >= 3 members for a variation mask.
  const std::size_t n_template = std::max<std::size_t>(count(cfg_.template_frac),
                                                        cfg_.template_frac > 0.0 ? 3 : 0);
  const std::size_t n_retrieval = count(cfg_.retrieval_frac);
  if (n_exact + n_template + 2 * n_retrieval > n) {
    throw Error(ErrorCode::kConfig, "plants do not fit in the corpus");
  }

  Draws draws(derive_seed(cfg_.seed, 0x636F72707573ULL));
  std::size_t prompt_serial = 0;
  auto make_prompt = [&]() {
    std::string p = "a ";
    p += kAdjectives[draws.below(kAdjectives.size())];
    p += ' ';
    p += kNouns[draws.below(kNouns.size())];
    p += ", ";
    p += kSettings[draws.below(kSettings.size())];
    p += " #" + std::to_string(++prompt_serial);
    return p;
  };
  auto new_mosaic = [&]() {
    images_.push_back(mosaic_image(cfg_.width, cfg_.height, cfg_.block, draws.next()));
    return images_.size() - 1;
  };

  std::vector<Slot> slots;
  slots.reserve(n);

  const float lo = quantized(0.5 - amplitude_ / 2);
  const float hi = quantized(0.5 + amplitude_ / 2);
  const Mask region = plant_mask();

  std::size_t group = 0;
  for (std::size_t done = 0; done < n_exact; ++group) {
    const std::size_t size = std::min(cfg_.exact_group, n_exact - done);
    const std::size_t img = new_mosaic();
    const std::string text = make_prompt();
    for (std::size_t i = 0; i < size; ++i) slots.push_back({PlantKind::kExact, img, img, text, group});
    done += size;
  }
  group = 0;
  for (std::size_t done = 0; done < n_template; ++group) {
    const std::size_t left = n_template - done;
    // A remainder under 3 joins the last family instead of forming its own.
    const std::size_t size = left < cfg_.template_family + 3 ? left : cfg_.template_family;
    const Image base = mosaic_image(cfg_.width, cfg_.height, cfg_.block, draws.next());
    for (std::size_t i = 0; i < size; ++i) {
      Image member = base;
      const auto& corner = kEvenCorners[i % kEvenCorners.size()];
      for (std::size_t y = 0; y < cfg_.height; ++y) {
        for (std::size_t x = 0; x < cfg_.width; ++x) {
          if (region.get(x, y)) continue;
          for (std::size_t c = 0; c < 3; ++c) member.set(x, y, c, corner[c] ? hi : lo);
        }
      }
      images_.push_back(std::move(member));
      slots.push_back({PlantKind::kTemplate, images_.size() - 1, images_.size() - 1,
                       make_prompt(), group});
    }
    done += size;
  }
  for (std::size_t i = 0; i < n_retrieval; ++i) {
    const std::size_t host = new_mosaic();
    slots.push_back({PlantKind::kNone, host, host, make_prompt(), 0});
    images_.push_back(roll_image(images_[host], cfg_.block, 0));
    slots.push_back({PlantKind::kRetrieval, images_.size() - 1, host, make_prompt(), 0});
  }
  while (slots.size() < n) {
    const std::size_t size = std::min(1 + draws.below(cfg_.max_dup), n - slots.size());
    const std::size_t img = new_mosaic();
    for (std::size_t i = 0; i < size; ++i) slots.push_back({PlantKind::kNone, img, img, make_prompt(), 0});
  }

  for (std::size_t i = slots.size(); i > 1; --i) {
    std::swap(slots[i - 1], slots[draws.below(i)]);
  }

  captions_.reserve(n);
  caption_image_.reserve(n);
  caption_kind_.reserve(n);
  std::map<std::size_t, std::vector<CaptionId>> exact_groups;
  std::map<std::size_t, std::vector<CaptionId>> families;
  for (std::size_t pos = 0; pos < slots.size(); ++pos) {
    const Slot& s = slots[pos];
    const CaptionId id = pos + 1;
    captions_.push_back({id, s.text, image_path(id)});
    index_of_.emplace(id, pos);
    caption_image_.push_back(s.paired);
    caption_kind_.push_back(s.kind);

    Entry e{s.kind, s.memorized};
    if (cfg_.deduplicated && (s.kind == PlantKind::kExact || s.kind == PlantKind::kRetrieval)) {
      e.kind = PlantKind::kNone;
    }
    by_text_.emplace(s.text, e);

    switch (s.kind) {
      case PlantKind::kExact:
        manifest_.exact.push_back(id);
        exact_groups[s.group].push_back(id);
        break;
      case PlantKind::kTemplate:
        manifest_.templates.push_back(id);
        families[s.group].push_back(id);
        break;
      case PlantKind::kRetrieval:
        manifest_.retrieval.push_back(id);
        break;
      case PlantKind::kNone:
        break;
    }
  }
  for (auto& [g, ids] : exact_groups) manifest_.exact_groups.push_back(std::move(ids));
  for (auto& [g, ids] : families) manifest_.template_families.push_back(std::move(ids));
  manifest_.amplitude = amplitude_;
}

const CaptionRecord& Simulation::caption(CaptionId id) const {
  auto it = index_of_.find(id);
  if (it == index_of_.end()) {
    throw Error(ErrorCode::kUnknownCaption, "caption " + std::to_string(id) + " is not simulated");
  }
  return captions_[it->second];
}

const Image& Simulation::image(CaptionId id) const {
  caption(id);
  return images_[caption_image_[index_of_.at(id)]];
}

PlantKind Simulation::kind(CaptionId id) const {
  caption(id);
  return caption_kind_[index_of_.at(id)];
}

Simulation Simulation::deduplicated() const {
  SimulationConfig c = cfg_;
  c.deduplicated = true;
  return Simulation(c);
}

GeneratorCapabilities Simulation::capabilities() const {
  GeneratorCapabilities caps;
  caps.model = cfg_.deduplicated ? "vaudit-sim-dedup" : "vaudit-sim";
  caps.width = cfg_.width;
  caps.height = cfg_.height;
  caps.supports_timesteps = true;
  caps.default_timesteps = cfg_.default_timesteps;
  caps.sigma_max = cfg_.sigma_max;
  caps.dcs_space = "pixel";
  return caps;
}

const Simulation::Entry& Simulation::entry_for(const std::string& text) const {
  auto it = by_text_.find(text);
  if (it == by_text_.end()) {
    throw Error(ErrorCode::kUnknownCaption, "prompt is not part of the simulated corpus");
  }
  return it->second;
}

Image Simulation::template_sample(const Image& stored, std::uint64_t seed) const {
  const float lo = quantized(0.5 - amplitude_ / 2);
  const float hi = quantized(0.5 + amplitude_ / 2);
  const auto& corner = kOddCorners[mix64(seed) % kOddCorners.size()];
  const Mask region = plant_mask();
  Image out = stored;
  for (std::size_t y = 0; y < cfg_.height; ++y) {
    for (std::size_t x = 0; x < cfg_.width; ++x) {
      if (region.get(x, y)) continue;
      for (std::size_t c = 0; c < 3; ++c) out.set(x, y, c, corner[c] ? hi : lo);
    }
  }
  return out;
}

Image Simulation::generate(const CaptionRecord& caption, std::uint64_t seed,
                           std::uint32_t timesteps) {
  return generate_text(caption.text, seed, timesteps);
}

Image Simulation::generate_text(const std::string& text, std::uint64_t seed,
                                std::uint32_t timesteps) const {
  if (timesteps == 0) throw Error(ErrorCode::kInvalidArgument, "timesteps must be >= 1");
  const Entry& e = entry_for(text);
  switch (e.kind) {
    case PlantKind::kExact:
    case PlantKind::kRetrieval:
      return images_[e.image];
    case PlantKind::kTemplate:
      return template_sample(images_[e.image], seed);
    case PlantKind::kNone:
      break;
  }
  const std::uint64_t key = derive_seed(hash_text(text), seed);
  if (timesteps == 1) {
    return blurry_field(cfg_.width, cfg_.height, cfg_.blur_sigma, cfg_.max_blur_gradient, key);
  }
  return mosaic_image(cfg_.width, cfg_.height, cfg_.block, key);
}

std::vector<float> Simulation::denoise(std::span<const float> z, const CaptionRecord& caption) {
  return denoise_text(z, caption.text);
}

std::vector<float> Simulation::denoise_text(std::span<const float> z,
                                            const std::string& text) const {
  if (z.size() != tensor_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "noise tensor has " + std::to_string(z.size()) +
                                                   " elements, expected " +
                                                   std::to_string(tensor_size()));
  }
  for (float v : z) {
    if (!std::isfinite(v)) throw Error(ErrorCode::kInvalidArgument, "noise tensor is not finite");
  }
  const Entry& e = entry_for(text);
  std::vector<float> out(z.size());
  if (e.kind != PlantKind::kNone) {
    const auto src = images_[e.image].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = lift(src[i]);
    return out;
  }
  const Image field = blurry_field(cfg_.width, cfg_.height, cfg_.blur_sigma,
                                   cfg_.max_blur_gradient, hash_text(text));
  const auto f = field.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.7f * lift(f[i]) + 0.3f * z[i];
  return out;
}

std::string sim_config_to_json(const SimulationConfig& cfg) {
  json j = {
      {"corpus_size", cfg.corpus_size},
      {"exact_frac", cfg.exact_frac},
      {"template_frac", cfg.template_frac},
      {"retrieval_frac", cfg.retrieval_frac},
      {"exact_group", cfg.exact_group},
      {"template_family", cfg.template_family},
      {"max_dup", cfg.max_dup},
      {"width", cfg.width},
      {"height", cfg.height},
      {"block", cfg.block},
      {"variation", {{"x", cfg.variation.x}, {"y", cfg.variation.y},
                     {"w", cfg.variation.w}, {"h", cfg.variation.h}}},
      {"amplitude", cfg.amplitude},
      {"calibration_margin", cfg.calibration_margin},
      {"delta_v", cfg.delta_v},
      {"blur_sigma", cfg.blur_sigma},
      {"max_blur_gradient", cfg.max_blur_gradient},
      {"default_timesteps", cfg.default_timesteps},
      {"sigma_max", cfg.sigma_max},
      {"deduplicated", cfg.deduplicated},
      {"seed", cfg.seed},
  };
  return j.dump();
}

SimulationConfig sim_config_from_json(const std::string& text) {
  SimulationConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.corpus_size = j.at("corpus_size").get<std::size_t>();
    cfg.exact_frac = j.at("exact_frac").get<double>();
    cfg.template_frac = j.at("template_frac").get<double>();
    cfg.retrieval_frac = j.at("retrieval_frac").get<double>();
    cfg.exact_group = j.at("exact_group").get<std::size_t>();
    cfg.template_family = j.at("template_family").get<std::size_t>();
    cfg.max_dup = j.at("max_dup").get<std::size_t>();
    cfg.width = j.at("width").get<std::size_t>();
    cfg.height = j.at("height").get<std::size_t>();
    cfg.block = j.at("block").get<std::size_t>();
    const auto& v = j.at("variation");
    cfg.variation = {v.at("x").get<std::size_t>(), v.at("y").get<std::size_t>(),
                     v.at("w").get<std::size_t>(), v.at("h").get<std::size_t>()};
    cfg.amplitude = j.at("amplitude").get<double>();
    cfg.calibration_margin = j.at("calibration_margin").get<double>();
    cfg.delta_v = j.at("delta_v").get<double>();
    cfg.blur_sigma = j.at("blur_sigma").get<double>();
    cfg.max_blur_gradient = j.at("max_blur_gradient").get<double>();
    cfg.default_timesteps = j.at("default_timesteps").get<std::uint32_t>();
    cfg.sigma_max = j.at("sigma_max").get<double>();
    cfg.deduplicated = j.at("deduplicated").get<bool>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad simulation config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_corpus(const Simulation& sim, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + (out_dir / "images").string());

  write_captions(out_dir / "captions.jsonl", sim.captions());

  const ThumbnailEmbedder embedder;
  std::vector<EmbeddingRecord> records;
  records.reserve(sim.captions().size());
  for (const auto& c : sim.captions()) {
    const Image& img = sim.image(c.id);
    save_png(img, out_dir / *c.image);
    records.push_back({c.id, embedder.embed(img)});
  }
  write_embeddings(out_dir / "embeddings.emb1", records);

  const PlantManifest& m = sim.manifest();
  json j = {
      {"format", "vaudit-sim-manifest"},
      {"version", 1},
      {"config", json::parse(sim_config_to_json(sim.config()))},
      {"embedder", embedder.name()},
      {"amplitude", m.amplitude},
      {"exact", m.exact},
      {"template", m.templates},
      {"retrieval", m.retrieval},
      {"exact_groups", m.exact_groups},
      {"template_families", m.template_families},
  };
  std::ofstream out(out_dir / "manifest.json", std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest.json");
}

PlantManifest read_manifest(const std::filesystem::path& corpus_dir, SimulationConfig* cfg) {
  const auto path = corpus_dir / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  PlantManifest m;
  try {
    const json j = json::parse(in);
    if (j.at("format") != "vaudit-sim-manifest" || j.at("version") != 1) {
      throw Error(ErrorCode::kConfig, path.string() + " is not a version-1 simulation manifest");
    }
    m.exact = j.at("exact").get<std::vector<CaptionId>>();
    m.templates = j.at("template").get<std::vector<CaptionId>>();
    m.retrieval = j.at("retrieval").get<std::vector<CaptionId>>();
    m.exact_groups = j.at("exact_groups").get<std::vector<std::vector<CaptionId>>>();
    m.template_families = j.at("template_families").get<std::vector<std::vector<CaptionId>>>();
    m.amplitude = j.at("amplitude").get<double>();
    if (cfg) *cfg = sim_config_from_json(j.at("config").dump());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace vaudit
