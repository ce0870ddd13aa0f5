#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vaudit/backend.hpp"
#include "vaudit/captions.hpp"
#include "vaudit/imaging.hpp"

namespace vaudit {

struct Rect {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Parameters of the synthetic memorizing backend and its corpus.
struct SimulationConfig {
  std::size_t corpus_size = 5000;
  double exact_frac = 0.01;
  double template_frac = 0.006;
  double retrieval_frac = 0.0;
  std::size_t exact_group = 5;      // captions sharing one prompt and image
  std::size_t template_family = 5;  // captions sharing one template
  std::size_t max_dup = 4;          // largest non-plant duplicate group
  std::size_t width = 32;
  std::size_t height = 32;
  std::size_t block = 4;            // mosaic cell side
  Rect variation{8, 8, 12, 12};
  double amplitude = 0.0;           // 0 = calibrate against delta_v
  double calibration_margin = 1.25;
  double delta_v = 0.12;
  double blur_sigma = 3.0;
  double max_blur_gradient = 0.2;   // ceiling on one-step Sobel response
  std::uint32_t default_timesteps = 16;
  double sigma_max = 14.6;
  bool deduplicated = false;        // exact/retrieval plants forgotten
  std::uint64_t seed = 0x51D0C0DEULL;

  /// Throws kConfig on any out-of-range field.
  void validate() const;
};

enum class PlantKind { kExact, kTemplate, kRetrieval, kNone };
const char* to_string(PlantKind kind);

/// Variation region: the rectangle minus its four corner pixels. This shape is
/// a fixed point of 3x3 majority smoothing, so an estimated mask can recover
/// it exactly.
Mask variation_mask(std::size_t width, std::size_t height, const Rect& r);

/// Smallest template-vs-generation rmse for amplitude `a`: one channel of the
/// region differs by `a`, so the distance is a * sqrt(region_frac / 3).
double template_min_rmse(double a, double region_frac);

/// a = margin * delta_v / sqrt(region_frac / 3), quantized to the u8 grid.
/// Throws kConfig when a > 1 would be required or the quantized colors no
/// longer clear delta_v.
double calibrate_amplitude(const SimulationConfig& cfg);

/// Posterized block mosaic, each cell channel 0.15 or 0.85, on the u8 grid.
Image mosaic_image(std::size_t width, std::size_t height, std::size_t block,
                   std::uint64_t seed);

/// Blurred noise whose Sobel magnitude stays below `max_gradient` after
/// quantization to the u8 grid.
Image blurry_field(std::size_t width, std::size_t height, double sigma,
                   double max_gradient, std::uint64_t seed);

/// Circular shift right and down by `dx`, `dy` pixels.
Image roll_image(const Image& img, std::size_t dx, std::size_t dy);

struct PlantManifest {
  std::vector<CaptionId> exact;
  std::vector<CaptionId> templates;
  std::vector<CaptionId> retrieval;
  std::vector<std::vector<CaptionId>> exact_groups;
  std::vector<std::vector<CaptionId>> template_families;
  double amplitude = 0.0;
};

/// Deterministic synthetic corpus plus a Generator/Denoiser that memorizes
/// the planted captions. Behavior is keyed by prompt text, so it is identical
/// whether called in-process or through the wire protocol.
///
/// - exact: stored image for every seed and timestep count.
/// - template: stored image with the variation region recolored per seed.
/// - retrieval: like exact, but the stored image is the host caption's image
///   while the caption's own paired image is a shifted copy.
/// - none: one-step calls give a seed-keyed blurry field, full calls a
///   seed-keyed mosaic.
///
/// Denoising works in the image layout lifted to [-1, 1]: memorized prompts
/// return the lifted stored image regardless of z; the rest return
/// 0.7 * lift(blurry field of the prompt) + 0.3 * z.
class Simulation final : public Generator, public Denoiser {
 public:
  explicit Simulation(SimulationConfig cfg);

  const SimulationConfig& config() const noexcept { return cfg_; }
  double amplitude() const noexcept { return amplitude_; }

  /// Captions with image paths "images/<id>.png".
  const std::vector<CaptionRecord>& captions() const noexcept { return captions_; }
  const CaptionRecord& caption(CaptionId id) const;
  /// The paired corpus image of a caption.
  const Image& image(CaptionId id) const;
  PlantKind kind(CaptionId id) const;
  const PlantManifest& manifest() const noexcept { return manifest_; }
  Mask plant_mask() const { return variation_mask(cfg_.width, cfg_.height, cfg_.variation); }

  /// Same corpus; exact and retrieval prompts are no longer memorized.
  Simulation deduplicated() const;

  GeneratorCapabilities capabilities() const override;
  Image generate(const CaptionRecord& caption, std::uint64_t seed,
                 std::uint32_t timesteps) override;
  Image generate_text(const std::string& text, std::uint64_t seed,
                      std::uint32_t timesteps) const;

  std::size_t tensor_size() const override { return cfg_.width * cfg_.height * 3; }
  std::vector<float> denoise(std::span<const float> z, const CaptionRecord& caption) override;
  std::vector<float> denoise_text(std::span<const float> z, const std::string& text) const;

 private:
  struct Entry {
    PlantKind kind = PlantKind::kNone;
    std::size_t image = 0;   // index of the memorized image (exact/template/retrieval)
  };

  const Entry& entry_for(const std::string& text) const;
  void build();
  Image template_sample(const Image& stored, std::uint64_t seed) const;

  SimulationConfig cfg_;
  double amplitude_ = 0.0;
  std::vector<CaptionRecord> captions_;
  std::vector<Image> images_;
  std::unordered_map<CaptionId, std::size_t> index_of_;      // caption -> position
  std::vector<std::size_t> caption_image_;                   // position -> paired image
  std::vector<PlantKind> caption_kind_;
  std::unordered_map<std::string, Entry> by_text_;
  PlantManifest manifest_;
};

/// JSON round trip of the configuration (stored in manifest.json).
std::string sim_config_to_json(const SimulationConfig& cfg);
SimulationConfig sim_config_from_json(const std::string& text);

/// Writes captions.jsonl, images/<id>.png, embeddings.emb1 and manifest.json.
/// Identical configurations produce byte-identical directories.
void write_corpus(const Simulation& sim, const std::filesystem::path& out_dir);

/// Reads manifest.json from a corpus directory.
PlantManifest read_manifest(const std::filesystem::path& corpus_dir,
                            SimulationConfig* cfg = nullptr);

}  // namespace vaudit
