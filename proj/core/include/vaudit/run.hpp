#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vaudit/backend.hpp"
#include "vaudit/captions.hpp"
#include "vaudit/groundtruth.hpp"
#include "vaudit/pipeline.hpp"
#include "vaudit/remote.hpp"
#include "vaudit/report.hpp"
#include "vaudit/retrieval.hpp"
#include "vaudit/scoring.hpp"

namespace vaudit {

/// Captions plus reference embeddings. Image paths resolve against `root`.
struct Corpus {
  std::filesystem::path root;
  std::vector<CaptionRecord> captions;
  std::vector<EmbeddingRecord> embeddings;
};

/// Reads `captions` (default root/captions.jsonl) and `embeddings` (default
/// root/embeddings.emb1). Without an embeddings file the paired images are
/// embedded with the thumbnail embedder.
Corpus load_corpus(const std::filesystem::path& root,
                   const std::optional<std::filesystem::path>& captions = std::nullopt,
                   const std::optional<std::filesystem::path>& embeddings = std::nullopt);

struct BackendConfig {
  std::string kind = "sim";   // sim | sim-dedup | remote
  std::string url;            // remote only
  RemoteOptions remote;

  void validate() const;
};

/// A generator and DCS endpoint with their owners.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual Generator& generator() = 0;
  virtual DcsEndpoint& dcs() = 0;
};

/// The simulated backends are rebuilt from corpus_dir/manifest.json.
std::unique_ptr<Backend> make_backend(const BackendConfig& cfg,
                                      const std::filesystem::path& corpus_dir);

using ConfigEcho = std::vector<std::pair<std::string, std::string>>;

struct AttackRunConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> captions;
  std::optional<std::filesystem::path> embeddings;
  std::string mode = "full";   // whitebox | blackbox | full
  std::size_t n_pre = 500;     // clamped to the candidate count
  double sigma1 = 0.0;         // 0 = backend sigma_max
  ScoreThresholds thresholds;
  GtConfig gt;
  PostfilterConfig postfilter;
  BackendConfig backend;
  std::filesystem::path out_dir;
  std::uint64_t run_seed = 0x5EED;
  unsigned workers = 4;
  double failure_budget = 0.01;
  std::uint64_t baseline_generations = 500;
  std::uint64_t baseline_steps = 16;
  ConfigEcho echo;

  /// Throws kConfig; performs no IO.
  void validate() const;
};

/// Runs the staged attack, labels the final candidate set and writes every
/// output under out_dir. Throws kFailureBudget when a stage loses more than
/// failure_budget of its captions (failures.jsonl is still written).
RunReport run_attack(const AttackRunConfig& cfg);

struct LabelRunConfig {
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> prompts;   // default: the corpus captions
  std::optional<std::filesystem::path> embeddings;
  GtConfig gt;
  BackendConfig backend;
  std::filesystem::path out_dir;
  unsigned workers = 4;
  ConfigEcho echo;

  void validate() const;
};

/// Ground-truth labels for a prompt list. Per-caption failures become error
/// records in labels.jsonl.
RunReport run_label(const LabelRunConfig& cfg);

struct TransferRunConfig {
  std::filesystem::path source_run;   // directory holding a prior report.json
  std::filesystem::path corpus;
  std::optional<std::filesystem::path> embeddings;
  std::size_t top = 500;
  GtConfig gt;
  BackendConfig backend;
  std::filesystem::path out_dir;
  unsigned workers = 4;
  ConfigEcho echo;

  void validate() const;
};

/// The first `top` captions of the last unfiltered ranking of a prior run.
std::vector<CaptionId> transfer_prompts(const RunReport& source, std::size_t top);

/// Labels the top prompts of a prior run against another backend without
/// scoring; writes transfer.json alongside the usual outputs.
RunReport run_transfer(const TransferRunConfig& cfg);

std::string transfer_json(const RunReport& report, const std::string& backend_model);

}  // namespace vaudit
