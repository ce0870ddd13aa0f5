#include "vaudit/run.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "vaudit/embedder.hpp"
#include "vaudit/error.hpp"
#include "vaudit/ledger.hpp"
#include "vaudit/png_io.hpp"
#include "vaudit/rng.hpp"
#include "vaudit/simulation.hpp"

namespace vaudit {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

// Salts separating the seed streams drawn from one run seed.
constexpr std::uint64_t kBlackboxSalt = 0xB1AC;
constexpr std::uint64_t kPostfilterSalt = 0xCA21;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class SimBackend final : public Backend {
 public:
  explicit SimBackend(Simulation sim) : sim_(std::move(sim)), dcs_(sim_) {}
  Generator& generator() override { return sim_; }
  DcsEndpoint& dcs() override { return dcs_; }

 private:
  Simulation sim_;
  DenoiserDcs dcs_;
};

class RemoteHandle final : public Backend {
 public:
  explicit RemoteHandle(RemoteOptions opts) : remote_(std::move(opts)) {}
  Generator& generator() override { return remote_; }
  DcsEndpoint& dcs() override { return remote_; }

 private:
  RemoteBackend remote_;
};

// Everything ground-truth labeling needs from the reference corpus.
struct Reference {
  Reference(const Corpus& corpus, const GtConfig& gt)
      : index(index_from_records(corpus.embeddings)),
        store(corpus.root, corpus.captions) {
    if (index.size() > 0 && index.dim() != embedder.dim()) {
      throw Error(ErrorCode::kConfig,
                  "embedding dimension " + std::to_string(index.dim()) + " does not match the " +
                      embedder.name() + " embedder (" + std::to_string(embedder.dim()) + ")");
    }
    groups = group_duplicates(index, gt.dup_threshold);
    attach_prompts(groups, corpus.captions);
    masks = std::make_unique<GroupMasks>(groups, store, gt.theta_var, gt.min_stable_frac);
  }

  ThumbnailEmbedder embedder;
  EmbeddingIndex index;
  DirectoryImageStore store;
  std::vector<DuplicateGroup> groups;
  std::unique_ptr<GroupMasks> masks;
};

std::unordered_map<CaptionId, const CaptionRecord*> by_id(std::span<const CaptionRecord> captions) {
  std::unordered_map<CaptionId, const CaptionRecord*> out;
  out.reserve(captions.size());
  for (const auto& c : captions) out.emplace(c.id, &c);
  return out;
}

std::vector<CaptionRecord> records_for(std::span<const CaptionId> ids,
                                       const std::unordered_map<CaptionId, const CaptionRecord*>& lookup) {
  std::vector<CaptionRecord> out;
  out.reserve(ids.size());
  for (CaptionId id : ids) {
    auto it = lookup.find(id);
    if (it == lookup.end()) {
      throw Error(ErrorCode::kConfig, "caption " + std::to_string(id) + " is not in the corpus");
    }
    out.push_back(*it->second);
  }
  return out;
}

DuplicationSummary summarize_duplication(std::span<const DuplicateGroup> groups,
                                         std::span<const VerbatimLabel> labels) {
  DuplicationSummary d;
  const auto lookup = group_lookup(groups);
  for (const auto& g : groups) ++d.group_sizes[g.members.size()];
  std::map<std::string, double> sums;
  for (const auto& l : labels) {
    auto it = lookup.find(l.caption_id);
    if (it == lookup.end()) continue;
    const std::string kind = to_string(l.kind);
    sums[kind] += multimodal_dup_rate(groups[it->second]);
    ++d.rate_counts[kind];
  }
  for (const auto& [kind, sum] : sums) {
    d.mean_rate[kind] = sum / static_cast<double>(d.rate_counts[kind]);
  }
  return d;
}

ConfigEcho sorted_echo(ConfigEcho echo) {
  std::sort(echo.begin(), echo.end());
  return echo;
}

// Labels `captions` and folds the outcome into the report: labels, totals,
// label failures and per-ranking curves over the successfully labeled ids.
void attach_labels(RunReport& report, std::span<const CaptionRecord> captions,
                   const Labeler& labeler, unsigned workers, double failure_budget) {
  auto outcome = label_captions(captions, labeler, workers, "label");
  report.failures.insert(report.failures.end(), outcome.failures.begin(), outcome.failures.end());
  enforce_failure_budget(outcome.failures, captions.size(), failure_budget, "label");

  std::sort(outcome.labels.begin(), outcome.labels.end(),
            [](const auto& a, const auto& b) { return a.caption_id < b.caption_id; });
  report.labels = std::move(outcome.labels);
  report.totals = tally(report.labels);
  report.totals.failed = outcome.failures.size();

  LabelMap map;
  for (const auto& l : report.labels) map.emplace(l.caption_id, l);
  for (auto& [stage, ids] : report.rankings) {
    std::erase_if(ids, [&](CaptionId id) { return !map.contains(id); });
    report.curves[stage] = evaluate_stage(ids, map);
  }
}

void write_masks(const GroupMasks& masks, const fs::path& dir) {
  const auto estimated = masks.estimated();
  if (estimated.empty()) return;
  fs::create_directories(dir);
  for (const auto& [gid, mask] : estimated) {
    save_mask_png(mask, dir / (std::to_string(gid) + ".png"));
  }
}

Corpus load_corpus_or_config_error(const fs::path& root, const std::optional<fs::path>& captions,
                                   const std::optional<fs::path>& embeddings) {
  try {
    return load_corpus(root, captions, embeddings);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw Error(ErrorCode::kConfig, e.what());
    throw;
  }
}

void require_fresh_output(const fs::path& out_dir) {
  if (out_dir.empty()) throw Error(ErrorCode::kConfig, "an output directory is required");
}

}  // namespace

Corpus load_corpus(const fs::path& root, const std::optional<fs::path>& captions,
                   const std::optional<fs::path>& embeddings) {
  Corpus corpus;
  corpus.root = root;
  const fs::path cap_path = captions.value_or(root / "captions.jsonl");
  if (!fs::exists(cap_path)) throw Error(ErrorCode::kIo, "caption file not found: " + cap_path.string());
  corpus.captions = read_captions(cap_path);

  const fs::path emb_path = embeddings.value_or(root / "embeddings.emb1");
  if (fs::exists(emb_path)) {
    corpus.embeddings = read_embeddings(emb_path);
  } else if (embeddings) {
    throw Error(ErrorCode::kIo, "embedding file not found: " + emb_path.string());
  } else {
    ThumbnailEmbedder embedder;
    std::unordered_set<ItemId> seen;
    for (const auto& c : corpus.captions) {
      if (!c.image || !seen.insert(c.id).second) continue;
      const fs::path img = root / *c.image;
      if (!fs::exists(img)) continue;
      corpus.embeddings.push_back({c.id, embedder.embed(load_png(img))});
    }
  }
  return corpus;
}

void BackendConfig::validate() const {
  if (kind != "sim" && kind != "sim-dedup" && kind != "remote") {
    throw Error(ErrorCode::kConfig, "backend must be sim, sim-dedup or remote, got '" + kind + "'");
  }
  if (kind == "remote" && url.empty()) {
    throw Error(ErrorCode::kConfig, "remote backend needs a url (--url or VA_BACKEND_URL)");
  }
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, const fs::path& corpus_dir) {
  cfg.validate();
  if (cfg.kind == "remote") {
    RemoteOptions opts = cfg.remote;
    opts.url = cfg.url;
    return std::make_unique<RemoteHandle>(std::move(opts));
  }
  SimulationConfig sim_cfg;
  try {
    read_manifest(corpus_dir, &sim_cfg);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("simulated backend needs a simulated corpus: ") + e.what());
  }
  sim_cfg.deduplicated = cfg.kind == "sim-dedup";
  return std::make_unique<SimBackend>(Simulation(sim_cfg));
}

void AttackRunConfig::validate() const {
  if (mode != "whitebox" && mode != "blackbox" && mode != "full") {
    throw Error(ErrorCode::kConfig, "mode must be whitebox, blackbox or full, got '" + mode + "'");
  }
  if (corpus.empty()) throw Error(ErrorCode::kConfig, "a corpus directory is required");
  require_fresh_output(out_dir);
  if (sigma1 < 0.0) throw Error(ErrorCode::kConfig, "sigma1 must be >= 0");
  if (!(failure_budget >= 0.0 && failure_budget <= 1.0)) {
    throw Error(ErrorCode::kConfig, "failure budget must lie in [0,1]");
  }
  if (workers == 0) throw Error(ErrorCode::kConfig, "workers must be >= 1");
  if (baseline_generations == 0 || baseline_steps == 0) {
    throw Error(ErrorCode::kConfig, "baseline generations and steps must be >= 1");
  }
  if (mode != "whitebox") thresholds.validate();
  if (postfilter.enabled) {
    if (mode == "whitebox") throw Error(ErrorCode::kConfig, "the postfilter needs a blackbox stage");
    postfilter.validate();
  }
  gt.validate();
  backend.validate();
}

RunReport run_attack(const AttackRunConfig& cfg) {
  cfg.validate();
  const auto t_start = Clock::now();
  const Corpus corpus = load_corpus_or_config_error(cfg.corpus, cfg.captions, cfg.embeddings);
  auto backend = make_backend(cfg.backend, cfg.corpus);
  const GeneratorCapabilities caps = backend->generator().capabilities();
  const Reference ref(corpus, cfg.gt);
  const auto lookup = by_id(corpus.captions);

  RunReport report;
  report.command = "attack";
  report.mode = cfg.mode;
  report.config = sorted_echo(cfg.echo);
  report.metadata = {{"postfilter_order", kPostfilterOrder},
                     {"backend_model", caps.model},
                     {"dcs_space", caps.dcs_space},
                     {"embedder", ref.embedder.name()},
                     {"started_at", utc_timestamp()}};
  CallLedger ledger;
  const std::size_t n_pre = std::min(cfg.n_pre, corpus.captions.size());

  auto fail_with_outputs = [&](const Error& e) {
    fs::create_directories(cfg.out_dir);
    write_text_file(cfg.out_dir / "failures.jsonl", failures_jsonl(report.failures));
    throw e;
  };

  try {
    std::vector<CaptionRecord> candidates;
    if (cfg.mode != "blackbox") {
      const auto t0 = Clock::now();
      const double sigma1 = cfg.sigma1 > 0.0 ? cfg.sigma1 : caps.sigma_max;
      report.metadata["sigma1"] = nlohmann::json(sigma1).dump();
      CountingDcsEndpoint counted(backend->dcs(), ledger, "whitebox");
      auto wb = whitebox_attack(corpus.captions, counted, sigma1, cfg.run_seed, cfg.workers);
      report.failures.insert(report.failures.end(), wb.failures.begin(), wb.failures.end());
      enforce_failure_budget(wb.failures, corpus.captions.size(), cfg.failure_budget, "whitebox");
      report.whitebox = std::move(wb.ranked);
      const std::size_t keep = std::min(n_pre, report.whitebox.size());
      auto top = ids_of<DcsScore>(std::span(report.whitebox).first(keep));
      candidates = records_for(top, lookup);
      report.rankings["whitebox"] = std::move(top);
      report.stage_seconds["whitebox"] = seconds_since(t0);
    } else {
      std::vector<CaptionId> top;
      for (CaptionId id : topk_by_duplication(ref.groups, ref.index.size())) {
        if (top.size() == n_pre) break;
        if (lookup.contains(id)) top.push_back(id);
      }
      candidates = records_for(top, lookup);
    }

    if (cfg.mode != "whitebox") {
      const auto t0 = Clock::now();
      CountingGenerator counted(backend->generator(), ledger, "blackbox");
      const auto seeds = derive_seeds(derive_seed(cfg.run_seed, kBlackboxSalt), cfg.thresholds.j);
      auto bb = blackbox_attack(candidates, counted, cfg.thresholds, seeds, cfg.workers);
      report.failures.insert(report.failures.end(), bb.failures.begin(), bb.failures.end());
      enforce_failure_budget(bb.failures, candidates.size(), cfg.failure_budget, "blackbox");
      report.blackbox = std::move(bb.ranked);
      report.rankings["blackbox"] = ids_of<EcsScore>(report.blackbox);
      report.stage_seconds["blackbox"] = seconds_since(t0);
      if (!candidates.empty()) {
        const auto counts = ledger.stage("blackbox");
        EfficiencySummary e;
        e.baseline_generations = cfg.baseline_generations;
        e.baseline_steps = cfg.baseline_steps;
        e.captions = candidates.size();
        e.evaluations_per_caption =
            static_cast<double>(counts.timestep_sum) / static_cast<double>(e.captions);
        e.ratio = static_cast<double>(e.baseline_generations * e.baseline_steps) /
                  e.evaluations_per_caption;
        report.efficiency = e;
      }

      if (cfg.postfilter.enabled) {
        const auto t1 = Clock::now();
        const std::size_t n = std::min(cfg.postfilter.candidates, report.blackbox.size());
        const auto pf_ids = ids_of<EcsScore>(std::span(report.blackbox).first(n));
        const auto pf_candidates = records_for(pf_ids, lookup);
        CountingGenerator pf_gen(backend->generator(), ledger, "postfilter");
        std::vector<CaptionFailure> pf_failures;
        auto results = carlini_postfilter(pf_candidates, pf_gen, cfg.postfilter,
                                          caps.default_timesteps,
                                          derive_seed(cfg.run_seed, kPostfilterSalt), cfg.workers,
                                          pf_failures);
        report.failures.insert(report.failures.end(), pf_failures.begin(), pf_failures.end());
        enforce_failure_budget(pf_failures, pf_candidates.size(), cfg.failure_budget, "postfilter");
        std::unordered_set<CaptionId> flagged;
        for (const auto& r : results) {
          if (r.flagged) flagged.insert(r.caption_id);
        }
        // Filter, then keep the ECS order.
        std::vector<CaptionId> kept;
        for (CaptionId id : pf_ids) {
          if (flagged.contains(id)) kept.push_back(id);
        }
        report.postfilter = std::move(results);
        report.rankings["postfilter"] = std::move(kept);
        report.stage_seconds["postfilter"] = seconds_since(t1);
      }
    }

    const auto t0 = Clock::now();
    CountingGenerator label_gen(backend->generator(), ledger, "label");
    const Labeler labeler(label_gen, ref.index, ref.store, ref.embedder, *ref.masks, cfg.gt);
    attach_labels(report, candidates, labeler, cfg.workers, cfg.failure_budget);
    report.stage_seconds["label"] = seconds_since(t0);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFailureBudget) fail_with_outputs(e);
    throw;
  }

  report.ledger = ledger.stages();
  report.duplication = summarize_duplication(ref.groups, report.labels);
  report.wall_seconds = seconds_since(t_start);
  write_run_outputs(report, cfg.out_dir);
  write_masks(*ref.masks, cfg.out_dir / "masks");
  return report;
}

void LabelRunConfig::validate() const {
  if (corpus.empty()) throw Error(ErrorCode::kConfig, "a corpus directory is required");
  require_fresh_output(out_dir);
  if (workers == 0) throw Error(ErrorCode::kConfig, "workers must be >= 1");
  gt.validate();
  backend.validate();
}

RunReport run_label(const LabelRunConfig& cfg) {
  cfg.validate();
  const auto t_start = Clock::now();
  const Corpus corpus = load_corpus_or_config_error(cfg.corpus, std::nullopt, cfg.embeddings);
  std::vector<CaptionRecord> prompts = corpus.captions;
  if (cfg.prompts) {
    if (!fs::exists(*cfg.prompts)) {
      throw Error(ErrorCode::kConfig, "prompt file not found: " + cfg.prompts->string());
    }
    prompts = read_captions(*cfg.prompts);
  }
  auto backend = make_backend(cfg.backend, cfg.corpus);
  const GeneratorCapabilities caps = backend->generator().capabilities();
  const Reference ref(corpus, cfg.gt);

  RunReport report;
  report.command = "label";
  report.config = sorted_echo(cfg.echo);
  report.metadata = {{"backend_model", caps.model},
                     {"embedder", ref.embedder.name()},
                     {"started_at", utc_timestamp()}};
  std::vector<CaptionId> ids;
  for (const auto& p : prompts) ids.push_back(p.id);
  report.rankings["label"] = std::move(ids);

  CallLedger ledger;
  CountingGenerator gen(backend->generator(), ledger, "label");
  const Labeler labeler(gen, ref.index, ref.store, ref.embedder, *ref.masks, cfg.gt);
  // Per-caption failures are the output here, so no budget applies.
  attach_labels(report, prompts, labeler, cfg.workers, 1.0);
  report.stage_seconds["label"] = seconds_since(t_start);
  report.ledger = ledger.stages();
  report.duplication = summarize_duplication(ref.groups, report.labels);
  report.wall_seconds = seconds_since(t_start);
  write_run_outputs(report, cfg.out_dir);
  return report;
}

void TransferRunConfig::validate() const {
  if (source_run.empty()) throw Error(ErrorCode::kConfig, "a source run directory is required");
  if (corpus.empty()) throw Error(ErrorCode::kConfig, "a corpus directory is required");
  require_fresh_output(out_dir);
  if (top == 0) throw Error(ErrorCode::kConfig, "top must be >= 1");
  if (workers == 0) throw Error(ErrorCode::kConfig, "workers must be >= 1");
  gt.validate();
  backend.validate();
}

std::vector<CaptionId> transfer_prompts(const RunReport& source, std::size_t top) {
  for (const char* stage : {"blackbox", "whitebox", "label", "transfer"}) {
    auto it = source.rankings.find(stage);
    if (it == source.rankings.end()) continue;
    const auto& ids = it->second;
    return {ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(top, ids.size()))};
  }
  throw Error(ErrorCode::kConfig, "source report has no ranking to transfer");
}

RunReport run_transfer(const TransferRunConfig& cfg) {
  cfg.validate();
  const auto t_start = Clock::now();
  RunReport source;
  try {
    source = read_report(cfg.source_run / "report.json");
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  const Corpus corpus = load_corpus_or_config_error(cfg.corpus, std::nullopt, cfg.embeddings);
  const auto ids = transfer_prompts(source, cfg.top);
  const auto prompts = records_for(ids, by_id(corpus.captions));
  auto backend = make_backend(cfg.backend, cfg.corpus);
  // Probe first: an unreachable backend fails before any labeling.
  const GeneratorCapabilities caps = backend->generator().capabilities();
  const Reference ref(corpus, cfg.gt);

  RunReport report;
  report.command = "transfer";
  report.config = sorted_echo(cfg.echo);
  report.metadata = {{"backend_model", caps.model},
                     {"source_run", cfg.source_run.string()},
                     {"embedder", ref.embedder.name()},
                     {"started_at", utc_timestamp()}};
  report.rankings["transfer"] = ids;

  CallLedger ledger;
  CountingGenerator gen(backend->generator(), ledger, "label");
  const Labeler labeler(gen, ref.index, ref.store, ref.embedder, *ref.masks, cfg.gt);
  attach_labels(report, prompts, labeler, cfg.workers, 0.01);
  report.stage_seconds["label"] = seconds_since(t_start);
  report.ledger = ledger.stages();
  report.duplication = summarize_duplication(ref.groups, report.labels);
  report.wall_seconds = seconds_since(t_start);
  write_run_outputs(report, cfg.out_dir);
  write_text_file(cfg.out_dir / "transfer.json", transfer_json(report, caps.model));
  return report;
}

std::string transfer_json(const RunReport& report, const std::string& backend_model) {
  const auto& t = report.totals;
  const nlohmann::json j = {{"format", "vaudit-transfer"},
                            {"version", 1},
                            {"backend", backend_model},
                            {"prompts", report.labels.size() + t.failed},
                            {"retrieval", t.retrieval},
                            {"template", t.templates},
                            {"exact", t.exact},
                            {"non_verbatim", t.non_verbatim},
                            {"failed", t.failed}};
  return j.dump(2) + "\n";
}

}  // namespace vaudit
