#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "vaudit/error.hpp"
#include "vaudit/remote.hpp"
#include "vaudit/report.hpp"
#include "vaudit/run.hpp"
#include "vaudit/scoring.hpp"
#include "vaudit/simulation.hpp"

namespace fs = std::filesystem;
using namespace vaudit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitBudget = 2;
constexpr int kExitConfig = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

// CLI11 reads a config file only through the top-level app, so a
// `--config FILE` given after the subcommand is moved in front of it.
std::vector<std::string> hoist_config(int argc, char** argv) {
  std::vector<std::string> head;
  std::vector<std::string> rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) {
      head.push_back(a);
      head.push_back(argv[++i]);
    } else if (a.rfind("--config=", 0) == 0) {
      head.push_back(a);
    } else {
      rest.push_back(a);
    }
  }
  head.insert(head.end(), rest.begin(), rest.end());
  return head;
}

// "key=value" lines of the subcommand's effective settings.
ConfigEcho echo_of(const CLI::App& sub) {
  ConfigEcho echo;
  std::istringstream lines(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.front() == '[' || line.front() == '#') continue;
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    echo.emplace_back(sub.get_name() + "." + line.substr(0, eq), value);
  }
  return echo;
}

void add_gt_options(CLI::App* app, GtConfig& gt) {
  app->add_option("--delta-v", gt.delta_v, "rmse threshold for exact and retrieval matches")
      ->group("Ground truth");
  app->add_option("--delta-v-masked", gt.delta_v_masked, "masked rmse threshold for templates")
      ->group("Ground truth");
  app->add_option("--gt-j", gt.j, "full generations per caption when labeling")->group("Ground truth");
  app->add_option("--gt-k", gt.k, "reference neighbors per generation")->group("Ground truth");
  app->add_option("--gt-timesteps", gt.timesteps, "labeling timesteps (0 = backend default)")
      ->group("Ground truth");
  app->add_option("--gt-seed", gt.seed, "base seed of the labeling generations")->group("Ground truth");
  app->add_option("--theta-var", gt.theta_var, "per-pixel std bound of a stable mask pixel")
      ->group("Ground truth");
  app->add_option("--min-stable-frac", gt.min_stable_frac, "smallest usable mask fraction")
      ->group("Ground truth");
  app->add_option("--white-luma", gt.white_luma, "luma above which a pixel counts as white")
      ->group("Ground truth");
  app->add_option("--white-frac-max", gt.white_frac_max, "largest white fraction of a candidate")
      ->group("Ground truth");
  app->add_option("--min-edge-density", gt.min_edge_density, "smallest edge fraction of a candidate")
      ->group("Ground truth");
  app->add_option("--gt-t-edge", gt.t_edge, "edge threshold of the candidate screen")
      ->group("Ground truth");
  app->add_option("--dup-threshold", gt.dup_threshold, "cosine similarity of duplicate groups")
      ->group("Ground truth");
}

void add_backend_options(CLI::App* app, BackendConfig& b, long& timeout_ms) {
  app->add_option("--backend", b.kind, "sim | sim-dedup | remote")
      ->check(CLI::IsMember({"sim", "sim-dedup", "remote"}))
      ->group("Backend");
  app->add_option("--url", b.url, "remote backend base url")->envname("VA_BACKEND_URL")->group("Backend");
  app->add_option("--timeout-ms", timeout_ms, "per-request timeout")->group("Backend");
  app->add_option("--retries", b.remote.max_retries, "retries on transport errors and 503")
      ->group("Backend");
  app->add_option("--max-in-flight", b.remote.max_in_flight, "concurrent remote requests")
      ->group("Backend");
}

int cmd_simulate(const SimulationConfig& cfg, const fs::path& out) {
  const Simulation sim(cfg);
  write_corpus(sim, out);
  const auto& m = sim.manifest();
  spdlog::info("wrote {} captions to {} ({} exact, {} template, {} retrieval plants)",
               sim.captions().size(), out.string(), m.exact.size(), m.templates.size(),
               m.retrieval.size());
  return kExitOk;
}

int cmd_report(const std::vector<fs::path>& runs, const fs::path& out) {
  std::vector<std::pair<std::string, RunReport>> loaded;
  for (const auto& dir : runs) {
    RunReport r = read_report(dir / "report.json");
    validate_report(r);
    loaded.emplace_back(dir.filename().empty() ? dir.parent_path().filename().string()
                                               : dir.filename().string(),
                        std::move(r));
  }
  if (loaded.size() == 1) {
    const fs::path target = out.empty() ? runs.front() : out;
    fs::create_directories(target);
    render_report(loaded.front().second, target);
    std::cout << summary_text(loaded.front().second);
    return kExitOk;
  }
  const fs::path target = out.empty() ? fs::path(".") : out;
  fs::create_directories(target);
  write_text_file(target / "overlay.svg", overlay_svg(loaded));
  for (const auto& [name, r] : loaded) std::cout << "== " << name << "\n" << summary_text(r) << "\n";
  spdlog::info("wrote {}", (target / "overlay.svg").string());
  return kExitOk;
}

int cmd_serve(const fs::path& corpus, bool dedup, ServerOptions opts) {
  BackendConfig b;
  b.kind = dedup ? "sim-dedup" : "sim";
  auto backend = make_backend(b, corpus);
  BackendServer server(backend->generator(), backend->dcs(), std::move(opts));
  server.start();
  std::cout << server.url() << std::endl;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Memorization audit for text-to-image generators."};
  app.set_config("--config", "", "INI file; [simulate], [attack], ... sections hold flag values")
      ->configurable(false);
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  int verbose = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "more logging (repeatable)")->configurable(false);
  app.add_flag("-q,--quiet", quiet, "warnings and errors only")->configurable(false);

  auto configure = [](CLI::App* sub) {
    sub->allow_config_extras(false);
    sub->option_defaults()->always_capture_default();
  };

  // simulate
  SimulationConfig sim_cfg;
  fs::path sim_out;
  auto* simulate = app.add_subcommand("simulate", "write a synthetic corpus with planted memorization");
  configure(simulate);
  simulate->add_option("--out", sim_out, "output corpus directory")->required();
  simulate->add_option("--size", sim_cfg.corpus_size, "number of captions");
  simulate->add_option("--exact-frac", sim_cfg.exact_frac, "fraction of exact plants");
  simulate->add_option("--template-frac", sim_cfg.template_frac, "fraction of template plants");
  simulate->add_option("--retrieval-frac", sim_cfg.retrieval_frac, "fraction of retrieval plants");
  simulate->add_option("--exact-group", sim_cfg.exact_group, "captions per exact plant image");
  simulate->add_option("--template-family", sim_cfg.template_family, "captions per template");
  simulate->add_option("--max-dup", sim_cfg.max_dup, "largest non-plant duplicate group");
  simulate->add_option("--width", sim_cfg.width, "image width");
  simulate->add_option("--height", sim_cfg.height, "image height");
  simulate->add_option("--block", sim_cfg.block, "mosaic cell side");
  simulate->add_option("--amplitude", sim_cfg.amplitude, "template recolor amplitude (0 = calibrate)");
  simulate->add_option("--delta-v", sim_cfg.delta_v, "threshold the amplitude is calibrated against");
  simulate->add_option("--default-timesteps", sim_cfg.default_timesteps, "full-synthesis step count");
  simulate->add_option("--sigma-max", sim_cfg.sigma_max, "largest noise level");
  simulate->add_option("--seed", sim_cfg.seed, "corpus seed");

  // attack
  AttackRunConfig atk;
  long atk_timeout = 30000;
  std::string dcs_direction = "high";
  auto* attack = app.add_subcommand("attack", "score captions, label the candidates, write a run report");
  configure(attack);
  attack->add_option("--corpus", atk.corpus, "corpus directory")->required();
  attack->add_option("--captions", atk.captions, "caption file (default corpus/captions.jsonl)");
  attack->add_option("--embeddings", atk.embeddings, "EMB1 file (default corpus/embeddings.emb1)");
  attack->add_option("--out", atk.out_dir, "run output directory")->required();
  attack->add_option("--mode", atk.mode, "whitebox | blackbox | full")
      ->check(CLI::IsMember({"whitebox", "blackbox", "full"}));
  attack->add_option("--n-pre", atk.n_pre, "candidates kept after the first stage");
  attack->add_option("--sigma1", atk.sigma1, "DCS noise level (0 = backend sigma_max)")->group("Scores");
  attack->add_option("--j", atk.thresholds.j, "one-step generations per caption")->group("Scores");
  attack->add_option("--gamma", atk.thresholds.gamma_frac, "edge vote fraction")->group("Scores");
  attack->add_option("--t-edge", atk.thresholds.t_edge, "Sobel magnitude threshold")->group("Scores");
  attack->add_option("--tau-dcs", atk.thresholds.tau_dcs, "DCS decision threshold")->group("Scores");
  attack->add_option("--tau-ecs", atk.thresholds.tau_ecs, "ECS decision threshold")->group("Scores");
  attack->add_option("--dcs-direction", dcs_direction, "high | low: which DCS side is flagged")
      ->check(CLI::IsMember({"high", "low"}))
      ->group("Scores");
  attack->add_flag("--postfilter,!--no-postfilter", atk.postfilter.enabled, "run the repetition post-filter")
      ->group("Post-filter");
  attack->add_option("--pf-samples", atk.postfilter.n_samples, "full generations per caption")
      ->group("Post-filter");
  attack->add_option("--pf-delta", atk.postfilter.pair_delta, "rmse joining two samples")
      ->group("Post-filter");
  attack->add_option("--pf-min-frac", atk.postfilter.component_min_frac,
                     "component share that flags a caption")
      ->group("Post-filter");
  attack->add_option("--pf-candidates", atk.postfilter.candidates, "top ECS captions to test")
      ->group("Post-filter");
  attack->add_option("--pf-masked", atk.postfilter.use_masked,
                     "decide on masked distances when a mask can be estimated")
      ->group("Post-filter");
  add_gt_options(attack, atk.gt);
  add_backend_options(attack, atk.backend, atk_timeout);
  attack->add_option("--seed", atk.run_seed, "run seed");
  attack->add_option("--workers", atk.workers, "worker threads per stage");
  attack->add_option("--failure-budget", atk.failure_budget, "tolerated failed-caption fraction");
  attack->add_option("--baseline-generations", atk.baseline_generations,
                     "generations of the full-synthesis baseline");
  attack->add_option("--baseline-steps", atk.baseline_steps, "steps per baseline generation");

  // label
  LabelRunConfig lbl;
  long lbl_timeout = 30000;
  auto* label = app.add_subcommand("label", "ground-truth labels for a prompt list");
  configure(label);
  label->add_option("--corpus", lbl.corpus, "reference corpus directory")->required();
  label->add_option("--prompts", lbl.prompts, "caption file to label (default: the corpus captions)");
  label->add_option("--embeddings", lbl.embeddings, "EMB1 file (default corpus/embeddings.emb1)");
  label->add_option("--out", lbl.out_dir, "output directory")->required();
  label->add_option("--workers", lbl.workers, "worker threads");
  add_gt_options(label, lbl.gt);
  add_backend_options(label, lbl.backend, lbl_timeout);

  // report
  std::vector<fs::path> report_runs;
  fs::path report_out;
  auto* report = app.add_subcommand("report", "validate and re-render run reports; overlay several runs");
  configure(report);
  report->add_option("runs", report_runs, "run directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "output directory (default: the run, or . for overlays)");

  // transfer
  TransferRunConfig xfer;
  long xfer_timeout = 30000;
  auto* transfer = app.add_subcommand("transfer", "label a prior run's top prompts on another backend");
  configure(transfer);
  transfer->add_option("--from", xfer.source_run, "prior run directory")->required();
  transfer->add_option("--corpus", xfer.corpus, "reference corpus directory")->required();
  transfer->add_option("--embeddings", xfer.embeddings, "EMB1 file (default corpus/embeddings.emb1)");
  transfer->add_option("--top", xfer.top, "prompts taken from the prior ranking");
  transfer->add_option("--out", xfer.out_dir, "output directory")->required();
  transfer->add_option("--workers", xfer.workers, "worker threads");
  add_gt_options(transfer, xfer.gt);
  add_backend_options(transfer, xfer.backend, xfer_timeout);

  // serve-sim
  fs::path serve_corpus;
  bool serve_dedup = false;
  ServerOptions serve_opts;
  auto* serve = app.add_subcommand("serve-sim", "serve a simulated corpus's model over the wire protocol");
  configure(serve);
  serve->add_option("--corpus", serve_corpus, "simulated corpus directory")->required();
  serve->add_flag("--dedup", serve_dedup, "serve the deduplicated variant");
  serve->add_option("--host", serve_opts.host, "bind address");
  serve->add_option("--port", serve_opts.port, "port (0 = any free port)");
  serve->add_option("--max-concurrent", serve_opts.max_concurrent, "requests before 503");

  const auto args = hoist_config(argc, argv);
  std::vector<const char*> cargs{argv[0]};
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  auto logger = spdlog::stderr_color_mt("vaudit");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(quiet ? spdlog::level::warn
                          : verbose > 0 ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*simulate) return cmd_simulate(sim_cfg, sim_out);
    if (*attack) {
      atk.thresholds.dcs_direction = dcs_direction == "low" ? ScoreDirection::kLowIsVerbatim
                                                            : ScoreDirection::kHighIsVerbatim;
      atk.backend.remote.timeout = std::chrono::milliseconds(atk_timeout);
      atk.echo = echo_of(*attack);
      spdlog::info("attack ({}) on {}", atk.mode, atk.corpus.string());
      const RunReport r = run_attack(atk);
      spdlog::info("wrote {}", (atk.out_dir / "report.json").string());
      if (!quiet) std::cout << summary_text(r);
      return kExitOk;
    }
    if (*label) {
      lbl.backend.remote.timeout = std::chrono::milliseconds(lbl_timeout);
      lbl.echo = echo_of(*label);
      const RunReport r = run_label(lbl);
      spdlog::info("labeled {} captions ({} failed) into {}", r.labels.size(), r.totals.failed,
                   (lbl.out_dir / "labels.jsonl").string());
      return kExitOk;
    }
    if (*report) return cmd_report(report_runs, report_out);
    if (*transfer) {
      xfer.backend.remote.timeout = std::chrono::milliseconds(xfer_timeout);
      xfer.echo = echo_of(*transfer);
      const RunReport r = run_transfer(xfer);
      const auto& t = r.totals;
      std::cout << "retrieval / template / exact: " << t.retrieval << " / " << t.templates << " / "
                << t.exact << "  (non-verbatim " << t.non_verbatim << ", failed " << t.failed << ")\n";
      return kExitOk;
    }
    if (*serve) return cmd_serve(serve_corpus, serve_dedup, serve_opts);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    switch (e.code()) {
      case ErrorCode::kConfig: return kExitConfig;
      case ErrorCode::kFailureBudget: return kExitBudget;
      default: return kExitRuntime;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
