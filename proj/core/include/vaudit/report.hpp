#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vaudit/groundtruth.hpp"
#include "vaudit/ledger.hpp"
#include "vaudit/pipeline.hpp"
#include "vaudit/scoring.hpp"

namespace vaudit {

inline constexpr int kReportFormatVersion = 1;
inline constexpr const char* kPostfilterOrder = "filter-then-preserve-ecs-order";

struct EfficiencySummary {
  std::uint64_t baseline_generations = 500;
  std::uint64_t baseline_steps = 16;
  std::uint64_t captions = 0;                // blackbox candidates
  double evaluations_per_caption = 0.0;      // blackbox timestep_sum / captions
  double ratio = 0.0;

  friend bool operator==(const EfficiencySummary&, const EfficiencySummary&) = default;
};

struct DuplicationSummary {
  std::map<std::size_t, std::size_t> group_sizes;   // size -> number of groups
  // Mean multimodal duplication rate of labeled captions, keyed by label
  // kind ("exact", ..., "non_verbatim"), with the caption counts behind it.
  std::map<std::string, double> mean_rate;
  std::map<std::string, std::size_t> rate_counts;

  friend bool operator==(const DuplicationSummary&, const DuplicationSummary&) = default;
};

/// Everything a run produced. Self-contained: curves can be recomputed from
/// `rankings` and `labels` without touching the backend.
struct RunReport {
  int format_version = kReportFormatVersion;
  std::string command;   // attack | label | transfer
  std::string mode;      // whitebox | blackbox | full (attack only)
  std::vector<std::pair<std::string, std::string>> config;  // effective settings
  std::vector<DcsScore> whitebox;
  std::vector<EcsScore> blackbox;
  std::vector<PostfilterResult> postfilter;
  std::map<std::string, std::vector<CaptionId>> rankings;   // stage -> curve order
  std::vector<VerbatimLabel> labels;                        // ascending caption id
  std::map<std::string, StageCurves> curves;
  std::map<std::string, StageCounts> ledger;
  std::optional<EfficiencySummary> efficiency;
  TransferTable totals;
  std::vector<CaptionFailure> failures;
  DuplicationSummary duplication;
  std::map<std::string, double> stage_seconds;
  double wall_seconds = 0.0;
  std::map<std::string, std::string> metadata;
};

std::string report_to_json(const RunReport& report);
/// Throws kConfig with a validation message on malformed input.
RunReport report_from_json(const std::string& text);
RunReport read_report(const std::filesystem::path& path);

std::map<std::string, StageCurves> recompute_curves(const RunReport& report);
/// Throws kConfig when stored curves differ from the recomputation, a ranking
/// references an unlabeled caption, or stage containment is violated.
void validate_report(const RunReport& report);

// JSONL records, one per line, '\n' terminated.
std::string dcs_jsonl(std::span<const DcsScore> scores);
std::string ecs_jsonl(std::span<const EcsScore> scores);
std::string labels_jsonl(std::span<const VerbatimLabel> labels,
                         std::span<const CaptionFailure> failures = {});
std::string postfilter_jsonl(std::span<const PostfilterResult> results);
std::string failures_jsonl(std::span<const CaptionFailure> failures);

std::string label_to_json(const VerbatimLabel& label);
VerbatimLabel label_from_json(const std::string& line);
/// Labels from a labels.jsonl file; error records are skipped.
std::vector<VerbatimLabel> read_labels(const std::filesystem::path& path);

/// Precision-vs-selected chart; one polyline per (name, curve).
std::string precision_svg(const std::vector<std::pair<std::string, PrecisionCurve>>& series,
                          const std::string& title);
std::string duplication_svg(const DuplicationSummary& dup);
/// Table of per-stage verbatim counts and precision, plus ledger totals.
std::string summary_text(const RunReport& report);

/// report.json, the JSONL files, precision.svg, duplication.svg, summary.txt.
void write_run_outputs(const RunReport& report, const std::filesystem::path& dir);
/// precision.svg, duplication.svg and summary.txt from a stored report.
void render_report(const RunReport& report, const std::filesystem::path& dir);
/// Side-by-side overlay of the final-stage curves of several runs.
std::string overlay_svg(const std::vector<std::pair<std::string, RunReport>>& runs);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace vaudit
