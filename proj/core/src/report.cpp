#include "vaudit/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "vaudit/error.hpp"

namespace vaudit {

namespace {

using json = nlohmann::json;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

json witness_json(const Witness& w) {
  json j = json::object();
  if (w.reference_id) j["reference_id"] = *w.reference_id;
  if (w.seed) j["seed"] = *w.seed;
  if (w.rank) j["rank"] = *w.rank;
  if (w.mask_id) j["mask_id"] = *w.mask_id;
  return j;
}

Witness witness_from(const json& j) {
  Witness w;
  if (j.contains("reference_id")) w.reference_id = j["reference_id"].get<ItemId>();
  if (j.contains("seed")) w.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("rank")) w.rank = j["rank"].get<std::uint32_t>();
  if (j.contains("mask_id")) w.mask_id = j["mask_id"].get<GroupId>();
  return w;
}

json label_json(const VerbatimLabel& l) {
  json j = {{"caption_id", l.caption_id},
            {"kind", to_string(l.kind)},
            {"distance", finite_or_null(l.distance)},
            {"witness", l.witness ? witness_json(*l.witness) : json(nullptr)}};
  if (!l.reason.empty()) j["reason"] = l.reason;
  return j;
}

VerbatimLabel label_from(const json& j) {
  VerbatimLabel l;
  l.caption_id = j.at("caption_id").get<CaptionId>();
  l.kind = verbatim_kind_from_string(j.at("kind").get<std::string>());
  l.distance = number_or_inf(j.at("distance"));
  if (j.contains("witness") && !j["witness"].is_null()) l.witness = witness_from(j["witness"]);
  l.reason = j.value("reason", std::string{});
  return l;
}

json failure_json(const CaptionFailure& f) {
  return {{"caption_id", f.caption_id}, {"stage", f.stage}, {"error", f.code}, {"message", f.message}};
}

CaptionFailure failure_from(const json& j) {
  return {j.at("caption_id").get<CaptionId>(), j.at("stage").get<std::string>(),
          j.at("error").get<std::string>(), j.at("message").get<std::string>()};
}

json postfilter_json(const PostfilterResult& r) {
  return {{"caption_id", r.caption_id},
          {"n_samples", r.n_samples},
          {"largest", r.largest},
          {"largest_masked", r.largest_masked ? json(*r.largest_masked) : json(nullptr)},
          {"mask_reason", r.mask_reason},
          {"flagged_unmasked", r.flagged_unmasked},
          {"flagged_masked", r.flagged_masked},
          {"flagged", r.flagged}};
}

PostfilterResult postfilter_from(const json& j) {
  PostfilterResult r;
  r.caption_id = j.at("caption_id").get<CaptionId>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  r.largest = j.at("largest").get<std::size_t>();
  if (!j.at("largest_masked").is_null()) r.largest_masked = j["largest_masked"].get<std::size_t>();
  r.mask_reason = j.at("mask_reason").get<std::string>();
  r.flagged_unmasked = j.at("flagged_unmasked").get<bool>();
  r.flagged_masked = j.at("flagged_masked").get<bool>();
  r.flagged = j.at("flagged").get<bool>();
  return r;
}

json curve_json(const PrecisionCurve& c) {
  json a = json::array();
  for (const auto& p : c.points) a.push_back({p.n_selected, p.n_true, p.precision});
  return a;
}

PrecisionCurve curve_from(const json& j) {
  PrecisionCurve c;
  for (const auto& p : j) {
    c.points.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>(), p.at(2).get<double>()});
  }
  return c;
}

json counts_json(const StageCounts& s) {
  return {{"generate_calls", s.generate_calls},
          {"timestep_sum", s.timestep_sum},
          {"one_step_calls", s.one_step_calls},
          {"denoise_calls", s.denoise_calls}};
}

StageCounts counts_from(const json& j) {
  return {j.at("generate_calls").get<std::uint64_t>(), j.at("timestep_sum").get<std::uint64_t>(),
          j.at("one_step_calls").get<std::uint64_t>(), j.at("denoise_calls").get<std::uint64_t>()};
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string final_stage(const RunReport& r) {
  for (const char* s : {"postfilter", "blackbox", "whitebox"}) {
    if (r.rankings.contains(s)) return s;
  }
  return {};
}

}  // namespace

std::string report_to_json(const RunReport& r) {
  json config = json::object();
  for (const auto& [k, v] : r.config) config[k] = v;

  json wb = json::array();
  for (const auto& s : r.whitebox) wb.push_back({{"caption_id", s.caption_id}, {"dcs", s.value}});
  json bb = json::array();
  for (const auto& s : r.blackbox) {
    bb.push_back({{"caption_id", s.caption_id}, {"ecs", s.value}, {"j", s.j_used}});
  }
  json pf = json::array();
  for (const auto& p : r.postfilter) pf.push_back(postfilter_json(p));
  json labels = json::array();
  for (const auto& l : r.labels) labels.push_back(label_json(l));
  json curves = json::object();
  for (const auto& [stage, c] : r.curves) {
    curves[stage] = {{"all", curve_json(c.all)},
                     {"exact", curve_json(c.exact)},
                     {"template", curve_json(c.templates)},
                     {"retrieval", curve_json(c.retrieval)}};
  }
  json ledger_stages = json::object();
  StageCounts totals;
  for (const auto& [stage, counts] : r.ledger) {
    ledger_stages[stage] = counts_json(counts);
    totals += counts;
  }
  json failures = json::array();
  for (const auto& f : r.failures) failures.push_back(failure_json(f));
  json sizes = json::object();
  for (const auto& [size, n] : r.duplication.group_sizes) sizes[std::to_string(size)] = n;

  json j = {
      {"format_version", r.format_version},
      {"command", r.command},
      {"mode", r.mode},
      {"config", config},
      {"scores", {{"whitebox", wb}, {"blackbox", bb}}},
      {"postfilter", pf},
      {"rankings", r.rankings},
      {"labels", labels},
      {"curves", curves},
      {"ledger", {{"stages", ledger_stages}, {"totals", counts_json(totals)}}},
      {"totals", {{"retrieval", r.totals.retrieval},
                  {"template", r.totals.templates},
                  {"exact", r.totals.exact},
                  {"non_verbatim", r.totals.non_verbatim},
                  {"failed", r.totals.failed}}},
      {"failures", failures},
      {"duplication", {{"group_sizes", sizes},
                       {"mean_multimodal_rate", r.duplication.mean_rate},
                       {"counts", r.duplication.rate_counts}}},
      {"wall_clock", {{"seconds", r.wall_seconds}, {"stages", r.stage_seconds}}},
      {"metadata", r.metadata},
  };
  if (r.efficiency) {
    const auto& e = *r.efficiency;
    j["efficiency"] = {{"baseline_generations", e.baseline_generations},
                       {"baseline_steps", e.baseline_steps},
                       {"captions", e.captions},
                       {"evaluations_per_caption", e.evaluations_per_caption},
                       {"ratio", e.ratio}};
  }
  return j.dump(2) + "\n";
}

RunReport report_from_json(const std::string& text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    r.format_version = j.at("format_version").get<int>();
    if (r.format_version != kReportFormatVersion) {
      throw Error(ErrorCode::kConfig, "unsupported report format_version " +
                                          std::to_string(r.format_version));
    }
    r.command = j.at("command").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    for (const auto& [k, v] : j.at("config").items()) r.config.emplace_back(k, v.get<std::string>());
    for (const auto& s : j.at("scores").at("whitebox")) {
      r.whitebox.push_back({s.at("caption_id").get<CaptionId>(), s.at("dcs").get<double>()});
    }
    for (const auto& s : j.at("scores").at("blackbox")) {
      r.blackbox.push_back({s.at("caption_id").get<CaptionId>(), s.at("ecs").get<std::uint64_t>(),
                            s.at("j").get<std::uint32_t>()});
    }
    for (const auto& p : j.at("postfilter")) r.postfilter.push_back(postfilter_from(p));
    r.rankings = j.at("rankings").get<std::map<std::string, std::vector<CaptionId>>>();
    for (const auto& l : j.at("labels")) r.labels.push_back(label_from(l));
    for (const auto& [stage, c] : j.at("curves").items()) {
      r.curves[stage] = {curve_from(c.at("all")), curve_from(c.at("exact")),
                         curve_from(c.at("template")), curve_from(c.at("retrieval"))};
    }
    for (const auto& [stage, c] : j.at("ledger").at("stages").items()) r.ledger[stage] = counts_from(c);
    const auto& t = j.at("totals");
    r.totals = {t.at("retrieval").get<std::size_t>(), t.at("template").get<std::size_t>(),
                t.at("exact").get<std::size_t>(), t.at("non_verbatim").get<std::size_t>(),
                t.at("failed").get<std::size_t>()};
    for (const auto& f : j.at("failures")) r.failures.push_back(failure_from(f));
    const auto& d = j.at("duplication");
    for (const auto& [size, n] : d.at("group_sizes").items()) {
      r.duplication.group_sizes[std::stoull(size)] = n.get<std::size_t>();
    }
    r.duplication.mean_rate = d.at("mean_multimodal_rate").get<std::map<std::string, double>>();
    r.duplication.rate_counts = d.at("counts").get<std::map<std::string, std::size_t>>();
    r.wall_seconds = j.at("wall_clock").at("seconds").get<double>();
    r.stage_seconds = j.at("wall_clock").at("stages").get<std::map<std::string, double>>();
    r.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    if (j.contains("efficiency")) {
      const auto& e = j["efficiency"];
      r.efficiency = EfficiencySummary{e.at("baseline_generations").get<std::uint64_t>(),
                                       e.at("baseline_steps").get<std::uint64_t>(),
                                       e.at("captions").get<std::uint64_t>(),
                                       e.at("evaluations_per_caption").get<double>(),
                                       e.at("ratio").get<double>()};
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("corrupt report: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::kConfig, std::string("corrupt report: ") + e.what());
  }
  if (r.ledger.empty() && r.command == "attack") {
    throw Error(ErrorCode::kConfig, "corrupt report: attack report without ledger data");
  }
  return r;
}

RunReport read_report(const std::filesystem::path& path) {
  return report_from_json(read_text_file(path));
}

std::map<std::string, StageCurves> recompute_curves(const RunReport& report) {
  LabelMap labels;
  for (const auto& l : report.labels) labels.emplace(l.caption_id, l);
  std::map<std::string, StageCurves> out;
  for (const auto& [stage, ranked] : report.rankings) out[stage] = evaluate_stage(ranked, labels);
  return out;
}

void validate_report(const RunReport& report) {
  std::map<std::string, StageCurves> recomputed;
  try {
    recomputed = recompute_curves(report);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, std::string("invalid report: ") + e.what());
  }
  if (recomputed != report.curves) {
    throw Error(ErrorCode::kConfig, "invalid report: stored curves differ from recomputation");
  }
  auto ids = [](const auto& scores) {
    std::unordered_set<CaptionId> s;
    for (const auto& x : scores) s.insert(x.caption_id);
    return s;
  };
  const auto wb = ids(report.whitebox);
  const auto bb = ids(report.blackbox);
  if (report.mode == "full") {
    for (CaptionId id : bb) {
      if (!wb.contains(id)) {
        throw Error(ErrorCode::kConfig, "invalid report: blackbox caption " + std::to_string(id) +
                                            " was not emitted by the whitebox prefilter");
      }
    }
  }
  std::unordered_set<CaptionId> flagged;
  for (const auto& p : report.postfilter) {
    if (!bb.contains(p.caption_id)) {
      throw Error(ErrorCode::kConfig, "invalid report: postfilter caption " +
                                          std::to_string(p.caption_id) +
                                          " was not emitted by the blackbox stage");
    }
    if (p.flagged) flagged.insert(p.caption_id);
  }
  if (auto it = report.rankings.find("postfilter"); it != report.rankings.end()) {
    for (CaptionId id : it->second) {
      if (!flagged.contains(id)) {
        throw Error(ErrorCode::kConfig, "invalid report: unflagged caption " + std::to_string(id) +
                                            " in the postfilter ranking");
      }
    }
  }
}

std::string dcs_jsonl(std::span<const DcsScore> scores) {
  std::string out;
  for (const auto& s : scores) {
    out += json{{"caption_id", s.caption_id}, {"dcs", s.value}}.dump() + "\n";
  }
  return out;
}

std::string ecs_jsonl(std::span<const EcsScore> scores) {
  std::string out;
  for (const auto& s : scores) {
    out += json{{"caption_id", s.caption_id}, {"ecs", s.value}, {"j", s.j_used}}.dump() + "\n";
  }
  return out;
}

std::string label_to_json(const VerbatimLabel& label) { return label_json(label).dump(); }

VerbatimLabel label_from_json(const std::string& line) {
  try {
    return label_from(json::parse(line));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("bad label record: ") + e.what());
  }
}

std::string labels_jsonl(std::span<const VerbatimLabel> labels,
                         std::span<const CaptionFailure> failures) {
  // Labels and error records interleaved by caption id.
  std::vector<std::pair<CaptionId, std::string>> lines;
  for (const auto& l : labels) lines.emplace_back(l.caption_id, label_json(l).dump());
  for (const auto& f : failures) {
    lines.emplace_back(f.caption_id,
                       json{{"caption_id", f.caption_id}, {"error", f.code}, {"message", f.message}}.dump());
  }
  std::stable_sort(lines.begin(), lines.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::string out;
  for (const auto& [id, line] : lines) out += line + "\n";
  return out;
}

std::string postfilter_jsonl(std::span<const PostfilterResult> results) {
  std::string out;
  for (const auto& r : results) out += postfilter_json(r).dump() + "\n";
  return out;
}

std::string failures_jsonl(std::span<const CaptionFailure> failures) {
  std::string out;
  for (const auto& f : failures) out += failure_json(f).dump() + "\n";
  return out;
}

std::vector<VerbatimLabel> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::vector<VerbatimLabel> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.contains("error")) continue;
      out.push_back(label_from(j));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
    }
  }
  return out;
}

std::string precision_svg(const std::vector<std::pair<std::string, PrecisionCurve>>& series,
                          const std::string& title) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 160, kTop = 40, kBottom = 50;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  std::size_t xmax = 1;
  for (const auto& [name, c] : series) {
    if (!c.points.empty()) xmax = std::max(xmax, c.points.back().n_selected);
  }
  auto px = [&](double x) { return kLeft + pw * x / static_cast<double>(xmax); };
  auto py = [&](double y) { return kTop + ph * (1.0 - y); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft + pw << "\" y2=\""
    << py(0) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << py(0) << "\" x2=\"" << kLeft << "\" y2=\"" << py(1)
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = i / 4.0;
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(y) + 4 << "\" text-anchor=\"end\">"
      << fmt("%.2f", y) << "</text>\n";
    const double x = static_cast<double>(xmax) * i / 4.0;
    s << "<text x=\"" << px(x) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">"
      << fmt("%.0f", x) << "</text>\n";
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
    << "\" text-anchor=\"middle\">captions selected</text>\n";
  s << "<text x=\"16\" y=\"" << kTop + ph / 2 << "\" transform=\"rotate(-90 16 " << kTop + ph / 2
    << ")\" text-anchor=\"middle\">precision</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& [name, c] = series[i];
    const char* color = kPalette[i % std::size(kPalette)];
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : c.points) {
      s << fmt("%.2f", px(static_cast<double>(p.n_selected))) << ','
        << fmt("%.2f", py(p.precision)) << ' ';
    }
    s << "\"/>\n";
    const double ly = kTop + 16.0 * static_cast<double>(i);
    s << "<line x1=\"" << kLeft + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + pw + 32
      << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << kLeft + pw + 36 << "\" y=\"" << ly + 4 << "\">" << xml_escape(name)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string duplication_svg(const DuplicationSummary& dup) {
  constexpr double kW = 640, kH = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  std::size_t ymax = 1;
  for (const auto& [size, n] : dup.group_sizes) ymax = std::max(ymax, n);
  const double bars = std::max<double>(1.0, static_cast<double>(dup.group_sizes.size()));
  const double bw = pw / bars;

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"14\">duplicate groups by size (log10 count)</text>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\""
    << kTop + ph << "\" stroke=\"black\"/>\n";
  const double lmax = std::log10(static_cast<double>(ymax) + 1.0);
  std::size_t i = 0;
  for (const auto& [size, n] : dup.group_sizes) {
    const double h = ph * std::log10(static_cast<double>(n) + 1.0) / lmax;
    const double x = kLeft + bw * static_cast<double>(i) + 2;
    s << "<rect x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", kTop + ph - h) << "\" width=\""
      << fmt("%.2f", std::max(1.0, bw - 4)) << "\" height=\"" << fmt("%.2f", h)
      << "\" fill=\"" << kPalette[0] << "\"/>\n";
    s << "<text x=\"" << fmt("%.2f", x + bw / 2 - 2) << "\" y=\"" << kTop + ph + 16
      << "\" text-anchor=\"middle\">" << size << "</text>\n";
    s << "<text x=\"" << fmt("%.2f", x + bw / 2 - 2) << "\" y=\"" << fmt("%.2f", kTop + ph - h - 4)
      << "\" text-anchor=\"middle\">" << n << "</text>\n";
    ++i;
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10
    << "\" text-anchor=\"middle\">group size</text>\n";
  s << "</svg>\n";
  return s.str();
}

std::string summary_text(const RunReport& r) {
  std::ostringstream s;
  char line[256];
  s << "vaudit " << r.command;
  if (!r.mode.empty()) s << " (" << r.mode << ")";
  s << "\n\n";
  if (!r.curves.empty()) {
    std::snprintf(line, sizeof line, "%-12s %9s %10s %9s %7s %10s %10s\n", "stage", "selected",
                  "retrieval", "template", "exact", "verbatims", "precision");
    s << line;
    for (const char* stage : {"whitebox", "blackbox", "postfilter", "label", "transfer"}) {
      auto it = r.curves.find(stage);
      if (it == r.curves.end()) continue;
      const auto& c = it->second;
      auto last = [](const PrecisionCurve& p) { return p.points.empty() ? 0 : p.points.back().n_true; };
      const std::size_t n = c.all.points.empty() ? 0 : c.all.points.back().n_selected;
      const double prec = c.all.points.empty() ? 0.0 : c.all.points.back().precision;
      std::snprintf(line, sizeof line, "%-12s %9zu %10zu %9zu %7zu %10zu %10.4f\n", stage, n,
                    last(c.retrieval), last(c.templates), last(c.exact), last(c.all), prec);
      s << line;
    }
    s << "\n";
  }
  s << "verbatims extracted (retrieval / template / exact): " << r.totals.retrieval << " / "
    << r.totals.templates << " / " << r.totals.exact << "  (non-verbatim " << r.totals.non_verbatim
    << ", failed " << r.totals.failed << ")\n\n";
  if (!r.ledger.empty()) {
    std::snprintf(line, sizeof line, "%-12s %15s %13s %15s %14s\n", "ledger", "generate_calls",
                  "timestep_sum", "one_step_calls", "denoise_calls");
    s << line;
    for (const auto& [stage, c] : r.ledger) {
      std::snprintf(line, sizeof line, "%-12s %15llu %13llu %15llu %14llu\n", stage.c_str(),
                    static_cast<unsigned long long>(c.generate_calls),
                    static_cast<unsigned long long>(c.timestep_sum),
                    static_cast<unsigned long long>(c.one_step_calls),
                    static_cast<unsigned long long>(c.denoise_calls));
      s << line;
    }
  }
  if (r.efficiency) {
    const auto& e = *r.efficiency;
    std::snprintf(line, sizeof line,
                  "\nefficiency: (%llu gens x %llu steps) / %.2f evaluations per caption = %.1fx\n",
                  static_cast<unsigned long long>(e.baseline_generations),
                  static_cast<unsigned long long>(e.baseline_steps), e.evaluations_per_caption,
                  e.ratio);
    s << line;
  }
  if (!r.duplication.mean_rate.empty()) {
    s << "\nmean multimodal duplication rate by label:\n";
    for (const auto& [kind, rate] : r.duplication.mean_rate) {
      std::snprintf(line, sizeof line, "  %-13s %.4f  (n=%zu)\n", kind.c_str(), rate,
                    r.duplication.rate_counts.count(kind) ? r.duplication.rate_counts.at(kind) : 0);
      s << line;
    }
  }
  if (!r.failures.empty()) s << "\nfailed captions: " << r.failures.size() << "\n";
  return s.str();
}

void render_report(const RunReport& report, const std::filesystem::path& dir) {
  std::vector<std::pair<std::string, PrecisionCurve>> series;
  for (const char* stage : {"whitebox", "blackbox", "postfilter", "label", "transfer"}) {
    auto it = report.curves.find(stage);
    if (it != report.curves.end()) series.emplace_back(stage, it->second.all);
  }
  write_text_file(dir / "precision.svg", precision_svg(series, "precision vs. captions selected"));
  write_text_file(dir / "duplication.svg", duplication_svg(report.duplication));
  write_text_file(dir / "summary.txt", summary_text(report));
}

std::string overlay_svg(const std::vector<std::pair<std::string, RunReport>>& runs) {
  std::vector<std::pair<std::string, PrecisionCurve>> series;
  for (const auto& [name, r] : runs) {
    const std::string stage = final_stage(r);
    if (stage.empty()) continue;
    auto it = r.curves.find(stage);
    if (it != r.curves.end()) series.emplace_back(name + " " + stage, it->second.all);
  }
  return precision_svg(series, "precision vs. captions selected (overlay)");
}

void write_run_outputs(const RunReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string());
  write_text_file(dir / "report.json", report_to_json(report));
  if (report.command == "attack") {
    if (report.mode != "blackbox") write_text_file(dir / "dcs.jsonl", dcs_jsonl(report.whitebox));
    if (report.mode != "whitebox") {
      write_text_file(dir / "ecs.jsonl", ecs_jsonl(report.blackbox));
      write_text_file(dir / "postfilter.jsonl", postfilter_jsonl(report.postfilter));
    }
  }
  std::vector<CaptionFailure> label_failures;
  for (const auto& f : report.failures) {
    if (f.stage == "label") label_failures.push_back(f);
  }
  write_text_file(dir / "labels.jsonl", labels_jsonl(report.labels, label_failures));
  write_text_file(dir / "failures.jsonl", failures_jsonl(report.failures));
  render_report(report, dir);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace vaudit
