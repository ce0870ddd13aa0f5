#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "json.hpp"

#include "test_support.hpp"
#include "vaudit/error.hpp"
#include "vaudit/report.hpp"

using namespace vaudit;
using nlohmann::json;

namespace {

VerbatimLabel verbatim(CaptionId id, VerbatimKind kind, double d) {
  VerbatimLabel l{id, kind, d, Witness{id, 7, std::nullopt, std::nullopt}, {}};
  if (kind == VerbatimKind::kTemplate) l.witness = Witness{100 + id, 3, 2, 55};
  return l;
}

VerbatimLabel plain(CaptionId id, double d, std::string reason) {
  return {id, VerbatimKind::kNonVerbatim, d, std::nullopt, std::move(reason)};
}

RunReport sample_report() {
  RunReport r;
  r.command = "attack";
  r.mode = "full";
  r.config = {{"attack.mode", "full"}, {"attack.n-pre", "4"}};
  r.whitebox = {{1, 9.5}, {2, 8.25}, {3, 7.0}, {4, 1.5}};
  r.blackbox = {{2, 120, 4}, {1, 80, 4}, {3, 0, 4}, {4, 0, 4}};
  PostfilterResult p1;
  p1.caption_id = 2;
  p1.n_samples = 8;
  p1.largest = 8;
  p1.largest_masked = 8;
  p1.flagged_unmasked = p1.flagged_masked = p1.flagged = true;
  PostfilterResult p2;
  p2.caption_id = 1;
  p2.n_samples = 8;
  p2.largest = 1;
  p2.mask_reason = "degenerate_mask";
  r.postfilter = {p1, p2};
  r.labels = {verbatim(1, VerbatimKind::kTemplate, 0.05), verbatim(2, VerbatimKind::kExact, 0.0),
              plain(3, 0.31, "no_match"),
              plain(4, std::numeric_limits<double>::infinity(), "low_edge_density")};
  r.rankings["whitebox"] = {1, 2, 3, 4};
  r.rankings["blackbox"] = {2, 1, 3, 4};
  r.rankings["postfilter"] = {2};
  r.curves = recompute_curves(r);
  r.ledger["whitebox"] = StageCounts{0, 0, 0, 4};
  r.ledger["blackbox"] = StageCounts{16, 16, 16, 0};
  r.efficiency = EfficiencySummary{500, 16, 4, 4.0, 2000.0};
  r.totals = TransferTable{0, 1, 1, 2, 0};
  r.failures = {{9, "label", "transport", "connection refused"}};
  r.duplication.group_sizes = {{1, 3}, {5, 1}};
  r.duplication.mean_rate = {{"exact", 1.0}};
  r.duplication.rate_counts = {{"exact", 1}};
  r.stage_seconds = {{"blackbox", 0.5}};
  r.wall_seconds = 1.25;
  r.metadata = {{"postfilter_order", kPostfilterOrder}};
  return r;
}

}  // namespace

TEST(Report, JsonRoundTripIsStable) {
  const RunReport r = sample_report();
  EXPECT_NO_THROW(validate_report(r));
  const std::string text = report_to_json(r);
  const RunReport back = report_from_json(text);
  EXPECT_EQ(report_to_json(back), text);
  EXPECT_EQ(back.whitebox, r.whitebox);
  EXPECT_EQ(back.blackbox, r.blackbox);
  EXPECT_EQ(back.postfilter, r.postfilter);
  EXPECT_EQ(back.rankings, r.rankings);
  EXPECT_EQ(back.curves, r.curves);
  EXPECT_EQ(back.ledger, r.ledger);
  EXPECT_EQ(back.efficiency, r.efficiency);
  EXPECT_EQ(back.totals, r.totals);
  EXPECT_EQ(back.failures, r.failures);
  EXPECT_EQ(back.duplication, r.duplication);
  EXPECT_EQ(back.config, r.config);
  EXPECT_EQ(back.labels.size(), r.labels.size());
  EXPECT_NO_THROW(validate_report(back));
}

TEST(Report, NonFiniteDistanceIsNull) {
  const json j = json::parse(report_to_json(sample_report()));
  bool saw_null = false;
  for (const auto& l : j.at("labels")) {
    if (l.at("caption_id") == 4) {
      EXPECT_TRUE(l.at("distance").is_null());
      saw_null = true;
    }
  }
  EXPECT_TRUE(saw_null);
  const auto back = report_from_json(j.dump());
  EXPECT_TRUE(std::isinf(back.labels[3].distance));
}

TEST(Report, TamperedCurvesFailValidation) {
  RunReport r = sample_report();
  r.curves["blackbox"].all.points[0].n_true = 0;
  EXPECT_THROW(validate_report(r), Error);
  json j = json::parse(report_to_json(sample_report()));
  j["labels"][1]["kind"] = "non_verbatim";
  j["labels"][1]["witness"] = nullptr;
  j["labels"][1]["reason"] = "no_match";
  try {
    validate_report(report_from_json(j.dump()));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(Report, ContainmentViolationsFailValidation) {
  RunReport r = sample_report();
  r.blackbox.push_back({77, 1, 4});
  EXPECT_THROW(validate_report(r), Error);
  r = sample_report();
  r.postfilter[1].caption_id = 88;
  EXPECT_THROW(validate_report(r), Error);
  r = sample_report();
  r.rankings["postfilter"] = {2, 1};  // 1 is not flagged
  r.curves = recompute_curves(r);
  EXPECT_THROW(validate_report(r), Error);
  r = sample_report();
  r.rankings["label"] = {5};  // unlabeled
  EXPECT_THROW(validate_report(r), Error);
}

TEST(Report, CorruptInputIsConfigError) {
  for (const std::string text : {"", "{", "[]", "{\"format_version\": 1}", "null"}) {
    try {
      report_from_json(text);
      FAIL() << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kConfig) << text;
    }
  }
  json j = json::parse(report_to_json(sample_report()));
  j["format_version"] = 99;
  EXPECT_THROW(report_from_json(j.dump()), Error);
  j = json::parse(report_to_json(sample_report()));
  j["ledger"]["stages"] = json::object();
  EXPECT_THROW(report_from_json(j.dump()), Error);
}

TEST(Labels, JsonlMergesErrorRecordsAndReaderSkipsThem) {
  const RunReport r = sample_report();
  const std::string text = labels_jsonl(r.labels, r.failures);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n' ? 1 : 0;
  EXPECT_EQ(lines, 5u);
  EXPECT_NE(text.find("\"error\""), std::string::npos);
  vaudit::testing::TempDir dir("labels");
  write_text_file(dir / "labels.jsonl", text);
  const auto back = read_labels(dir / "labels.jsonl");
  ASSERT_EQ(back.size(), 4u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back[i], r.labels[i]);
  EXPECT_EQ(label_from_json(label_to_json(r.labels[0])), r.labels[0]);
  EXPECT_THROW(label_from_json("{\"caption_id\": 1}"), Error);
}

TEST(Labels, EmptyInputGivesEmptyJsonl) {
  EXPECT_EQ(labels_jsonl({}, {}), "");
  EXPECT_EQ(dcs_jsonl({}), "");
  EXPECT_EQ(ecs_jsonl({}), "");
}

TEST(Report, OutputsRenderAndSummaryMentionsStages) {
  vaudit::testing::TempDir dir("report");
  const RunReport r = sample_report();
  write_run_outputs(r, dir.path());
  for (const char* f : {"report.json", "dcs.jsonl", "ecs.jsonl", "postfilter.jsonl", "labels.jsonl",
                        "failures.jsonl", "precision.svg", "duplication.svg", "summary.txt"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_text_file(dir / "ecs.jsonl"), ecs_jsonl(r.blackbox));
  const std::string summary = summary_text(r);
  for (const char* s : {"whitebox", "blackbox", "postfilter", "2000"}) {
    EXPECT_NE(summary.find(s), std::string::npos) << s;
  }
  const std::string svg = precision_svg({{"a", r.curves.at("blackbox").all}}, "t");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(overlay_svg({{"one", r}, {"two", r}}).find("two"), std::string::npos);
}
