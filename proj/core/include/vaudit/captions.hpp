#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vaudit {

using CaptionId = std::uint64_t;

/// The attack's input unit: a prompt and, optionally, the path of its paired
/// reference image relative to the corpus root.
struct CaptionRecord {
  CaptionId id = 0;
  std::string text;
  std::optional<std::string> image;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

/// Caption file: one JSON object per line, {"id": u64, "text": str,
/// "image": optional str}. Blank lines are skipped.
std::vector<CaptionRecord> read_captions(const std::filesystem::path& path);
void write_captions(const std::filesystem::path& path,
                    const std::vector<CaptionRecord>& captions);

std::string caption_to_json_line(const CaptionRecord& caption);
CaptionRecord caption_from_json_line(std::string_view line);

/// Lowercase + collapse runs of whitespace + trim.
std::string normalize_prompt(std::string_view text);

}  // namespace vaudit
