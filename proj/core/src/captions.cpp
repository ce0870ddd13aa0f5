#include "vaudit/captions.hpp"

#include <cctype>
#include <fstream>

#include "json.hpp"
#include "vaudit/error.hpp"

namespace vaudit {

using nlohmann::json;

std::string caption_to_json_line(const CaptionRecord& caption) {
  json j = {{"id", caption.id}, {"text", caption.text}};
  if (caption.image) j["image"] = *caption.image;
  return j.dump();
}

CaptionRecord caption_from_json_line(std::string_view line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("caption line: ") + e.what());
  }
  if (!j.is_object() || !j.contains("id") || !j.contains("text") ||
      !j["id"].is_number_unsigned() || !j["text"].is_string()) {
    throw Error(ErrorCode::kIo, "caption line needs unsigned \"id\" and string \"text\"");
  }
  CaptionRecord rec;
  rec.id = j["id"].get<CaptionId>();
  rec.text = j["text"].get<std::string>();
  if (j.contains("image") && !j["image"].is_null()) {
    if (!j["image"].is_string()) throw Error(ErrorCode::kIo, "caption \"image\" must be a string");
    rec.image = j["image"].get<std::string>();
  }
  return rec;
}

std::vector<CaptionRecord> read_captions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open caption file " + path.string());
  std::vector<CaptionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(caption_from_json_line(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::kIo, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_captions(const std::filesystem::path& path,
                    const std::vector<CaptionRecord>& captions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write caption file " + path.string());
  for (const auto& c : captions) out << caption_to_json_line(c) << '\n';
}

std::string normalize_prompt(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace vaudit
