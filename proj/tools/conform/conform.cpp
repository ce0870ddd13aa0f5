#include "conform.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "httplib.h"
#include "json.hpp"
#include "vaudit/error.hpp"
#include "vaudit/png_io.hpp"
#include "vaudit/remote.hpp"
#include "vaudit/scoring.hpp"

namespace vaudit::conform {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kFixtures = "fixtures.json";
constexpr const char* kHealthSchema = "health_schema.json";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + p.string());
}

struct Exchange {
  int status = 0;
  std::string body;
  std::string content_type;
  std::string proto;
  std::string request_id;
};

class Wire {
 public:
  explicit Wire(const std::string& url) : client_(url) {
    client_.set_connection_timeout(5, 0);
    client_.set_read_timeout(30, 0);
  }

  std::optional<Exchange> send(const std::string& method, const std::string& path,
                               const std::string& body, bool with_proto) {
    httplib::Headers headers;
    const std::string id = "conform-" + std::to_string(++counter_);
    headers.emplace(kRequestIdHeader, id);
    if (with_proto) headers.emplace(kProtoHeader, kProtoVersion);
    auto res = method == "GET" ? client_.Get(path, headers)
                               : client_.Post(path, headers, body, "application/json");
    if (!res) return std::nullopt;
    Exchange x{res->status, res->body, res->get_header_value("Content-Type"),
               res->get_header_value(kProtoHeader), res->get_header_value(kRequestIdHeader)};
    last_id_ = id;
    return x;
  }

  const std::string& last_id() const { return last_id_; }

 private:
  httplib::Client client_;
  unsigned long counter_ = 0;
  std::string last_id_;
};

bool type_matches(const json& v, const std::string& type) {
  if (type == "string") return v.is_string();
  if (type == "number") return v.is_number();
  if (type == "integer") return v.is_number_integer();
  if (type == "boolean") return v.is_boolean();
  return false;
}

// Headers every response must carry.
std::string header_problem(const Exchange& x, const std::string& sent_id) {
  if (x.proto != kProtoVersion) return std::string("missing ") + kProtoHeader + ": " + kProtoVersion;
  if (x.request_id != sent_id) return std::string(kRequestIdHeader) + " not echoed";
  return {};
}

std::string error_body_problem(const Exchange& x) {
  try {
    const json j = json::parse(x.body);
    if (j.is_object() && j.contains("error") && j["error"].is_string() && j.contains("message") &&
        j["message"].is_string()) {
      return {};
    }
  } catch (const json::exception&) {
  }
  return "error body is not {\"error\": str, \"message\": str}";
}

std::string generate_body(const std::string& caption, std::uint64_t seed, std::uint32_t timesteps) {
  return json{{"caption", caption}, {"seed", seed}, {"timesteps", timesteps}}.dump();
}

std::string dcs_body(const std::string& caption, std::uint64_t seed, double sigma) {
  return json{{"caption", caption}, {"noise_seed", seed}, {"sigma", sigma}}.dump();
}

}  // namespace

SimulationConfig reference_model_config() {
  SimulationConfig cfg;
  cfg.corpus_size = 100;
  cfg.exact_frac = 0.05;
  cfg.template_frac = 0.05;
  cfg.seed = 0xC0F0A11ULL;
  return cfg;
}

void write_golden(const fs::path& dir) {
  Simulation sim(reference_model_config());
  DenoiserDcs dcs(sim);
  const auto caps = sim.capabilities();
  fs::create_directories(dir);

  auto first_of = [&](PlantKind kind) -> const CaptionRecord& {
    for (const auto& c : sim.captions()) {
      if (sim.kind(c.id) == kind) return c;
    }
    throw Error(ErrorCode::kConfig, "reference model lacks a plant kind");
  };
  const std::vector<std::pair<std::string, std::string>> prompts = {
      {"exact", first_of(PlantKind::kExact).text},
      {"template", first_of(PlantKind::kTemplate).text},
      {"plain", first_of(PlantKind::kNone).text}};

  json generate = json::array();
  json dcs_cases = json::array();
  for (const auto& [name, text] : prompts) {
    for (std::uint32_t t : {1u, caps.default_timesteps}) {
      for (std::uint64_t seed : {7ULL, 1234567890123ULL}) {
        const std::string case_name =
            name + "_t" + std::to_string(t) + "_s" + std::to_string(seed);
        const CaptionRecord c{0, text, std::nullopt};
        const auto png = encode_png(sim.generate(c, seed, t));
        write_file(dir / (case_name + ".png"), std::string(png.begin(), png.end()));
        generate.push_back({{"name", case_name},
                            {"body", generate_body(text, seed, t)},
                            {"png", case_name + ".png"}});
      }
    }
    for (double sigma : {caps.sigma_max, 1.0}) {
      const std::uint64_t seed = 99;
      const CaptionRecord c{0, text, std::nullopt};
      dcs_cases.push_back({{"name", name + "_sigma" + std::to_string(static_cast<int>(sigma))},
                           {"body", dcs_body(text, seed, sigma)},
                           {"dcs", dcs.dcs(c, seed, sigma)}});
    }
  }

  const std::string known = prompts.front().second;
  const json errors = json::array({
      {{"name", "missing_proto_header"}, {"method", "GET"}, {"path", "/health"},
       {"proto", false}, {"body", ""}, {"status", 400}, {"reference_only", false}},
      {{"name", "malformed_generate_json"}, {"method", "POST"}, {"path", "/generate"},
       {"proto", true}, {"body", "{\"caption\": "}, {"status", 400}, {"reference_only", false}},
      {{"name", "generate_missing_seed"}, {"method", "POST"}, {"path", "/generate"},
       {"proto", true}, {"body", json{{"caption", known}, {"timesteps", 1}}.dump()},
       {"status", 400}, {"reference_only", false}},
      {{"name", "generate_zero_timesteps"}, {"method", "POST"}, {"path", "/generate"},
       {"proto", true}, {"body", generate_body(known, 1, 0)}, {"status", 400},
       {"reference_only", false}},
      {{"name", "dcs_sigma_zero"}, {"method", "POST"}, {"path", "/dcs"}, {"proto", true},
       {"body", dcs_body(known, 1, 0.0)}, {"status", 400}, {"reference_only", false}},
      {{"name", "dcs_sigma_negative"}, {"method", "POST"}, {"path", "/dcs"}, {"proto", true},
       {"body", dcs_body(known, 1, -1.0)}, {"status", 400}, {"reference_only", false}},
      {{"name", "generate_unknown_caption"}, {"method", "POST"}, {"path", "/generate"},
       {"proto", true}, {"body", generate_body("a caption the reference model never saw", 1, 1)},
       {"status", 422}, {"reference_only", true}},
  });

  const json fixtures = {
      {"format", "vaudit-wire-golden"},
      {"version", 1},
      {"proto", kProtoVersion},
      {"reference_model", json::parse(sim_config_to_json(sim.config()))},
      {"health", {{"status", "ok"},
                  {"model", caps.model},
                  {"sigma_max", caps.sigma_max},
                  {"default_timesteps", caps.default_timesteps},
                  {"supports_timesteps", caps.supports_timesteps},
                  {"width", caps.width},
                  {"height", caps.height},
                  {"dcs_space", caps.dcs_space}}},
      {"generate", generate},
      {"dcs", dcs_cases},
      {"errors", errors},
  };
  write_file(dir / kFixtures, fixtures.dump(2) + "\n");

  const json schema = {{"status", "string"},           {"model", "string"},
                       {"sigma_max", "number"},        {"default_timesteps", "integer"},
                       {"supports_timesteps", "boolean"}, {"width", "integer"},
                       {"height", "integer"},          {"dcs_space", "string"}};
  write_file(dir / kHealthSchema, schema.dump(2) + "\n");
}

std::vector<CheckResult> run_conformance(const ConformOptions& options) {
  const json fixtures = json::parse(read_file(options.golden_dir / kFixtures));
  const json schema = json::parse(read_file(options.golden_dir / kHealthSchema));
  Wire wire(options.url);
  std::vector<CheckResult> out;
  auto record = [&](std::string name, const std::string& problem) {
    out.push_back({std::move(name), problem.empty(), problem});
  };

  // Health: schema, headers, and (reference) exact values.
  std::size_t width = 0;
  std::size_t height = 0;
  {
    auto x = wire.send("GET", "/health", "", true);
    std::string problem;
    if (!x) {
      problem = "no response from " + options.url;
    } else if (x->status != 200) {
      problem = "status " + std::to_string(x->status);
    } else {
      problem = header_problem(*x, wire.last_id());
      try {
        const json h = json::parse(x->body);
        for (const auto& [key, type] : schema.items()) {
          if (!h.contains(key) || !type_matches(h[key], type.get<std::string>())) {
            problem = "health field '" + key + "' missing or not " + type.get<std::string>();
            break;
          }
        }
        if (problem.empty() && h["status"] != "ok") problem = "status is not \"ok\"";
        if (problem.empty() && !(h["sigma_max"].get<double>() > 0.0)) problem = "sigma_max <= 0";
        if (problem.empty()) {
          width = h["width"].get<std::size_t>();
          height = h["height"].get<std::size_t>();
          if (options.reference && h != fixtures["health"]) {
            problem = "health differs from the reference model: " + h.dump();
          }
        }
      } catch (const json::exception& e) {
        problem = std::string("health body: ") + e.what();
      }
    }
    record("health_schema", problem);
    if (!x) return out;
  }

  for (const auto& c : fixtures["generate"]) {
    const std::string body = c["body"].get<std::string>();
    auto a = wire.send("POST", "/generate", body, true);
    const std::string id_a = wire.last_id();
    auto b = wire.send("POST", "/generate", body, true);
    std::string problem;
    if (!a || !b) {
      problem = "no response";
    } else if (a->status != 200 || b->status != 200) {
      problem = "status " + std::to_string(a->status) + "/" + std::to_string(b->status);
    } else if (!(problem = header_problem(*a, id_a)).empty()) {
    } else if (a->content_type != "image/png") {
      problem = "content type '" + a->content_type + "'";
    } else if (a->body != b->body) {
      problem = "same seed produced different PNG bytes";
    } else {
      try {
        const std::vector<std::uint8_t> bytes(a->body.begin(), a->body.end());
        const Image img = decode_png(bytes);
        if (img.width() != width || img.height() != height) {
          problem = "image size differs from /health";
        } else if (options.reference) {
          const std::string golden = read_file(options.golden_dir / c["png"].get<std::string>());
          const Image ref = decode_png(std::vector<std::uint8_t>(golden.begin(), golden.end()));
          if (!(img == ref)) problem = "pixels differ from the golden image";
        }
      } catch (const Error& e) {
        problem = e.what();
      }
    }
    record("generate_" + c["name"].get<std::string>(), problem);
  }

  for (const auto& c : fixtures["dcs"]) {
    const std::string body = c["body"].get<std::string>();
    auto a = wire.send("POST", "/dcs", body, true);
    const std::string id_a = wire.last_id();
    auto b = wire.send("POST", "/dcs", body, true);
    std::string problem;
    if (!a || !b) {
      problem = "no response";
    } else if (a->status != 200 || b->status != 200) {
      problem = "status " + std::to_string(a->status) + "/" + std::to_string(b->status);
    } else if (!(problem = header_problem(*a, id_a)).empty()) {
    } else {
      try {
        const double va = json::parse(a->body).at("dcs").get<double>();
        const double vb = json::parse(b->body).at("dcs").get<double>();
        const double want = c["dcs"].get<double>();
        if (!std::isfinite(va)) {
          problem = "non-finite dcs";
        } else if (va != vb) {
          problem = "repeated call returned a different dcs";
        } else if (options.reference &&
                   std::abs(va - want) > options.dcs_rel_tol * std::max(1.0, std::abs(want))) {
          problem = "dcs " + json(va).dump() + " differs from golden " + json(want).dump();
        }
      } catch (const json::exception& e) {
        problem = std::string("dcs body: ") + e.what();
      }
    }
    record("dcs_" + c["name"].get<std::string>(), problem);
  }

  for (const auto& c : fixtures["errors"]) {
    if (c["reference_only"].get<bool>() && !options.reference) continue;
    auto x = wire.send(c["method"].get<std::string>(), c["path"].get<std::string>(),
                       c["body"].get<std::string>(), c["proto"].get<bool>());
    std::string problem;
    if (!x) {
      problem = "no response";
    } else if (x->status != c["status"].get<int>()) {
      problem = "status " + std::to_string(x->status) + ", expected " + c["status"].dump();
    } else if (!(problem = header_problem(*x, wire.last_id())).empty()) {
    } else {
      problem = error_body_problem(*x);
    }
    record("error_" + c["name"].get<std::string>(), problem);
  }
  return out;
}

}  // namespace vaudit::conform
