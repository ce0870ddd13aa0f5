#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vaudit/simulation.hpp"

namespace vaudit::conform {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ConformOptions {
  std::string url;
  std::filesystem::path golden_dir;
  // Also compare values against the golden reference model: exact pixels,
  // health fields and DCS within dcs_rel_tol. Only meaningful when the
  // server wraps the reference model.
  bool reference = false;
  double dcs_rel_tol = 1e-6;
};

/// The small simulated model the golden fixtures were recorded from.
SimulationConfig reference_model_config();

/// Records fixtures.json, health_schema.json and the golden PNGs from the
/// reference model. Identical runs write identical bytes.
void write_golden(const std::filesystem::path& dir);

/// Runs every fixture against a live server. Protocol checks (schema, header
/// echo, determinism, error statuses) apply to any backend.
std::vector<CheckResult> run_conformance(const ConformOptions& options);

}  // namespace vaudit::conform
