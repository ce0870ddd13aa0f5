#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "conform.hpp"
#include "vaudit/error.hpp"
#include "vaudit/remote.hpp"
#include "vaudit/scoring.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using namespace vaudit;

  CLI::App app{"Wire-protocol conformance against the golden fixtures."};
  conform::ConformOptions opts;
  fs::path write_dir;
  bool self = false;
  app.add_option("--url", opts.url, "backend base url")->envname("VA_BACKEND_URL");
  app.add_option("--golden", opts.golden_dir, "fixture directory");
  app.add_flag("--reference", opts.reference, "the server wraps the reference model; compare values");
  app.add_option("--dcs-rel-tol", opts.dcs_rel_tol, "relative DCS tolerance in reference mode");
  app.add_option("--write-golden", write_dir, "record fixtures from the reference model and exit");
  app.add_flag("--self", self, "serve the reference model in-process and check it");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!write_dir.empty()) {
      conform::write_golden(write_dir);
      std::cout << "wrote fixtures to " << write_dir.string() << "\n";
      return 0;
    }
    if (opts.golden_dir.empty()) {
      std::cerr << "--golden is required\n";
      return 3;
    }
    std::optional<Simulation> sim;
    std::optional<DenoiserDcs> dcs;
    std::optional<BackendServer> server;
    if (self) {
      sim.emplace(conform::reference_model_config());
      dcs.emplace(*sim);
      server.emplace(*sim, *dcs);
      server->start();
      opts.url = server->url();
      opts.reference = true;
    }
    if (opts.url.empty()) {
      std::cerr << "--url (or VA_BACKEND_URL) is required\n";
      return 3;
    }
    int failed = 0;
    for (const auto& c : conform::run_conformance(opts)) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name;
      if (!c.pass) std::cout << ": " << c.detail;
      std::cout << "\n";
      failed += c.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}
