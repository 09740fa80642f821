#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wgstab/harness.hpp"

// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration, 3 a checked property failed.
int main(int argc, char** argv) {
  CLI::App app{"Periodic waveguide inverse-problem experiments"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, cache_dir;
  int workers = -1;
  std::uint64_t seed = 0;
  bool all_directions = false;
  app.add_option("--config", config_path, "JSON run configuration (defaults apply when omitted)");
  app.add_option("--out", out_dir, "output directory (overrides config output)");
  app.add_option("--dn-cache-dir", cache_dir, "directory for cached DN matrices");
  auto* w_opt = app.add_option("--workers", workers, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);
  auto* s_opt = app.add_option("--seed", seed, "seed of the run generator");
  app.add_flag("--all-directions", all_directions, "use full-boundary data for lattice points outside the direction arc");
  app.fallthrough();

  for (const auto& s : wgstab::subcommands()) app.add_subcommand(s, "run the " + s + " experiment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string sub = app.get_subcommands().front()->get_name();

  try {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw wgstab::ConfigError({"config: cannot open " + config_path});
      try {
        j = nlohmann::json::parse(f);
      } catch (const nlohmann::json::parse_error& e) {
        throw wgstab::ConfigError({std::string("config: parse error: ") + e.what()});
      }
    }
    if (!j.is_object()) throw wgstab::ConfigError({"config: expected an object"});
    if (*w_opt) j["workers"] = workers;
    if (*s_opt) j["seed"] = seed;
    if (all_directions) j["reconstruction"]["all_directions"] = true;
    j["experiment"] = sub;
    const wgstab::RunConfig cfg = wgstab::RunConfig::from_json(j);

    wgstab::RunOptions opt;
    opt.out_dir = out_dir;
    opt.dn_cache_dir = cache_dir;
    const nlohmann::json summary = wgstab::run(sub, cfg, opt);
    std::cout << summary.dump(2) << "\n";
    return summary.value("ok", false) ? 0 : 3;
  } catch (const wgstab::ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& p : e.problems()) std::cerr << "  " << p << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
