#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "wgstab/harness.hpp"
#include "wgstab/report_io.hpp"

using namespace wgstab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> problems_of(const json& j) {
  try {
    RunConfig::from_json(j);
  } catch (const ConfigError& e) {
    return e.problems();
  }
  return {};
}

bool mentions(const std::vector<std::string>& ps, const std::string& what) {
  for (const auto& p : ps)
    if (p.find(what) != std::string::npos) return true;
  return false;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wgstab_unit_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("default configuration is valid and round-trips") {
  const RunConfig c = RunConfig::from_json(json::object());
  CHECK(c.validate().empty());
  const RunConfig d = RunConfig::from_json(c.to_json());
  CHECK(d.to_json() == c.to_json());
  CHECK(d.hash() == c.hash());
  CHECK(c.hash().size() == 16u);
  CHECK(RunConfig::from_json({{"seed", 2}}).hash() != c.hash());
}

TEST_CASE("validation lists every problem") {
  const json j = {{"geometry", {{"nr", 2}}},
                  {"fiber", {{"half_width", "four"}}},
                  {"reconstruction", {{"epsilon", 0.5}, {"patch_margin", 0.1}, {"gamma_star", 1.5}, {"extra", 1}}},
                  {"potentials", {{"v2", {{"family", "nope"}}}}},
                  {"experiment", "everything"}};
  const auto ps = problems_of(j);
  CHECK(mentions(ps, "geometry.nr"));
  CHECK(mentions(ps, "fiber.half_width: expected an integer"));
  CHECK(mentions(ps, "reconstruction.epsilon: F' inclusion check failed"));
  CHECK(mentions(ps, "reconstruction.gamma_star"));
  CHECK(mentions(ps, "reconstruction.extra: unknown key"));
  CHECK(mentions(ps, "experiment"));
  CHECK(ps.size() >= 6u);
}

TEST_CASE("cutoff and admissibility checks") {
  json j;
  j["fiber"]["half_width"] = 0;
  CHECK(mentions(problems_of(j), "fiber.half_width: K=0 below the cutoff 1"));
  json k;
  k["potentials"]["v1"] = {{"family", "radial_bump"}, {"amplitude", 5.0}};
  CHECK(mentions(problems_of(k), "potentials.v1: not admissible"));
  json s;
  s["stability"]["deltas"] = {0.0, 10.0};
  CHECK(mentions(problems_of(s), "not admissible"));
}

TEST_CASE("potential families") {
  const CrossSection cs = build_disk(1.0, 12, 24);
  std::mt19937_64 rng(5);
  CHECK(build_potential({{"family", "zero"}}, cs, rng).is_zero());
  const auto a = build_potential({{"family", "angular_bump"}, {"radius", 0.4}, {"angle", kPi / 2}, {"width", 0.3}}, cs, rng);
  CHECK(a.value_at(0.0, Vec2(0.0, 0.4)) == doctest::Approx(1.0));
  CHECK(a.value_at(0.0, Vec2(0.0, -0.4)) == 0.0);
  const auto m = build_potential({{"family", "single_mode"}, {"mode", 2}, {"coefficient", {0.1, 0.2}}}, cs, rng);
  CHECK(m.cutoff() == 2);
  const json spec = {{"family", "random_band_limited"}, {"cutoff", 2}, {"terms", 4}};
  std::mt19937_64 r1(9), r2(9), r3(10);
  const auto p1 = build_potential(spec, cs, r1), p2 = build_potential(spec, cs, r2), p3 = build_potential(spec, cs, r3);
  CHECK(p1.content_hash() == p2.content_hash());
  CHECK(p1.content_hash() != p3.content_hash());
  CHECK(p1.reality_defect() < 1e-15);
  const auto sum = build_potential({{"family", "sum"},
                                    {"terms", {{{"family", "radial_bump"}, {"amplitude", 0.2}},
                                               {{"family", "radial_bump"}, {"amplitude", 0.3}}}}},
                                   cs, rng);
  CHECK(sum.value_at(0.0, Vec2::Zero()) == doctest::Approx(0.5));
  CHECK_THROWS(build_potential({{"family", "radial_bump"}, {"colour", 1}}, cs, rng));
  CHECK_THROWS(build_potential({{"family", "radial_bump"}, {"width", -1.0}}, cs, rng));

  const auto path = scratch("file_potential.json");
  m.save(path.string());
  const auto f = build_potential({{"family", "file"}, {"path", path.string()}}, cs, rng);
  CHECK((f.mode(2) - m.mode(2)).norm() == 0.0);
}

TEST_CASE("runs are reproducible and write a manifest") {
  json j;
  j["cgo"]["r_values"] = {5.0, 10.0, 20.0};
  j["geometry"] = {{"nr", 12}, {"nphi", 24}};
  const RunConfig c = RunConfig::from_json(j);
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const json s1 = run("cgo-decay", c, {a.string(), ""});
  const json s2 = run("cgo-decay", c, {b.string(), ""});
  CHECK(s1 == s2);
  CHECK(s1["ok"].get<bool>());
  CHECK(slurp(a / "cgo_decay.csv") == slurp(b / "cgo_decay.csv"));
  CHECK(slurp(a / "cgo_decay.svg") == slurp(b / "cgo_decay.svg"));
  CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
  const json m = json::parse(slurp(a / "manifest.json"));
  CHECK(m["config_hash"] == c.hash());
  CHECK(m["seed"] == c.seed);
  CHECK(m["generator"] == "std::mt19937_64");
  CHECK(m["timings_s"].contains("cgo-decay"));
  CHECK_THROWS(run("unknown", c, {a.string(), ""}));
}

TEST_CASE("CLI rejects an invalid configuration and names the check") {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "bad.json");
    f << R"({"reconstruction": {"epsilon": 0.5, "patch_margin": 0.1}})";
  }
  const std::string cmd = std::string(WGSTAB_CLI_PATH) + " carleman --config " + (dir / "bad.json").string() +
                          " --out " + (dir / "out").string() + " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(status != 0);
  CHECK(slurp(dir / "err.txt").find("F' inclusion check failed") != std::string::npos);
  const std::string bad_sub = std::string(WGSTAB_CLI_PATH) + " nonsense > /dev/null 2>&1";
  CHECK(std::system(bad_sub.c_str()) != 0);
}

TEST_CASE("report formatting") {
  CHECK(io::num(0.1) == "0.1");
  CHECK(io::num(1e-300) == "1e-300");
  CHECK(std::stod(io::num(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(io::num(7) == "7");
  const auto f = io::loglog_fit({1.0, 2.0, 4.0, 8.0}, {3.0, 1.5, 0.75, 0.375});
  CHECK(f.slope == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(std::exp(f.intercept) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS(io::loglog_fit({1.0}, {1.0}));
  CHECK_THROWS(io::loglog_fit({1.0, 2.0}, {1.0, -1.0}));

  const fs::path dir = scratch("csv");
  io::CsvTable t({"a", "b"});
  t.add({"1", "x,y"});
  CHECK_THROWS(t.add({"1"}));
  t.write((dir / "t.csv").string());
  CHECK(slurp(dir / "t.csv") == "a,b\n1,\"x,y\"\n");
  io::write_svg((dir / "p.svg").string(), {"t", "x", "y", true, true, {{"s", {1.0, 10.0}, {1.0, 0.0}}}});
  CHECK(slurp(dir / "p.svg").rfind("<svg", 0) == 0);
}
