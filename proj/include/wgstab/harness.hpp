#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wgstab/carleman.hpp"
#include "wgstab/reconstruction.hpp"

namespace wgstab {

/// Invalid configuration; carries every violated check, not only the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct GridSpec {
  double radius = 1.0;
  int nr = 24;
  int nphi = 48;
  CrossSection build() const { return build_disk(radius, nr, nphi); }
};

/// One JSON document. Missing keys take the defaults below; unknown keys are errors.
struct RunConfig {
  GridSpec geometry;

  std::vector<double> thetas{0.3};
  int half_width = 4;

  // Potential specs, see build_potential.
  nlohmann::json v1, v2, w;

  int forward_mode = 0;     // fiber mode carrying the boundary datum
  int forward_angular = 1;  // datum cos(n phi)

  double cgo_theta = 0.3;
  int cgo_k = 0;
  Vec2 cgo_eta{0.0, 2.0};
  Vec2 cgo_xi{1.0, 0.0};
  std::vector<double> cgo_r{5.0, 10.0, 20.0, 40.0};
  double r_min = 1.0;
  double gap_min = 0.5;
  double tau_max = 25.0;
  double lattice_half_side = 0.0;  // 0 selects 2 c_omega
  int n_axial = 32;
  int n_trans = 64;
  double cgo_tol = 1e-10;

  int carleman_count = 100;
  std::vector<double> carleman_taus{1, 2, 4, 8, 16, 32};
  std::vector<Vec2> carleman_dirs{{1.0, 0.0}, {0.0, 1.0}, Vec2(1.0, 1.0).normalized()};
  double slack_tol = 0.05;

  Vec2 xi0{1.0, 0.0};
  double epsilon = 0.2;
  double patch_margin = 0.4;
  double rho = 8.0;
  double deta = 0.5;
  double gamma_star = 0.5;
  DataMode mode = DataMode::Full;
  double recon_theta = -3.0;
  int recon_half_width = 1;
  GridSpec recon_grid{1.0, 32, 128};
  int extract_k = 0;
  Vec2 extract_eta{0.0, 1.0};
  std::vector<double> extract_r{0.5, 1.0, 2.0};
  bool all_directions = false;

  std::vector<double> deltas{0.0, 1e-3, 3e-3, 1e-2, 1e-1};
  std::vector<double> held_out{3e-2};
  double stability_theta = 0.3;
  int stability_half_width = 4;
  double box_factor = 4.0;
  int box_n = 127;

  std::string experiment = "all";
  std::string output = "out";
  std::uint64_t seed = 1;
  int workers = 1;

  RunConfig();

  /// Parses and validates; throws ConfigError listing all problems.
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::string& path);
  /// Canonical form with every default filled in.
  nlohmann::json to_json() const;
  std::string hash() const;
  /// Semantic checks (sizes, K >= cutoff, F' inclusion, gamma*, admissibility).
  std::vector<std::string> validate() const;

  ExtractionConfig extraction(const CrossSection& cs) const;
};

/// Families: zero, radial_bump, angular_bump, single_mode, random_band_limited, sum, file.
/// random_band_limited draws from `rng`.
PeriodicPotential build_potential(const nlohmann::json& spec, const CrossSection& cs, std::mt19937_64& rng);

struct RunOptions {
  std::string out_dir;       // overrides config output when non-empty
  std::string dn_cache_dir;  // empty disables the disk cache
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand, writes artifacts plus manifest.json under the output
/// directory and returns the summary. summary["ok"] is false when a checked
/// property fails.
nlohmann::json run(const std::string& subcommand, const RunConfig& cfg, const RunOptions& opt);

}  // namespace wgstab
