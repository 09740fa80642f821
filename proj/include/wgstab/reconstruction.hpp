#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wgstab/cgo.hpp"
#include "wgstab/dn_map.hpp"

namespace wgstab {

/// gamma if gamma >= gamma*, 1 / ln|ln gamma| on (0, gamma*), 0 at 0.
double phi(double gamma, double gamma_star);

enum class DataMode { Full, Partial };

struct ExtractionConfig {
  Vec2 xi0{1.0, 0.0};
  double epsilon = 0.2;        // direction arc |xi - xi0| <= epsilon and face margin
  double patch_margin = 0.4;   // G' = {x in boundary : xi0.nu <= patch_margin}
  double r = 1.0;
  double theta = 0.3;
  DataMode mode = DataMode::Full;
  FrequencyLattice lattice = FrequencyLattice::build(8.0, 0.25);
  double gamma_star = 0.5;
  int half_width = 3;          // fiber modes around the CGO axial index
  TorusLattice torus;          // half_side 2 c_omega by default
  double r_min = 1.0;
  double gap_min = 0.5;
  double tau_max = 25.0;
  bool all_directions = false;
  double solver_tol = 1e-10;

  BoundaryArc patch(const CrossSection& cs) const;
};

struct FprimeCheck {
  bool ok = true;
  double required_margin = 0.0;  // smallest patch margin satisfying the inclusion
  std::string message;
};

/// Every node with xi.nu <= epsilon lies in G' for all |xi - xi0| <= epsilon.
FprimeCheck check_fprime(const CrossSection& cs, const ExtractionConfig& cfg);
/// cos(acos(eps) - 2 asin(eps/2)), or 1 when the arc wraps past the normal.
double fprime_margin(double epsilon);

struct ExtractionResult {
  CgoPhase phase;
  cplx estimate{0.0};        // boundary integral in the configured data mode
  cplx boundary_full{0.0};   // over the whole lateral boundary
  cplx boundary_shadow{0.0}; // over the shadowed face (xi, eps, -)
  cplx interior{0.0};        // quadrature of V u2 conj(u1)
  cplx direct{0.0};          // 2 pi x direct coefficient of V = V2 - V1
  cplx remainder{0.0};       // interior - direct
  double remainder_bound = 0.0;
  double w1_norm = 0.0, w2_norm = 0.0;
  double gap = 0.0;
  double stencil_error = 0.0;  // main-mode weighted errors of discrete solves reproducing u2 and u1
  double coupling_mass = 0.0;  // int |V| |u2| |u1|
  double cgo_residual = 0.0;   // max relative remainder residual
  double error() const { return std::abs(estimate - direct); }
};

/// Boundary estimate of int e^{-i(2 pi k x1 + eta.x')} (V2 - V1) dx for one phase.
ExtractionResult extract_coefficient(const PeriodicPotential& v1, const PeriodicPotential& v2, const CgoPhase& phase,
                                     const CrossSection& cs, const ExtractionConfig& cfg);

/// Same estimate from assembled DN matrices on the pairing window around n2.
/// Full mode needs full-boundary matrices; partial mode needs the shadowed face covered.
ExtractionResult extract_from_dn(const DnOperator& lambda1, const DnOperator& lambda2, const PeriodicPotential& v1,
                                 const PeriodicPotential& v2, const CgoPhase& phase, const CrossSection& cs,
                                 const ExtractionConfig& cfg);

enum class PointStatus { Ok, DirectionInfeasible, Unresolvable, Failed };
const char* to_string(PointStatus s);

struct LatticeEntry {
  int k = 0;
  Vec2 eta = Vec2::Zero();
  Vec2 xi = Vec2::Zero();
  double r = 0.0;
  double tau = 0.0;
  double gap = 0.0;
  PointStatus status = PointStatus::Ok;
  DataMode mode = DataMode::Full;
  std::string message;
  cplx estimate{0.0};
  cplx direct{0.0};
};

struct LatticeTable {
  std::vector<LatticeEntry> entries;
  int feasible() const;
};

/// Runs extract_coefficient over the lattice; entries ordered by (k, eta).
/// `workers` > 1 uses a thread pool with ordered merge.
LatticeTable sweep_lattice(const PeriodicPotential& v1, const PeriodicPotential& v2, const CrossSection& cs,
                           const ExtractionConfig& cfg, int workers = 1);

struct Synthesis {
  double h_minus_one = 0.0;  // weighted lattice sum of the estimates
  double tail_bound = 0.0;   // |omega| M+^2 / rho^2
  int used = 0;
  int excluded = 0;
  std::vector<int> modes;
  std::vector<CVector> fields;  // v_k on the interior grid

  RVector sample(double x1) const;
};

Synthesis synthesize(const LatticeTable& table, const FrequencyLattice& lat, const CrossSection& cs, double m_plus);

struct StabilityRecord {
  double delta = 0.0;
  double gamma = 0.0;
  double e = 0.0;
  double phi = 0.0;
  double ratio = 0.0;  // e / phi, 0 when phi = 0
  bool held_out = false;
  bool within = true;  // e <= 1.5 C phi (held-out records)
};

struct StabilityResult {
  std::vector<StabilityRecord> records;
  double c_fit = 0.0;
  bool monotone = true;
  bool held_out_ok = true;
};

struct StabilityOptions {
  double theta = 0.3;
  int half_width = 8;
  double gamma_star = 0.5;
  double box_factor = 4.0;  // dual oracle box side in units of c_omega
  int box_n = 127;
  std::string dn_cache_dir;
};

StabilityResult stability_sweep(const PeriodicPotential& v1, const PeriodicPotential& w,
                                const std::vector<double>& train, const std::vector<double>& held_out,
                                const CrossSection& cs, const BoundaryArc& arc, const StabilityOptions& opt);

}  // namespace wgstab
