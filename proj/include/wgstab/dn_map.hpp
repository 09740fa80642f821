#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wgstab/fiber.hpp"

namespace wgstab {

/// Boundary values per (node, mode) on an arc.
struct TraceData {
  double theta = 0.0;
  ModeWindow window;
  std::vector<int> nodes;  // boundary node indices, row order
  CMatrix values;          // nodes x modes
};

TraceData trace_dirichlet(const Field& u, const BoundaryArc& arc);
TraceData trace_dirichlet(const Field& u);
/// One-sided second-order radial derivative at the boundary nodes of `arc`.
TraceData trace_neumann(const Field& u, const CrossSection& cs, const BoundaryArc& arc);
TraceData trace_neumann(const Field& u, const CrossSection& cs);

/// Matrix of the fiber DN map.
///
/// Column slot * nphi + j is the Neumann response to the Dirichlet indicator of
/// boundary node j in mode slot. Row slot * |arc| + r reads node arc.nodes[r]
/// in the same mode.
struct DnOperator {
  double theta = 0.0;
  ModeWindow window;
  BoundaryArc arc;
  int nphi = 0;
  std::uint64_t grid_hash = 0;
  std::uint64_t potential_hash = 0;
  CMatrix matrix;

  /// g is nphi x modes; returns |arc| x modes.
  CMatrix apply(const CMatrix& g) const;
  /// Rows of a sub-arc (its nodes must lie in this arc).
  DnOperator restricted(const BoundaryArc& sub) const;
};

struct DnCacheStats {
  int hits = 0;
  int misses = 0;
};

/// Assembles the DN matrix column by column. When `cache_dir` is non-empty the
/// matrix is read from / written to a content-addressed file there.
DnOperator assemble_dn(const PeriodicPotential& v, double theta, const CrossSection& cs, ModeWindow window,
                       const BoundaryArc& arc, const std::string& cache_dir = "");
DnCacheStats dn_cache_stats();

/// Binary DN file plus JSON sidecar; see README for the layout.
void save_dn(const DnOperator& dn, const std::string& stem);
DnOperator load_dn(const std::string& stem);
std::string dn_cache_stem(const std::string& dir, std::uint64_t potential_hash, double theta,
                          const CrossSection& cs, ModeWindow window, const BoundaryArc& arc);

/// Gram matrix of the harmonic-extension L2 norm on stacked boundary data,
/// one nphi x nphi block per mode.
std::vector<CMatrix> harmonic_gram(const CrossSection& cs, double theta, ModeWindow window);

struct DnNormOptions {
  double tol = 1e-6;
  int max_iter = 20000;
  std::uint64_t seed = 0x5eed;
};

struct DnNormResult {
  double value = 0.0;
  int iterations = 0;
};

/// Largest generalized singular value of D = a - b from the harmonic-extension
/// norm into the weighted L2 norm on the arc.
DnNormResult dn_difference_norm(const DnOperator& a, const DnOperator& b, const CrossSection& cs,
                                const DnNormOptions& opt = {});

/// Same quantity by a dense generalized eigensolver (test oracle; small sizes).
double dn_difference_norm_dense(const DnOperator& a, const DnOperator& b, const CrossSection& cs);

struct ThetaSweep {
  std::vector<double> thetas;
  std::vector<double> values;
  double sup = 0.0;
  double argmax = 0.0;
};

ThetaSweep full_norm_over_theta(const PeriodicPotential& v1, const PeriodicPotential& v2,
                                const std::vector<double>& thetas, const CrossSection& cs, ModeWindow window,
                                const BoundaryArc& arc, const std::string& cache_dir = "");

/// sup |<Lf,g> - <f,Lg>| / (|L| |f| |g|) over boundary data, for a full-boundary DN map.
double hermitian_pairing_defect(const DnOperator& dn, const CrossSection& cs);

}  // namespace wgstab
