#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "wgstab/common.hpp"
#include "wgstab/geometry.hpp"
#include "wgstab/potential.hpp"

namespace wgstab {

/// Contiguous window of axial modes k = first .. first + count - 1.
struct ModeWindow {
  int first = -8;
  int count = 17;

  static ModeWindow centred(int half_width, int centre = 0) {
    return {centre - half_width, 2 * half_width + 1};
  }
  int last() const { return first + count - 1; }
  bool contains(int k) const { return k >= first && k <= last(); }
  int slot(int k) const { return k - first; }
  int mode(int slot) const { return first + slot; }
  bool operator==(const ModeWindow& o) const { return first == o.first && count == o.count; }
};

/// u(x1, x') = sum_k u_k(x') e^{i(theta + 2 pi k) x1} over a mode window.
///
/// Column s of `interior` (resp. `boundary`) holds mode window.mode(s) on the
/// interior (resp. boundary) nodes.
struct Field {
  double theta = 0.0;
  ModeWindow window;
  CMatrix interior;
  CMatrix boundary;

  Field() = default;
  Field(const CrossSection& cs, ModeWindow w, double theta);

  /// Axial wavenumber theta + 2 pi k of window slot s.
  double beta(int s) const { return theta + kTwoPi * window.mode(s); }
  /// Physical values at axial position x1 on the interior nodes.
  CVector interior_at(double x1) const;
  CVector boundary_at(double x1) const;
  /// L2((0,1) x omega) norm with area weights (modes are orthogonal in x1).
  double l2_norm(const CrossSection& cs) const;
  /// Same field on another window; modes outside the overlap are dropped or zero.
  Field rewindowed(ModeWindow w) const;

  Field& operator+=(const Field& o);
  Field& operator-=(const Field& o);
  Field& operator*=(cplx s);

  /// CSV rows (k, node, re, im); boundary nodes are numbered after interior nodes.
  void save_csv(const std::string& path) const;
};

Field operator+(Field a, const Field& b);
Field operator-(Field a, const Field& b);
Field operator*(cplx s, Field a);

/// -Delta + V on (0,1) x omega with theta-quasi-periodic coupling in x1.
///
/// Unknowns are ordered mode-major: slot * N + node. The assembled matrix is
/// the weighted form W(-Delta_h) + beta_k^2 W + W V_{k-m}, which is Hermitian
/// for real V. Boundary values are eliminated into the right-hand side.
class FiberOperator {
 public:
  using SparseC = Eigen::SparseMatrix<cplx>;

  /// Builds and factorizes. Throws SolverError if factorization fails.
  FiberOperator(const CrossSection& cs, const PeriodicPotential& v, double theta, ModeWindow window);
  ~FiberOperator();
  FiberOperator(const FiberOperator&) = delete;
  FiberOperator& operator=(const FiberOperator&) = delete;

  const CrossSection& cross_section() const { return cs_; }
  double theta() const { return theta_; }
  const ModeWindow& window() const { return window_; }
  std::uint64_t potential_hash() const { return v_hash_; }
  const SparseC& matrix() const { return a_; }
  /// True when the window is too narrow to carry all couplings of V.
  bool coupling_truncated() const { return truncated_; }
  bool used_lu_fallback() const { return lu_ != nullptr; }
  /// max |A - A^*| over stored entries.
  double hermitian_defect() const;

  /// Solves A X = B for stacked mode-major columns.
  CMatrix solve_raw(const CMatrix& b) const;

  /// Smallest generalized eigenvalue of A x = lambda W x by inverse iteration.
  double smallest_eigenvalue(double tol = 1e-12, int max_iter = 1000) const;

 private:
  struct Factor;
  CrossSection cs_;
  double theta_;
  ModeWindow window_;
  std::uint64_t v_hash_ = 0;
  bool truncated_ = false;
  SparseC a_;
  std::unique_ptr<Factor> ldlt_;
  std::unique_ptr<Factor> lu_;
};

using FiberHandle = std::shared_ptr<const FiberOperator>;

/// Assembled and factorized operator, memoized by (grid, V, theta, window).
/// The cache keeps the most recent handles; handles stay valid after eviction.
FiberHandle assemble(const PeriodicPotential& v, double theta, ModeWindow window, const CrossSection& cs);
FiberHandle assemble(const PeriodicPotential& v, double theta, int half_width, const CrossSection& cs);
void clear_operator_cache();
std::size_t operator_cache_size();

/// Default half-width: 8, raised to cutoff + 4 when V couples modes.
int default_half_width(const PeriodicPotential& v);

/// Solution of (-Delta + V) u = 0 with u = g on the boundary. `g` is nphi x count.
Field solve_dirichlet(const FiberOperator& op, const CMatrix& g);
/// Batched variant: each column of `g_cols` is a stacked (slot * nphi + j) boundary datum.
/// Returns the stacked interior solutions.
CMatrix solve_dirichlet_stacked(const FiberOperator& op, const CMatrix& g_cols);
/// u = A^{-1} f with homogeneous Dirichlet data.
Field resolvent(const FiberOperator& op, const Field& f);
/// Residual (-Delta_h + V) u at interior nodes, per mode.
CMatrix pde_residual(const FiberOperator& op, const PeriodicPotential& v, const Field& u);

struct HarmonicExtension {
  Field field;
  double norm = 0.0;  // L2 norm of the extension
};
HarmonicExtension harmonic_extension(const CMatrix& g, double theta, const CrossSection& cs, ModeWindow window);

/// (U f)_theta_j = sum_k e^{-i k theta_j} f_k on the uniform grid theta_j = 2 pi j / n_theta.
/// `cells[c]` is f(. + first_cell + c, .).
std::vector<CVector> fbg_forward(const std::vector<CVector>& cells, int first_cell, int n_theta);
std::vector<CVector> fbg_inverse(const std::vector<CVector>& fibres, int first_cell, int n_cells);

}  // namespace wgstab
