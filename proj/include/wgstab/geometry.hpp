#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "wgstab/common.hpp"

namespace wgstab {

/// Polar cell-centred discretization of the disk of radius R0.
///
/// Interior unknowns sit at cell centres r_i = (i + 1/2) h_r, phi_j = j h_phi,
/// i in [0, nr), j in [0, nphi); boundary nodes sit at r = R0 on the same
/// angles. Cell areas r_i h_r h_phi tile the disk exactly, so the area weights
/// sum to pi R0^2 up to rounding. The last ring is h_r/2 from the boundary.
class CrossSection {
 public:
  CrossSection(double radius, int nr, int nphi);

  double radius() const { return radius_; }
  int nr() const { return nr_; }
  int nphi() const { return nphi_; }
  double hr() const { return hr_; }
  double hphi() const { return hphi_; }

  int interior_count() const { return nr_ * nphi_; }
  int boundary_count() const { return nphi_; }
  int index(int i, int j) const { return i * nphi_ + ((j % nphi_) + nphi_) % nphi_; }

  double ring_radius(int i) const { return (i + 0.5) * hr_; }
  const Eigen::MatrixX2d& interior_points() const { return interior_; }
  const RVector& area_weights() const { return area_w_; }

  double boundary_angle(int j) const { return j * hphi_; }
  const Eigen::MatrixX2d& boundary_points() const { return boundary_; }
  const Eigen::MatrixX2d& normals() const { return normals_; }
  const RVector& boundary_weights() const { return boundary_w_; }

  /// max |x'| over the closed cross-section.
  double c_omega() const { return radius_; }
  /// Width b - a of the thinnest slab {a < xi.x' < b} containing omega; 2 R0 for any xi.
  double slab_width(const Vec2& xi) const;
  double area() const { return kPi * radius_ * radius_; }

  /// Weighted stiffness S = W(-Delta_h) on interior nodes with homogeneous
  /// Dirichlet data folded in. Symmetric positive definite.
  const Eigen::SparseMatrix<double>& stiffness() const { return stiffness_; }
  /// Coupling weight between the outer ring node (nr-1, j) and boundary node j.
  double boundary_coupling() const { return boundary_coupling_; }

  /// Delta_h u at interior nodes, given interior and boundary values.
  CVector laplacian(const CVector& interior, const CVector& boundary) const;
  /// As laplacian(), with a second-order flux through the boundary face. Used to
  /// evaluate Delta of given data; the solvers use the symmetric laplacian().
  CVector laplacian_sharp(const CVector& interior, const CVector& boundary) const;
  /// One-sided 3-point second-order radial derivative at each boundary node.
  CVector normal_derivative(const CVector& interior, const CVector& boundary) const;
  /// Radial derivative at the boundary from the last three rings only. For discrete
  /// solutions: their O(h^2) error does not vanish at r = R0, so mixing in the exact
  /// boundary value would cost an order.
  CVector solution_normal_derivative(const CVector& interior) const;

  nlohmann::json to_json() const;
  std::uint64_t content_hash() const;

 private:
  void build_stiffness();

  double radius_;
  int nr_, nphi_;
  double hr_, hphi_;
  Eigen::MatrixX2d interior_;
  RVector area_w_;
  Eigen::MatrixX2d boundary_;
  Eigen::MatrixX2d normals_;
  RVector boundary_w_;
  Eigen::SparseMatrix<double> stiffness_;
  double boundary_coupling_ = 0.0;
};

CrossSection build_disk(double radius, int nr, int nphi);

enum class FaceSign { Shadowed, Illuminated };

/// Subset of boundary nodes selected by the sign of xi.nu relative to a margin.
struct BoundaryArc {
  Vec2 direction{1.0, 0.0};
  double margin = 0.0;
  FaceSign sign = FaceSign::Shadowed;
  bool full = false;
  std::vector<int> nodes;

  bool contains(int j) const;
};

/// Shadowed: xi.nu <= margin (threshold nodes included). Illuminated: xi.nu > margin.
BoundaryArc face(const CrossSection& cs, const Vec2& xi, double margin, FaceSign sign);
BoundaryArc full_boundary(const CrossSection& cs);

struct PoincareResult {
  double constant = 0.0;      // sqrt(lambda_1)
  double eigenvalue = 0.0;    // lambda_1
  int iterations = 0;
};

/// Best Poincare constant of the discrete Dirichlet Laplacian by inverse iteration.
PoincareResult poincare_constant(const CrossSection& cs, double tol = 1e-13, int max_iter = 500);

}  // namespace wgstab
