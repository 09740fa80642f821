#include "wgstab/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SparseCholesky>

#include "wgstab/hash.hpp"

namespace wgstab {

namespace {
// Tolerance for assigning nodes with xi.nu == margin to the shadowed face.
constexpr double kThresholdSlack = 1e-12;
}  // namespace

CrossSection::CrossSection(double radius, int nr, int nphi)
    : radius_(radius), nr_(nr), nphi_(nphi) {
  if (!(radius > 0.0) || !std::isfinite(radius))
    throw std::invalid_argument("CrossSection: radius must be positive");
  if (nr < 4) throw std::invalid_argument("CrossSection: nr must be >= 4");
  if (nphi < 8 || nphi % 2 != 0)
    throw std::invalid_argument("CrossSection: nphi must be even and >= 8");

  hr_ = radius_ / nr_;
  hphi_ = kTwoPi / nphi_;

  interior_.resize(interior_count(), 2);
  area_w_.resize(interior_count());
  for (int i = 0; i < nr_; ++i) {
    const double r = ring_radius(i);
    for (int j = 0; j < nphi_; ++j) {
      const double phi = j * hphi_;
      const int p = index(i, j);
      interior_(p, 0) = r * std::cos(phi);
      interior_(p, 1) = r * std::sin(phi);
      area_w_(p) = r * hr_ * hphi_;
    }
  }

  boundary_.resize(nphi_, 2);
  normals_.resize(nphi_, 2);
  boundary_w_ = RVector::Constant(nphi_, radius_ * hphi_);
  for (int j = 0; j < nphi_; ++j) {
    const double phi = j * hphi_;
    normals_(j, 0) = std::cos(phi);
    normals_(j, 1) = std::sin(phi);
    boundary_.row(j) = radius_ * normals_.row(j);
  }
  build_stiffness();
}

void CrossSection::build_stiffness() {
  // Finite-volume fluxes across cell faces; the outer face of the last ring
  // is the boundary itself, at distance hr/2 from the cell centre.
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(interior_count()) * 5);
  boundary_coupling_ = radius_ * hphi_ / (0.5 * hr_);
  for (int i = 0; i < nr_; ++i) {
    const double r = ring_radius(i);
    const double ang = hr_ / (r * hphi_);
    for (int j = 0; j < nphi_; ++j) {
      const int p = index(i, j);
      double diag = 0.0;
      if (i + 1 < nr_) {
        const double c = (r + 0.5 * hr_) * hphi_ / hr_;
        trip.emplace_back(p, index(i + 1, j), -c);
        diag += c;
      } else {
        diag += boundary_coupling_;
      }
      if (i > 0) {
        const double c = (r - 0.5 * hr_) * hphi_ / hr_;
        trip.emplace_back(p, index(i - 1, j), -c);
        diag += c;
      }
      trip.emplace_back(p, index(i, j + 1), -ang);
      trip.emplace_back(p, index(i, j - 1), -ang);
      diag += 2.0 * ang;
      trip.emplace_back(p, p, diag);
    }
  }
  stiffness_.resize(interior_count(), interior_count());
  stiffness_.setFromTriplets(trip.begin(), trip.end());
  stiffness_.makeCompressed();
}

double CrossSection::slab_width(const Vec2& xi) const {
  (void)xi;
  return 2.0 * radius_;
}

CVector CrossSection::laplacian(const CVector& interior, const CVector& boundary) const {
  if (interior.size() != interior_count() || boundary.size() != boundary_count())
    throw std::invalid_argument("laplacian: size mismatch");
  CVector out = -(stiffness_.cast<cplx>() * interior);
  for (int j = 0; j < nphi_; ++j) out(index(nr_ - 1, j)) += boundary_coupling_ * boundary(j);
  return out.cwiseQuotient(area_w_.cast<cplx>());
}

CVector CrossSection::laplacian_sharp(const CVector& interior, const CVector& boundary) const {
  CVector out = laplacian(interior, boundary);
  // Swap the two-point boundary flux for the three-point one used by normal_derivative.
  const double c = radius_ * hphi_ / (3.0 * hr_);
  for (int j = 0; j < nphi_; ++j) {
    const int p = index(nr_ - 1, j);
    out(p) += c * (2.0 * boundary(j) - 3.0 * interior(p) + interior(index(nr_ - 2, j))) / area_w_(p);
  }
  return out;
}

CVector CrossSection::normal_derivative(const CVector& interior, const CVector& boundary) const {
  // Nodes at offsets 0, -h/2, -3h/2 from the boundary along the ray.
  const double h = hr_;
  const double w0 = 8.0 / (3.0 * h), w1 = -3.0 / h, w2 = 1.0 / (3.0 * h);
  CVector out(nphi_);
  for (int j = 0; j < nphi_; ++j)
    out(j) = w0 * boundary(j) + w1 * interior(index(nr_ - 1, j)) + w2 * interior(index(nr_ - 2, j));
  return out;
}

CVector CrossSection::solution_normal_derivative(const CVector& interior) const {
  // Quadratic through the last three rings (offsets h/2, 3h/2, 5h/2), differentiated at r = R0.
  const double h = hr_;
  CVector out(nphi_);
  for (int j = 0; j < nphi_; ++j)
    out(j) = (2.0 * interior(index(nr_ - 1, j)) - 3.0 * interior(index(nr_ - 2, j)) + interior(index(nr_ - 3, j))) / h;
  return out;
}

nlohmann::json CrossSection::to_json() const {
  nlohmann::json j;
  j["radius"] = radius_;
  j["nr"] = nr_;
  j["nphi"] = nphi_;
  j["hr"] = hr_;
  j["hphi"] = hphi_;
  std::vector<double> rings(nr_), angles(nphi_);
  for (int i = 0; i < nr_; ++i) rings[i] = ring_radius(i);
  for (int k = 0; k < nphi_; ++k) angles[k] = boundary_angle(k);
  j["ring_radii"] = rings;
  j["angles"] = angles;
  j["area_weights"] = std::vector<double>(area_w_.data(), area_w_.data() + area_w_.size());
  j["boundary_weights"] =
      std::vector<double>(boundary_w_.data(), boundary_w_.data() + boundary_w_.size());
  return j;
}

std::uint64_t CrossSection::content_hash() const {
  return Hasher().text("disk").value(radius_).value(nr_).value(nphi_).digest();
}

CrossSection build_disk(double radius, int nr, int nphi) { return CrossSection(radius, nr, nphi); }

bool BoundaryArc::contains(int j) const {
  return std::binary_search(nodes.begin(), nodes.end(), j);
}

BoundaryArc face(const CrossSection& cs, const Vec2& xi, double margin, FaceSign sign) {
  if (std::abs(xi.norm() - 1.0) > 1e-12) throw std::invalid_argument("face: direction must be a unit vector");
  if (!(margin >= 0.0 && margin < 1.0)) throw std::invalid_argument("face: margin must lie in [0,1)");
  BoundaryArc arc;
  arc.direction = xi;
  arc.margin = margin;
  arc.sign = sign;
  for (int j = 0; j < cs.boundary_count(); ++j) {
    const double s = xi.dot(cs.normals().row(j).transpose());
    const bool shadowed = s <= margin + kThresholdSlack;
    if (shadowed == (sign == FaceSign::Shadowed)) arc.nodes.push_back(j);
  }
  return arc;
}

BoundaryArc full_boundary(const CrossSection& cs) {
  BoundaryArc arc;
  arc.full = true;
  arc.nodes.resize(cs.boundary_count());
  for (int j = 0; j < cs.boundary_count(); ++j) arc.nodes[j] = j;
  return arc;
}

PoincareResult poincare_constant(const CrossSection& cs, double tol, int max_iter) {
  // Generalized problem S x = lambda W x; inverse iteration x <- S^{-1} W x.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(cs.stiffness());
  if (ldlt.info() != Eigen::Success) throw SolverError("poincare_constant: factorization failed");
  const RVector& w = cs.area_weights();
  RVector x = RVector::Ones(cs.interior_count());
  double lambda = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    RVector y = ldlt.solve(w.cwiseProduct(x));
    const double wnorm = std::sqrt(y.dot(w.cwiseProduct(y)));
    y /= wnorm;
    const double next = y.dot(cs.stiffness() * y);
    x = std::move(y);
    if (it > 1 && std::abs(next - lambda) <= tol * next) {
      return {std::sqrt(next), next, it};
    }
    lambda = next;
  }
  throw ConvergenceError("poincare_constant: inverse iteration did not converge after " +
                             std::to_string(max_iter) + " iterations",
                         max_iter, std::sqrt(lambda));
}

}  // namespace wgstab
