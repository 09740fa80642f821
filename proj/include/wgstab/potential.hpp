#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wgstab/common.hpp"
#include "wgstab/geometry.hpp"

namespace wgstab {

/// Smooth compactly supported bump A exp(1 - 1/(1 - s^2)), s = |x' - centre| / width.
struct Bump {
  Vec2 centre{0.0, 0.0};
  double width = 0.5;
  double amplitude = 1.0;

  double operator()(const Vec2& x) const;
};

/// One term c e^{2 pi i m x1} g(x') of a potential; the conjugate term at -m is implied.
struct PotentialTerm {
  int mode = 0;
  cplx coefficient{1.0, 0.0};
  Bump profile;
};

/// Real 1-periodic potential V(x1,x') = sum_m V_m(x') e^{2 pi i m x1}, |m| <= cutoff.
///
/// Mode fields live on the interior nodes of a CrossSection. V is zero outside
/// omega. Off-grid values come from the analytic term list when the potential
/// was built from terms, and from polar bilinear interpolation otherwise.
class PeriodicPotential {
 public:
  using Profile = std::function<cplx(int mode, const Vec2& x)>;

  PeriodicPotential() = default;
  PeriodicPotential(const CrossSection& cs, int cutoff, std::vector<CVector> modes,
                    double m_plus, double m_minus);

  static PeriodicPotential zero(const CrossSection& cs, double m_plus = 1.0, double m_minus = 0.5);
  static PeriodicPotential constant(const CrossSection& cs, double value, double m_plus,
                                    double m_minus);
  static PeriodicPotential from_terms(const CrossSection& cs, std::vector<PotentialTerm> terms,
                                      double m_plus, double m_minus);
  /// Arbitrary analytic profile; must satisfy profile(-m, x) = conj(profile(m, x)).
  static PeriodicPotential from_profile(const CrossSection& cs, int cutoff, Profile profile,
                                        double m_plus, double m_minus);

  int cutoff() const { return cutoff_; }
  double m_plus() const { return m_plus_; }
  double m_minus() const { return m_minus_; }
  void set_bounds(double m_plus, double m_minus) { m_plus_ = m_plus; m_minus_ = m_minus; }

  int grid_nr() const { return nr_; }
  int grid_nphi() const { return nphi_; }
  double grid_radius() const { return radius_; }
  bool matches(const CrossSection& cs) const;

  /// V_m on the interior grid; zero for |m| > cutoff.
  CVector mode(int m) const;
  /// V_m at an arbitrary point (zero outside omega).
  cplx mode_at(int m, const Vec2& x) const;
  /// V(x1, x') at an arbitrary point.
  double value_at(double x1, const Vec2& x) const;
  /// Samples of V(x1, .) on the interior grid.
  RVector sample(double x1) const;

  bool is_zero() const;
  std::uint64_t content_hash() const;

  PeriodicPotential scaled(double t) const;
  friend PeriodicPotential operator+(const PeriodicPotential& a, const PeriodicPotential& b);
  friend PeriodicPotential operator-(const PeriodicPotential& a, const PeriodicPotential& b);

  /// Largest |V_{-m} - conj(V_m)| over the grid.
  double reality_defect() const;

  void save(const std::string& json_path) const;
  static PeriodicPotential load(const std::string& json_path, const CrossSection& cs);

 private:
  cplx interpolate(int m, const Vec2& x) const;

  int cutoff_ = 0;
  std::vector<CVector> modes_;  // index m + cutoff
  double m_plus_ = 1.0, m_minus_ = 0.5;
  double radius_ = 1.0;
  int nr_ = 0, nphi_ = 0;
  Profile profile_;
};

struct AdmissibilityReport {
  double sup_abs = 0.0;       // sup |V| over the sampled grid
  double sup_negative = 0.0;  // sup max(0, -V)
  double m_plus = 0.0, m_minus = 0.0, c_omega = 0.0;
  bool within_m_plus = false;
  bool within_m_minus = false;
  bool gate = false;  // M- < C_omega
  bool pass = false;
};

AdmissibilityReport admissible_check(const PeriodicPotential& v, double c_omega);

/// Axial/transverse frequency lattice {(k, eta) : |(2 pi k, eta)| <= rho} on a tensor eta grid.
struct FrequencyLattice {
  double rho = 8.0;
  double deta = 0.25;
  struct Point {
    int k;
    Vec2 eta;
  };
  std::vector<Point> points;

  static FrequencyLattice build(double rho, double deta);
  double weight(const Point& p) const;  // (1 + |(2 pi k, eta)|^2)^{-1}
};

/// (1/2pi) int_omega V_k(x') e^{-i eta.x'} dx' by area quadrature.
cplx fourier_coefficient_direct(const PeriodicPotential& v, const CrossSection& cs, int k,
                                const Vec2& eta);

/// (sum over the lattice of (1+|(2 pi k, eta)|^2)^{-1} |vhat_k(eta)|^2 deta^2)^{1/2}.
double h_minus_one_lattice(const PeriodicPotential& v, const CrossSection& cs,
                           const FrequencyLattice& lat);

/// Samples of one axial mode on the interior DST grid of the box (-L, L)^2.
struct BoxField {
  int axial_mode = 0;
  CMatrix values;  // n x n, row = first transverse coordinate
};

/// <f, (I - Delta)^{-1} f>^{1/2} on (0,1) x (-L,L)^2, x1-periodic, Dirichlet walls.
double dual_norm_on_box(const std::vector<BoxField>& fields, double half_side);

/// The box grid used by the dual oracle: n interior points per transverse axis.
std::vector<double> box_grid(double half_side, int n);

/// H^{-1} norm of V by solving (I - Delta) u = V on a box of side `box_side`.
double h_minus_one_dual_oracle(const PeriodicPotential& v, double box_side, int n = 127);

}  // namespace wgstab
