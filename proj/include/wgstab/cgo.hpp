#pragma once

#include <string>
#include <utility>
#include <vector>

#include "wgstab/fiber.hpp"

namespace wgstab {

enum class Which { Zeta1, Zeta2 };

/// Phase data (k, eta, xi, r, theta) and the derived ell, tau, zeta_1, zeta_2.
struct CgoPhase {
  int k = 0;
  Vec2 eta{0.0, 1.0};
  Vec2 xi{1.0, 0.0};
  double r = 1.0;
  double theta = 0.0;
  Vec3 ell = Vec3::Zero();
  double tau = 0.0;
  CVec3 zeta1 = CVec3::Zero();
  CVec3 zeta2 = CVec3::Zero();
  int n1 = 0;  // zeta_1 first component = i(theta + 2 pi n1)
  int n2 = 0;

  const CVec3& zeta(Which w) const { return w == Which::Zeta1 ? zeta1 : zeta2; }
  int axial_index(Which w) const { return w == Which::Zeta1 ? n1 : n2; }
  std::uint64_t content_hash() const;
};

CgoPhase make_phase(int k, const Vec2& eta, const Vec2& xi, double r, double theta);

/// Non-conjugating bilinear dot product a . b over C^3.
inline cplx bdot(const CVec3& a, const CVec3& b) { return a(0) * b(0) + a(1) * b(1) + a(2) * b(2); }

/// Defects of the algebraic identities, each relative to tau^2 (or tau for linear ones).
struct PhaseIdentities {
  double sum_defect = 0.0;    // |zeta1 + conj(zeta2) - i(2 pi k, eta)| / tau
  double self_dot1 = 0.0;     // |zeta1 . zeta1| / tau^2
  double self_dot2 = 0.0;
  double re_im1 = 0.0;        // |Im zeta1 . Re zeta1| / tau^2
  double re_im2 = 0.0;
  double axial1 = 0.0;        // distance of Im zeta_j,1 from theta + 2 pi Z, and Re zeta_j,1
  double axial2 = 0.0;
  double ell_orth = 0.0;      // |ell . (2 pi k, eta)| / (|ell| |(2 pi k, eta)|)
  double ell_xi = 0.0;        // |ell' . xi| / |ell|
  bool lower_bracket = false; // 2 pi r < tau
  bool upper_bracket = false; // tau <= |(2 pi k, eta)|/2 + 4 pi (r+1)(1 + |2 pi k|/|eta|)
  double max_defect() const;
};

PhaseIdentities check_phase(const CgoPhase& p);

/// Periodic cell (0,1) x (-L,L)^2 in the frame (xi, xi_perp), with n_axial x n_trans^2 samples.
///
/// Frequencies: q1 = 2 pi m, q_perp = pi m / L, and q_xi = pi (m + 1/2) / L
/// (antiperiodic in the xi direction, so the symbol never vanishes).
struct TorusLattice {
  double half_side = 2.0;
  int n_axial = 32;
  int n_trans = 64;

  static TorusLattice for_cross_section(const CrossSection& cs, int n_axial = 32, int n_trans = 64) {
    return {2.0 * cs.c_omega(), n_axial, n_trans};
  }
  double q_axial(int m) const { return kTwoPi * m; }
  double q_xi(int m) const { return kPi * (m + 0.5) / half_side; }
  double q_perp(int m) const { return kPi * m / half_side; }
  double cell_volume() const { return 4.0 * half_side * half_side; }
};

struct SymbolGap {
  double gap = 0.0;
  Vec3 argmin = Vec3::Zero();  // (q1, q_xi, q_perp)
};

/// min |q|^2 - 2i zeta.q over the lattice. Throws when the gap is below 1e-8.
SymbolGap symbol_gap(const CgoPhase& phase, const TorusLattice& lat, Which which);

/// Remainder w of u = (1 + w) e^{zeta.x}, stored as torus coefficients.
struct Remainder {
  CgoPhase phase;
  Which which = Which::Zeta1;
  TorusLattice lat;
  std::vector<cplx> coef;  // [a][b][c]: axial, xi, perp (FFT order)
  double gap = 0.0;
  double l2 = 0.0;           // L2 norm on the torus cell
  double l2_omega = 0.0;     // L2 norm over (0,1) x omega on the torus grid
  double h1 = 0.0;           // H1 norm on the cell
  double h2_semi = 0.0;      // (sum |q|^4 |w_q|^2)^{1/2} on the cell
  double residual = 0.0;     // L2 norm of (-Delta - 2 zeta.grad) w + V(1 + w)
  double v_norm = 0.0;       // L2 norm of V on the cell
  int iterations = 0;

  /// Axial Fourier mode m of w at the given points (x' coordinates).
  CVector axial_mode(int m, const Eigen::MatrixX2d& pts) const;
  /// Gradient (d/dx2, d/dx3) of the same mode.
  std::pair<CVector, CVector> axial_mode_gradient(int m, const Eigen::MatrixX2d& pts) const;
  /// Axial modes that carry coefficients above `rel` times the largest.
  std::vector<int> active_axial_modes(double rel = 1e-14) const;
};

struct RemainderOptions {
  double tol = 1e-10;
  int max_iter = 50;
};

/// Fixed point w <- -p(D)^{-1}[V(1 + w)] on the torus.
/// Throws ConvergenceError("tau too small ...") when the residual grows.
Remainder solve_remainder(const PeriodicPotential& v, const CgoPhase& phase, Which which, const TorusLattice& lat,
                          const RemainderOptions& opt = {});

/// (1 + w) e^{zeta.x} on (0,1) x omega in the fiber representation at quasi-momentum theta,
/// on modes n + [-half_width, half_width]. Throws when theta differs from the phase's.
Field cgo_field(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs, int half_width,
                double theta);
Field cgo_field(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs, ModeWindow window,
                double theta);

/// Exact normal derivative of (1 + w) e^{zeta.x} at the boundary nodes, nphi x window.count.
CMatrix cgo_normal_derivative(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs,
                              ModeWindow window);

/// e^{zeta.x} at (x1, x').
cplx exp_phase(const CVec3& zeta, double x1, const Vec2& x);

}  // namespace wgstab
