#include "wgstab/cgo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fft_util.hpp"
#include "wgstab/hash.hpp"

namespace wgstab {

std::uint64_t CgoPhase::content_hash() const {
  return Hasher().value(k).value(eta.x()).value(eta.y()).value(xi.x()).value(xi.y()).value(r).value(theta).digest();
}

CgoPhase make_phase(int k, const Vec2& eta, const Vec2& xi, double r, double theta) {
  if (std::abs(xi.norm() - 1.0) > 1e-12) throw std::invalid_argument("make_phase: xi must be a unit vector");
  if (eta.norm() == 0.0) throw std::invalid_argument("make_phase: eta must be nonzero");
  if (std::abs(xi.dot(eta)) > 1e-12 * std::max(1.0, eta.norm()))
    throw std::invalid_argument("make_phase: xi must be orthogonal to eta");
  if (!(r >= 0.0) || !std::isfinite(r)) throw std::invalid_argument("make_phase: r must be nonnegative");
  CgoPhase p;
  p.k = k;
  p.eta = eta;
  p.xi = xi;
  p.r = r;
  p.theta = theta;
  // 2 pi r < tau is guaranteed only for theta in [0, 2 pi)
  const long fl = static_cast<long>(std::floor(r));
  const bool even = k % 2 == 0;
  const double ell1 = theta + kTwoPi * (even ? fl + 1.0 : fl + 1.5);
  const Vec2 ell_t = -ell1 * kTwoPi * k * eta / eta.squaredNorm();
  p.ell = Vec3(ell1, ell_t.x(), ell_t.y());
  p.tau = std::sqrt(eta.squaredNorm() / 4.0 + kPi * kPi * k * k + p.ell.squaredNorm());
  const Vec2 a1 = -p.tau * xi;
  const Vec2 b1 = eta / 2.0 + ell_t;
  p.zeta1 = CVec3(cplx(0.0, kPi * k + ell1), cplx(a1.x(), b1.x()), cplx(a1.y(), b1.y()));
  const Vec2 b2 = -eta / 2.0 + ell_t;
  p.zeta2 = CVec3(cplx(0.0, -kPi * k + ell1), cplx(-a1.x(), b2.x()), cplx(-a1.y(), b2.y()));
  if (even) {
    p.n1 = static_cast<int>(k / 2 + fl + 1);
    p.n2 = static_cast<int>(fl + 1 - k / 2);
  } else {
    p.n1 = static_cast<int>(fl + (k + 3) / 2);
    p.n2 = static_cast<int>(fl + (3 - k) / 2);
  }
  return p;
}

double PhaseIdentities::max_defect() const {
  return std::max({sum_defect, self_dot1, self_dot2, re_im1, re_im2, axial1, axial2, ell_orth, ell_xi});
}

PhaseIdentities check_phase(const CgoPhase& p) {
  PhaseIdentities d;
  const double t2 = p.tau * p.tau;
  const CVec3 target(cplx(0.0, kTwoPi * p.k), cplx(0.0, p.eta.x()), cplx(0.0, p.eta.y()));
  d.sum_defect = (p.zeta1 + p.zeta2.conjugate() - target).norm() / p.tau;
  d.self_dot1 = std::abs(bdot(p.zeta1, p.zeta1)) / t2;
  d.self_dot2 = std::abs(bdot(p.zeta2, p.zeta2)) / t2;
  d.re_im1 = std::abs(p.zeta1.real().dot(p.zeta1.imag())) / t2;
  d.re_im2 = std::abs(p.zeta2.real().dot(p.zeta2.imag())) / t2;
  d.axial1 = (std::abs(p.zeta1(0).real()) + std::abs(p.zeta1(0).imag() - (p.theta + kTwoPi * p.n1))) / p.tau;
  d.axial2 = (std::abs(p.zeta2(0).real()) + std::abs(p.zeta2(0).imag() - (p.theta + kTwoPi * p.n2))) / p.tau;
  const Vec3 kq(kTwoPi * p.k, p.eta.x(), p.eta.y());
  d.ell_orth = std::abs(p.ell.dot(kq)) / (p.ell.norm() * kq.norm());
  d.ell_xi = std::abs(p.ell.tail<2>().dot(p.xi)) / p.ell.norm();
  d.lower_bracket = kTwoPi * p.r < p.tau;
  const double upper = kq.norm() / 2.0 + 4.0 * kPi * (p.r + 1.0) * (1.0 + std::abs(kTwoPi * p.k) / p.eta.norm());
  d.upper_bracket = p.tau <= upper;
  return d;
}

cplx exp_phase(const CVec3& zeta, double x1, const Vec2& x) {
  return std::exp(zeta(0) * x1 + zeta(1) * x.x() + zeta(2) * x.y());
}

namespace {

int signed_index(int i, int n) { return i < n / 2 ? i : i - n; }

Vec2 perp(const Vec2& xi) { return Vec2(-xi.y(), xi.x()); }

struct Symbol {
  cplx zeta_axial, zeta_xi, zeta_perp;
  cplx operator()(double q1, double qx, double qp) const {
    const double q2 = q1 * q1 + qx * qx + qp * qp;
    return q2 - 2.0 * kI * (zeta_axial * q1 + zeta_xi * qx + zeta_perp * qp);
  }
};

Symbol make_symbol(const CgoPhase& phase, Which which) {
  const CVec3& z = phase.zeta(which);
  const Vec2 xp = perp(phase.xi);
  return {z(0), z(1) * phase.xi.x() + z(2) * phase.xi.y(), z(1) * xp.x() + z(2) * xp.y()};
}

// Nyquist rows of the periodic axes are dropped so the frequency set is symmetric.
bool retained(int a, int c, const TorusLattice& lat) {
  return signed_index(a, lat.n_axial) != -lat.n_axial / 2 && signed_index(c, lat.n_trans) != -lat.n_trans / 2;
}

void validate(const TorusLattice& lat) {
  if (!(lat.half_side > 0.0) || lat.n_axial < 2 || lat.n_trans < 4 || lat.n_axial % 2 || lat.n_trans % 2)
    throw std::invalid_argument("TorusLattice: need positive half-side and even sample counts");
}

}  // namespace

SymbolGap symbol_gap(const CgoPhase& phase, const TorusLattice& lat, Which which) {
  validate(lat);
  const Symbol p = make_symbol(phase, which);
  SymbolGap g{std::numeric_limits<double>::infinity(), Vec3::Zero()};
  for (int a = 0; a < lat.n_axial; ++a)
    for (int b = 0; b < lat.n_trans; ++b)
      for (int c = 0; c < lat.n_trans; ++c) {
        if (!retained(a, c, lat)) continue;
        const double q1 = lat.q_axial(signed_index(a, lat.n_axial));
        const double qx = lat.q_xi(signed_index(b, lat.n_trans));
        const double qp = lat.q_perp(signed_index(c, lat.n_trans));
        const double m = std::abs(p(q1, qx, qp));
        if (m < g.gap) g = {m, Vec3(q1, qx, qp)};
      }
  if (g.gap < 1e-8) {
    std::ostringstream os;
    os << "characteristic lattice point q = (" << g.argmin.x() << ", " << g.argmin.y() << ", " << g.argmin.z() << ")";
    throw std::runtime_error(os.str());
  }
  return g;
}

Remainder solve_remainder(const PeriodicPotential& v, const CgoPhase& phase, Which which, const TorusLattice& lat,
                          const RemainderOptions& opt) {
  validate(lat);
  if (lat.half_side < v.grid_radius()) throw std::invalid_argument("solve_remainder: torus cell must contain omega");
  const int n1 = lat.n_axial, n2 = lat.n_trans;
  const std::size_t total = static_cast<std::size_t>(n1) * n2 * n2;
  const double vol = lat.cell_volume();
  const double ds = 2.0 * lat.half_side / n2;
  const Vec2 xp = perp(phase.xi);

  Remainder out;
  out.phase = phase;
  out.which = which;
  out.lat = lat;
  out.gap = symbol_gap(phase, lat, which).gap;

  // Potential samples on the torus grid; zero outside omega.
  std::vector<double> vgrid(total, 0.0);
  std::vector<char> inside(static_cast<std::size_t>(n2) * n2, 0);
  {
    const int cut = v.cutoff();
    for (int b = 0; b < n2; ++b)
      for (int c = 0; c < n2; ++c) {
        const double yx = -lat.half_side + b * ds, yp = -lat.half_side + c * ds;
        const Vec2 x = yx * phase.xi + yp * xp;
        if (x.norm() >= v.grid_radius()) continue;
        inside[b * n2 + c] = 1;
        std::vector<cplx> modes(cut + 1);
        for (int m = 0; m <= cut; ++m) modes[m] = v.mode_at(m, x);
        for (int a = 0; a < n1; ++a) {
          const double x1 = static_cast<double>(a) / n1;
          double val = modes[0].real();
          for (int m = 1; m <= cut; ++m) val += 2.0 * (modes[m] * std::exp(kI * (kTwoPi * m * x1))).real();
          vgrid[(static_cast<std::size_t>(a) * n2 + b) * n2 + c] = val;
        }
      }
  }
  double vsq = 0.0;
  for (double x : vgrid) vsq += x * x;
  out.v_norm = std::sqrt(vol * vsq / total);

  const Symbol sym = make_symbol(phase, which);
  std::vector<cplx> p(total), pinv(total, 0.0);
  std::vector<double> q2(total);
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b)
      for (int c = 0; c < n2; ++c) {
        const std::size_t i = (static_cast<std::size_t>(a) * n2 + b) * n2 + c;
        const double q1 = lat.q_axial(signed_index(a, n1)), qx = lat.q_xi(signed_index(b, n2)),
                     qp = lat.q_perp(signed_index(c, n2));
        q2[i] = q1 * q1 + qx * qx + qp * qp;
        p[i] = sym(q1, qx, qp);
        if (retained(a, c, lat)) pinv[i] = 1.0 / p[i];
      }
  std::vector<cplx> twist(n2);
  for (int b = 0; b < n2; ++b) twist[b] = std::exp(-kI * (kPi * b / n2));

  detail::Fft3d fft(n1, n2, n2);
  auto& buf = fft.data();
  std::vector<cplx> what(total, 0.0), ghat(total);
  std::vector<cplx> wgrid(total);
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opt.max_iter; ++it) {
    // Grid values of w (twisted along xi).
    std::copy(what.begin(), what.end(), buf.begin());
    fft.backward();
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n2; ++b)
        for (int c = 0; c < n2; ++c) {
          const std::size_t i = (static_cast<std::size_t>(a) * n2 + b) * n2 + c;
          wgrid[i] = buf[i] * std::conj(twist[b]);
        }
    for (std::size_t i = 0; i < total; ++i) {
      const std::size_t bidx = (i / n2) % n2;
      buf[i] = vgrid[i] * (1.0 + wgrid[i]) * twist[bidx];
    }
    fft.forward();
    double rsq = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      ghat[i] = buf[i] / static_cast<double>(total);
      if (pinv[i] != cplx(0.0)) rsq += std::norm(p[i] * what[i] + ghat[i]);
    }
    const double res = std::sqrt(vol * rsq);
    out.iterations = it;
    out.residual = res;
    if (!std::isfinite(res)) throw ConvergenceError("tau too small: remainder iteration produced non-finite values", it, res);
    if (res <= opt.tol * out.v_norm) break;
    if (it >= 2 && res > prev) {
      std::ostringstream os;
      os << "tau too small: remainder residual grew from " << prev << " to " << res << " (tau = " << phase.tau
         << ", gap = " << out.gap << ")";
      throw ConvergenceError(os.str(), it, res);
    }
    if (it == opt.max_iter)
      throw ConvergenceError("remainder iteration reached max_iter before the tolerance", it, res);
    prev = res;
    for (std::size_t i = 0; i < total; ++i) what[i] = -ghat[i] * pinv[i];
  }
  out.coef = std::move(what);

  double l2 = 0.0, h1 = 0.0, h2 = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double m = std::norm(out.coef[i]);
    l2 += m;
    h1 += (1.0 + q2[i]) * m;
    h2 += q2[i] * q2[i] * m;
  }
  out.l2 = std::sqrt(vol * l2);
  out.h1 = std::sqrt(vol * h1);
  out.h2_semi = std::sqrt(vol * h2);
  double om = 0.0;
  for (int a = 0; a < n1; ++a)
    for (int bc = 0; bc < n2 * n2; ++bc)
      if (inside[bc]) om += std::norm(wgrid[static_cast<std::size_t>(a) * n2 * n2 + bc]);
  out.l2_omega = std::sqrt(vol * om / total);
  return out;
}

namespace {

// Separable factors of one axial slice: w_m(x) = sum_c (E_xi W)_{ic} (E_perp)_{ic}.
struct SliceEval {
  CMatrix ew;  // E_xi W
  CMatrix ep;  // E_perp
  CMatrix ewd; // E_xi diag(i q_xi) W
  CMatrix epd; // E_perp diag(i q_perp)
};

SliceEval eval_slice(const Remainder& r, int a, const Eigen::MatrixX2d& pts, bool grad) {
  const int n2 = r.lat.n_trans;
  const int npts = static_cast<int>(pts.rows());
  const Vec2 xp = perp(r.phase.xi);
  CMatrix ex(npts, n2), ep(npts, n2);
  for (int i = 0; i < npts; ++i) {
    const Vec2 x = pts.row(i).transpose();
    const double sx = r.phase.xi.dot(x) + r.lat.half_side, sp = xp.dot(x) + r.lat.half_side;
    for (int b = 0; b < n2; ++b) {
      ex(i, b) = std::exp(kI * (r.lat.q_xi(signed_index(b, n2)) * sx));
      ep(i, b) = std::exp(kI * (r.lat.q_perp(signed_index(b, n2)) * sp));
    }
  }
  const Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      r.coef.data() + static_cast<std::size_t>(a) * n2 * n2, n2, n2);
  SliceEval out;
  out.ew = ex * w;
  if (grad) {
    CVector qx(n2), qp(n2);
    for (int b = 0; b < n2; ++b) {
      qx(b) = kI * r.lat.q_xi(signed_index(b, n2));
      qp(b) = kI * r.lat.q_perp(signed_index(b, n2));
    }
    out.ewd = (ex * qx.asDiagonal()) * w;
    out.epd = ep * qp.asDiagonal();
  }
  out.ep = std::move(ep);
  return out;
}

bool slice_index(const Remainder& r, int m, int& a) {
  const int n1 = r.lat.n_axial;
  if (m < -n1 / 2 + 1 || m > n1 / 2 - 1) return false;
  a = m >= 0 ? m : m + n1;
  return true;
}

}  // namespace

CVector Remainder::axial_mode(int m, const Eigen::MatrixX2d& pts) const {
  int a = 0;
  if (!slice_index(*this, m, a)) return CVector::Zero(pts.rows());
  const SliceEval e = eval_slice(*this, a, pts, false);
  return e.ew.cwiseProduct(e.ep).rowwise().sum();
}

std::pair<CVector, CVector> Remainder::axial_mode_gradient(int m, const Eigen::MatrixX2d& pts) const {
  int a = 0;
  if (!slice_index(*this, m, a)) return {CVector::Zero(pts.rows()), CVector::Zero(pts.rows())};
  const SliceEval e = eval_slice(*this, a, pts, true);
  const CVector dsx = e.ewd.cwiseProduct(e.ep).rowwise().sum();
  const CVector dsp = e.ew.cwiseProduct(e.epd).rowwise().sum();
  const Vec2 xp = perp(phase.xi);
  return {dsx * phase.xi.x() + dsp * xp.x(), dsx * phase.xi.y() + dsp * xp.y()};
}

std::vector<int> Remainder::active_axial_modes(double rel) const {
  const int n1 = lat.n_axial, n2 = lat.n_trans;
  std::vector<double> peak(n1, 0.0);
  double top = 0.0;
  for (int a = 0; a < n1; ++a)
    for (int i = 0; i < n2 * n2; ++i) peak[a] = std::max(peak[a], std::abs(coef[static_cast<std::size_t>(a) * n2 * n2 + i]));
  for (double x : peak) top = std::max(top, x);
  std::vector<int> out;
  for (int a = 0; a < n1; ++a)
    if (top > 0.0 && peak[a] > rel * top) out.push_back(signed_index(a, n1));
  std::sort(out.begin(), out.end());
  return out;
}

Field cgo_field(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs, ModeWindow window,
                double theta) {
  const double dth = std::remainder(theta - phase.theta, kTwoPi);
  if (std::abs(dth) > 1e-12) throw std::invalid_argument("cgo_field: theta differs from the phase's quasi-momentum");
  if (w && (w->phase.content_hash() != phase.content_hash() || w->which != which))
    throw std::invalid_argument("cgo_field: remainder belongs to another phase");
  const int n = phase.axial_index(which);
  const CVec3& z = phase.zeta(which);
  Field u(cs, window, theta);
  auto fill = [&](const Eigen::MatrixX2d& pts, CMatrix& dst) {
    const int np = static_cast<int>(pts.rows());
    CVector e(np);
    for (int i = 0; i < np; ++i) e(i) = std::exp(z(1) * pts(i, 0) + z(2) * pts(i, 1));
    for (int s = 0; s < window.count; ++s) {
      const int m = window.mode(s) - n;
      CVector col = CVector::Zero(np);
      if (m == 0) col.setOnes();
      if (w) col += w->axial_mode(m, pts);
      dst.col(s) = col.cwiseProduct(e);
    }
  };
  fill(cs.interior_points(), u.interior);
  fill(cs.boundary_points(), u.boundary);
  return u;
}

CMatrix cgo_normal_derivative(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs,
                              ModeWindow window) {
  if (w && (w->phase.content_hash() != phase.content_hash() || w->which != which))
    throw std::invalid_argument("cgo_normal_derivative: remainder belongs to another phase");
  const int n = phase.axial_index(which);
  const CVec3& z = phase.zeta(which);
  const auto& pts = cs.boundary_points();
  const auto& nu = cs.normals();
  const int nb = cs.nphi();
  CMatrix out(nb, window.count);
  CVector e(nb), zn(nb);
  for (int j = 0; j < nb; ++j) {
    e(j) = std::exp(z(1) * pts(j, 0) + z(2) * pts(j, 1));
    zn(j) = z(1) * nu(j, 0) + z(2) * nu(j, 1);
  }
  for (int s = 0; s < window.count; ++s) {
    const int m = window.mode(s) - n;
    CVector val = CVector::Zero(nb), dn = CVector::Zero(nb);
    if (m == 0) val.setOnes();
    if (w) {
      val += w->axial_mode(m, pts);
      const auto g = w->axial_mode_gradient(m, pts);
      dn = g.first.cwiseProduct(nu.col(0).cast<cplx>()) + g.second.cwiseProduct(nu.col(1).cast<cplx>());
    }
    out.col(s) = (zn.cwiseProduct(val) + dn).cwiseProduct(e);
  }
  return out;
}

Field cgo_field(const CgoPhase& phase, Which which, const Remainder* w, const CrossSection& cs, int half_width,
                double theta) {
  return cgo_field(phase, which, w, cs, ModeWindow::centred(half_width, phase.axial_index(which)), theta);
}

}  // namespace wgstab
