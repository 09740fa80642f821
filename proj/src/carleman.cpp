#include "wgstab/carleman.hpp"

#include <array>
#include <cmath>

namespace wgstab {

namespace {

constexpr std::array<std::array<int, 2>, 10> kMonomials{
    {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}, {3, 0}, {2, 1}, {1, 2}, {0, 3}}};

double ipow(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= x;
  return r;
}

double weight(double tau, const Vec2& xi, const Vec2& x) { return std::exp(-2.0 * tau * xi.dot(x)); }

void require_vanishing(const Field& u, const CarlemanOptions& opt) {
  const double top = u.interior.size() ? u.interior.cwiseAbs().maxCoeff() : 0.0;
  const double edge = u.boundary.size() ? u.boundary.cwiseAbs().maxCoeff() : 0.0;
  if (edge > opt.vanish_tol * std::max(top, 1e-300) && edge > 0.0)
    throw std::invalid_argument("carleman: u must vanish on the lateral boundary");
}

CMatrix discrete_laplacian(const Field& u, const CrossSection& cs) {
  CMatrix out(cs.interior_count(), u.window.count);
  for (int s = 0; s < u.window.count; ++s) {
    const double b = u.beta(s);
    out.col(s) = cs.laplacian_sharp(u.interior.col(s), u.boundary.col(s)) - b * b * u.interior.col(s);
  }
  return out;
}

CMatrix discrete_normal_derivative(const Field& u, const CrossSection& cs) {
  CMatrix out(cs.boundary_count(), u.window.count);
  for (int s = 0; s < u.window.count; ++s) out.col(s) = cs.normal_derivative(u.interior.col(s), u.boundary.col(s));
  return out;
}

// -Delta u + V u on the window widened by the potential's cutoff.
CMatrix perturbed_image(const Field& u, const CMatrix& lap, const PeriodicPotential& v) {
  const int cut = v.cutoff();
  const int n = static_cast<int>(u.interior.rows());
  CMatrix out = CMatrix::Zero(n, u.window.count + 2 * cut);
  out.middleCols(cut, u.window.count) = -lap;
  for (int s = 0; s < u.window.count; ++s)
    for (int m = -cut; m <= cut; ++m) out.col(s + cut + m) += v.mode(m).cwiseProduct(u.interior.col(s));
  return out;
}

double sup_abs(const PeriodicPotential& v) {
  double m = 0.0;
  const int n = std::max(16, 8 * v.cutoff());
  for (int s = 0; s < n; ++s) m = std::max(m, v.sample(static_cast<double>(s) / n).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

CarlemanReport carleman_from_terms(const Field& u, const CMatrix& lu, const CMatrix& dnu, const Vec2& xi, double tau,
                                   const CrossSection& cs, double interior_factor, double boundary_factor,
                                   const CarlemanOptions& opt) {
  if (!(tau > 0.0)) throw std::invalid_argument("carleman: tau must be positive");
  if (std::abs(xi.norm() - 1.0) > 1e-12) throw std::invalid_argument("carleman: xi must be a unit vector");
  CarlemanReport r;
  r.tau = tau;
  r.xi = xi;
  r.d = cs.slab_width(xi);
  const auto& pts = cs.interior_points();
  const RVector& aw = cs.area_weights();
  RVector wint(cs.interior_count());
  for (int p = 0; p < cs.interior_count(); ++p) wint(p) = aw(p) * weight(tau, xi, pts.row(p).transpose());
  for (int s = 0; s < u.interior.cols(); ++s) r.interior += (u.interior.col(s).cwiseAbs2().array() * wint.array()).sum();
  for (int s = 0; s < lu.cols(); ++s) r.operator_term += (lu.col(s).cwiseAbs2().array() * wint.array()).sum();

  const auto& bp = cs.boundary_points();
  const auto& nu = cs.normals();
  const RVector& bw = cs.boundary_weights();
  const BoundaryArc plus = face(cs, xi, 0.0, FaceSign::Illuminated);
  const BoundaryArc minus = face(cs, xi, 0.0, FaceSign::Shadowed);
  auto boundary_sum = [&](const BoundaryArc& arc) {
    double acc = 0.0;
    for (int j : arc.nodes) {
      const double g = bw(j) * weight(tau, xi, bp.row(j).transpose()) * std::abs(xi.dot(nu.row(j).transpose()));
      acc += g * dnu.row(j).squaredNorm();
    }
    return acc;
  };
  r.boundary_plus = boundary_sum(plus);
  r.boundary_minus = boundary_sum(minus);
  r.lhs = interior_factor * tau * tau / r.d * r.interior + boundary_factor * tau * r.boundary_plus;
  r.lhs_d2 = interior_factor * tau * tau / (r.d * r.d) * r.interior + boundary_factor * tau * r.boundary_plus;
  r.rhs = r.operator_term + boundary_factor * tau * r.boundary_minus;
  auto ratio = [](double rhs, double lhs) { return lhs > 0.0 ? rhs / lhs : (rhs > 0.0 ? INFINITY : 1.0); };
  r.ratio = ratio(r.rhs, r.lhs);
  r.ratio_d2 = ratio(r.rhs, r.lhs_d2);
  r.pass = r.lhs <= r.rhs * (1.0 + opt.slack_tol);
  r.pass_d2 = r.lhs_d2 <= r.rhs * (1.0 + opt.slack_tol);
  return r;
}

CarlemanReport carleman_check(const Field& u, const Vec2& xi, double tau, const CrossSection& cs,
                              const CarlemanOptions& opt) {
  require_vanishing(u, opt);
  return carleman_from_terms(u, discrete_laplacian(u, cs), discrete_normal_derivative(u, cs), xi, tau, cs, 8.0, 2.0,
                             opt);
}

CarlemanReport carleman_potential_check(const Field& u, const PeriodicPotential& v, const Vec2& xi, double tau,
                                        const CrossSection& cs, const CarlemanOptions& opt) {
  require_vanishing(u, opt);
  const CMatrix lu = perturbed_image(u, discrete_laplacian(u, cs), v);
  CarlemanReport r = carleman_from_terms(u, lu, discrete_normal_derivative(u, cs), xi, tau, cs, 2.0, 1.0, opt);
  r.tau1 = sup_abs(v) * std::sqrt(r.d / 2.0);
  r.below_threshold = tau < r.tau1;
  return r;
}

cplx CorpusFunction::p(const Vec2& x) const {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < kMonomials.size(); ++i)
    acc += coef[i] * ipow(x.x(), kMonomials[i][0]) * ipow(x.y(), kMonomials[i][1]);
  return acc;
}

Eigen::Vector2cd CorpusFunction::grad_p(const Vec2& x) const {
  Eigen::Vector2cd g = Eigen::Vector2cd::Zero();
  for (std::size_t i = 0; i < kMonomials.size(); ++i) {
    const int a = kMonomials[i][0], b = kMonomials[i][1];
    if (a > 0) g(0) += coef[i] * (a * ipow(x.x(), a - 1) * ipow(x.y(), b));
    if (b > 0) g(1) += coef[i] * (b * ipow(x.x(), a) * ipow(x.y(), b - 1));
  }
  return g;
}

cplx CorpusFunction::laplacian_p(const Vec2& x) const {
  cplx acc = 0.0;
  for (std::size_t i = 0; i < kMonomials.size(); ++i) {
    const int a = kMonomials[i][0], b = kMonomials[i][1];
    if (a > 1) acc += coef[i] * (a * (a - 1) * ipow(x.x(), a - 2) * ipow(x.y(), b));
    if (b > 1) acc += coef[i] * (b * (b - 1) * ipow(x.x(), a) * ipow(x.y(), b - 2));
  }
  return acc;
}

Field CorpusFunction::sample(const CrossSection& cs) const {
  Field u(cs, ModeWindow{k, 1}, theta);
  const double r2 = cs.radius() * cs.radius();
  const auto& pts = cs.interior_points();
  for (int p_ = 0; p_ < cs.interior_count(); ++p_) {
    const Vec2 x = pts.row(p_).transpose();
    u.interior(p_, 0) = (r2 - x.squaredNorm()) * p(x);
  }
  return u;
}

CMatrix CorpusFunction::exact_laplacian(const CrossSection& cs) const {
  CMatrix out(cs.interior_count(), 1);
  const double r2 = cs.radius() * cs.radius();
  const double b = theta + kTwoPi * k;
  const auto& pts = cs.interior_points();
  for (int i = 0; i < cs.interior_count(); ++i) {
    const Vec2 x = pts.row(i).transpose();
    const double f = r2 - x.squaredNorm();
    const Eigen::Vector2cd g = grad_p(x);
    const cplx lap_t = f * laplacian_p(x) - 4.0 * (x.x() * g(0) + x.y() * g(1)) - 4.0 * p(x);
    out(i, 0) = lap_t - b * b * f * p(x);
  }
  return out;
}

CMatrix CorpusFunction::exact_normal_derivative(const CrossSection& cs) const {
  CMatrix out(cs.boundary_count(), 1);
  const auto& bp = cs.boundary_points();
  for (int j = 0; j < cs.boundary_count(); ++j) out(j, 0) = -2.0 * cs.radius() * p(bp.row(j).transpose());
  return out;
}

std::vector<CorpusFunction> carleman_corpus(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> kd(-1, 1);
  std::uniform_real_distribution<double> td(0.0, kTwoPi);
  std::vector<CorpusFunction> out(count);
  for (auto& f : out) {
    f.theta = td(rng);
    f.k = kd(rng);
    f.coef.resize(kMonomials.size());
    for (auto& c : f.coef) c = cplx(nd(rng), nd(rng));
  }
  return out;
}

CarlemanSuiteSummary carleman_suite(const std::vector<CorpusFunction>& corpus, const std::vector<double>& taus,
                                    const std::vector<Vec2>& directions, const CrossSection& cs,
                                    const PeriodicPotential* v, const CarlemanOptions& opt) {
  CarlemanSuiteSummary s;
  for (const auto& f : corpus) {
    const Field u = f.sample(cs);
    const CMatrix lap_exact = f.exact_laplacian(cs);
    const CMatrix dnu_exact = f.exact_normal_derivative(cs);
    const CMatrix lu_exact = v ? perturbed_image(u, lap_exact, *v) : lap_exact;
    for (const Vec2& xi : directions)
      for (double tau : taus) {
        CarlemanReport r = v ? carleman_potential_check(u, *v, xi, tau, cs, opt) : carleman_check(u, xi, tau, cs, opt);
        const CarlemanReport e = carleman_from_terms(u, lu_exact, dnu_exact, xi, tau, cs, v ? 2.0 : 8.0,
                                                     v ? 1.0 : 2.0, opt);
        ++s.cases;
        s.passes += r.pass;
        s.passes_d2 += r.pass_d2;
        if (!r.below_threshold) {
          ++s.gated;
          s.gated_passes += r.pass;
        }
        s.needed_slack = std::max(s.needed_slack, r.lhs / r.rhs - 1.0);
        s.stencil_slack = std::max(s.stencil_slack, std::abs(r.ratio / e.ratio - 1.0));
        s.reports.push_back(r);
      }
  }
  s.needed_slack = std::max(0.0, s.needed_slack);
  return s;
}

}  // namespace wgstab
