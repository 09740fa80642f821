#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "wgstab/dn_map.hpp"

using namespace wgstab;

namespace {

PeriodicPotential coupled(const CrossSection& cs) {
  return PeriodicPotential::from_terms(
      cs, {{1, {0.5, 0.0}, Bump{{0.1, 0.0}, 0.6, 1.0}}, {0, {0.3, 0.0}, Bump{{-0.2, 0.1}, 0.5, 1.0}}}, 2.0, 1.0);
}

// DN eigenvalue of -Delta' + beta^2 on the unit disk for cos(n phi): beta I_n'(beta) / I_n(beta).
double dn_eigenvalue(int n, double beta) {
  if (beta == 0.0) return n;
  const double in = std::cyl_bessel_i(static_cast<double>(n), beta);
  const double inp1 = std::cyl_bessel_i(static_cast<double>(n + 1), beta);
  return n + beta * inp1 / in;
}

double dn_error(int nr, int n, double theta, int k) {
  const CrossSection cs = build_disk(1.0, nr, 2 * nr);
  const ModeWindow w = ModeWindow::centred(1);
  const DnOperator dn = assemble_dn(PeriodicPotential::zero(cs), theta, cs, w, full_boundary(cs));
  CMatrix g = CMatrix::Zero(cs.nphi(), w.count);
  for (int j = 0; j < cs.nphi(); ++j) g(j, w.slot(k)) = std::cos(n * cs.boundary_angle(j));
  const CMatrix out = dn.apply(g);
  const double lam = dn_eigenvalue(n, std::abs(theta + kTwoPi * k));
  double err = 0.0;
  for (int j = 0; j < cs.nphi(); ++j) err = std::max(err, std::abs(out(j, w.slot(k)) - lam * g(j, w.slot(k))));
  return err / std::abs(lam);
}

}  // namespace

TEST_CASE("DN map of V = 0 matches Bessel eigenvalues at second order") {
  for (const auto& [n, theta, k] : {std::tuple{1, 0.0, 0}, std::tuple{2, 0.7, 1}, std::tuple{0, 0.4, -1}}) {
    const double e12 = dn_error(12, n, theta, k), e24 = dn_error(24, n, theta, k), e48 = dn_error(48, n, theta, k);
    CHECK(e24 < e12 / 3.0);
    CHECK(e48 < e24 / 3.0);
    CHECK(e48 < 5e-2);
  }
}

TEST_CASE("Hermitian pairing defect is small and decreases under refinement") {
  double prev = 1e300;
  for (int nr : {12, 24}) {
    const CrossSection cs = build_disk(1.0, nr, 2 * nr);
    const double d = hermitian_pairing_defect(assemble_dn(coupled(cs), 0.3, cs, ModeWindow::centred(2), full_boundary(cs)), cs);
    CHECK(d <= 5e-2);
    CHECK(d < prev);
    prev = d;
  }
}

TEST_CASE("DN difference norm: power iteration vs dense oracle") {
  const CrossSection cs = build_disk(1.0, 10, 20);
  const ModeWindow w = ModeWindow::centred(1);
  const auto v1 = coupled(cs);
  const auto v2 = v1 + PeriodicPotential::from_terms(cs, {{0, {0.1, 0.0}, Bump{{0.3, 0.0}, 0.4, 1.0}}}, 2.0, 1.0);
  const DnOperator a = assemble_dn(v1, 0.3, cs, w, full_boundary(cs));
  const DnOperator b = assemble_dn(v2, 0.3, cs, w, full_boundary(cs));
  const double dense = dn_difference_norm_dense(a, b, cs);
  CHECK(dense > 0.0);
  CHECK(dn_difference_norm(a, b, cs, {1e-10, 20000, 7}).value == doctest::Approx(dense).epsilon(1e-4));
  CHECK(dn_difference_norm(a, a, cs).value == 0.0);

  const BoundaryArc sh = face(cs, Vec2(1.0, 0.0), 0.4, FaceSign::Shadowed);
  const DnOperator as = a.restricted(sh), bs = b.restricted(sh);
  CHECK(as.matrix.rows() == static_cast<long>(sh.nodes.size() * w.count));
  // restricting the output cannot increase the norm
  CHECK(dn_difference_norm_dense(as, bs, cs) <= dense * (1.0 + 1e-10));
}

TEST_CASE("partial DN rows equal the full rows on the arc") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  const ModeWindow w = ModeWindow::centred(1);
  const auto v = coupled(cs);
  const BoundaryArc sh = face(cs, Vec2(0.0, 1.0), 0.2, FaceSign::Shadowed);
  const DnOperator full = assemble_dn(v, 0.1, cs, w, full_boundary(cs));
  const DnOperator part = assemble_dn(v, 0.1, cs, w, sh);
  CHECK((full.restricted(sh).matrix - part.matrix).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("DN cache round trip") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  const ModeWindow w = ModeWindow::centred(1);
  const auto v = coupled(cs);
  const auto dir = std::filesystem::temp_directory_path() / "wgstab_unit_dn_cache";
  std::filesystem::remove_all(dir);
  const DnOperator fresh = assemble_dn(v, 0.2, cs, w, full_boundary(cs));
  const DnCacheStats s0 = dn_cache_stats();
  const DnOperator first = assemble_dn(v, 0.2, cs, w, full_boundary(cs), dir.string());
  const DnOperator again = assemble_dn(v, 0.2, cs, w, full_boundary(cs), dir.string());
  const DnCacheStats s1 = dn_cache_stats();
  CHECK(s1.misses - s0.misses == 1);
  CHECK(s1.hits - s0.hits == 1);
  CHECK((again.matrix - fresh.matrix).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(again.potential_hash == fresh.potential_hash);
  CHECK(again.arc.nodes == fresh.arc.nodes);

  const std::string stem = (dir / "explicit").string();
  save_dn(fresh, stem);
  const DnOperator loaded = load_dn(stem);
  CHECK((loaded.matrix - fresh.matrix).norm() == 0.0);
  CHECK(loaded.window == fresh.window);
  CHECK(loaded.theta == fresh.theta);
  // different theta gets a different cache entry
  CHECK(dn_cache_stem(dir.string(), v.content_hash(), 0.2, cs, w, full_boundary(cs)) !=
        dn_cache_stem(dir.string(), v.content_hash(), 0.3, cs, w, full_boundary(cs)));
  std::filesystem::remove_all(dir);
}

TEST_CASE("traces of a solution") {
  const CrossSection cs = build_disk(1.0, 16, 32);
  const ModeWindow w = ModeWindow::centred(1);
  const auto op = assemble(PeriodicPotential::zero(cs), 0.0, w, cs);
  CMatrix g = CMatrix::Zero(cs.nphi(), w.count);
  for (int j = 0; j < cs.nphi(); ++j) g(j, w.slot(0)) = std::cos(cs.boundary_angle(j));
  const Field u = solve_dirichlet(*op, g);  // u = r cos(phi) in mode 0
  const TraceData d = trace_dirichlet(u);
  CHECK((d.values - g).norm() == 0.0);
  const BoundaryArc sh = face(cs, Vec2(1.0, 0.0), 0.0, FaceSign::Shadowed);
  const TraceData nn = trace_neumann(u, cs, sh);
  CHECK(nn.nodes == sh.nodes);
  for (std::size_t r = 0; r < sh.nodes.size(); ++r)
    CHECK(std::abs(nn.values(r, w.slot(0)) - std::cos(cs.boundary_angle(sh.nodes[r]))) < 5e-3);
}

TEST_CASE("theta sweep of the full DN difference norm") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  const auto v1 = coupled(cs);
  const auto v2 = v1 + PeriodicPotential::from_terms(cs, {{0, {0.2, 0.0}, Bump{{0.0, 0.0}, 0.5, 1.0}}}, 2.0, 1.0);
  const ThetaSweep s = full_norm_over_theta(v1, v2, {-1.0, 0.0, 1.0}, cs, ModeWindow::centred(1), full_boundary(cs));
  CHECK(s.values.size() == 3u);
  CHECK(s.sup == doctest::Approx(*std::max_element(s.values.begin(), s.values.end())));
}
