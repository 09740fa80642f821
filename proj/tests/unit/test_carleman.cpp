#include <doctest.h>

#include <cmath>

#include "wgstab/carleman.hpp"

using namespace wgstab;

TEST_CASE("corpus is reproducible from its seed") {
  const auto a = carleman_corpus(5, 42), b = carleman_corpus(5, 42), c = carleman_corpus(5, 43);
  REQUIRE(a.size() == 5u);
  for (int i = 0; i < 5; ++i) {
    CHECK(a[i].coef == b[i].coef);
    CHECK(a[i].k == b[i].k);
  }
  CHECK(a[0].coef != c[0].coef);
}

TEST_CASE("corpus functions vanish on the boundary and carry exact derivatives") {
  const auto f = carleman_corpus(3, 5);
  for (const auto& g : f) {
    const CrossSection cs = build_disk(1.0, 24, 48);
    const Field u = g.sample(cs);
    CHECK(u.boundary.cwiseAbs().maxCoeff() == 0.0);
    // exact Laplacian (including the axial part) against a finite-difference check of the transverse part
    const CMatrix lap = g.exact_laplacian(cs);
    const double beta = g.theta + kTwoPi * g.k;
    const int s = u.window.slot(g.k);
    const CVector fd = cs.laplacian_sharp(u.interior.col(s), u.boundary.col(s)) - beta * beta * u.interior.col(s);
    CHECK((fd - lap.col(s)).cwiseAbs().maxCoeff() < 0.05 * lap.col(s).cwiseAbs().maxCoeff());
    // d_nu of (R^2 - r^2) P is -2 R P on the unit circle
    const CMatrix dn = g.exact_normal_derivative(cs);
    for (int j = 0; j < cs.nphi(); j += 7) {
      const Vec2 x = cs.boundary_points().row(j);
      CHECK(std::abs(dn(j, s) + 2.0 * g.p(x)) < 1e-12 * (1.0 + std::abs(g.p(x))));
    }
  }
}

TEST_CASE("Carleman estimate holds on a small suite") {
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto corpus = carleman_corpus(10, 7);
  const std::vector<double> taus{1, 4, 16};
  const std::vector<Vec2> dirs{{1.0, 0.0}, Vec2(1.0, 1.0).normalized()};
  const auto s = carleman_suite(corpus, taus, dirs, cs, nullptr);
  CHECK(s.cases == 60);
  CHECK(s.passes == 60);
  CHECK(s.needed_slack == 0.0);
  const auto v = PeriodicPotential::from_terms(cs, {{1, {0.5, 0.0}, Bump{{0.1, 0.0}, 0.6, 1.0}}}, 1.0, 1.0);
  const auto sv = carleman_suite(corpus, taus, dirs, cs, &v);
  CHECK(sv.gated_passes == sv.gated);
  CHECK(sv.reports.front().tau1 == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("stencil slack shrinks under refinement") {
  const auto corpus = carleman_corpus(10, 7);
  const std::vector<double> taus{2, 8, 32};
  const std::vector<Vec2> dirs{{0.0, 1.0}};
  const auto a = carleman_suite(corpus, taus, dirs, build_disk(1.0, 24, 48), nullptr);
  const auto b = carleman_suite(corpus, taus, dirs, build_disk(1.0, 48, 96), nullptr);
  CHECK(b.stencil_slack <= 0.5 * a.stencil_slack);
}

TEST_CASE("Carleman check requires vanishing boundary values") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  Field u(cs, ModeWindow::centred(0), 0.0);
  u.interior.setOnes();
  u.boundary.setOnes();
  CHECK_THROWS(carleman_check(u, Vec2(1.0, 0.0), 1.0, cs));
}
