#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "wgstab/potential.hpp"

using namespace wgstab;

namespace {

// (1/2 pi) int g e^{-i eta.x} dx for a bump, by the radial Hankel integral on a fine Simpson grid.
cplx bump_transform(const Bump& b, const Vec2& eta) {
  const int n = 4000;
  const double h = b.width / n, k = eta.norm();
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double r = i * h;
    const double sr = r / b.width;
    const double g = sr < 1.0 ? b.amplitude * std::exp(1.0 - 1.0 / (1.0 - sr * sr)) : 0.0;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    s += w * g * std::cyl_bessel_j(0.0, k * r) * r;
  }
  return std::exp(-kI * eta.dot(b.centre)) * (s * h / 3.0);
}

}  // namespace

TEST_CASE("from_terms builds a real potential") {
  const CrossSection cs = build_disk(1.0, 12, 32);
  const auto v = PeriodicPotential::from_terms(
      cs, {{1, {0.3, -0.2}, Bump{{0.1, 0.0}, 0.5, 1.0}}, {0, {0.4, 5.0}, Bump{{-0.2, 0.1}, 0.4, 1.0}}}, 2.0, 1.0);
  CHECK(v.cutoff() == 1);
  CHECK(v.reality_defect() < 1e-15);
  const Vec2 x(-0.2, 0.1);
  // mode 0 keeps only the real part of its coefficient
  CHECK(v.mode_at(0, x).real() == doctest::Approx(0.4));
  CHECK(std::abs(v.mode_at(0, x).imag()) < 1e-15);
  const double direct = 0.4 + 2.0 * std::real(cplx(0.3, -0.2) * Bump{{0.1, 0.0}, 0.5, 1.0}(x) *
                                            std::exp(kI * (kTwoPi * 0.3)));
  CHECK(v.value_at(0.3, x) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(v.mode(5).norm() == 0.0);
}

TEST_CASE("zero potential") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  const auto z = PeriodicPotential::zero(cs);
  CHECK(z.is_zero());
  CHECK(h_minus_one_lattice(z, cs, FrequencyLattice::build(4.0, 0.5)) == 0.0);
  CHECK(h_minus_one_dual_oracle(z, 4.0, 31) == 0.0);
  CHECK(admissible_check(z, 2.4).pass);
}

TEST_CASE("admissibility gate") {
  const CrossSection cs = build_disk(1.0, 12, 24);
  const double c = poincare_constant(cs).constant;
  const auto big = PeriodicPotential::from_terms(cs, {{0, {3.0, 0.0}, Bump{{0.0, 0.0}, 0.5, 1.0}}}, 1.0, 0.5);
  const auto a = admissible_check(big, c);
  CHECK_FALSE(a.pass);
  CHECK_FALSE(a.within_m_plus);
  const auto neg = PeriodicPotential::from_terms(cs, {{0, {-0.9, 0.0}, Bump{{0.0, 0.0}, 0.5, 1.0}}}, 1.0, 0.5);
  CHECK_FALSE(admissible_check(neg, c).within_m_minus);
  const auto ok = PeriodicPotential::from_terms(cs, {{0, {-0.4, 0.0}, Bump{{0.0, 0.0}, 0.5, 1.0}}}, 1.0, 0.5);
  CHECK(admissible_check(ok, c).pass);
}

TEST_CASE("direct Fourier coefficient matches the Hankel-transform oracle") {
  const Bump b{{0.1, -0.2}, 0.6, 0.8};
  for (const Vec2 eta : {Vec2(0.0, 0.0), Vec2(1.0, 2.0), Vec2(-4.0, 3.0)}) {
    const cplx exact = bump_transform(b, eta);
    double prev = 1e300;
    for (int nr : {24, 48}) {
      const CrossSection cs = build_disk(1.0, nr, 4 * nr);
      const auto v = PeriodicPotential::from_terms(cs, {{0, {1.0, 0.0}, b}}, 1.0, 0.5);
      const double err = std::abs(fourier_coefficient_direct(v, cs, 0, eta) - exact);
      CHECK(err < prev);
      prev = err;
    }
    CHECK(prev < 2e-3 * std::abs(bump_transform(b, Vec2::Zero())));
  }
}

TEST_CASE("constant mode coefficient at eta = 0 is area / 2 pi") {
  const CrossSection cs = build_disk(1.0, 10, 20);
  const auto v = PeriodicPotential::constant(cs, 0.7, 1.0, 0.5);
  CHECK(std::abs(fourier_coefficient_direct(v, cs, 0, Vec2::Zero()) - 0.7 * 0.5) < 1e-13);
}

TEST_CASE("conjugate symmetry of direct coefficients") {
  const CrossSection cs = build_disk(1.0, 12, 32);
  const auto v = PeriodicPotential::from_terms(cs, {{1, {0.3, -0.2}, Bump{{0.1, 0.0}, 0.5, 1.0}}}, 1.0, 0.5);
  const Vec2 eta(1.5, -0.5);
  CHECK(std::abs(fourier_coefficient_direct(v, cs, 1, eta) - std::conj(fourier_coefficient_direct(v, cs, -1, -eta))) <
        1e-14);
}

TEST_CASE("frequency lattice") {
  const auto lat = FrequencyLattice::build(8.0, 0.25);
  for (const auto& p : lat.points) {
    CHECK(std::hypot(kTwoPi * p.k, p.eta.norm()) <= 8.0 + 1e-12);
    CHECK(lat.weight(p) == doctest::Approx(1.0 / (1.0 + std::pow(kTwoPi * p.k, 2) + p.eta.squaredNorm())));
  }
  int kmax = 0;
  for (const auto& p : lat.points) kmax = std::max(kmax, std::abs(p.k));
  CHECK(kmax == 1);
  CHECK_THROWS(FrequencyLattice::build(0.0, 0.25));
}

TEST_CASE("save and load round trip") {
  const CrossSection cs = build_disk(1.0, 8, 16);
  const auto v = PeriodicPotential::from_terms(cs, {{1, {0.3, -0.2}, Bump{{0.1, 0.0}, 0.5, 1.0}}}, 1.5, 0.25);
  const auto path = (std::filesystem::temp_directory_path() / "wgstab_unit_potential.json").string();
  v.save(path);
  const auto w = PeriodicPotential::load(path, cs);
  CHECK(w.cutoff() == 1);
  CHECK(w.m_plus() == 1.5);
  CHECK(w.m_minus() == 0.25);
  for (int m = -1; m <= 1; ++m) CHECK((w.mode(m) - v.mode(m)).norm() == 0.0);
  CHECK_THROWS(PeriodicPotential::load(path, build_disk(1.0, 9, 16)));
}

TEST_CASE("lattice and dual H^-1 norms agree within a factor 3") {
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto v = PeriodicPotential::from_terms(
      cs, {{0, {0.5, 0.0}, Bump{{0.1, 0.1}, 0.5, 1.0}}, {1, {0.2, 0.1}, Bump{{-0.1, 0.0}, 0.6, 1.0}}}, 1.0, 0.5);
  const double a = h_minus_one_lattice(v, cs, FrequencyLattice::build(8.0, 0.25));
  const double b = h_minus_one_dual_oracle(v, 4.0);
  CHECK(a > 0.0);
  CHECK(a / b < 3.0);
  CHECK(b / a < 3.0);
  // linear in the potential
  CHECK(h_minus_one_dual_oracle(v.scaled(2.0), 4.0) == doctest::Approx(2.0 * b).epsilon(1e-10));
}
