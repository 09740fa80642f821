#include <doctest.h>

#include <cmath>

#include "wgstab/reconstruction.hpp"

using namespace wgstab;

namespace {

const PotentialTerm kBase{1, {0.15, 0.0}, Bump{{0.1, -0.1}, 0.6, 1.0}};
const PotentialTerm kDiff{0, {1.0, 0.0}, Bump{{-0.1, 0.2}, 0.5, 0.5}};

ExtractionConfig desk_config() {
  ExtractionConfig cfg;
  cfg.theta = -3.0;
  cfg.half_width = 1;
  return cfg;
}

}  // namespace

TEST_CASE("phi branches") {
  CHECK(phi(0.0, 0.5) == 0.0);
  CHECK(phi(0.7, 0.5) == 0.7);
  CHECK(phi(0.5, 0.5) == 0.5);
  CHECK(phi(3.0, 0.5) == 3.0);
  CHECK(phi(0.1, 0.5) == doctest::Approx(1.0 / std::log(std::abs(std::log(0.1)))));
  CHECK(phi(0.1, 0.5) == doctest::Approx(1.19899).epsilon(1e-5));
  // gamma* above 1/e: the middle branch is negative on (1/e, gamma*)
  CHECK(phi(0.45, 0.5) < 0.0);
  CHECK_THROWS(phi(0.1, 1.5));
  CHECK_THROWS(phi(-0.1, 0.5));
}

TEST_CASE("phi is monotone on each branch") {
  const double gs = 0.3;
  double prev = phi(0.0, gs);
  for (int i = 1; i < 3000; ++i) {
    const double g = gs * i / 3000.0;
    const double p = phi(g, gs);
    CHECK(p >= prev);
    prev = p;
  }
  prev = phi(gs, gs);
  for (int i = 1; i < 100; ++i) {
    const double p = phi(gs + 0.1 * i, gs);
    CHECK(p >= prev);
    prev = p;
  }
}

TEST_CASE("F' margin: closed form against sampled directions") {
  const CrossSection cs = build_disk(1.0, 4, 2048);
  for (double eps : {0.1, 0.2, 0.5}) {
    ExtractionConfig cfg;
    cfg.epsilon = eps;
    cfg.patch_margin = 1.0;
    const FprimeCheck c = check_fprime(cs, cfg);
    CHECK(c.ok);
    CHECK(c.required_margin == doctest::Approx(fprime_margin(eps)).epsilon(2e-3));
  }
  ExtractionConfig bad;
  bad.epsilon = 0.5;
  bad.patch_margin = 0.1;
  const FprimeCheck c = check_fprime(cs, bad);
  CHECK_FALSE(c.ok);
  CHECK(c.message.find("F'") != std::string::npos);
  bad.mode = DataMode::Partial;
  const auto v = PeriodicPotential::zero(cs);
  CHECK_THROWS(extract_coefficient(v, v, make_phase(0, Vec2(0.0, 1.0), Vec2(1.0, 0.0), 1.0, bad.theta), cs, bad));
}

TEST_CASE("identical potentials give a zero estimate") {
  const CrossSection cs = build_disk(1.0, 16, 64);
  const auto v = PeriodicPotential::from_terms(cs, {kBase}, 1.0, 0.5);
  const ExtractionConfig cfg = desk_config();
  const ExtractionResult r = extract_coefficient(v, v, make_phase(0, Vec2(0.0, 1.0), Vec2(1.0, 0.0), 1.0, cfg.theta), cs, cfg);
  CHECK(std::abs(r.estimate) <= cfg.solver_tol);
  CHECK(std::abs(r.direct) == 0.0);
}

TEST_CASE("k = 0 estimate, orthogonality identity and remainder bound") {
  const CrossSection cs = build_disk(1.0, 32, 128);
  const auto v1 = PeriodicPotential::from_terms(cs, {kBase}, 1.0, 0.5);
  const auto v2 = PeriodicPotential::from_terms(cs, {kBase, kDiff}, 1.0, 0.5);
  const ExtractionConfig cfg = desk_config();
  const CgoPhase ph = make_phase(0, Vec2(0.0, 1.0), Vec2(1.0, 0.0), 0.5, cfg.theta);
  const ExtractionResult r = extract_coefficient(v1, v2, ph, cs, cfg);
  // 2 pi convention: direct is 2 pi times the transform of V2 - V1
  CHECK(std::abs(r.direct - kTwoPi * fourier_coefficient_direct(v2 - v1, cs, 0, Vec2(0.0, 1.0))) < 1e-14);
  CHECK(r.error() < 0.1 * std::abs(r.direct));
  CHECK(std::abs(r.boundary_full - r.interior) <= 10.0 * (cfg.solver_tol + r.stencil_error) * r.coupling_mass);
  CHECK(std::abs(r.remainder) <= 1.05 * r.remainder_bound);
  CHECK(r.cgo_residual <= 1e-10);

  // the same estimate through assembled DN matrices
  const ModeWindow w = ModeWindow::centred(cfg.half_width, ph.n2);
  const DnOperator l1 = assemble_dn(v1, cfg.theta, cs, w, full_boundary(cs));
  const DnOperator l2 = assemble_dn(v2, cfg.theta, cs, w, full_boundary(cs));
  const ExtractionResult d = extract_from_dn(l1, l2, v1, v2, ph, cs, cfg);
  CHECK(std::abs(d.estimate - r.estimate) < 1e-8 * std::abs(r.estimate));
  CHECK(std::abs(d.boundary_shadow - r.boundary_shadow) < 1e-8 * std::abs(r.boundary_shadow));
  CHECK_THROWS(extract_from_dn(l1, l2, v1, v2, make_phase(0, Vec2(0.0, 1.0), Vec2(1.0, 0.0), 3.0, cfg.theta), cs, cfg));

  // conjugate symmetry of the estimates for real V
  const ExtractionResult m = extract_coefficient(v1, v2, make_phase(0, Vec2(0.0, -1.0), Vec2(1.0, 0.0), 0.5, cfg.theta), cs, cfg);
  CHECK(std::abs(m.direct - std::conj(r.direct)) < 1e-14);
  CHECK(std::abs(m.estimate - std::conj(r.estimate)) < 0.1 * std::abs(r.direct));
}

TEST_CASE("lattice sweep ordering and feasibility") {
  const CrossSection cs = build_disk(1.0, 32, 128);
  const auto v1 = PeriodicPotential::from_terms(cs, {kBase}, 1.0, 0.5);
  const auto v2 = PeriodicPotential::from_terms(cs, {kBase, kDiff}, 1.0, 0.5);
  ExtractionConfig cfg = desk_config();
  cfg.lattice = FrequencyLattice::build(2.0, 1.0);
  const LatticeTable t = sweep_lattice(v1, v2, cs, cfg, 2);
  REQUIRE(t.entries.size() == cfg.lattice.points.size());
  for (std::size_t i = 1; i < t.entries.size(); ++i) {
    const auto& a = t.entries[i - 1];
    const auto& b = t.entries[i];
    CHECK(std::tuple(a.k, a.eta.x(), a.eta.y()) < std::tuple(b.k, b.eta.x(), b.eta.y()));
  }
  int ok = 0;
  for (const auto& e : t.entries) {
    if (e.eta.norm() == 0.0 || std::abs(e.eta.x()) > 0.0) {
      CHECK(e.status == PointStatus::DirectionInfeasible);
      continue;
    }
    REQUIRE(e.status == PointStatus::Ok);
    ++ok;
    CHECK(std::abs(e.estimate - e.direct) <= 0.15 * std::abs(e.direct));
  }
  CHECK(ok == 4);
  CHECK(t.feasible() == 4);

  // same table with one worker
  const LatticeTable s = sweep_lattice(v1, v2, cs, cfg, 1);
  for (std::size_t i = 0; i < s.entries.size(); ++i) CHECK(s.entries[i].estimate == t.entries[i].estimate);

  cfg.all_directions = true;
  cfg.tau_max = 1e9;
  cfg.lattice = FrequencyLattice::build(1.0, 1.0);
  const LatticeTable all = sweep_lattice(v1, v2, cs, cfg, 1);
  for (const auto& e : all.entries)
    if (e.eta.norm() > 0.0) CHECK(e.status == PointStatus::Ok);
}

TEST_CASE("synthesis") {
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto lat = FrequencyLattice::build(8.0, 0.25);

  SUBCASE("zero table") {
    LatticeTable t;
    for (const auto& p : lat.points) t.entries.push_back({p.k, p.eta});
    const Synthesis s = synthesize(t, lat, cs, 1.0);
    CHECK(s.h_minus_one == 0.0);
    CHECK(s.sample(0.3).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.tail_bound == doctest::Approx(kPi / 64.0).epsilon(1e-14));
    CHECK(s.tail_bound == doctest::Approx(0.0491).epsilon(1e-3));
  }

  SUBCASE("exact coefficients reproduce a separable potential") {
    const auto v = PeriodicPotential::from_terms(cs, {{0, {1.0, 0.0}, Bump{{0.1, -0.2}, 0.5, 1.0}}}, 1.0, 0.5);
    LatticeTable t;
    for (const auto& p : lat.points) {
      LatticeEntry e{p.k, p.eta};
      e.estimate = kTwoPi * fourier_coefficient_direct(v, cs, p.k, p.eta);
      t.entries.push_back(e);
    }
    const Synthesis s = synthesize(t, lat, cs, 1.0);
    const RVector truth = v.sample(0.0), rec = s.sample(0.0);
    const RVector& a = cs.area_weights();
    CHECK(std::sqrt(a.dot((rec - truth).cwiseAbs2()) / a.dot(truth.cwiseAbs2())) <= 0.3);
    CHECK(s.used == static_cast<int>(lat.points.size()));
    CHECK(s.h_minus_one == doctest::Approx(h_minus_one_lattice(v, cs, lat)).epsilon(1e-10));
  }

  SUBCASE("infeasible points are excluded and counted") {
    LatticeTable t;
    LatticeEntry e{0, Vec2(0.0, 1.0)};
    e.status = PointStatus::DirectionInfeasible;
    e.estimate = 1.0;
    t.entries.push_back(e);
    const Synthesis s = synthesize(t, lat, cs, 1.0);
    CHECK(s.excluded == 1);
    CHECK(s.used == 0);
    CHECK(s.h_minus_one == 0.0);
  }
}

TEST_CASE("stability sweep records") {
  const CrossSection cs = build_disk(1.0, 12, 24);
  const auto v1 = PeriodicPotential::from_terms(cs, {kBase}, 1.0, 0.5);
  const auto w = PeriodicPotential::from_terms(cs, {{0, {1.0, 0.0}, Bump{{-0.2, 0.25}, 0.5, 1.0}}}, 1.0, 0.5);
  StabilityOptions opt;
  opt.half_width = 1;
  opt.box_n = 63;
  const StabilityResult r = stability_sweep(v1, w, {0.0, 1e-2, 1e-1}, {3e-2}, cs, full_boundary(cs), opt);
  REQUIRE(r.records.size() == 4u);
  CHECK(r.records[0].gamma == 0.0);
  CHECK(r.records[0].e == 0.0);
  CHECK(r.records[0].phi == 0.0);
  CHECK(r.records[0].ratio == 0.0);
  CHECK(r.monotone);
  CHECK(r.c_fit > 0.0);
  for (const auto& rec : r.records)
    if (!rec.held_out) CHECK(rec.e <= r.c_fit * rec.phi * (1.0 + 1e-12) + (rec.e == 0.0 ? 1.0 : 0.0));
  CHECK(r.records[3].held_out);
  opt.gamma_star = 1.0;
  CHECK_THROWS(stability_sweep(v1, w, {0.0}, {}, cs, full_boundary(cs), opt));
}
