#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wgstab/carleman.hpp"
#include "wgstab/reconstruction.hpp"
#include "wgstab/report_io.hpp"

using namespace wgstab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

template <class... T>
std::string fmt(const char* f, T... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome phase_algebra() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int brackets = 0;
  for (int i = 0; i < 1000; ++i) {
    const int k = static_cast<int>(rng() % 11) - 5;
    const double a = kTwoPi * u(rng), n = 0.05 + 20.0 * u(rng);
    const Vec2 eta(n * std::cos(a), n * std::sin(a));
    const Vec2 xi = (u(rng) < 0.5 ? 1.0 : -1.0) * Vec2(-std::sin(a), std::cos(a));
    // r >= 1 and theta in [0, 2 pi), the range on which the bracket is stated
    const CgoPhase p = make_phase(k, eta, xi, 1.0 + 40.0 * u(rng), kTwoPi * u(rng));
    const PhaseIdentities d = check_phase(p);
    const CVec3 s = p.zeta1 + p.zeta2.conjugate();
    const double sum = (s - kI * CVec3(kTwoPi * k, eta.x(), eta.y())).norm() / p.tau;
    worst = std::max({worst, d.max_defect(), sum});
    brackets += d.lower_bracket && d.upper_bracket;
  }
  const double t = since(t0);
  return {worst <= 1e-12 && brackets == 1000 && t < 1.0,
          fmt("max relative defect %.2e, bracket %d/1000, %.3f s", worst, brackets, t)};
}

Outcome cgo_decay() {
  const auto t0 = Clock::now();
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto v = PeriodicPotential::from_terms(
      cs, {{1, {0.5, 0.0}, Bump{{0.1, 0.0}, 0.6, 1.0}}, {0, {0.3, 0.0}, Bump{{-0.2, 0.1}, 0.5, 1.0}}}, 2.0, 1.0);
  const TorusLattice lat = TorusLattice::for_cross_section(cs);
  std::vector<double> taus, norms;
  double worst = 0.0;
  for (double r : {5.0, 10.0, 20.0, 40.0}) {
    const CgoPhase p = make_phase(0, Vec2(0.0, 2.0), Vec2(1.0, 0.0), r, 0.3);
    const Remainder w = solve_remainder(v, p, Which::Zeta1, lat);
    taus.push_back(p.tau);
    norms.push_back(w.l2);
    worst = std::max(worst, w.residual / w.v_norm);
  }
  const double slope = io::loglog_fit(taus, norms).slope;
  const double t = since(t0);
  return {slope >= -1.3 && slope <= -0.7 && worst <= 1e-10 && t < 120.0,
          fmt("slope %.3f, max residual/|V| %.2e, %.1f s", slope, worst, t)};
}

Outcome carleman() {
  const auto t0 = Clock::now();
  const auto corpus = carleman_corpus(100, 7);
  const std::vector<double> taus{1, 2, 4, 8, 16, 32};
  const std::vector<Vec2> dirs{{1.0, 0.0}, {0.0, 1.0}, Vec2(1.0, 1.0).normalized()};
  bool ok = true;
  double slack[2] = {0.0, 0.0};
  std::ostringstream os;
  int i = 0;
  for (int nr : {24, 48}) {
    const CrossSection cs = build_disk(1.0, nr, 2 * nr);
    const auto s = carleman_suite(corpus, taus, dirs, cs, nullptr);
    const auto v = PeriodicPotential::from_terms(cs, {{1, {0.5, 0.0}, Bump{{0.1, 0.0}, 0.6, 1.0}}}, 1.0, 1.0);
    const auto g = carleman_suite(corpus, taus, dirs, cs, &v);
    ok = ok && s.passes == s.cases && g.gated_passes == g.gated && g.gated > 0;
    slack[i++] = s.stencil_slack;
    os << "Nr=" << nr << " M=0 " << s.passes << "/" << s.cases << " M=1 gated " << g.gated_passes << "/" << g.gated
       << " stencil slack " << fmt("%.4f", s.stencil_slack) << "; ";
  }
  const double t = since(t0);
  ok = ok && slack[1] <= 0.5 * slack[0] && t < 300.0;
  return {ok, os.str() + fmt("%.1f s", t)};
}

Outcome forward_dn() {
  const double j01 = 2.404825557695773;
  const double lam = poincare_constant(build_disk(1.0, 24, 48)).eigenvalue;
  const double rel = std::abs(lam - j01 * j01) / (j01 * j01);

  std::vector<double> defects;
  for (int nr : {12, 24, 48}) {
    const CrossSection cs = build_disk(1.0, nr, 2 * nr);
    const auto v = PeriodicPotential::from_terms(
        cs, {{1, {0.5, 0.0}, Bump{{0.1, 0.0}, 0.6, 1.0}}, {0, {0.3, 0.0}, Bump{{-0.2, 0.1}, 0.5, 1.0}}}, 2.0, 1.0);
    defects.push_back(hermitian_pairing_defect(assemble_dn(v, 0.3, cs, ModeWindow::centred(2), full_boundary(cs)), cs));
  }
  const bool dn_ok = defects[0] > defects[1] && defects[1] > defects[2] && defects[1] <= 5e-2;

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  std::vector<CVector> cells(9, CVector(50));
  double mass = 0.0;
  for (auto& c : cells) {
    for (auto& x : c) x = cplx(nd(rng), nd(rng));
    mass += c.squaredNorm();
  }
  const auto fib = fbg_forward(cells, -4, 32);
  double fmass = 0.0;
  for (const auto& f : fib) fmass += f.squaredNorm();
  const double parseval = std::abs(fmass / 32.0 - mass) / mass;
  const auto back = fbg_inverse(fib, -4, 9);
  double trip = 0.0;
  for (std::size_t c = 0; c < cells.size(); ++c) trip = std::max(trip, (back[c] - cells[c]).norm() / cells[c].norm());

  return {rel <= 0.01 && dn_ok && parseval <= 1e-10 && trip <= 1e-10,
          fmt("lambda1 %.5f (rel %.2e); pairing defect %.2e/%.2e/%.2e at Nr 12/24/48; FBG Parseval %.1e round trip %.1e",
              lam, rel, defects[0], defects[1], defects[2], parseval, trip)};
}

Outcome orthogonality() {
  const CrossSection cs = build_disk(1.0, 32, 128);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    auto bump = [&](double amp) {
      const double rr = 0.4 * u(rng), a = kTwoPi * u(rng);
      return Bump{{rr * std::cos(a), rr * std::sin(a)}, 0.35 + 0.3 * u(rng), amp};
    };
    const PotentialTerm t1{1, std::polar(0.2 * u(rng), kTwoPi * u(rng)), bump(1.0)};
    const PotentialTerm t0{0, {1.0, 0.0}, bump(0.4 * u(rng))};
    const PotentialTerm g{static_cast<int>(rng() % 2), std::polar(0.5, kTwoPi * u(rng)), bump(0.6)};
    const auto v1 = PeriodicPotential::from_terms(cs, {t1, t0}, 1.0, 0.5);
    const auto v2 = PeriodicPotential::from_terms(cs, {t1, t0, g}, 2.0, 0.5);
    const int k = static_cast<int>(rng() % 3) - 1;
    const double theta = k == 0 ? -kPi + kTwoPi * u(rng) : -kPi + 0.05 + 0.5 * u(rng);
    const double r = k == 0 ? 0.5 + u(rng) : 0.3 + 0.5 * u(rng);
    const double a = kTwoPi * u(rng), en = k == 0 ? 0.5 + 3.5 * u(rng) : 8.0 + 2.0 * u(rng);
    ExtractionConfig cfg;
    cfg.theta = theta;
    cfg.half_width = 1;
    const CgoPhase ph = make_phase(k, Vec2(en * std::cos(a), en * std::sin(a)), Vec2(-std::sin(a), std::cos(a)), r, theta);
    const ExtractionResult res = extract_coefficient(v1, v2, ph, cs, cfg);
    const double tol = 10.0 * (cfg.solver_tol + res.stencil_error) * res.coupling_mass;
    worst = std::max(worst, std::abs(res.boundary_full - res.interior) / tol);
  }
  return {worst <= 1.0, fmt("20 pairs, max |B - I| / (10 (solver + stencil) S) = %.3f", worst)};
}

Outcome extraction() {
  const CrossSection cs = build_disk(1.0, 64, 256);
  const PotentialTerm base{1, {0.15, 0.0}, Bump{{0.1, -0.1}, 0.6, 1.0}};
  const PotentialTerm diff{0, {1.0, 0.0}, Bump{{-0.1, 0.2}, 0.5, 0.5}};
  const auto v1 = PeriodicPotential::from_terms(cs, {base}, 1.0, 0.5);
  const auto v2 = PeriodicPotential::from_terms(cs, {base, diff}, 1.0, 0.5);
  ExtractionConfig full;
  full.theta = -3.0;
  full.half_width = 1;
  ExtractionConfig part = full;
  part.mode = DataMode::Partial;
  if (!check_fprime(cs, part).ok) return {false, check_fprime(cs, part).message};

  struct Point {
    double tau, full_err, part_err, direct;
  };
  auto sweep = [&](int k, const Vec2& eta, const std::vector<double>& rs) {
    std::vector<Point> out;
    for (double r : rs) {
      const CgoPhase ph = make_phase(k, eta, Vec2(1.0, 0.0), r, full.theta);
      const ExtractionResult f = extract_coefficient(v1, v2, ph, cs, full);
      const ExtractionResult p = extract_coefficient(v1, v2, ph, cs, part);
      out.push_back({ph.tau, f.error(), p.error(), std::abs(f.direct)});
    }
    return out;
  };
  const auto k0 = sweep(0, Vec2(0.0, 1.0), {0.5, 1.5, 2.5, 3.5});
  const auto k0b = sweep(0, Vec2(0.0, 2.5), {3.5});
  const auto k1 = sweep(1, Vec2(0.0, 10.0), {0.5, 1.5, 2.5});

  const double rel0 = k0.back().full_err / k0.back().direct, rel0b = k0b.back().full_err / k0b.back().direct;
  std::vector<double> t1, e1, p1;
  for (const auto& p : k1) {
    t1.push_back(p.tau);
    e1.push_back(p.full_err);
    p1.push_back(p.part_err);
  }
  const double slope = io::loglog_fit(t1, e1).slope, pslope = io::loglog_fit(t1, p1).slope;
  double factor = 0.0;
  for (const auto* s : {&k0, &k0b, &k1})
    for (const auto& p : *s) factor = std::max(factor, p.part_err / p.full_err);
  const bool ok = rel0 <= 0.1 && rel0b <= 0.1 && slope <= -0.7 && factor <= 10.0 && pslope <= -0.7;
  return {ok, fmt("k=0 rel err %.2e (|eta|=1) %.2e (|eta|=2.5) at tau %.1f; k=1 slope %.2f; partial/full error <= %.2f, "
                  "partial k=1 slope %.2f",
                  rel0, rel0b, k0.back().tau, slope, factor, pslope)};
}

Outcome h_minus_one() {
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto lat = FrequencyLattice::build(8.0, 0.25);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double lo = 1e300, hi = 0.0;
  for (int c = 0; c < 5; ++c) {
    auto bump = [&](double amp) {
      const double rr = 0.4 * u(rng), a = kTwoPi * u(rng);
      return Bump{{rr * std::cos(a), rr * std::sin(a)}, 0.3 + 0.4 * u(rng), amp};
    };
    const std::vector<PotentialTerm> terms{{0, {1.0, 0.0}, bump(0.5 * u(rng) + 0.2)},
                                           {1, std::polar(0.3 * u(rng), kTwoPi * u(rng)), bump(1.0)}};
    const auto v = PeriodicPotential::from_terms(cs, terms, 1.0, 0.5);
    const double ratio = h_minus_one_lattice(v, cs, lat) / h_minus_one_dual_oracle(v, 4.0);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  const auto z = PeriodicPotential::zero(cs);
  const bool zero = h_minus_one_lattice(z, cs, lat) == 0.0 && h_minus_one_dual_oracle(z, 4.0) == 0.0;
  LatticeTable empty;
  for (const auto& p : lat.points) empty.entries.push_back({p.k, p.eta});
  const double tail = synthesize(empty, lat, cs, 1.0).tail_bound;
  const bool ok = lo >= 1.0 / 3.0 && hi <= 3.0 && zero && std::abs(tail - kPi / 64.0) <= 1e-12;
  return {ok, fmt("lattice/dual ratio in [%.3f, %.3f]; zero potential %s; tail bound %.6f", lo, hi, zero ? "0" : "nonzero",
                  tail)};
}

Outcome stability() {
  const auto t0 = Clock::now();
  const CrossSection cs = build_disk(1.0, 24, 48);
  const auto v1 = PeriodicPotential::from_terms(cs, {{1, {0.15, 0.0}, Bump{{0.1, -0.1}, 0.6, 1.0}}}, 1.0, 0.5);
  const auto w = PeriodicPotential::from_terms(cs, {{0, {1.0, 0.0}, Bump{{-0.2, 0.25}, 0.5, 1.0}}}, 1.0, 0.5);
  StabilityOptions opt;
  opt.half_width = 4;
  const StabilityResult r = stability_sweep(v1, w, {0.0, 1e-3, 3e-3, 1e-2, 1e-1}, {3e-2}, cs, full_boundary(cs), opt);
  double held = 0.0;
  for (const auto& rec : r.records)
    if (rec.held_out) held = rec.e / (r.c_fit * rec.phi);
  const double t = since(t0);
  return {r.monotone && r.held_out_ok && t < 900.0,
          fmt("C = %.4g, gamma monotone %s, held-out e/(C Phi) = %.3f, %.1f s", r.c_fit, r.monotone ? "yes" : "no", held,
              t)};
}

Outcome phi_branches() {
  const double gs = 0.3;
  bool ok = phi(0.0, gs) == 0.0;
  for (double g : {0.3, 0.5, 1.0, 7.0}) ok = ok && phi(g, gs) == g;
  for (double g : {1e-6, 0.01, 0.1, 0.29}) ok = ok && phi(g, gs) == 1.0 / std::log(std::abs(std::log(g)));
  return {ok, "Phi(0) = 0, Phi(g) = g for g >= 0.3, Phi(g) = 1/ln|ln g| below"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 phase algebra", phase_algebra},       {"2 CGO remainder decay", cgo_decay},
      {"3 Carleman suite", carleman},           {"4 forward and DN sanity", forward_dn},
      {"5 orthogonality identity", orthogonality}, {"6 coefficient extraction", extraction},
      {"7 H^-1 machinery", h_minus_one},        {"8 stability sweep", stability},
      {"9 Phi branches", phi_branches}};
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
