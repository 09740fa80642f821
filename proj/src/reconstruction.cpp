#include "wgstab/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wgstab/parallel.hpp"

namespace wgstab {

double phi(double gamma, double gamma_star) {
  if (!(gamma_star > 0.0 && gamma_star < 1.0)) throw std::invalid_argument("phi: gamma* must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw std::invalid_argument("phi: gamma must be nonnegative");
  if (gamma == 0.0) return 0.0;
  if (gamma >= gamma_star) return gamma;
  return 1.0 / std::log(std::abs(std::log(gamma)));
}

BoundaryArc ExtractionConfig::patch(const CrossSection& cs) const {
  return face(cs, xi0, patch_margin, FaceSign::Shadowed);
}

double fprime_margin(double epsilon) {
  const double arc = 2.0 * std::asin(std::min(1.0, epsilon / 2.0));
  const double a = std::acos(std::clamp(epsilon, -1.0, 1.0)) - arc;
  return a <= 0.0 ? 1.0 : std::cos(a);
}

namespace {

double arc_half_angle(double epsilon) { return 2.0 * std::asin(std::min(1.0, epsilon / 2.0)); }

Vec2 rotate(const Vec2& v, double a) {
  return {std::cos(a) * v.x() - std::sin(a) * v.y(), std::sin(a) * v.x() + std::cos(a) * v.y()};
}

void require_fprime(const CrossSection& cs, const ExtractionConfig& cfg) {
  const FprimeCheck f = check_fprime(cs, cfg);
  if (!f.ok) throw std::invalid_argument(f.message);
}

}  // namespace

FprimeCheck check_fprime(const CrossSection& cs, const ExtractionConfig& cfg) {
  FprimeCheck out;
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 2.0)) {
    out.ok = false;
    out.message = "F' check: epsilon must lie in (0, 2)";
    return out;
  }
  const Vec2 xi0 = cfg.xi0.normalized();
  const double half = arc_half_angle(cfg.epsilon);
  const auto& nu = cs.normals();
  const int samples = 720;
  for (int s = 0; s <= samples; ++s) {
    const Vec2 xi = rotate(xi0, -half + 2.0 * half * s / samples);
    for (int j = 0; j < cs.nphi(); ++j) {
      const Vec2 n = nu.row(j).transpose();
      if (xi.dot(n) <= cfg.epsilon) out.required_margin = std::max(out.required_margin, xi0.dot(n));
    }
  }
  out.ok = out.required_margin <= cfg.patch_margin + 1e-12;
  if (!out.ok) {
    std::ostringstream os;
    os << "F' check failed: epsilon = " << cfg.epsilon << " needs patch margin >= " << out.required_margin
       << " but G' uses " << cfg.patch_margin;
    out.message = os.str();
  }
  return out;
}

namespace {

struct PairFields {
  Remainder w1, w2;
  Field u1, u2;      // on the pairing window
  Field u1_wide;     // u1 on the window widened by the coupling range of V
  ModeWindow window;
};

PairFields cgo_pair(const PeriodicPotential& v1, const PeriodicPotential& v2, const CgoPhase& phase,
                    const CrossSection& cs, const ExtractionConfig& cfg, int coupling) {
  PairFields p{solve_remainder(v1, phase, Which::Zeta1, cfg.torus),
               solve_remainder(v2, phase, Which::Zeta2, cfg.torus), {}, {}, {}, {}};
  // u1 is paired against u2 mode by mode, so both live on the window around n2.
  p.window = ModeWindow::centred(cfg.half_width, phase.n2);
  p.u2 = cgo_field(phase, Which::Zeta2, &p.w2, cs, p.window, phase.theta);
  const ModeWindow wide{p.window.first - coupling, p.window.count + 2 * coupling};
  p.u1_wide = cgo_field(phase, Which::Zeta1, &p.w1, cs, wide, phase.theta);
  p.u1 = p.u1_wide.rewindowed(p.window);
  return p;
}

cplx pair_boundary(const CMatrix& dnu, const Field& u1, const CrossSection& cs, const std::vector<int>& nodes) {
  const RVector& bw = cs.boundary_weights();
  cplx s = 0.0;
  for (int c = 0; c < dnu.cols(); ++c)
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      const int j = nodes[r];
      s += bw(j) * dnu(static_cast<int>(r), c) * std::conj(u1.boundary(j, c));
    }
  return s;
}

void fill_common(ExtractionResult& out, const PeriodicPotential& v, const PairFields& p, const CgoPhase& phase,
                 const CrossSection& cs) {
  const int cut = v.cutoff();
  const RVector& aw = cs.area_weights();
  const ModeWindow& wide = p.u1_wide.window;

  // Interior quadrature of V u2 conj(u1), mode by mode.
  cplx inner = 0.0;
  for (int t = 0; t < wide.count; ++t) {
    const int k = wide.mode(t);
    CVector vu = CVector::Zero(cs.interior_count());
    for (int m = -cut; m <= cut; ++m)
      if (p.window.contains(k - m)) vu += v.mode(m).cwiseProduct(p.u2.interior.col(p.window.slot(k - m)));
    inner += (vu.cwiseProduct(p.u1_wide.interior.col(t).conjugate()).cwiseProduct(aw.cast<cplx>())).sum();
  }
  out.interior = inner;
  out.direct = kTwoPi * fourier_coefficient_direct(v, cs, phase.k, phase.eta);
  out.remainder = out.interior - out.direct;
  out.w1_norm = p.w1.l2_omega;
  out.w2_norm = p.w2.l2_omega;
  out.gap = std::min(p.w1.gap, p.w2.gap);
  out.cgo_residual = std::max(p.w1.v_norm > 0 ? p.w1.residual / p.w1.v_norm : 0.0,
                              p.w2.v_norm > 0 ? p.w2.residual / p.w2.v_norm : 0.0);

  // int |V| |u2| |u1| and sup |V| from x1 samples.
  const int nx = 4 * (p.u1_wide.window.count + cut) + 8;
  double mass = 0.0, vmax = 0.0;
  for (int i = 0; i < nx; ++i) {
    const double x1 = (i + 0.5) / nx;
    const RVector vs = v.sample(x1);
    const CVector a = p.u2.interior_at(x1), b = p.u1_wide.interior_at(x1);
    for (int q = 0; q < cs.interior_count(); ++q) mass += aw(q) * std::abs(vs(q)) * std::abs(a(q)) * std::abs(b(q));
    vmax = std::max(vmax, vs.cwiseAbs().maxCoeff());
  }
  out.coupling_mass = mass / nx;
  const double vol = std::sqrt(cs.area());
  out.remainder_bound = vmax * (vol * (out.w1_norm + out.w2_norm) + out.w1_norm * out.w2_norm);
}

// Weighted relative error of `disc` against `exact` in one window slot, weight e^{-2 s tau xi.x'}.
double weighted_error(const Field& disc, const Field& exact, int slot, const Vec2& xi, double s_tau,
                      const CrossSection& cs) {
  const auto& pts = cs.interior_points();
  const RVector& aw = cs.area_weights();
  double num = 0.0, den = 0.0;
  for (int q = 0; q < cs.interior_count(); ++q) {
    const double wt = aw(q) * std::exp(-2.0 * s_tau * xi.dot(pts.row(q).transpose()));
    num += wt * std::norm(disc.interior(q, slot) - exact.interior(q, slot));
    den += wt * std::norm(exact.interior(q, slot));
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

double trace_error(const CVector& disc, const CVector& exact, const Vec2& xi, double s_tau, const CrossSection& cs) {
  const auto& pts = cs.boundary_points();
  const RVector& bw = cs.boundary_weights();
  double num = 0.0, den = 0.0;
  for (int j = 0; j < cs.nphi(); ++j) {
    const double wt = bw(j) * std::exp(-2.0 * s_tau * xi.dot(pts.row(j).transpose()));
    num += wt * std::norm(disc(j) - exact(j));
    den += wt * std::norm(exact(j));
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

void check_phase_inputs(const PeriodicPotential& v1, const PeriodicPotential& v2, const CgoPhase& phase,
                        const CrossSection& cs, const ExtractionConfig& cfg) {
  if (!v1.matches(cs) || !v2.matches(cs)) throw std::invalid_argument("extract_coefficient: potential grid mismatch");
  if (std::abs(std::remainder(phase.theta - cfg.theta, kTwoPi)) > 1e-12)
    throw std::invalid_argument("extract_coefficient: phase theta differs from the configured theta");
  if (cfg.mode == DataMode::Partial) {
    require_fprime(cs, cfg);
    if ((phase.xi - cfg.xi0.normalized()).norm() > cfg.epsilon + 1e-12)
      throw std::invalid_argument("extract_coefficient: partial data needs |xi - xi0| <= epsilon");
  }
}

}  // namespace

ExtractionResult extract_coefficient(const PeriodicPotential& v1, const PeriodicPotential& v2, const CgoPhase& phase,
                                     const CrossSection& cs, const ExtractionConfig& cfg) {
  check_phase_inputs(v1, v2, phase, cs, cfg);
  const PeriodicPotential v = v2 - v1;
  const PairFields p = cgo_pair(v1, v2, phase, cs, cfg, v.cutoff());

  ExtractionResult out;
  out.phase = phase;
  const FiberHandle a1 = assemble(v1, phase.theta, p.window, cs);
  const FiberHandle a2 = assemble(v2, phase.theta, p.window, cs);
  const Field s1 = solve_dirichlet(*a1, p.u2.boundary);
  const Field s2 = solve_dirichlet(*a2, p.u2.boundary);

  // (Lambda_2 - Lambda_1) f with f the trace of u2, per mode.
  CMatrix dnu(cs.nphi(), p.window.count);
  for (int s = 0; s < p.window.count; ++s) {
    dnu.col(s) = cs.solution_normal_derivative(s2.interior.col(s) - s1.interior.col(s));
  }
  std::vector<int> all(cs.nphi());
  for (int j = 0; j < cs.nphi(); ++j) all[j] = j;
  const BoundaryArc shadow = face(cs, phase.xi, cfg.epsilon, FaceSign::Shadowed);
  CMatrix dshadow(shadow.nodes.size(), p.window.count);
  for (std::size_t r = 0; r < shadow.nodes.size(); ++r) dshadow.row(r) = dnu.row(shadow.nodes[r]);

  out.boundary_full = pair_boundary(dnu, p.u1, cs, all);
  out.boundary_shadow = pair_boundary(dshadow, p.u1, cs, shadow.nodes);
  out.estimate = cfg.mode == DataMode::Full ? out.boundary_full : out.boundary_shadow;
  fill_common(out, v, p, phase, cs);
  // Main-mode errors of the discrete solves reproducing u2 (with V2) and u1 (with V1),
  // in the interior and in the Neumann trace.
  const Field t1 = solve_dirichlet(*a1, p.u1.boundary);
  const CMatrix d2 = cgo_normal_derivative(phase, Which::Zeta2, &p.w2, cs, p.window);
  const CMatrix d1 = cgo_normal_derivative(phase, Which::Zeta1, &p.w1, cs, p.window);
  const int m2 = p.window.slot(phase.n2);
  out.stencil_error = weighted_error(s2, p.u2, m2, phase.xi, phase.tau, cs) +
                      trace_error(cs.solution_normal_derivative(s2.interior.col(m2)), d2.col(m2), phase.xi, phase.tau, cs);
  if (p.window.contains(phase.n1)) {
    const int m1 = p.window.slot(phase.n1);
    out.stencil_error += weighted_error(t1, p.u1, m1, phase.xi, -phase.tau, cs) +
                         trace_error(cs.solution_normal_derivative(t1.interior.col(m1)), d1.col(m1), phase.xi, -phase.tau, cs);
  }
  return out;
}

ExtractionResult extract_from_dn(const DnOperator& lambda1, const DnOperator& lambda2, const PeriodicPotential& v1,
                                 const PeriodicPotential& v2, const CgoPhase& phase, const CrossSection& cs,
                                 const ExtractionConfig& cfg) {
  check_phase_inputs(v1, v2, phase, cs, cfg);
  const PeriodicPotential v = v2 - v1;
  const PairFields p = cgo_pair(v1, v2, phase, cs, cfg, v.cutoff());
  for (const DnOperator* d : {&lambda1, &lambda2}) {
    if (!(d->window == p.window)) throw std::invalid_argument("extract_from_dn: DN window differs from the pairing window");
    if (std::abs(std::remainder(d->theta - phase.theta, kTwoPi)) > 1e-12)
      throw std::invalid_argument("extract_from_dn: DN theta differs from the phase's");
    if (d->arc.nodes != lambda1.arc.nodes) throw std::invalid_argument("extract_from_dn: DN arcs differ");
  }
  const BoundaryArc& arc = lambda1.arc;
  const CMatrix diff = lambda2.apply(p.u2.boundary) - lambda1.apply(p.u2.boundary);
  const BoundaryArc shadow = face(cs, phase.xi, cfg.epsilon, FaceSign::Shadowed);

  ExtractionResult out;
  out.phase = phase;
  if (arc.full || arc.nodes.size() == static_cast<std::size_t>(cs.nphi()))
    out.boundary_full = pair_boundary(diff, p.u1, cs, arc.nodes);
  CMatrix dshadow(shadow.nodes.size(), p.window.count);
  for (std::size_t r = 0; r < shadow.nodes.size(); ++r) {
    const auto it = std::find(arc.nodes.begin(), arc.nodes.end(), shadow.nodes[r]);
    if (it == arc.nodes.end()) throw std::invalid_argument("extract_from_dn: DN arc does not cover the shadowed face");
    dshadow.row(r) = diff.row(it - arc.nodes.begin());
  }
  out.boundary_shadow = pair_boundary(dshadow, p.u1, cs, shadow.nodes);
  out.estimate = cfg.mode == DataMode::Full ? out.boundary_full : out.boundary_shadow;
  fill_common(out, v, p, phase, cs);
  return out;
}

const char* to_string(PointStatus s) {
  switch (s) {
    case PointStatus::Ok: return "ok";
    case PointStatus::DirectionInfeasible: return "direction-infeasible";
    case PointStatus::Unresolvable: return "unresolvable";
    case PointStatus::Failed: return "failed";
  }
  return "unknown";
}

int LatticeTable::feasible() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(),
                                        [](const LatticeEntry& e) { return e.status == PointStatus::Ok; }));
}

namespace {

LatticeEntry sweep_point(const PeriodicPotential& v1, const PeriodicPotential& v2, const CrossSection& cs,
                         const ExtractionConfig& cfg, const FrequencyLattice::Point& pt) {
  LatticeEntry e;
  e.k = pt.k;
  e.eta = pt.eta;
  e.mode = cfg.mode;
  if (pt.eta.norm() < 1e-12) {
    e.status = PointStatus::DirectionInfeasible;
    e.message = "eta = 0";
    return e;
  }
  const Vec2 xi0 = cfg.xi0.normalized();
  Vec2 xi = Vec2(-pt.eta.y(), pt.eta.x()).normalized();
  if ((xi - xi0).norm() > (-xi - xi0).norm()) xi = -xi;
  e.xi = xi;
  if ((xi - xi0).norm() > cfg.epsilon + 1e-12) {
    if (!cfg.all_directions) {
      e.status = PointStatus::DirectionInfeasible;
      e.message = "no direction orthogonal to eta in the arc";
      return e;
    }
    e.mode = DataMode::Full;
  }
  try {
    CgoPhase phase;
    double r = cfg.r_min;
    bool found = false;
    for (int t = 0; t < 16 && !found; ++t, r += 1.0) {
      phase = make_phase(pt.k, pt.eta, xi, r, cfg.theta);
      e.gap = std::min(symbol_gap(phase, cfg.torus, Which::Zeta1).gap, symbol_gap(phase, cfg.torus, Which::Zeta2).gap);
      found = e.gap >= cfg.gap_min;
    }
    e.r = phase.r;
    e.tau = phase.tau;
    if (!found) {
      e.status = PointStatus::Failed;
      e.message = "symbol gap below gap_min";
      return e;
    }
    if (phase.tau > cfg.tau_max) {
      e.status = PointStatus::Unresolvable;
      e.message = "tau above tau_max";
      return e;
    }
    ExtractionConfig local = cfg;
    local.mode = e.mode;
    const ExtractionResult res = extract_coefficient(v1, v2, phase, cs, local);
    e.estimate = res.estimate;
    e.direct = res.direct;
  } catch (const std::exception& ex) {
    e.status = PointStatus::Failed;
    e.message = ex.what();
  }
  return e;
}

}  // namespace

LatticeTable sweep_lattice(const PeriodicPotential& v1, const PeriodicPotential& v2, const CrossSection& cs,
                           const ExtractionConfig& cfg, int workers) {
  if (cfg.mode == DataMode::Partial) require_fprime(cs, cfg);
  std::vector<FrequencyLattice::Point> pts = cfg.lattice.points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    if (a.k != b.k) return a.k < b.k;
    if (a.eta.x() != b.eta.x()) return a.eta.x() < b.eta.x();
    return a.eta.y() < b.eta.y();
  });
  LatticeTable table;
  table.entries.resize(pts.size());
  parallel_for(static_cast<int>(pts.size()), workers,
               [&](int i) { table.entries[i] = sweep_point(v1, v2, cs, cfg, pts[i]); });
  return table;
}

RVector Synthesis::sample(double x1) const {
  RVector out = RVector::Zero(fields.empty() ? 0 : fields.front().size());
  for (std::size_t i = 0; i < modes.size(); ++i)
    out += (fields[i] * std::exp(kI * (kTwoPi * modes[i] * x1))).real();
  return out;
}

Synthesis synthesize(const LatticeTable& table, const FrequencyLattice& lat, const CrossSection& cs, double m_plus) {
  Synthesis out;
  out.tail_bound = cs.area() * m_plus * m_plus / (lat.rho * lat.rho);
  const double d2 = lat.deta * lat.deta;
  const auto& pts = cs.interior_points();
  double sum = 0.0;
  for (const auto& e : table.entries) {
    if (e.status != PointStatus::Ok) {
      ++out.excluded;
      continue;
    }
    ++out.used;
    const cplx vhat = e.estimate / kTwoPi;
    sum += lat.weight({e.k, e.eta}) * std::norm(vhat) * d2;
    auto it = std::find(out.modes.begin(), out.modes.end(), e.k);
    if (it == out.modes.end()) {
      out.modes.push_back(e.k);
      out.fields.push_back(CVector::Zero(cs.interior_count()));
      it = out.modes.end() - 1;
    }
    CVector& f = out.fields[it - out.modes.begin()];
    for (int q = 0; q < cs.interior_count(); ++q)
      f(q) += vhat * std::exp(kI * (e.eta.x() * pts(q, 0) + e.eta.y() * pts(q, 1))) * (d2 / kTwoPi);
  }
  out.h_minus_one = std::sqrt(sum);
  return out;
}

StabilityResult stability_sweep(const PeriodicPotential& v1, const PeriodicPotential& w,
                                const std::vector<double>& train, const std::vector<double>& held_out,
                                const CrossSection& cs, const BoundaryArc& arc, const StabilityOptions& opt) {
  if (!(opt.gamma_star > 0.0 && opt.gamma_star < 1.0)) throw std::invalid_argument("stability_sweep: gamma* must lie in (0, 1)");
  const ModeWindow window = ModeWindow::centred(opt.half_width, 0);
  const DnOperator dn1 = assemble_dn(v1, opt.theta, cs, window, arc, opt.dn_cache_dir);
  const double box = opt.box_factor * cs.c_omega();

  StabilityResult out;
  auto run = [&](double delta, bool held) {
    StabilityRecord r;
    r.delta = delta;
    r.held_out = held;
    if (delta != 0.0) {
      const PeriodicPotential dv = w.scaled(delta);
      const DnOperator dn2 = assemble_dn(v1 + dv, opt.theta, cs, window, arc, opt.dn_cache_dir);
      r.gamma = dn_difference_norm(dn1, dn2, cs).value;
      r.e = h_minus_one_dual_oracle(dv, box, opt.box_n);
    }
    r.phi = phi(r.gamma, opt.gamma_star);
    r.ratio = r.phi > 0.0 ? r.e / r.phi : 0.0;
    out.records.push_back(r);
  };
  for (double d : train) run(d, false);
  for (double d : held_out) run(d, true);

  for (const auto& r : out.records)
    if (!r.held_out) out.c_fit = std::max(out.c_fit, r.ratio);
  for (auto& r : out.records) {
    r.within = r.e <= 1.5 * out.c_fit * r.phi || r.e == 0.0;
    if (r.held_out && !r.within) out.held_out_ok = false;
  }
  std::vector<const StabilityRecord*> sorted;
  for (const auto& r : out.records) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto a, auto b) { return a->delta < b->delta; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->gamma < sorted[i - 1]->gamma) out.monotone = false;
  return out;
}

}  // namespace wgstab
