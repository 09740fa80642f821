#include "wgstab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "wgstab/hash.hpp"
#include "wgstab/report_io.hpp"

namespace wgstab {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";
constexpr double kJ01Squared = 5.783185962946784;

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& p : v) s += (s.empty() ? "" : "; ") + p;
  return s;
}

// Typed access to one JSON object. Type errors and unknown keys are recorded, never thrown.
class Reader {
 public:
  Reader(const json* j, std::string path, std::vector<std::string>& problems)
      : j_(j), path_(std::move(path)), problems_(problems) {
    if (j_ && !j_->is_object()) {
      problems_.push_back(where() + ": expected an object");
      j_ = nullptr;
    }
  }

  ~Reader() {
    if (!j_) return;
    for (const auto& [k, _] : j_->items())
      if (!seen_.count(k)) problems_.push_back(where() + "." + k + ": unknown key");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_ || !j_->contains(key)) return;
    if (!convert(j_->at(key), out)) problems_.push_back(where() + "." + key + ": " + expected(out));
  }

  const json* sub(const std::string& key) {
    seen_.insert(key);
    return j_ && j_->contains(key) ? &j_->at(key) : nullptr;
  }

  std::string child_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  static bool convert(const json& j, double& out) {
    if (!j.is_number()) return false;
    out = j.get<double>();
    return true;
  }
  static bool convert(const json& j, int& out) {
    if (!j.is_number_integer()) return false;
    out = j.get<int>();
    return true;
  }
  static bool convert(const json& j, std::uint64_t& out) {
    if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<long long>() < 0)) return false;
    out = j.get<std::uint64_t>();
    return true;
  }
  static bool convert(const json& j, bool& out) {
    if (!j.is_boolean()) return false;
    out = j.get<bool>();
    return true;
  }
  static bool convert(const json& j, std::string& out) {
    if (!j.is_string()) return false;
    out = j.get<std::string>();
    return true;
  }
  static bool convert(const json& j, json& out) {
    out = j;
    return true;
  }
  static bool convert(const json& j, Vec2& out) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) return false;
    out = Vec2(j[0].get<double>(), j[1].get<double>());
    return true;
  }
  static bool convert(const json& j, DataMode& out) {
    if (j == "full") out = DataMode::Full;
    else if (j == "partial") out = DataMode::Partial;
    else return false;
    return true;
  }
  template <typename T>
  static bool convert(const json& j, std::vector<T>& out) {
    if (!j.is_array()) return false;
    std::vector<T> v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
      if (!convert(j[i], v[i])) return false;
    out = std::move(v);
    return true;
  }

  static std::string expected(double) { return "expected a number"; }
  static std::string expected(int) { return "expected an integer"; }
  static std::string expected(std::uint64_t) { return "expected a nonnegative integer"; }
  static std::string expected(bool) { return "expected true or false"; }
  static std::string expected(const std::string&) { return "expected a string"; }
  static std::string expected(const json&) { return "invalid value"; }
  static std::string expected(const Vec2&) { return "expected [x, y]"; }
  static std::string expected(DataMode) { return "expected \"full\" or \"partial\""; }
  template <typename T>
  static std::string expected(const std::vector<T>&) { return "expected an array (" + expected(T{}) + ")"; }

  const json* j_;
  std::string path_;
  std::vector<std::string>& problems_;
  std::set<std::string> seen_;
};

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }

json vecs(const std::vector<Vec2>& v) {
  json a = json::array();
  for (const auto& x : v) a.push_back(vec(x));
  return a;
}

void read_grid(Reader& parent, const std::string& key, GridSpec& g, std::vector<std::string>& problems) {
  Reader r(parent.sub(key), parent.child_path(key), problems);
  r.get("radius", g.radius);
  r.get("nr", g.nr);
  r.get("nphi", g.nphi);
}

json grid_json(const GridSpec& g) { return {{"radius", g.radius}, {"nr", g.nr}, {"nphi", g.nphi}}; }

// Term list of a term-based spec; throws std::invalid_argument on a bad spec.
void collect_terms(const json& spec, std::mt19937_64& rng, std::vector<PotentialTerm>& out) {
  if (!spec.is_object() || !spec.contains("family") || !spec["family"].is_string())
    throw std::invalid_argument("spec needs a string \"family\"");
  const std::string fam = spec["family"];
  auto num = [&](const char* key, double def) {
    if (!spec.contains(key)) return def;
    if (!spec[key].is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
    return spec[key].get<double>();
  };
  auto integer = [&](const char* key, int def) {
    if (!spec.contains(key)) return def;
    if (!spec[key].is_number_integer()) throw std::invalid_argument(std::string(key) + " must be an integer");
    return spec[key].get<int>();
  };
  auto point = [&](const char* key, Vec2 def) {
    if (!spec.contains(key)) return def;
    const json& p = spec[key];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw std::invalid_argument(std::string(key) + " must be [x, y]");
    return Vec2(p[0].get<double>(), p[1].get<double>());
  };
  auto coefficient = [&](cplx def) {
    if (!spec.contains("coefficient")) return def;
    const json& c = spec["coefficient"];
    if (c.is_number()) return cplx(c.get<double>(), 0.0);
    if (c.is_array() && c.size() == 2 && c[0].is_number() && c[1].is_number())
      return cplx(c[0].get<double>(), c[1].get<double>());
    throw std::invalid_argument("coefficient must be a number or [re, im]");
  };
  auto bump = [&](Vec2 centre) {
    Bump b{centre, num("width", 0.5), num("amplitude", 1.0)};
    if (!(b.width > 0.0)) throw std::invalid_argument("width must be positive");
    return b;
  };
  static const std::set<std::string> common{"family", "m_plus", "m_minus"};
  auto allow = [&](std::set<std::string> keys) {
    keys.insert(common.begin(), common.end());
    for (const auto& [k, _] : spec.items())
      if (!keys.count(k)) throw std::invalid_argument("unknown key \"" + k + "\" for family " + fam);
  };

  if (fam == "zero") {
    allow({});
  } else if (fam == "radial_bump") {
    allow({"centre", "width", "amplitude", "mode", "coefficient"});
    out.push_back({integer("mode", 0), coefficient(1.0), bump(point("centre", Vec2::Zero()))});
  } else if (fam == "angular_bump") {
    allow({"radius", "angle", "width", "amplitude", "mode", "coefficient"});
    const double r = num("radius", 0.4), a = num("angle", 0.0);
    out.push_back({integer("mode", 0), coefficient(1.0), bump(Vec2(r * std::cos(a), r * std::sin(a)))});
  } else if (fam == "single_mode") {
    allow({"mode", "coefficient", "centre", "width", "amplitude"});
    out.push_back({integer("mode", 1), coefficient(0.15), bump(point("centre", Vec2::Zero()))});
  } else if (fam == "random_band_limited") {
    allow({"cutoff", "terms", "amplitude", "width_min", "width_max", "centre_radius"});
    const int cutoff = integer("cutoff", 1), terms = integer("terms", 3);
    const double amp = num("amplitude", 0.3), wmin = num("width_min", 0.3), wmax = num("width_max", 0.7),
                 cr = num("centre_radius", 0.4);
    if (cutoff < 0 || terms < 1) throw std::invalid_argument("need cutoff >= 0 and terms >= 1");
    if (!(wmin > 0.0) || wmax < wmin) throw std::invalid_argument("need 0 < width_min <= width_max");
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> md(0, cutoff);
    for (int t = 0; t < terms; ++t) {
      const int m = md(rng);
      const double mag = amp * u(rng), arg = kTwoPi * u(rng);
      const double rr = cr * u(rng), a = kTwoPi * u(rng);
      const double width = wmin + (wmax - wmin) * u(rng);
      out.push_back({m, m == 0 ? cplx(mag, 0.0) : std::polar(mag, arg),
                     Bump{Vec2(rr * std::cos(a), rr * std::sin(a)), width, 1.0}});
    }
  } else if (fam == "sum") {
    allow({"terms"});
    if (!spec.contains("terms") || !spec["terms"].is_array()) throw std::invalid_argument("sum needs a \"terms\" array");
    for (const auto& t : spec["terms"]) collect_terms(t, rng, out);
  } else if (fam == "file") {
    throw std::invalid_argument("family file cannot be combined with other terms");
  } else {
    throw std::invalid_argument("unknown family \"" + fam + "\"");
  }
}

struct Potentials {
  PeriodicPotential v1, v2, w;
};

// Built in a fixed order from one generator so random families are reproducible.
Potentials make_potentials(const RunConfig& cfg, const CrossSection& cs) {
  std::mt19937_64 rng(cfg.seed);
  return {build_potential(cfg.v1, cs, rng), build_potential(cfg.v2, cs, rng), build_potential(cfg.w, cs, rng)};
}

Vec2 perpendicular_near(const Vec2& eta, const Vec2& xi0) {
  Vec2 xi = Vec2(-eta.y(), eta.x()).normalized();
  if (xi.dot(xi0) < 0.0) xi = -xi;
  return xi + Vec2::Zero();  // no negative zeros in output
}

double seconds_since(std::chrono::steady_clock::time_point t) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

struct Context {
  const RunConfig& cfg;
  std::string dir;
  std::string cache;
  json timings = json::object();

  template <typename F>
  auto timed(const std::string& name, F&& f) {
    const auto t = std::chrono::steady_clock::now();
    auto r = f();
    timings[name] = seconds_since(t);
    return r;
  }
  std::string path(const std::string& file) const { return (std::filesystem::path(dir) / file).string(); }
};

json run_forward(Context& c) {
  const CrossSection cs = c.cfg.geometry.build();
  const Potentials p = make_potentials(c.cfg, cs);
  const ModeWindow window = ModeWindow::centred(c.cfg.half_width);
  io::CsvTable t({"theta", "lambda_min", "residual_max", "l2_norm", "hermitian_defect", "lu_fallback"});
  for (std::size_t i = 0; i < c.cfg.thetas.size(); ++i) {
    const double theta = c.cfg.thetas[i];
    const FiberHandle op = assemble(p.v1, theta, window, cs);
    CMatrix g = CMatrix::Zero(cs.nphi(), window.count);
    for (int j = 0; j < cs.nphi(); ++j)
      g(j, window.slot(c.cfg.forward_mode)) = std::cos(c.cfg.forward_angular * cs.boundary_angle(j));
    const Field u = solve_dirichlet(*op, g);
    const double res = pde_residual(*op, p.v1, u).cwiseAbs().maxCoeff();
    t.add({io::num(theta), io::num(op->smallest_eigenvalue()), io::num(res), io::num(u.l2_norm(cs)),
           io::num(op->hermitian_defect()), op->used_lu_fallback() ? "1" : "0"});
    io::write_field_csv(c.path("forward_field_" + std::to_string(i) + ".csv"), cs, u.interior_at(0.0).real());
  }
  t.write(c.path("forward.csv"));
  const PoincareResult pc = poincare_constant(cs);
  const double ref = kJ01Squared / (cs.radius() * cs.radius());
  const double rel = std::abs(pc.eigenvalue - ref) / ref;
  return {{"dirichlet_eigenvalue", pc.eigenvalue},
          {"poincare_constant", pc.constant},
          {"eigenvalue_relative_error", rel},
          {"ok", rel <= 0.01}};
}

json run_dn(Context& c) {
  const CrossSection cs = c.cfg.geometry.build();
  const Potentials p = make_potentials(c.cfg, cs);
  const ModeWindow window = ModeWindow::centred(c.cfg.half_width);
  const BoundaryArc arc = full_boundary(cs);
  io::CsvTable t({"theta", "pairing_defect", "dn_difference_norm", "iterations"});
  double worst = 0.0, sup = 0.0;
  for (double theta : c.cfg.thetas) {
    const DnOperator d1 = assemble_dn(p.v1, theta, cs, window, arc, c.cache);
    const DnOperator d2 = assemble_dn(p.v2, theta, cs, window, arc, c.cache);
    const double defect = hermitian_pairing_defect(d1, cs);
    const DnNormResult n = dn_difference_norm(d1, d2, cs);
    worst = std::max(worst, defect);
    sup = std::max(sup, n.value);
    t.add({io::num(theta), io::num(defect), io::num(n.value), io::num(n.iterations)});
  }
  t.write(c.path("dn.csv"));
  return {{"max_pairing_defect", worst}, {"sup_difference_norm", sup}, {"ok", worst <= 5e-2}};
}

json run_cgo_decay(Context& c) {
  const CrossSection cs = c.cfg.geometry.build();
  const Potentials p = make_potentials(c.cfg, cs);
  TorusLattice lat = TorusLattice::for_cross_section(cs, c.cfg.n_axial, c.cfg.n_trans);
  if (c.cfg.lattice_half_side > 0.0) lat.half_side = c.cfg.lattice_half_side;
  RemainderOptions ro;
  ro.tol = c.cfg.cgo_tol;
  io::CsvTable t({"r", "tau", "gap", "w1_l2", "w2_l2", "w1_h1", "residual1", "residual2", "iterations1",
                  "identity_defect"});
  std::vector<double> taus, n1, n2;
  bool residual_ok = true;
  for (double r : c.cfg.cgo_r) {
    const CgoPhase ph = make_phase(c.cfg.cgo_k, c.cfg.cgo_eta, c.cfg.cgo_xi.normalized(), r, c.cfg.cgo_theta);
    const Remainder w1 = solve_remainder(p.v1, ph, Which::Zeta1, lat, ro);
    const Remainder w2 = solve_remainder(p.v1, ph, Which::Zeta2, lat, ro);
    const double rel1 = w1.v_norm > 0 ? w1.residual / w1.v_norm : w1.residual;
    const double rel2 = w2.v_norm > 0 ? w2.residual / w2.v_norm : w2.residual;
    residual_ok = residual_ok && rel1 <= c.cfg.cgo_tol && rel2 <= c.cfg.cgo_tol;
    taus.push_back(ph.tau);
    n1.push_back(w1.l2);
    n2.push_back(w2.l2);
    t.add({io::num(r), io::num(ph.tau), io::num(std::min(w1.gap, w2.gap)), io::num(w1.l2), io::num(w2.l2),
           io::num(w1.h1), io::num(rel1), io::num(rel2), io::num(w1.iterations), io::num(check_phase(ph).max_defect())});
  }
  t.write(c.path("cgo_decay.csv"));
  json out{{"residual_ok", residual_ok}};
  bool slope_ok = false;
  if (taus.size() >= 2 && std::all_of(n1.begin(), n1.end(), [](double x) { return x > 0; })) {
    const io::LinearFit f = io::loglog_fit(taus, n1);
    out["slope"] = f.slope;
    slope_ok = f.slope >= -1.3 && f.slope <= -0.7;
  }
  out["slope_ok"] = slope_ok;
  out["ok"] = slope_ok && residual_ok;
  io::write_svg(c.path("cgo_decay.svg"),
                {"CGO remainder decay", "tau", "L2 norm", true, true, {{"w1", taus, n1}, {"w2", taus, n2}}});
  return out;
}

json run_carleman(Context& c) {
  const CrossSection cs = c.cfg.geometry.build();
  const Potentials p = make_potentials(c.cfg, cs);
  const auto corpus = carleman_corpus(c.cfg.carleman_count, c.cfg.seed);
  std::vector<Vec2> dirs;
  for (const auto& d : c.cfg.carleman_dirs) dirs.push_back(d.normalized());
  CarlemanOptions opt;
  opt.slack_tol = c.cfg.slack_tol;
  const auto s0 = carleman_suite(corpus, c.cfg.carleman_taus, dirs, cs, nullptr, opt);
  const auto s1 = carleman_suite(corpus, c.cfg.carleman_taus, dirs, cs, &p.v1, opt);
  io::CsvTable t({"form", "case", "tau", "xi_x", "xi_y", "lhs", "rhs", "ratio", "pass", "gated", "tau1"});
  auto add = [&](const char* form, const CarlemanSuiteSummary& s) {
    for (std::size_t i = 0; i < s.reports.size(); ++i) {
      const auto& r = s.reports[i];
      t.add({form, io::num(static_cast<long long>(i)), io::num(r.tau), io::num(r.xi.x()), io::num(r.xi.y()),
             io::num(r.lhs), io::num(r.rhs), io::num(r.ratio), r.pass ? "1" : "0", r.below_threshold ? "0" : "1",
             io::num(r.tau1)});
    }
  };
  add("laplacian", s0);
  add("potential", s1);
  t.write(c.path("carleman.csv"));
  auto summary = [](const CarlemanSuiteSummary& s) {
    return json{{"cases", s.cases},       {"passes", s.passes},           {"gated", s.gated},
                {"gated_passes", s.gated_passes}, {"needed_slack", s.needed_slack}, {"stencil_slack", s.stencil_slack}};
  };
  return {{"laplacian", summary(s0)},
          {"potential", summary(s1)},
          {"ok", s0.passes == s0.cases && s1.gated_passes == s1.gated}};
}

json run_extract(Context& c) {
  const CrossSection cs = c.cfg.recon_grid.build();
  const Potentials p = make_potentials(c.cfg, cs);
  const ExtractionConfig ecfg = c.cfg.extraction(cs);
  const Vec2 xi = perpendicular_near(c.cfg.extract_eta, ecfg.xi0);
  io::CsvTable t({"r", "tau", "gap", "estimate_re", "estimate_im", "direct_re", "direct_im", "error", "shadow_error",
                  "full_minus_interior", "remainder", "remainder_bound", "stencil_error", "coupling_mass"});
  std::vector<double> taus, errs, mags, dirs;
  bool identity_ok = true, bound_ok = true;
  for (double r : c.cfg.extract_r) {
    const CgoPhase ph = make_phase(c.cfg.extract_k, c.cfg.extract_eta, xi, r, ecfg.theta);
    const ExtractionResult res = extract_coefficient(p.v1, p.v2, ph, cs, ecfg);
    const double bi = std::abs(res.boundary_full - res.interior);
    identity_ok = identity_ok && bi <= 10.0 * (ecfg.solver_tol + res.stencil_error) * res.coupling_mass;
    bound_ok = bound_ok && std::abs(res.remainder) <= 1.05 * res.remainder_bound;
    taus.push_back(ph.tau);
    errs.push_back(res.error());
    mags.push_back(std::abs(res.estimate));
    dirs.push_back(std::abs(res.direct));
    t.add({io::num(r), io::num(ph.tau), io::num(res.gap), io::num(res.estimate.real()), io::num(res.estimate.imag()),
           io::num(res.direct.real()), io::num(res.direct.imag()), io::num(res.error()),
           io::num(std::abs(res.boundary_shadow - res.direct)), io::num(bi), io::num(std::abs(res.remainder)),
           io::num(res.remainder_bound), io::num(res.stencil_error), io::num(res.coupling_mass)});
  }
  t.write(c.path("extract.csv"));
  json out{{"identity_ok", identity_ok}, {"remainder_bound_ok", bound_ok}, {"xi", vec(xi)}};
  if (!taus.empty()) {
    out["last_error"] = errs.back();
    out["last_relative_error"] = dirs.back() > 0 ? errs.back() / dirs.back() : errs.back();
  }
  if (taus.size() >= 2 && std::all_of(errs.begin(), errs.end(), [](double x) { return x > 0; }))
    out["error_slope"] = io::loglog_fit(taus, errs).slope;
  out["ok"] = identity_ok && bound_ok;
  io::write_svg(c.path("extract.svg"), {"Coefficient extraction", "tau", "magnitude", true, true,
                                        {{"|estimate - direct|", taus, errs}, {"|estimate|", taus, mags}}});
  return out;
}

json run_reconstruct(Context& c) {
  const CrossSection cs = c.cfg.recon_grid.build();
  const Potentials p = make_potentials(c.cfg, cs);
  const ExtractionConfig ecfg = c.cfg.extraction(cs);
  const int workers = c.cfg.workers > 0 ? c.cfg.workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const LatticeTable table = sweep_lattice(p.v1, p.v2, cs, ecfg, workers);
  const double m_plus = std::max(p.v1.m_plus(), p.v2.m_plus());
  const Synthesis syn = synthesize(table, ecfg.lattice, cs, m_plus);

  io::CsvTable t({"k", "eta_x", "eta_y", "xi_x", "xi_y", "r", "tau", "gap", "status", "mode", "estimate_re",
                  "estimate_im", "direct_re", "direct_im", "message"});
  std::map<std::string, int> counts;
  std::vector<double> rel;
  for (const auto& e : table.entries) {
    ++counts[to_string(e.status)];
    if (e.status == PointStatus::Ok && std::abs(e.direct) > 0.0) rel.push_back(std::abs(e.estimate - e.direct) / std::abs(e.direct));
    t.add({io::num(e.k), io::num(e.eta.x()), io::num(e.eta.y()), io::num(e.xi.x()), io::num(e.xi.y()), io::num(e.r),
           io::num(e.tau), io::num(e.gap), to_string(e.status), e.mode == DataMode::Full ? "full" : "partial",
           io::num(e.estimate.real()), io::num(e.estimate.imag()), io::num(e.direct.real()), io::num(e.direct.imag()),
           e.message});
  }
  t.write(c.path("lattice.csv"));

  const RVector truth = (p.v2 - p.v1).sample(0.0);
  const RVector recon = syn.fields.empty() ? RVector(RVector::Zero(cs.interior_count())) : syn.sample(0.0);
  io::write_field_csv(c.path("reconstructed_x1_0.csv"), cs, recon);
  io::write_field_csv(c.path("true_x1_0.csv"), cs, truth);
  const RVector& a = cs.area_weights();
  const double tn = std::sqrt(a.dot(truth.cwiseAbs2()));
  const double en = std::sqrt(a.dot((recon - truth).cwiseAbs2()));

  json status = json::object();
  for (const auto& [k, n] : counts) status[k] = n;
  json out{{"points", table.entries.size()},
           {"status_counts", status},
           {"h_minus_one_estimate", syn.h_minus_one},
           {"tail_bound", syn.tail_bound},
           {"used", syn.used},
           {"excluded", syn.excluded},
           {"relative_l2_error_x1_0", tn > 0 ? en / tn : en}};
  if (!rel.empty()) {
    std::vector<double> s = rel;
    std::nth_element(s.begin(), s.begin() + s.size() / 2, s.end());
    out["median_relative_error"] = s[s.size() / 2];
  }
  out["ok"] = true;
  return out;
}

json run_stability(Context& c) {
  const CrossSection cs = c.cfg.geometry.build();
  const Potentials p = make_potentials(c.cfg, cs);
  StabilityOptions so;
  so.theta = c.cfg.stability_theta;
  so.half_width = c.cfg.stability_half_width;
  so.gamma_star = c.cfg.gamma_star;
  so.box_factor = c.cfg.box_factor;
  so.box_n = c.cfg.box_n;
  so.dn_cache_dir = c.cache;
  const BoundaryArc arc = c.cfg.mode == DataMode::Full ? full_boundary(cs) : c.cfg.extraction(cs).patch(cs);
  const StabilityResult res = stability_sweep(p.v1, p.w, c.cfg.deltas, c.cfg.held_out, cs, arc, so);
  io::CsvTable t({"delta", "gamma", "e", "phi", "ratio", "held_out", "within"});
  std::vector<double> d, g, e, ph;
  for (const auto& r : res.records) {
    t.add({io::num(r.delta), io::num(r.gamma), io::num(r.e), io::num(r.phi), io::num(r.ratio), r.held_out ? "1" : "0",
           r.within ? "1" : "0"});
    d.push_back(r.delta);
    g.push_back(r.gamma);
    e.push_back(r.e);
    ph.push_back(r.phi);
  }
  t.write(c.path("stability.csv"));
  io::write_svg(c.path("gamma_vs_delta.svg"), {"DN difference vs perturbation", "delta", "gamma", true, true, {{"gamma", d, g}}});
  io::write_svg(c.path("e_vs_phi.svg"), {"H^-1 error vs modulus", "Phi(gamma)", "e", true, true, {{"records", ph, e, false}}});
  return {{"c_fit", res.c_fit},
          {"monotone", res.monotone},
          {"held_out_ok", res.held_out_ok},
          {"ok", res.monotone && res.held_out_ok}};
}

json dispatch(const std::string& sub, Context& c) {
  if (sub == "forward") return c.timed("forward", [&] { return run_forward(c); });
  if (sub == "dn") return c.timed("dn", [&] { return run_dn(c); });
  if (sub == "cgo-decay") return c.timed("cgo-decay", [&] { return run_cgo_decay(c); });
  if (sub == "carleman") return c.timed("carleman", [&] { return run_carleman(c); });
  if (sub == "extract") return c.timed("extract", [&] { return run_extract(c); });
  if (sub == "reconstruct") return c.timed("reconstruct", [&] { return run_reconstruct(c); });
  if (sub == "stability") return c.timed("stability", [&] { return run_stability(c); });
  throw std::invalid_argument("unknown subcommand \"" + sub + "\"");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream o;
  o << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return o.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration: " + join(problems)), problems_(std::move(problems)) {}

RunConfig::RunConfig() {
  v1 = {{"family", "single_mode"}, {"mode", 1},        {"coefficient", 0.15}, {"centre", {0.1, -0.1}},
        {"width", 0.6},            {"amplitude", 1.0}, {"m_plus", 1.0},       {"m_minus", 0.5}};
  v2 = {{"family", "sum"},
        {"terms",
         {v1, {{"family", "radial_bump"}, {"centre", {-0.1, 0.2}}, {"width", 0.5}, {"amplitude", 0.5}}}},
        {"m_plus", 1.0},
        {"m_minus", 0.5}};
  w = {{"family", "radial_bump"}, {"centre", {-0.2, 0.25}}, {"width", 0.5}, {"amplitude", 1.0}};
}

PeriodicPotential build_potential(const json& spec, const CrossSection& cs, std::mt19937_64& rng) {
  if (!spec.is_object()) throw std::invalid_argument("potential spec must be an object");
  double m_plus = 1.0, m_minus = 0.5;
  if (spec.contains("m_plus")) m_plus = spec["m_plus"].get<double>();
  if (spec.contains("m_minus")) m_minus = spec["m_minus"].get<double>();
  if (spec.value("family", "") == "file") {
    for (const auto& [k, _] : spec.items())
      if (k != "family" && k != "path" && k != "m_plus" && k != "m_minus")
        throw std::invalid_argument("unknown key \"" + k + "\" for family file");
    if (!spec.contains("path") || !spec["path"].is_string()) throw std::invalid_argument("file family needs \"path\"");
    PeriodicPotential v = PeriodicPotential::load(spec["path"].get<std::string>(), cs);
    if (spec.contains("m_plus") || spec.contains("m_minus")) v.set_bounds(m_plus, m_minus);
    return v;
  }
  std::vector<PotentialTerm> terms;
  collect_terms(spec, rng, terms);
  if (terms.empty()) return PeriodicPotential::zero(cs, m_plus, m_minus);
  return PeriodicPotential::from_terms(cs, std::move(terms), m_plus, m_minus);
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  std::vector<std::string> problems;
  {
    Reader top(&j, "", problems);
    read_grid(top, "geometry", c.geometry, problems);
    {
      Reader r(top.sub("fiber"), "fiber", problems);
      r.get("thetas", c.thetas);
      r.get("half_width", c.half_width);
    }
    {
      Reader r(top.sub("potentials"), "potentials", problems);
      r.get("v1", c.v1);
      r.get("v2", c.v2);
      r.get("w", c.w);
    }
    {
      Reader r(top.sub("forward"), "forward", problems);
      r.get("mode", c.forward_mode);
      r.get("angular_order", c.forward_angular);
    }
    {
      Reader r(top.sub("cgo"), "cgo", problems);
      r.get("theta", c.cgo_theta);
      r.get("k", c.cgo_k);
      r.get("eta", c.cgo_eta);
      r.get("xi", c.cgo_xi);
      r.get("r_values", c.cgo_r);
      r.get("r_min", c.r_min);
      r.get("gap_min", c.gap_min);
      r.get("tau_max", c.tau_max);
      r.get("lattice_half_side", c.lattice_half_side);
      r.get("n_axial", c.n_axial);
      r.get("n_trans", c.n_trans);
      r.get("tol", c.cgo_tol);
    }
    {
      Reader r(top.sub("carleman"), "carleman", problems);
      r.get("count", c.carleman_count);
      r.get("taus", c.carleman_taus);
      r.get("directions", c.carleman_dirs);
      r.get("slack_tol", c.slack_tol);
    }
    {
      Reader r(top.sub("reconstruction"), "reconstruction", problems);
      r.get("xi0", c.xi0);
      r.get("epsilon", c.epsilon);
      r.get("patch_margin", c.patch_margin);
      r.get("rho", c.rho);
      r.get("deta", c.deta);
      r.get("gamma_star", c.gamma_star);
      r.get("mode", c.mode);
      r.get("theta", c.recon_theta);
      r.get("half_width", c.recon_half_width);
      read_grid(r, "grid", c.recon_grid, problems);
      r.get("k", c.extract_k);
      r.get("eta", c.extract_eta);
      r.get("r_values", c.extract_r);
      r.get("all_directions", c.all_directions);
    }
    {
      Reader r(top.sub("stability"), "stability", problems);
      r.get("deltas", c.deltas);
      r.get("held_out", c.held_out);
      r.get("theta", c.stability_theta);
      r.get("half_width", c.stability_half_width);
      r.get("box_factor", c.box_factor);
      r.get("box_n", c.box_n);
    }
    top.get("experiment", c.experiment);
    top.get("output", c.output);
    top.get("seed", c.seed);
    top.get("workers", c.workers);
  }
  // Fields with type errors kept their defaults, so the semantic checks still apply.
  auto more = c.validate();
  problems.insert(problems.end(), more.begin(), more.end());
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"config: cannot open " + path});
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: parse error: ") + e.what()});
  }
  return from_json(j);
}

json RunConfig::to_json() const {
  return {{"geometry", grid_json(geometry)},
          {"fiber", {{"thetas", thetas}, {"half_width", half_width}}},
          {"potentials", {{"v1", v1}, {"v2", v2}, {"w", w}}},
          {"forward", {{"mode", forward_mode}, {"angular_order", forward_angular}}},
          {"cgo",
           {{"theta", cgo_theta},
            {"k", cgo_k},
            {"eta", vec(cgo_eta)},
            {"xi", vec(cgo_xi)},
            {"r_values", cgo_r},
            {"r_min", r_min},
            {"gap_min", gap_min},
            {"tau_max", tau_max},
            {"lattice_half_side", lattice_half_side},
            {"n_axial", n_axial},
            {"n_trans", n_trans},
            {"tol", cgo_tol}}},
          {"carleman",
           {{"count", carleman_count}, {"taus", carleman_taus}, {"directions", vecs(carleman_dirs)}, {"slack_tol", slack_tol}}},
          {"reconstruction",
           {{"xi0", vec(xi0)},
            {"epsilon", epsilon},
            {"patch_margin", patch_margin},
            {"rho", rho},
            {"deta", deta},
            {"gamma_star", gamma_star},
            {"mode", mode == DataMode::Full ? "full" : "partial"},
            {"theta", recon_theta},
            {"half_width", recon_half_width},
            {"grid", grid_json(recon_grid)},
            {"k", extract_k},
            {"eta", vec(extract_eta)},
            {"r_values", extract_r},
            {"all_directions", all_directions}}},
          {"stability",
           {{"deltas", deltas},
            {"held_out", held_out},
            {"theta", stability_theta},
            {"half_width", stability_half_width},
            {"box_factor", box_factor},
            {"box_n", box_n}}},
          {"experiment", experiment},
          {"output", output},
          {"seed", seed},
          {"workers", workers}};
}

std::string RunConfig::hash() const {
  Hasher h;
  h.text(to_json().dump());
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << h.digest();
  return o.str();
}

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> p;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) p.push_back(msg);
  };
  auto grid_ok = [&](const GridSpec& g, const std::string& name) {
    need(g.radius > 0.0, name + ".radius: must be positive");
    need(g.nr >= 4, name + ".nr: must be at least 4");
    need(g.nphi >= 8, name + ".nphi: must be at least 8");
    return g.radius > 0.0 && g.nr >= 4 && g.nphi >= 8;
  };
  const bool geo = grid_ok(geometry, "geometry");
  const bool rgeo = grid_ok(recon_grid, "reconstruction.grid");

  need(!thetas.empty(), "fiber.thetas: must not be empty");
  for (double t : thetas) need(std::isfinite(t), "fiber.thetas: values must be finite");
  need(half_width >= 0, "fiber.half_width: must be nonnegative");
  need(std::abs(forward_mode) <= half_width, "forward.mode: outside the fiber window [-K, K]");
  need(forward_angular >= 0, "forward.angular_order: must be nonnegative");

  need(cgo_r.size() >= 2, "cgo.r_values: need at least two values for the decay fit");
  for (double r : cgo_r) need(r >= 0.0, "cgo.r_values: values must be nonnegative");
  need(cgo_eta.norm() > 0.0, "cgo.eta: must be nonzero");
  need(cgo_xi.norm() > 0.0, "cgo.xi: must be nonzero");
  if (cgo_eta.norm() > 0.0 && cgo_xi.norm() > 0.0)
    need(std::abs(cgo_xi.normalized().dot(cgo_eta)) <= 1e-12 * cgo_eta.norm(), "cgo.xi: must be orthogonal to cgo.eta");
  need(r_min >= 0.0, "cgo.r_min: must be nonnegative");
  need(gap_min > 0.0, "cgo.gap_min: must be positive");
  need(tau_max > 0.0, "cgo.tau_max: must be positive");
  need(n_axial >= 8 && n_axial % 2 == 0, "cgo.n_axial: must be even and at least 8");
  need(n_trans >= 8 && n_trans % 2 == 0, "cgo.n_trans: must be even and at least 8");
  need(cgo_tol > 0.0, "cgo.tol: must be positive");
  if (geo && lattice_half_side != 0.0)
    need(lattice_half_side > geometry.radius, "cgo.lattice_half_side: the torus cell must contain the cross-section");

  need(carleman_count > 0, "carleman.count: must be positive");
  need(!carleman_taus.empty(), "carleman.taus: must not be empty");
  for (double t : carleman_taus) need(t > 0.0, "carleman.taus: values must be positive");
  for (const auto& d : carleman_dirs) need(d.norm() > 0.0, "carleman.directions: must be nonzero");
  need(slack_tol >= 0.0, "carleman.slack_tol: must be nonnegative");

  need(xi0.norm() > 0.0, "reconstruction.xi0: must be nonzero");
  need(epsilon > 0.0 && epsilon < 2.0, "reconstruction.epsilon: must lie in (0, 2)");
  need(rho > 0.0, "reconstruction.rho: must be positive");
  need(deta > 0.0, "reconstruction.deta: must be positive");
  need(gamma_star > 0.0 && gamma_star < 1.0, "reconstruction.gamma_star: must lie in (0, 1)");
  need(recon_half_width >= 0, "reconstruction.half_width: must be nonnegative");
  need(extract_eta.norm() > 0.0, "reconstruction.eta: must be nonzero");
  need(!extract_r.empty(), "reconstruction.r_values: must not be empty");
  for (double r : extract_r) need(r >= 0.0, "reconstruction.r_values: values must be nonnegative");
  if (rgeo && xi0.norm() > 0.0 && epsilon > 0.0 && epsilon < 2.0) {
    const CrossSection cs = recon_grid.build();
    const FprimeCheck f = check_fprime(cs, extraction(cs));
    need(f.ok, "reconstruction.epsilon: F' inclusion check failed (" + f.message + ")");
  }

  need(!deltas.empty(), "stability.deltas: must not be empty");
  need(!held_out.empty(), "stability.held_out: must not be empty");
  for (double d : deltas) need(d >= 0.0, "stability.deltas: values must be nonnegative");
  for (double d : held_out) need(d > 0.0, "stability.held_out: values must be positive");
  need(stability_half_width >= 0, "stability.half_width: must be nonnegative");
  need(box_factor > 2.0, "stability.box_factor: the box must contain the cross-section (factor > 2)");
  need(box_n >= 15, "stability.box_n: must be at least 15");

  const auto& subs = subcommands();
  need(std::find(subs.begin(), subs.end(), experiment) != subs.end(), "experiment: unknown subcommand \"" + experiment + "\"");
  need(!output.empty(), "output: must not be empty");
  need(workers >= 0, "workers: must be nonnegative (0 selects all cores)");

  // Potentials, cutoffs and admissibility.
  if (geo) {
    const CrossSection cs = geometry.build();
    const double c_omega = poincare_constant(cs).constant;
    std::mt19937_64 rng(seed);
    std::vector<PeriodicPotential> built;
    const char* names[] = {"v1", "v2", "w"};
    const json* specs[] = {&v1, &v2, &w};
    bool ok[3] = {true, true, true};
    for (int i = 0; i < 3; ++i) {
      try {
        built.push_back(build_potential(*specs[i], cs, rng));
      } catch (const std::exception& e) {
        p.push_back(std::string("potentials.") + names[i] + ": " + e.what());
        ok[i] = false;
        built.push_back(PeriodicPotential::zero(cs));
      }
    }
    for (int i = 0; i < 3; ++i) {
      if (!ok[i]) continue;
      const int cut = built[i].cutoff();
      const std::string who = std::string("potentials.") + names[i];
      need(half_width >= cut, "fiber.half_width: K=" + std::to_string(half_width) + " below the cutoff " +
                                  std::to_string(cut) + " of " + who);
      need(stability_half_width >= cut, "stability.half_width: below the cutoff " + std::to_string(cut) + " of " + who);
      if (i < 2)
        need(recon_half_width >= cut, "reconstruction.half_width: below the cutoff " + std::to_string(cut) + " of " + who);
    }
    {
      auto admissible = [&](const PeriodicPotential& v, const std::string& who) {
        const AdmissibilityReport a = admissible_check(v, c_omega);
        if (a.pass) return;
        std::ostringstream o;
        o << who << ": not admissible (sup|V| " << a.sup_abs << " vs M+ " << a.m_plus << ", sup V- " << a.sup_negative
          << " vs M- " << a.m_minus << ", C_omega " << a.c_omega << ")";
        p.push_back(o.str());
      };
      if (ok[0]) admissible(built[0], "potentials.v1");
      if (ok[1]) admissible(built[1], "potentials.v2");
      if (ok[0] && ok[2])
        for (double d : deltas) admissible(built[0] + built[2].scaled(d), "stability: v1 + delta w at delta " + io::num(d));
      if (ok[0] && ok[2])
        for (double d : held_out) admissible(built[0] + built[2].scaled(d), "stability: v1 + delta w at delta " + io::num(d));
    }
  }
  return p;
}

ExtractionConfig RunConfig::extraction(const CrossSection& cs) const {
  ExtractionConfig e;
  e.xi0 = xi0.normalized();
  e.epsilon = epsilon;
  e.patch_margin = patch_margin;
  e.r = extract_r.empty() ? 1.0 : extract_r.front();
  e.theta = recon_theta;
  e.mode = mode;
  e.lattice = FrequencyLattice::build(rho, deta);
  e.gamma_star = gamma_star;
  e.half_width = recon_half_width;
  e.torus = TorusLattice::for_cross_section(cs, n_axial, n_trans);
  if (lattice_half_side > 0.0) e.torus.half_side = lattice_half_side;
  e.r_min = r_min;
  e.gap_min = gap_min;
  e.tau_max = tau_max;
  e.all_directions = all_directions;
  e.solver_tol = cgo_tol;
  return e;
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"forward", "dn", "cgo-decay", "carleman", "extract", "reconstruct", "stability", "all"};
  return s;
}

json run(const std::string& subcommand, const RunConfig& cfg, const RunOptions& opt) {
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), subcommand) == subs.end())
    throw std::invalid_argument("unknown subcommand \"" + subcommand + "\"");
  const auto start = std::chrono::steady_clock::now();
  const DnCacheStats before = dn_cache_stats();
  Context ctx{cfg, opt.out_dir.empty() ? cfg.output : opt.out_dir, opt.dn_cache_dir};
  std::filesystem::create_directories(ctx.dir);

  json summary;
  if (subcommand == "all") {
    bool ok = true;
    for (const auto& s : subs) {
      if (s == "all") continue;
      Context sub{cfg, ctx.path(s), opt.dn_cache_dir};
      std::filesystem::create_directories(sub.dir);
      json r = dispatch(s, sub);
      io::write_json(sub.path("summary.json"), r);
      ctx.timings[s] = sub.timings[s];
      ok = ok && r.value("ok", false);
      summary[s] = r;
    }
    summary["ok"] = ok;
  } else {
    summary = dispatch(subcommand, ctx);
  }
  io::write_json(ctx.path("summary.json"), summary);

  const DnCacheStats after = dn_cache_stats();
  json manifest{{"tool", "wgstab"},
                {"version", kVersion},
                {"subcommand", subcommand},
                {"config_hash", cfg.hash()},
                {"config", cfg.to_json()},
                {"seed", cfg.seed},
                {"generator", "std::mt19937_64"},
                {"workers", cfg.workers},
                {"dn_cache_dir", opt.dn_cache_dir},
                {"dn_cache", {{"hits", after.hits - before.hits}, {"misses", after.misses - before.misses}}},
                {"versions",
                 {{"compiler", __VERSION__},
                  {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                std::to_string(EIGEN_MINOR_VERSION)},
                  {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                        std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                {"timings_s", ctx.timings},
                {"total_s", seconds_since(start)},
                {"created_utc", utc_now()},
                {"ok", summary.value("ok", false)}};
  io::write_json(ctx.path("manifest.json"), manifest);
  return summary;
}

}  // namespace wgstab
