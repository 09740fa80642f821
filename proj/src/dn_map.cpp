#include "wgstab/dn_map.hpp"

#include <atomic>
#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "wgstab/hash.hpp"

namespace wgstab {

namespace {

std::atomic<int> g_hits{0}, g_misses{0};

TraceData read_boundary(const Field& u, const BoundaryArc& arc) {
  TraceData t{u.theta, u.window, arc.nodes, CMatrix(arc.nodes.size(), u.window.count)};
  for (std::size_t r = 0; r < arc.nodes.size(); ++r) t.values.row(r) = u.boundary.row(arc.nodes[r]);
  return t;
}

BoundaryArc all_nodes(int nphi) {
  BoundaryArc a;
  a.full = true;
  for (int j = 0; j < nphi; ++j) a.nodes.push_back(j);
  return a;
}

}  // namespace

TraceData trace_dirichlet(const Field& u, const BoundaryArc& arc) { return read_boundary(u, arc); }

TraceData trace_dirichlet(const Field& u) {
  return read_boundary(u, all_nodes(static_cast<int>(u.boundary.rows())));
}

TraceData trace_neumann(const Field& u, const CrossSection& cs, const BoundaryArc& arc) {
  Field dn = u;
  for (int s = 0; s < u.window.count; ++s)
    dn.boundary.col(s) = cs.solution_normal_derivative(u.interior.col(s));
  return read_boundary(dn, arc);
}

TraceData trace_neumann(const Field& u, const CrossSection& cs) {
  return trace_neumann(u, cs, full_boundary(cs));
}

CMatrix DnOperator::apply(const CMatrix& g) const {
  if (g.rows() != nphi || g.cols() != window.count) throw std::invalid_argument("DnOperator::apply: bad data shape");
  const CVector out = matrix * Eigen::Map<const CVector>(g.data(), g.size());
  return Eigen::Map<const CMatrix>(out.data(), static_cast<Eigen::Index>(arc.nodes.size()), window.count);
}

DnOperator DnOperator::restricted(const BoundaryArc& sub) const {
  const int nr = static_cast<int>(arc.nodes.size());
  std::vector<int> rows;
  for (int j : sub.nodes) {
    auto it = std::lower_bound(arc.nodes.begin(), arc.nodes.end(), j);
    if (it == arc.nodes.end() || *it != j) throw std::invalid_argument("DnOperator::restricted: node outside the arc");
    rows.push_back(static_cast<int>(it - arc.nodes.begin()));
  }
  DnOperator out = *this;
  out.arc = sub;
  const int ns = static_cast<int>(rows.size());
  out.matrix.resize(static_cast<Eigen::Index>(ns) * window.count, matrix.cols());
  for (int s = 0; s < window.count; ++s)
    for (int r = 0; r < ns; ++r) out.matrix.row(s * ns + r) = matrix.row(s * nr + rows[r]);
  return out;
}

std::string dn_cache_stem(const std::string& dir, std::uint64_t potential_hash, double theta,
                          const CrossSection& cs, ModeWindow window, const BoundaryArc& arc) {
  Hasher h;
  h.value(potential_hash).value(theta).value(cs.content_hash()).value(window.first).value(window.count);
  h.value(arc.full).value(arc.margin).value(arc.direction.x()).value(arc.direction.y());
  h.values(std::span<const int>(arc.nodes));
  char buf[32];
  std::snprintf(buf, sizeof buf, "dn_%016llx", static_cast<unsigned long long>(h.digest()));
  return (std::filesystem::path(dir) / buf).string();
}

void save_dn(const DnOperator& dn, const std::string& stem) {
  static_assert(std::endian::native == std::endian::little, "DN cache files are little-endian");
  nlohmann::json j;
  j["format"] = "wgstab-dn-1";
  j["theta"] = dn.theta;
  j["window"] = {{"first", dn.window.first}, {"count", dn.window.count}};
  j["nphi"] = dn.nphi;
  j["grid_hash"] = dn.grid_hash;
  j["potential_hash"] = dn.potential_hash;
  j["arc"] = {{"full", dn.arc.full},
              {"direction", {dn.arc.direction.x(), dn.arc.direction.y()}},
              {"margin", dn.arc.margin},
              {"sign", dn.arc.sign == FaceSign::Shadowed ? "shadowed" : "illuminated"},
              {"nodes", dn.arc.nodes}};
  j["rows"] = dn.matrix.rows();
  j["cols"] = dn.matrix.cols();
  const std::string tmp = stem + ".bin.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write DN cache " + tmp);
    const char magic[8] = {'W', 'G', 'S', 'T', 'D', 'N', '0', '1'};
    const std::uint64_t rows = dn.matrix.rows(), cols = dn.matrix.cols();
    out.write(magic, 8);
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    out.write(reinterpret_cast<const char*>(dn.matrix.data()), static_cast<std::streamsize>(sizeof(cplx) * rows * cols));
  }
  std::filesystem::rename(tmp, stem + ".bin");
  std::ofstream(stem + ".json") << j.dump(2) << '\n';
}

DnOperator load_dn(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw std::runtime_error("missing DN sidecar " + stem + ".json");
  const auto j = nlohmann::json::parse(js);
  DnOperator dn;
  dn.theta = j.at("theta").get<double>();
  dn.window = {j.at("window").at("first").get<int>(), j.at("window").at("count").get<int>()};
  dn.nphi = j.at("nphi").get<int>();
  dn.grid_hash = j.at("grid_hash").get<std::uint64_t>();
  dn.potential_hash = j.at("potential_hash").get<std::uint64_t>();
  const auto& a = j.at("arc");
  dn.arc.full = a.at("full").get<bool>();
  dn.arc.direction = Vec2(a.at("direction")[0].get<double>(), a.at("direction")[1].get<double>());
  dn.arc.margin = a.at("margin").get<double>();
  dn.arc.sign = a.at("sign").get<std::string>() == "shadowed" ? FaceSign::Shadowed : FaceSign::Illuminated;
  dn.arc.nodes = a.at("nodes").get<std::vector<int>>();
  std::ifstream in(stem + ".bin", std::ios::binary);
  if (!in) throw std::runtime_error("missing DN data " + stem + ".bin");
  char magic[8];
  std::uint64_t rows = 0, cols = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (std::string(magic, 8) != "WGSTDN01" || rows != j.at("rows").get<std::uint64_t>() ||
      cols != j.at("cols").get<std::uint64_t>())
    throw std::runtime_error("corrupt DN cache " + stem);
  dn.matrix.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(dn.matrix.data()), static_cast<std::streamsize>(sizeof(cplx) * rows * cols));
  if (!in) throw std::runtime_error("truncated DN cache " + stem);
  return dn;
}

DnCacheStats dn_cache_stats() { return {g_hits.load(), g_misses.load()}; }

DnOperator assemble_dn(const PeriodicPotential& v, double theta, const CrossSection& cs, ModeWindow window,
                       const BoundaryArc& arc, const std::string& cache_dir) {
  std::string stem;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    stem = dn_cache_stem(cache_dir, v.content_hash(), theta, cs, window, arc);
    if (std::filesystem::exists(stem + ".bin") && std::filesystem::exists(stem + ".json")) {
      ++g_hits;
      return load_dn(stem);
    }
    ++g_misses;
  }
  const auto op = assemble(v, theta, window, cs);
  const int n = cs.interior_count(), nb = cs.boundary_count(), nm = window.count;
  const int na = static_cast<int>(arc.nodes.size());
  const double h = cs.hr();
  // Same stencil as CrossSection::solution_normal_derivative.
  const double w1 = 2.0 / h, w2 = -3.0 / h, w3 = 1.0 / h;

  DnOperator dn;
  dn.theta = theta;
  dn.window = window;
  dn.arc = arc;
  dn.nphi = nb;
  dn.grid_hash = cs.content_hash();
  dn.potential_hash = v.content_hash();
  dn.matrix = CMatrix::Zero(static_cast<Eigen::Index>(na) * nm, static_cast<Eigen::Index>(nb) * nm);

  // One batch per input mode keeps the right-hand side block small.
  for (int s = 0; s < nm; ++s) {
    CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(nb) * nm, nb);
    for (int j = 0; j < nb; ++j) g(s * nb + j, j) = 1.0;
    const CMatrix x = solve_dirichlet_stacked(*op, g);
    for (int t = 0; t < nm; ++t)
      for (int r = 0; r < na; ++r) {
        const int j = arc.nodes[r];
        dn.matrix.block(t * na + r, s * nb, 1, nb) = x.row(t * n + cs.index(cs.nr() - 1, j)) * w1 +
                                                     x.row(t * n + cs.index(cs.nr() - 2, j)) * w2 +
                                                     x.row(t * n + cs.index(cs.nr() - 3, j)) * w3;
      }
  }
  if (!stem.empty()) save_dn(dn, stem);
  return dn;
}

std::vector<CMatrix> harmonic_gram(const CrossSection& cs, double theta, ModeWindow window) {
  const auto zero = PeriodicPotential::zero(cs);
  const int nb = cs.boundary_count();
  const RVector& w = cs.area_weights();
  std::vector<CMatrix> blocks;
  for (int s = 0; s < window.count; ++s) {
    // Modes decouple for V = 0, so each block comes from a one-mode operator.
    const FiberOperator op(cs, zero, theta, ModeWindow{window.mode(s), 1});
    const CMatrix e = solve_dirichlet_stacked(op, CMatrix::Identity(nb, nb));
    blocks.push_back(e.adjoint() * w.cast<cplx>().asDiagonal() * e);
  }
  return blocks;
}

namespace {

struct NormProblem {
  CMatrix d;                                   // a - b
  double q = 0.0;                              // boundary weight (uniform on the disk)
  std::vector<Eigen::LLT<CMatrix>> gram_llt;   // per mode
  std::vector<CMatrix> gram;
  int nb = 0;
};

NormProblem make_problem(const DnOperator& a, const DnOperator& b, const CrossSection& cs) {
  if (a.theta != b.theta || !(a.window == b.window) || a.arc.nodes != b.arc.nodes || a.grid_hash != b.grid_hash)
    throw std::invalid_argument("dn_difference_norm: operators differ in theta, window, arc or grid");
  NormProblem p;
  p.d = a.matrix - b.matrix;
  p.q = cs.boundary_weights()(0);
  p.nb = cs.boundary_count();
  p.gram = harmonic_gram(cs, a.theta, a.window);
  for (const auto& g : p.gram) {
    p.gram_llt.emplace_back(g);
    if (p.gram_llt.back().info() != Eigen::Success) throw SolverError("harmonic Gram matrix is not positive definite");
  }
  return p;
}

}  // namespace

DnNormResult dn_difference_norm(const DnOperator& a, const DnOperator& b, const CrossSection& cs,
                                const DnNormOptions& opt) {
  if (a.matrix.size() == b.matrix.size() && a.matrix == b.matrix && a.theta == b.theta) return {0.0, 0};
  const NormProblem p = make_problem(a, b, cs);
  const int nm = a.window.count, nb = p.nb;
  auto gram_apply = [&](const CVector& x) {
    CVector y(x.size());
    for (int s = 0; s < nm; ++s) y.segment(s * nb, nb) = p.gram[s] * x.segment(s * nb, nb);
    return y;
  };
  auto gram_solve = [&](const CVector& x) {
    CVector y(x.size());
    for (int s = 0; s < nm; ++s) y.segment(s * nb, nb) = p.gram_llt[s].solve(x.segment(s * nb, nb));
    return y;
  };
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  CVector x(p.d.cols());
  for (auto& c : x) c = cplx(nd(rng), nd(rng));
  double lambda = 0.0;
  for (int it = 1; it <= opt.max_iter; ++it) {
    const CVector dx = p.d * x;
    const double num = p.q * dx.squaredNorm();
    const double den = std::real(x.dot(gram_apply(x)));
    const double next = num / den;
    if (it > 1 && std::abs(next - lambda) <= opt.tol * next) return {std::sqrt(next), it};
    lambda = next;
    CVector y = gram_solve(p.q * (p.d.adjoint() * dx));
    const double nrm = std::sqrt(std::real(y.dot(gram_apply(y))));
    if (nrm == 0.0) return {0.0, it};
    x = y / nrm;
  }
  throw ConvergenceError("dn_difference_norm: power iteration did not converge", opt.max_iter, std::sqrt(lambda));
}

double dn_difference_norm_dense(const DnOperator& a, const DnOperator& b, const CrossSection& cs) {
  const NormProblem p = make_problem(a, b, cs);
  const int nm = a.window.count, nb = p.nb;
  CMatrix g = CMatrix::Zero(static_cast<Eigen::Index>(nm) * nb, static_cast<Eigen::Index>(nm) * nb);
  for (int s = 0; s < nm; ++s) g.block(s * nb, s * nb, nb, nb) = p.gram[s];
  const CMatrix m = p.q * (p.d.adjoint() * p.d);
  Eigen::GeneralizedSelfAdjointEigenSolver<CMatrix> es(m, g, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

ThetaSweep full_norm_over_theta(const PeriodicPotential& v1, const PeriodicPotential& v2,
                                const std::vector<double>& thetas, const CrossSection& cs, ModeWindow window,
                                const BoundaryArc& arc, const std::string& cache_dir) {
  if (thetas.empty()) throw std::invalid_argument("full_norm_over_theta: empty theta grid");
  ThetaSweep out;
  out.thetas = thetas;
  for (double th : thetas) {
    double val = 0.0;
    if (v1.content_hash() != v2.content_hash()) {
      const DnOperator a = assemble_dn(v1, th, cs, window, arc, cache_dir);
      const DnOperator b = assemble_dn(v2, th, cs, window, arc, cache_dir);
      val = dn_difference_norm(a, b, cs).value;
    }
    out.values.push_back(val);
    if (out.values.size() == 1 || val > out.sup) {
      out.sup = val;
      out.argmax = th;
    }
  }
  return out;
}

double hermitian_pairing_defect(const DnOperator& dn, const CrossSection& cs) {
  if (static_cast<int>(dn.arc.nodes.size()) != cs.boundary_count())
    throw std::invalid_argument("hermitian_pairing_defect: needs a full-boundary DN map");
  // Boundary weights are uniform on the disk, so the weighted pairing reduces to the plain one.
  const CMatrix skew = dn.matrix - dn.matrix.adjoint();
  const CMatrix herm = kI * skew;
  Eigen::SelfAdjointEigenSolver<CMatrix> es_skew(herm, Eigen::EigenvaluesOnly);
  Eigen::SelfAdjointEigenSolver<CMatrix> es_norm(dn.matrix.adjoint() * dn.matrix, Eigen::EigenvaluesOnly);
  const double skew_norm = es_skew.eigenvalues().cwiseAbs().maxCoeff();
  const double norm = std::sqrt(es_norm.eigenvalues().maxCoeff());
  return norm > 0.0 ? skew_norm / norm : 0.0;
}

}  // namespace wgstab
