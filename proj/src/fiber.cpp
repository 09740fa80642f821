#include "wgstab/fiber.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <list>
#include <map>
#include <mutex>
#include <tuple>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include "wgstab/hash.hpp"

namespace wgstab {

Field::Field(const CrossSection& cs, ModeWindow w, double th)
    : theta(th), window(w), interior(CMatrix::Zero(cs.interior_count(), w.count)),
      boundary(CMatrix::Zero(cs.boundary_count(), w.count)) {}

CVector Field::interior_at(double x1) const {
  CVector out = CVector::Zero(interior.rows());
  for (int s = 0; s < window.count; ++s) out += std::exp(kI * (beta(s) * x1)) * interior.col(s);
  return out;
}

CVector Field::boundary_at(double x1) const {
  CVector out = CVector::Zero(boundary.rows());
  for (int s = 0; s < window.count; ++s) out += std::exp(kI * (beta(s) * x1)) * boundary.col(s);
  return out;
}

double Field::l2_norm(const CrossSection& cs) const {
  const RVector& w = cs.area_weights();
  double acc = 0.0;
  for (int s = 0; s < window.count; ++s) acc += (interior.col(s).cwiseAbs2().array() * w.array()).sum();
  return std::sqrt(acc);
}

Field Field::rewindowed(ModeWindow w) const {
  Field out;
  out.theta = theta;
  out.window = w;
  out.interior = CMatrix::Zero(interior.rows(), w.count);
  out.boundary = CMatrix::Zero(boundary.rows(), w.count);
  for (int s = 0; s < w.count; ++s) {
    const int k = w.mode(s);
    if (!window.contains(k)) continue;
    out.interior.col(s) = interior.col(window.slot(k));
    out.boundary.col(s) = boundary.col(window.slot(k));
  }
  return out;
}

static void require_compatible(const Field& a, const Field& b) {
  if (!(a.window == b.window) || a.theta != b.theta || a.interior.rows() != b.interior.rows())
    throw std::invalid_argument("Field: incompatible operands");
}

Field& Field::operator+=(const Field& o) {
  require_compatible(*this, o);
  interior += o.interior;
  boundary += o.boundary;
  return *this;
}

Field& Field::operator-=(const Field& o) {
  require_compatible(*this, o);
  interior -= o.interior;
  boundary -= o.boundary;
  return *this;
}

Field& Field::operator*=(cplx s) {
  interior *= s;
  boundary *= s;
  return *this;
}

Field operator+(Field a, const Field& b) { return a += b; }
Field operator-(Field a, const Field& b) { return a -= b; }
Field operator*(cplx s, Field a) { return a *= s; }

void Field::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "k,node,re,im\n" << std::setprecision(17);
  const int n = static_cast<int>(interior.rows());
  for (int s = 0; s < window.count; ++s) {
    const int k = window.mode(s);
    for (int p = 0; p < n; ++p) out << k << ',' << p << ',' << interior(p, s).real() << ',' << interior(p, s).imag() << '\n';
    for (int j = 0; j < boundary.rows(); ++j)
      out << k << ',' << n + j << ',' << boundary(j, s).real() << ',' << boundary(j, s).imag() << '\n';
  }
}

struct FiberOperator::Factor {
  Eigen::SimplicialLDLT<SparseC, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt;
  Eigen::SparseLU<SparseC, Eigen::COLAMDOrdering<int>> lu;
  bool is_lu = false;
};

FiberOperator::~FiberOperator() = default;

FiberOperator::FiberOperator(const CrossSection& cs, const PeriodicPotential& v, double theta, ModeWindow window)
    : cs_(cs), theta_(theta), window_(window) {
  if (window.count < 1) throw std::invalid_argument("FiberOperator: empty mode window");
  if (!v.matches(cs)) throw std::invalid_argument("FiberOperator: potential grid differs from the cross-section");
  v_hash_ = v.content_hash();
  const int n = cs.interior_count();
  const int nm = window.count;
  const RVector& w = cs.area_weights();
  const auto& s = cs.stiffness();
  const int reach = std::min(v.cutoff(), nm - 1);
  truncated_ = nm <= 2 * v.cutoff();

  std::vector<CVector> wv(2 * reach + 1);
  for (int m = -reach; m <= reach; ++m) wv[m + reach] = v.mode(m).cwiseProduct(w.cast<cplx>());

  std::vector<Eigen::Triplet<cplx>> trip;
  trip.reserve(static_cast<std::size_t>(nm) * (s.nonZeros() + n * (2 * reach + 1)));
  for (int a = 0; a < nm; ++a) {
    const double b = theta + kTwoPi * window.mode(a);
    const int off = a * n;
    for (int col = 0; col < s.outerSize(); ++col)
      for (Eigen::SparseMatrix<double>::InnerIterator it(s, col); it; ++it)
        trip.emplace_back(off + static_cast<int>(it.row()), off + col, it.value());
    for (int p = 0; p < n; ++p) trip.emplace_back(off + p, off + p, b * b * w(p));
    for (int c = std::max(0, a - reach); c <= std::min(nm - 1, a + reach); ++c) {
      const CVector& f = wv[a - c + reach];
      for (int p = 0; p < n; ++p)
        if (f(p) != cplx(0.0)) trip.emplace_back(off + p, c * n + p, f(p));
    }
  }
  a_.resize(n * nm, n * nm);
  a_.setFromTriplets(trip.begin(), trip.end());
  a_.makeCompressed();

  ldlt_ = std::make_unique<Factor>();
  ldlt_->ldlt.compute(a_);
  bool ok = ldlt_->ldlt.info() == Eigen::Success;
  if (ok) {
    // A zero or tiny pivot means the operator is singular at this resolution.
    const auto d = ldlt_->ldlt.vectorD();
    const double scale = d.cwiseAbs().maxCoeff();
    ok = std::isfinite(scale) && d.cwiseAbs().minCoeff() > 1e-13 * scale;
  }
  if (!ok) {
    ldlt_.reset();
    lu_ = std::make_unique<Factor>();
    lu_->is_lu = true;
    lu_->lu.analyzePattern(a_);
    lu_->lu.factorize(a_);
    if (lu_->lu.info() != Eigen::Success)
      throw SolverError("fiber operator factorization failed (0 in the discrete spectrum?)");
  }
}

double FiberOperator::hermitian_defect() const {
  const SparseC d = SparseC(a_.adjoint()) - a_;
  double m = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseC::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

CMatrix FiberOperator::solve_raw(const CMatrix& b) const {
  if (b.rows() != a_.rows()) throw std::invalid_argument("FiberOperator::solve_raw: size mismatch");
  if (!b.allFinite()) throw std::invalid_argument("FiberOperator::solve_raw: non-finite right-hand side");
  CMatrix x = ldlt_ ? CMatrix(ldlt_->ldlt.solve(b)) : CMatrix(lu_->lu.solve(b));
  return x;
}

double FiberOperator::smallest_eigenvalue(double tol, int max_iter) const {
  const int n = cs_.interior_count();
  CVector wfull(a_.rows());
  for (int a = 0; a < window_.count; ++a) wfull.segment(a * n, n) = cs_.area_weights().cast<cplx>();
  CVector x = CVector::Ones(a_.rows());
  double lambda = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    CVector y = solve_raw(wfull.cwiseProduct(x));
    const double wn = std::sqrt(std::abs(y.dot(wfull.cwiseProduct(y))));
    y /= wn;
    const double next = std::real(y.dot(a_ * y));
    x = std::move(y);
    if (it > 1 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  throw ConvergenceError("smallest_eigenvalue: inverse iteration did not converge", max_iter, lambda);
}

namespace {

struct CacheKey {
  std::uint64_t grid, potential;
  double theta;
  int first, count;
  bool operator==(const CacheKey&) const = default;
  bool operator<(const CacheKey& o) const {
    return std::tie(grid, potential, theta, first, count) < std::tie(o.grid, o.potential, o.theta, o.first, o.count);
  }
};

struct OperatorCache {
  std::mutex mutex;
  std::map<CacheKey, FiberHandle> entries;
  std::list<CacheKey> order;  // most recent at the back
  std::size_t capacity = 6;
};

OperatorCache& cache() {
  static OperatorCache c;
  return c;
}

}  // namespace

FiberHandle assemble(const PeriodicPotential& v, double theta, ModeWindow window, const CrossSection& cs) {
  const CacheKey key{cs.content_hash(), v.content_hash(), theta, window.first, window.count};
  auto& c = cache();
  {
    std::lock_guard<std::mutex> lock(c.mutex);
    auto it = c.entries.find(key);
    if (it != c.entries.end()) {
      c.order.remove(key);
      c.order.push_back(key);
      return it->second;
    }
  }
  auto op = std::make_shared<const FiberOperator>(cs, v, theta, window);
  std::lock_guard<std::mutex> lock(c.mutex);
  if (!c.entries.count(key)) {
    c.entries.emplace(key, op);
    c.order.push_back(key);
    while (c.order.size() > c.capacity) {
      c.entries.erase(c.order.front());
      c.order.pop_front();
    }
  }
  return op;
}

FiberHandle assemble(const PeriodicPotential& v, double theta, int half_width, const CrossSection& cs) {
  return assemble(v, theta, ModeWindow::centred(half_width), cs);
}

void clear_operator_cache() {
  auto& c = cache();
  std::lock_guard<std::mutex> lock(c.mutex);
  c.entries.clear();
  c.order.clear();
}

std::size_t operator_cache_size() {
  auto& c = cache();
  std::lock_guard<std::mutex> lock(c.mutex);
  return c.entries.size();
}

int default_half_width(const PeriodicPotential& v) {
  return v.cutoff() > 0 ? std::max(8, v.cutoff() + 4) : 8;
}

CMatrix solve_dirichlet_stacked(const FiberOperator& op, const CMatrix& g_cols) {
  const CrossSection& cs = op.cross_section();
  const int n = cs.interior_count(), nb = cs.boundary_count(), nm = op.window().count;
  if (g_cols.rows() != static_cast<Eigen::Index>(nb) * nm)
    throw std::invalid_argument("solve_dirichlet: boundary data has the wrong size");
  CMatrix rhs = CMatrix::Zero(static_cast<Eigen::Index>(n) * nm, g_cols.cols());
  const double c = cs.boundary_coupling();
  for (int a = 0; a < nm; ++a)
    for (int j = 0; j < nb; ++j) rhs.row(a * n + cs.index(cs.nr() - 1, j)) = c * g_cols.row(a * nb + j);
  return op.solve_raw(rhs);
}

Field solve_dirichlet(const FiberOperator& op, const CMatrix& g) {
  const CrossSection& cs = op.cross_section();
  const int n = cs.interior_count(), nb = cs.boundary_count(), nm = op.window().count;
  if (g.rows() != nb || g.cols() != nm) throw std::invalid_argument("solve_dirichlet: expected nphi x modes data");
  if (!g.allFinite()) throw std::invalid_argument("solve_dirichlet: non-finite boundary data");
  const CMatrix x = solve_dirichlet_stacked(op, Eigen::Map<const CVector>(g.data(), g.size()));
  Field u(cs, op.window(), op.theta());
  u.interior = Eigen::Map<const CMatrix>(x.data(), n, nm);
  u.boundary = g;
  return u;
}

Field resolvent(const FiberOperator& op, const Field& f) {
  const CrossSection& cs = op.cross_section();
  const int n = cs.interior_count(), nm = op.window().count;
  if (!(f.window == op.window()) || f.interior.rows() != n) throw std::invalid_argument("resolvent: field does not match operator");
  CMatrix rhs(static_cast<Eigen::Index>(n) * nm, 1);
  for (int a = 0; a < nm; ++a) rhs.col(0).segment(a * n, n) = f.interior.col(a).cwiseProduct(cs.area_weights().cast<cplx>());
  const CMatrix x = op.solve_raw(rhs);
  Field u(cs, op.window(), op.theta());
  u.interior = Eigen::Map<const CMatrix>(x.data(), n, nm);
  return u;
}

CMatrix pde_residual(const FiberOperator& op, const PeriodicPotential& v, const Field& u) {
  const CrossSection& cs = op.cross_section();
  const int nm = u.window.count;
  CMatrix r(cs.interior_count(), nm);
  for (int a = 0; a < nm; ++a) {
    const double b = u.beta(a);
    r.col(a) = -cs.laplacian(u.interior.col(a), u.boundary.col(a)) + b * b * u.interior.col(a);
    for (int c = 0; c < nm; ++c) {
      const int m = u.window.mode(a) - u.window.mode(c);
      if (std::abs(m) > v.cutoff()) continue;
      r.col(a) += v.mode(m).cwiseProduct(u.interior.col(c));
    }
  }
  return r;
}

HarmonicExtension harmonic_extension(const CMatrix& g, double theta, const CrossSection& cs, ModeWindow window) {
  const auto zero = PeriodicPotential::zero(cs);
  const auto op = assemble(zero, theta, window, cs);
  HarmonicExtension h;
  h.field = solve_dirichlet(*op, g);
  h.norm = h.field.l2_norm(cs);
  return h;
}

std::vector<CVector> fbg_forward(const std::vector<CVector>& cells, int first_cell, int n_theta) {
  if (n_theta < static_cast<int>(cells.size()))
    throw std::invalid_argument("fbg_forward: fewer theta points than cells (aliasing)");
  if (cells.empty()) throw std::invalid_argument("fbg_forward: no cells");
  std::vector<CVector> out(n_theta, CVector::Zero(cells.front().size()));
  for (int j = 0; j < n_theta; ++j) {
    const double th = kTwoPi * j / n_theta;
    for (std::size_t c = 0; c < cells.size(); ++c)
      out[j] += std::exp(-kI * (th * (first_cell + static_cast<int>(c)))) * cells[c];
  }
  return out;
}

std::vector<CVector> fbg_inverse(const std::vector<CVector>& fibres, int first_cell, int n_cells) {
  const int n_theta = static_cast<int>(fibres.size());
  if (n_theta < n_cells) throw std::invalid_argument("fbg_inverse: fewer theta points than cells (aliasing)");
  std::vector<CVector> out(n_cells, CVector::Zero(fibres.front().size()));
  for (int c = 0; c < n_cells; ++c) {
    for (int j = 0; j < n_theta; ++j) {
      const double th = kTwoPi * j / n_theta;
      out[c] += std::exp(kI * (th * (first_cell + c))) * fibres[j];
    }
    out[c] /= static_cast<double>(n_theta);
  }
  return out;
}

}  // namespace wgstab
