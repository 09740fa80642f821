#include "wgstab/potential.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fft_util.hpp"
#include "wgstab/hash.hpp"

namespace wgstab {

double Bump::operator()(const Vec2& x) const {
  const double s2 = (x - centre).squaredNorm() / (width * width);
  if (s2 >= 1.0) return 0.0;
  return amplitude * std::exp(1.0 - 1.0 / (1.0 - s2));
}

PeriodicPotential::PeriodicPotential(const CrossSection& cs, int cutoff, std::vector<CVector> modes,
                                     double m_plus, double m_minus)
    : cutoff_(cutoff), modes_(std::move(modes)), m_plus_(m_plus), m_minus_(m_minus),
      radius_(cs.radius()), nr_(cs.nr()), nphi_(cs.nphi()) {
  if (cutoff < 0) throw std::invalid_argument("PeriodicPotential: negative cutoff");
  if (static_cast<int>(modes_.size()) != 2 * cutoff + 1)
    throw std::invalid_argument("PeriodicPotential: expected 2*cutoff+1 mode fields");
  for (const auto& f : modes_)
    if (f.size() != cs.interior_count()) throw std::invalid_argument("PeriodicPotential: field size mismatch");
}

PeriodicPotential PeriodicPotential::zero(const CrossSection& cs, double m_plus, double m_minus) {
  return PeriodicPotential(cs, 0, {CVector::Zero(cs.interior_count())}, m_plus, m_minus);
}

PeriodicPotential PeriodicPotential::constant(const CrossSection& cs, double value, double m_plus,
                                              double m_minus) {
  return from_profile(
      cs, 0, [value](int m, const Vec2&) { return m == 0 ? cplx(value) : cplx(0.0); }, m_plus,
      m_minus);
}

PeriodicPotential PeriodicPotential::from_terms(const CrossSection& cs, std::vector<PotentialTerm> terms,
                                                double m_plus, double m_minus) {
  int cutoff = 0;
  for (const auto& t : terms) cutoff = std::max(cutoff, std::abs(t.mode));
  auto profile = [terms = std::move(terms)](int m, const Vec2& x) {
    cplx acc = 0.0;
    for (const auto& t : terms) {
      const double g = t.profile(x);
      if (g == 0.0) continue;
      if (t.mode == 0) {
        if (m == 0) acc += t.coefficient.real() * g;
      } else {
        if (m == t.mode) acc += t.coefficient * g;
        if (m == -t.mode) acc += std::conj(t.coefficient) * g;
      }
    }
    return acc;
  };
  return from_profile(cs, cutoff, std::move(profile), m_plus, m_minus);
}

PeriodicPotential PeriodicPotential::from_profile(const CrossSection& cs, int cutoff, Profile profile,
                                                  double m_plus, double m_minus) {
  std::vector<CVector> modes;
  modes.reserve(2 * cutoff + 1);
  const auto& pts = cs.interior_points();
  for (int m = -cutoff; m <= cutoff; ++m) {
    CVector f(cs.interior_count());
    for (int p = 0; p < cs.interior_count(); ++p) f(p) = profile(m, pts.row(p).transpose());
    modes.push_back(std::move(f));
  }
  PeriodicPotential v(cs, cutoff, std::move(modes), m_plus, m_minus);
  v.profile_ = std::move(profile);
  return v;
}

bool PeriodicPotential::matches(const CrossSection& cs) const {
  return cs.nr() == nr_ && cs.nphi() == nphi_ && cs.radius() == radius_;
}

CVector PeriodicPotential::mode(int m) const {
  if (std::abs(m) > cutoff_) return CVector::Zero(nr_ * nphi_);
  return modes_[m + cutoff_];
}

cplx PeriodicPotential::mode_at(int m, const Vec2& x) const {
  if (std::abs(m) > cutoff_) return 0.0;
  if (x.norm() > radius_) return 0.0;
  if (profile_) return profile_(m, x);
  return interpolate(m, x);
}

cplx PeriodicPotential::interpolate(int m, const Vec2& x) const {
  const CVector& f = modes_[m + cutoff_];
  const double hr = radius_ / nr_, hphi = kTwoPi / nphi_;
  const double r = x.norm();
  double phi = std::atan2(x.y(), x.x());
  if (phi < 0) phi += kTwoPi;
  const double u = phi / hphi;
  const int j0 = static_cast<int>(std::floor(u)) % nphi_;
  const int j1 = (j0 + 1) % nphi_;
  const double fu = u - std::floor(u);
  auto ring = [&](int i) { return (1.0 - fu) * f(i * nphi_ + j0) + fu * f(i * nphi_ + j1); };
  const double t = r / hr - 0.5;
  if (t <= 0.0) {
    const cplx centre = f.head(nphi_).mean();
    const double s = r / (0.5 * hr);
    return (1.0 - s) * centre + s * ring(0);
  }
  if (t >= nr_ - 1) return ring(nr_ - 1);
  const int i0 = static_cast<int>(std::floor(t));
  const double ft = t - i0;
  return (1.0 - ft) * ring(i0) + ft * ring(i0 + 1);
}

double PeriodicPotential::value_at(double x1, const Vec2& x) const {
  double v = mode_at(0, x).real();
  for (int m = 1; m <= cutoff_; ++m) v += 2.0 * (mode_at(m, x) * std::exp(kI * (kTwoPi * m * x1))).real();
  return v;
}

RVector PeriodicPotential::sample(double x1) const {
  RVector out = modes_[cutoff_].real();
  for (int m = 1; m <= cutoff_; ++m)
    out += 2.0 * (modes_[m + cutoff_] * std::exp(kI * (kTwoPi * m * x1))).real();
  return out;
}

bool PeriodicPotential::is_zero() const {
  return std::all_of(modes_.begin(), modes_.end(), [](const CVector& f) { return f.isZero(0.0); });
}

std::uint64_t PeriodicPotential::content_hash() const {
  Hasher h;
  h.value(cutoff_).value(radius_).value(nr_).value(nphi_);
  for (const auto& f : modes_) h.bytes(f.data(), sizeof(cplx) * f.size());
  return h.digest();
}

PeriodicPotential PeriodicPotential::scaled(double t) const {
  PeriodicPotential out = *this;
  for (auto& f : out.modes_) f *= t;
  if (profile_) {
    out.profile_ = [p = profile_, t](int m, const Vec2& x) { return t * p(m, x); };
  }
  return out;
}

PeriodicPotential operator+(const PeriodicPotential& a, const PeriodicPotential& b) {
  if (a.nr_ != b.nr_ || a.nphi_ != b.nphi_ || a.radius_ != b.radius_)
    throw std::invalid_argument("PeriodicPotential: grids differ");
  PeriodicPotential out;
  out.cutoff_ = std::max(a.cutoff_, b.cutoff_);
  out.radius_ = a.radius_;
  out.nr_ = a.nr_;
  out.nphi_ = a.nphi_;
  out.m_plus_ = a.m_plus_;
  out.m_minus_ = a.m_minus_;
  for (int m = -out.cutoff_; m <= out.cutoff_; ++m) out.modes_.push_back(a.mode(m) + b.mode(m));
  if (a.profile_ && b.profile_) {
    out.profile_ = [pa = a.profile_, pb = b.profile_, ca = a.cutoff_, cb = b.cutoff_](int m, const Vec2& x) {
      cplx v = 0.0;
      if (std::abs(m) <= ca) v += pa(m, x);
      if (std::abs(m) <= cb) v += pb(m, x);
      return v;
    };
  }
  return out;
}

PeriodicPotential operator-(const PeriodicPotential& a, const PeriodicPotential& b) {
  return a + b.scaled(-1.0);
}

double PeriodicPotential::reality_defect() const {
  double d = 0.0;
  for (int m = 0; m <= cutoff_; ++m)
    d = std::max(d, (modes_[cutoff_ - m] - modes_[cutoff_ + m].conjugate()).cwiseAbs().maxCoeff());
  return d;
}

void PeriodicPotential::save(const std::string& json_path) const {
  namespace fs = std::filesystem;
  const fs::path jp(json_path);
  fs::path csv = jp;
  csv.replace_extension(".csv");
  nlohmann::json header;
  header["format"] = "wgstab-potential-1";
  header["cutoff"] = cutoff_;
  header["m_plus"] = m_plus_;
  header["m_minus"] = m_minus_;
  header["grid"] = {{"radius", radius_}, {"nr", nr_}, {"nphi", nphi_}};
  header["data_file"] = csv.filename().string();
  std::ofstream(jp) << header.dump(2) << '\n';
  std::ofstream out(csv);
  out << "m,node,re,im\n" << std::setprecision(17);
  for (int m = -cutoff_; m <= cutoff_; ++m) {
    const CVector& f = modes_[m + cutoff_];
    for (int p = 0; p < f.size(); ++p) out << m << ',' << p << ',' << f(p).real() << ',' << f(p).imag() << '\n';
  }
}

PeriodicPotential PeriodicPotential::load(const std::string& json_path, const CrossSection& cs) {
  namespace fs = std::filesystem;
  std::ifstream in(json_path);
  if (!in) throw std::runtime_error("cannot open potential header " + json_path);
  const auto header = nlohmann::json::parse(in);
  const int cutoff = header.at("cutoff").get<int>();
  const auto& g = header.at("grid");
  if (g.at("nr").get<int>() != cs.nr() || g.at("nphi").get<int>() != cs.nphi() ||
      g.at("radius").get<double>() != cs.radius())
    throw std::invalid_argument("potential grid does not match the cross-section");
  const fs::path csv = fs::path(json_path).parent_path() / header.at("data_file").get<std::string>();
  std::ifstream data(csv);
  if (!data) throw std::runtime_error("cannot open potential data " + csv.string());
  std::vector<CVector> modes(2 * cutoff + 1, CVector::Zero(cs.interior_count()));
  std::string line;
  std::getline(data, line);
  while (std::getline(data, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    int m = 0, p = 0;
    double re = 0, im = 0;
    std::getline(ss, tok, ',');
    m = std::stoi(tok);
    std::getline(ss, tok, ',');
    p = std::stoi(tok);
    std::getline(ss, tok, ',');
    re = std::stod(tok);
    std::getline(ss, tok, ',');
    im = std::stod(tok);
    if (std::abs(m) > cutoff || p < 0 || p >= cs.interior_count())
      throw std::invalid_argument("potential data index out of range");
    modes[m + cutoff](p) = cplx(re, im);
  }
  PeriodicPotential v(cs, cutoff, std::move(modes), header.at("m_plus").get<double>(),
                      header.at("m_minus").get<double>());
  double scale = 0.0;
  for (int m = -cutoff; m <= cutoff; ++m) scale = std::max(scale, v.mode(m).cwiseAbs().maxCoeff());
  if (v.reality_defect() > 1e-12 * std::max(scale, 1.0))
    throw std::invalid_argument("potential data violates V_{-m} = conj(V_m)");
  return v;
}

AdmissibilityReport admissible_check(const PeriodicPotential& v, double c_omega) {
  AdmissibilityReport r;
  r.m_plus = v.m_plus();
  r.m_minus = v.m_minus();
  r.c_omega = c_omega;
  const int n = std::max(16, 8 * v.cutoff());
  for (int s = 0; s < n; ++s) {
    const RVector vals = v.sample(static_cast<double>(s) / n);
    r.sup_abs = std::max(r.sup_abs, vals.cwiseAbs().maxCoeff());
    r.sup_negative = std::max(r.sup_negative, (-vals).maxCoeff());
  }
  r.sup_negative = std::max(r.sup_negative, 0.0);
  r.within_m_plus = r.sup_abs <= r.m_plus;
  r.within_m_minus = r.sup_negative <= r.m_minus;
  r.gate = r.m_minus < c_omega && r.m_minus <= r.m_plus;
  r.pass = r.within_m_plus && r.within_m_minus && r.gate;
  return r;
}

FrequencyLattice FrequencyLattice::build(double rho, double deta) {
  if (!(rho > 0.0) || !(deta > 0.0)) throw std::invalid_argument("FrequencyLattice: rho and deta must be positive");
  FrequencyLattice lat;
  lat.rho = rho;
  lat.deta = deta;
  const int kmax = static_cast<int>(std::floor(rho / kTwoPi));
  for (int k = -kmax; k <= kmax; ++k) {
    const double rem2 = rho * rho - (kTwoPi * k) * (kTwoPi * k);
    const int n = static_cast<int>(std::floor(std::sqrt(std::max(rem2, 0.0)) / deta + 1e-12));
    for (int a = -n; a <= n; ++a)
      for (int b = -n; b <= n; ++b) {
        const Vec2 eta(a * deta, b * deta);
        if (eta.squaredNorm() <= rem2 * (1.0 + 1e-12)) lat.points.push_back({k, eta});
      }
  }
  return lat;
}

double FrequencyLattice::weight(const Point& p) const {
  const double a = kTwoPi * p.k;
  return 1.0 / (1.0 + a * a + p.eta.squaredNorm());
}

cplx fourier_coefficient_direct(const PeriodicPotential& v, const CrossSection& cs, int k, const Vec2& eta) {
  if (std::abs(k) > v.cutoff()) return 0.0;
  const CVector f = v.mode(k);
  const auto& pts = cs.interior_points();
  const RVector& w = cs.area_weights();
  cplx acc = 0.0;
  for (int p = 0; p < cs.interior_count(); ++p) {
    const double ph = eta.x() * pts(p, 0) + eta.y() * pts(p, 1);
    acc += w(p) * f(p) * std::exp(-kI * ph);
  }
  return acc / kTwoPi;
}

double h_minus_one_lattice(const PeriodicPotential& v, const CrossSection& cs, const FrequencyLattice& lat) {
  if (lat.points.empty()) throw std::invalid_argument("h_minus_one_lattice: empty lattice");
  double acc = 0.0;
  for (const auto& p : lat.points) {
    if (std::abs(p.k) > v.cutoff()) continue;
    acc += lat.weight(p) * std::norm(fourier_coefficient_direct(v, cs, p.k, p.eta));
  }
  return std::sqrt(acc * lat.deta * lat.deta);
}

std::vector<double> box_grid(double half_side, int n) {
  std::vector<double> y(n);
  const double dy = 2.0 * half_side / (n + 1);
  for (int j = 0; j < n; ++j) y[j] = -half_side + (j + 1) * dy;
  return y;
}

double dual_norm_on_box(const std::vector<BoxField>& fields, double half_side) {
  // Orthonormal sine basis sqrt(1/L) sin(p pi (y+L)/(2L)) per axis; the
  // RODFT00 output is twice the sine sum.
  double acc = 0.0;
  for (const auto& f : fields) {
    const int n = static_cast<int>(f.values.rows());
    if (f.values.cols() != n) throw std::invalid_argument("dual_norm_on_box: field must be square");
    const double dy = 2.0 * half_side / (n + 1);
    const double scale = (dy / std::sqrt(half_side) * 0.5);
    const double axial = kTwoPi * f.axial_mode;
    for (int part = 0; part < 2; ++part) {
      std::vector<double> a(static_cast<std::size_t>(n) * n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[i * n + j] = part == 0 ? f.values(i, j).real() : f.values(i, j).imag();
      detail::dst2d(a, n);
      for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
          const double c = a[p * n + q] * scale * scale;
          const double kp = (p + 1) * kPi / (2.0 * half_side), kq = (q + 1) * kPi / (2.0 * half_side);
          acc += c * c / (1.0 + axial * axial + kp * kp + kq * kq);
        }
    }
  }
  return std::sqrt(acc);
}

double h_minus_one_dual_oracle(const PeriodicPotential& v, double box_side, int n) {
  const double half = 0.5 * box_side;
  if (!(half >= v.grid_radius())) throw std::invalid_argument("dual oracle: box must contain omega");
  const auto y = box_grid(half, n);
  std::vector<BoxField> fields;
  for (int m = -v.cutoff(); m <= v.cutoff(); ++m) {
    BoxField f{m, CMatrix::Zero(n, n)};
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) f.values(i, j) = v.mode_at(m, Vec2(y[i], y[j]));
    fields.push_back(std::move(f));
  }
  return dual_norm_on_box(fields, half);
}

}  // namespace wgstab
