#include "wgstab/report_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wgstab::io {

namespace {

std::ofstream open_out(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, r.ptr);
}

std::string num(long long x) { return std::to_string(x); }

void CsvTable::add(std::vector<std::string> row) {
  if (row.size() != header_.size()) throw std::invalid_argument("CsvTable: row width differs from header");
  rows_.push_back(std::move(row));
}

void CsvTable::write(const std::string& path) const {
  std::ofstream f = open_out(path);
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << csv_escape(r[i]);
    f << '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream f = open_out(path);
  f << j.dump(2) << '\n';
}

void write_field_csv(const std::string& path, const CrossSection& cs, const RVector& values) {
  CsvTable t({"x", "y", "value"});
  const auto& p = cs.interior_points();
  for (int q = 0; q < cs.interior_count(); ++q) t.add({num(p(q, 0)), num(p(q, 1)), num(values(q))});
  t.write(path);
}

void write_svg(const std::string& path, const Plot& plot) {
  const double w = 640, h = 420, ml = 70, mr = 150, mt = 40, mb = 55;
  auto tx = [&](double v) { return plot.logx ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.logy ? std::log10(v) : v; };
  auto usable = [&](double x, double y) {
    return std::isfinite(x) && std::isfinite(y) && (!plot.logx || x > 0) && (!plot.logy || y > 0);
  };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (usable(s.x[i], s.y[i])) {
        x0 = std::min(x0, tx(s.x[i]));
        x1 = std::max(x1, tx(s.x[i]));
        y0 = std::min(y0, ty(s.y[i]));
        y1 = std::max(y1, ty(s.y[i]));
      }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  auto px = [&](double v) { return ml + (tx(v) - x0) / (x1 - x0) * (w - ml - mr); };
  auto py = [&](double v) { return h - mb - (ty(v) - y0) / (y1 - y0) * (h - mt - mb); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << plot.title << "</text>\n";
  o << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4, fy = y0 + (y1 - y0) * i / 4;
    const double sx = ml + (w - ml - mr) * i / 4, sy = h - mb - (h - mt - mb) * i / 4;
    std::ostringstream lx, ly;
    lx.precision(3);
    ly.precision(3);
    lx << (plot.logx ? std::pow(10.0, fx) : fx);
    ly << (plot.logy ? std::pow(10.0, fy) : fy);
    o << "<text x=\"" << sx << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\">" << lx.str() << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << sy + 4 << "\" text-anchor=\"end\">" << ly.str() << "</text>\n";
  }
  o << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << plot.xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
    << (mt + h - mb) / 2 << ")\">" << plot.ylabel << "</text>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* c = colors[k % 6];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (usable(s.x[i], s.y[i])) {
        pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
        o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << c << "\"/>\n";
      }
    if (s.line) o << "<polyline fill=\"none\" stroke=\"" << c << "\" points=\"" << pts.str() << "\"/>\n";
    o << "<text x=\"" << w - mr + 10 << "\" y=\"" << mt + 16 * (k + 1) << "\" fill=\"" << c << "\">" << s.label << "</text>\n";
  }
  o << "</svg>\n";
  std::ofstream f = open_out(path);
  f << o.str();
}

LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_fit: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_fit: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) throw std::invalid_argument("loglog_fit: x values coincide");
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / den;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

}  // namespace wgstab::io
