#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wgstab/common.hpp"
#include "wgstab/geometry.hpp"

namespace wgstab::io {

/// Shortest round-trip decimal form; identical inputs give identical text.
std::string num(double x);
std::string num(long long x);
inline std::string num(int x) { return num(static_cast<long long>(x)); }

class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row);
  std::size_t size() const { return rows_.size(); }
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

void write_json(const std::string& path, const nlohmann::json& j);

/// x, y, value rows over the interior nodes.
void write_field_csv(const std::string& path, const CrossSection& cs, const RVector& values);

struct Series {
  std::string label;
  std::vector<double> x, y;
  bool line = true;
};

struct Plot {
  std::string title, xlabel, ylabel;
  bool logx = true, logy = true;
  std::vector<Series> series;
};

/// Minimal SVG line/scatter plot; non-positive values are skipped on log axes.
void write_svg(const std::string& path, const Plot& plot);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares fit of log y against log x.
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace wgstab::io
