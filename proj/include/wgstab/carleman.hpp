#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "wgstab/fiber.hpp"

namespace wgstab {

struct CarlemanReport {
  double tau = 0.0;
  Vec2 xi{1.0, 0.0};
  double d = 0.0;
  double interior = 0.0;          // |e^{-tau xi.x'} u|^2
  double operator_term = 0.0;     // |e^{-tau xi.x'} L u|^2 with L = Delta or -Delta + V
  double boundary_plus = 0.0;     // |e^{-tau xi.x'} |xi.nu|^{1/2} d_nu u|^2 on the illuminated face
  double boundary_minus = 0.0;    // same on the shadowed face
  double lhs = 0.0;               // stated interior factor / d
  double lhs_d2 = 0.0;            // interior factor / d^2
  double rhs = 0.0;
  double ratio = 0.0;             // rhs / lhs
  double ratio_d2 = 0.0;
  bool pass = false;              // lhs <= rhs (1 + slack_tol)
  bool pass_d2 = false;
  bool below_threshold = false;   // tau < tau_1 (potential form only)
  double tau1 = 0.0;
};

struct CarlemanOptions {
  double slack_tol = 0.05;
  double vanish_tol = 1e-12;  // max boundary value relative to max interior value
};

/// Four terms of the weighted estimate for Delta; u must vanish on the boundary.
CarlemanReport carleman_check(const Field& u, const Vec2& xi, double tau, const CrossSection& cs,
                              const CarlemanOptions& opt = {});
/// Same with -Delta + V; interior factor 2 tau^2 / d, boundary factor tau, gate tau_1 = M (d/2)^{1/2}.
CarlemanReport carleman_potential_check(const Field& u, const PeriodicPotential& v, const Vec2& xi, double tau,
                                        const CrossSection& cs, const CarlemanOptions& opt = {});

/// Terms from exact values of L u (per mode, interior nodes) and d_nu u (per mode, boundary nodes).
CarlemanReport carleman_from_terms(const Field& u, const CMatrix& lu, const CMatrix& dnu, const Vec2& xi, double tau,
                                   const CrossSection& cs, double interior_factor, double boundary_factor,
                                   const CarlemanOptions& opt);

/// Test function (R0^2 - |x'|^2) P(x') e^{i(theta + 2 pi k) x1} with P a complex cubic polynomial.
struct CorpusFunction {
  double theta = 0.0;
  int k = 0;
  std::vector<cplx> coef;  // P = sum c_ab x^a y^b over a + b <= 3, ordered (0,0),(1,0),(0,1),(2,0),(1,1),(0,2),...

  cplx p(const Vec2& x) const;
  cplx laplacian_p(const Vec2& x) const;
  Eigen::Vector2cd grad_p(const Vec2& x) const;
  /// Samples on the grid (one-mode field; boundary values are zero).
  Field sample(const CrossSection& cs) const;
  /// Exact Delta u on interior nodes and d_nu u on boundary nodes.
  CMatrix exact_laplacian(const CrossSection& cs) const;
  CMatrix exact_normal_derivative(const CrossSection& cs) const;
};

std::vector<CorpusFunction> carleman_corpus(int count, std::uint64_t seed);

struct CarlemanSuiteSummary {
  int cases = 0;
  int passes = 0;
  int passes_d2 = 0;
  int gated = 0;               // cases with tau >= tau_1
  int gated_passes = 0;
  double needed_slack = 0.0;   // max(0, max lhs/rhs - 1) over the suite
  double stencil_slack = 0.0;  // max |ratio_discrete / ratio_exact - 1|
  std::vector<CarlemanReport> reports;
};

/// Runs the corpus x taus x directions; `v` may be null for the unperturbed estimate.
CarlemanSuiteSummary carleman_suite(const std::vector<CorpusFunction>& corpus, const std::vector<double>& taus,
                                    const std::vector<Vec2>& directions, const CrossSection& cs,
                                    const PeriodicPotential* v, const CarlemanOptions& opt = {});

}  // namespace wgstab
