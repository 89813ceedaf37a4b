#pragma once

// Built-in identity checks run by `dyadic verify`.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dyadic/flow_solver.hpp"
#include "dyadic/resistance_network.hpp"
#include "dyadic/tree_topology.hpp"

namespace dyadic {

struct CheckResult {
  std::string name;
  bool passed = false;
  /// Worst observed error against the tolerance.
  double worst = 0.0;
  double tolerance = 0.0;
};

namespace detail {

inline Vector random_positive(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Vector v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace detail

inline std::vector<CheckResult> run_identity_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> out;

  {
    CheckResult c{"energy_quadratic == energy_branchwise", false, 0.0, 1e-12};
    for (int trial = 0; trial < 60; ++trial) {
      const int n = 1 + trial % 6;
      const TreeGeometry g(detail::random_positive(rng, 1, 0.1, 10.0)[0],
                           detail::random_positive(rng, static_cast<Eigen::Index>(branch_count(n)), 0.05, 5.0));
      const Vector q = detail::random_positive(rng, static_cast<Eigen::Index>(outlet_count(n)), 0.0, 1.0);
      c.worst = std::max(c.worst, detail::rel(energy_quadratic(q, g), energy_branchwise(q, g)));
    }
    c.passed = c.worst <= c.tolerance;
    out.push_back(c);
  }
  {
    CheckResult c{"x_from_xi(xi_from_x(x)) == x", false, 0.0, 1e-12};
    for (int n = 1; n <= 6; ++n) {
      const Vector x = detail::random_positive(rng, static_cast<Eigen::Index>(branch_count(n)), 0.2, 1.5);
      const Vector back = x_from_xi(xi_from_x(x));
      c.worst = std::max(c.worst, ((back - x).array().abs() / x.array()).maxCoeff());
    }
    c.passed = c.worst <= c.tolerance;
    out.push_back(c);
  }
  {
    CheckResult c{"pressures -> flows -> pressures round trip", false, 0.0, 1e-10};
    for (int n = 1; n <= 6; ++n) {
      const TreeGeometry g(1.0, detail::random_positive(rng, static_cast<Eigen::Index>(branch_count(n)), 0.1, 2.0));
      const Vector p = detail::random_positive(rng, static_cast<Eigen::Index>(outlet_count(n)), -1.0, 1.0);
      const FlowState s = flows_from_pressures(g, p, 1.0);
      const FlowState back = pressures_from_flows(g, s.outlet_flows, s.inlet_pressure);
      const double scale = std::max(p.cwiseAbs().maxCoeff(), std::abs(s.inlet_pressure));
      c.worst = std::max(c.worst, (back.outlet_pressures - p).cwiseAbs().maxCoeff() / scale);
    }
    c.passed = c.worst <= c.tolerance;
    out.push_back(c);
  }
  {
    CheckResult c{"A_2 example matrix", false, 0.0, 1e-14};
    const double r0 = detail::random_positive(rng, 1, 0.5, 3.0)[0];
    const Vector xi = detail::random_positive(rng, 6, 0.1, 3.0);
    // xi order: (1,1) (1,2) (2,1) (2,2) (2,3) (2,4)
    const double a = 1.0 + 1.0 / xi[0];
    const double b = 1.0 + 1.0 / xi[1];
    Matrix expected(4, 4);
    expected << a + 1.0 / xi[2], a, 1, 1,  //
        a, a + 1.0 / xi[3], 1, 1,          //
        1, 1, b + 1.0 / xi[4], b,          //
        1, 1, b, b + 1.0 / xi[5];
    expected *= r0;
    const Matrix got = resistance_matrix(TreeGeometry(r0, xi));
    c.worst = ((got - expected).array().abs() / expected.array().abs()).maxCoeff();
    c.passed = c.worst <= c.tolerance;
    out.push_back(c);
  }
  {
    CheckResult c{"tilde A^1_2 matrix", false, 0.0, 0.0};
    Matrix expected(4, 4);
    expected << 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 2, 1, 0, 0, 1, 2;
    c.worst = (tilde_a1(2) - expected).cwiseAbs().maxCoeff();
    c.passed = c.worst <= c.tolerance;
    out.push_back(c);
  }
  return out;
}

}  // namespace dyadic
