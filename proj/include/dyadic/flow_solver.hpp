#pragma once

// Steady Poiseuille flow through a dyadic tree under either boundary regime:
//   outlet flows + inlet pressure  -> pressures everywhere
//   outlet pressures + inlet flow  -> flows everywhere
// Flows are positive when moving away from the root.

#include <algorithm>
#include <cmath>
#include <string>
#include <variant>

#include "dyadic/errors.hpp"
#include "dyadic/resistance_network.hpp"

namespace dyadic {

struct OutletFlows {
  Vector flows;
  double inlet_pressure = 0.0;
};

struct OutletPressures {
  Vector pressures;
  double inlet_flow = 0.0;
};

using BoundaryConditions = std::variant<OutletFlows, OutletPressures>;

struct FlowState {
  /// Flow in every non-root branch, canonical order. The root carries total_flow.
  Vector branch_flows;
  /// Pressure at the downstream end of every non-root branch, canonical order.
  Vector branch_pressures;
  Vector outlet_flows;
  Vector outlet_pressures;
  double inlet_pressure = 0.0;
  /// Pressure at the downstream end of the root pipe.
  double root_outlet_pressure = 0.0;
  double total_flow = 0.0;
  double energy = 0.0;
};

struct SolverOptions {
  NetworkLimits limits{};
  /// Residual (relative to the right-hand side scale) that triggers one
  /// refinement pass in the mixed solve.
  double refine_threshold = 1e-10;
  /// Allowed relative spread of the inlet pressure reconstructed along
  /// different root-to-outlet paths.
  double inlet_consistency_tol = 1e-10;
};

namespace detail {

inline Vector cascade_pressures(const TreeGeometry& g, const Vector& q, double root_outlet_pressure) {
  Vector p(q.size());
  for (int i = 1; i <= g.levels(); ++i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const BranchIndex b{i, j};
      const double upstream =
          i == 1 ? root_outlet_pressure : p[static_cast<Eigen::Index>(flat_index(parent(b)))];
      const auto k = static_cast<Eigen::Index>(flat_index(b));
      p[k] = upstream - g.resistance(b) * q[k];
    }
  }
  return p;
}

inline double branch_energy(const TreeGeometry& g, const Vector& branch_flows, double total_flow) {
  return g.r0() * (total_flow * total_flow + (branch_flows.array().square() / g.xi().array()).sum());
}

}  // namespace detail

/// Outlet pressures p = p0 u - A q, with every intermediate pressure obtained
/// by cascading Poiseuille drops from the inlet.
inline FlowState pressures_from_flows(const TreeGeometry& g, const Vector& outlet_flows, double p0,
                                      const SolverOptions& opts = {}) {
  detail::require_outlet_vector(g, outlet_flows, "outlet flows");
  FlowState s;
  s.outlet_flows = outlet_flows;
  s.total_flow = outlet_flows.sum();
  s.branch_flows = propagate_flows(outlet_flows);
  s.inlet_pressure = p0;
  s.root_outlet_pressure = p0 - g.r0() * s.total_flow;
  s.branch_pressures = detail::cascade_pressures(g, s.branch_flows, s.root_outlet_pressure);
  const Matrix a = resistance_matrix(g, opts.limits);
  s.outlet_pressures = Vector::Constant(a.rows(), p0) - a * outlet_flows;
  s.energy = detail::branch_energy(g, s.branch_flows, s.total_flow);
  return s;
}

/// Outlet flows from M q = b. The inlet pressure is reconstructed from every
/// outlet by adding back the Poiseuille drops along its path; all outlets
/// must agree.
inline FlowState flows_from_pressures(const TreeGeometry& g, const Vector& outlet_pressures, double phi,
                                      const SolverOptions& opts = {}) {
  const MixedSystem sys = mixed_system(g, outlet_pressures, phi, opts.limits);
  Eigen::PartialPivLU<Matrix> lu(sys.matrix);
  const double rcond = lu.rcond();
  if (!(rcond > 1e3 * std::numeric_limits<double>::epsilon())) {
    throw NumericalDegeneracyError("mixed system is numerically singular (rcond = " +
                                   std::to_string(rcond) + ")");
  }
  Vector q = lu.solve(sys.rhs);
  const double rhs_scale = std::max(sys.rhs.cwiseAbs().maxCoeff(), 1e-300);
  const Vector residual = sys.rhs - sys.matrix * q;
  if (residual.cwiseAbs().maxCoeff() > opts.refine_threshold * rhs_scale) {
    q += lu.solve(residual);
  }
  if (!q.allFinite()) throw NumericalDegeneracyError("mixed system produced non-finite flows");

  FlowState s;
  s.outlet_flows = q;
  s.outlet_pressures = outlet_pressures;
  s.total_flow = phi;
  s.branch_flows = propagate_flows(q);

  // p0 = p_j + r0 phi + sum of drops along the path to outlet j
  const int levels = g.levels();
  const auto n = static_cast<Eigen::Index>(g.outlets());
  Vector inlet(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double drop = g.r0() * phi;
    for (int k = 1; k <= levels; ++k) {
      const BranchIndex b{k, ancestor_position(levels, static_cast<int>(j) + 1, k)};
      drop += g.resistance(b) * s.branch_flows[static_cast<Eigen::Index>(flat_index(b))];
    }
    inlet[j] = outlet_pressures[j] + drop;
  }
  const double scale = std::max({inlet.cwiseAbs().maxCoeff(), outlet_pressures.cwiseAbs().maxCoeff(),
                                 std::abs(g.r0() * phi), 1e-300});
  const double spread = inlet.maxCoeff() - inlet.minCoeff();
  if (spread > opts.inlet_consistency_tol * scale) {
    throw NumericalDegeneracyError("inlet pressure differs between outlet paths by " +
                                   std::to_string(spread));
  }
  s.inlet_pressure = inlet[0];
  s.root_outlet_pressure = s.inlet_pressure - g.r0() * phi;
  s.branch_pressures = detail::cascade_pressures(g, s.branch_flows, s.root_outlet_pressure);
  s.energy = detail::branch_energy(g, s.branch_flows, s.total_flow);
  return s;
}

inline FlowState solve(const TreeGeometry& g, const BoundaryConditions& bc, const SolverOptions& opts = {}) {
  return std::visit(
      [&](const auto& c) -> FlowState {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, OutletFlows>) {
          return pressures_from_flows(g, c.flows, c.inlet_pressure, opts);
        } else {
          return flows_from_pressures(g, c.pressures, c.inlet_flow, opts);
        }
      },
      bc);
}

}  // namespace dyadic
