#pragma once

// Closed-form optimal geometries under the volume constraint
//     1 + sum(xi) = Lambda,
// for both boundary regimes, the pipe-collapse minimizing sequence used when
// outlet pressures differ, and the relaxed per-level problem that provides
// the shared lower bound r0 Phi^2 (1 + N^2 / (Lambda - 1)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "dyadic/errors.hpp"
#include "dyadic/flow_solver.hpp"
#include "dyadic/resistance_network.hpp"

namespace dyadic {

struct OptimalityReport {
  Vector xi_star;
  FlowState flow_state;
  double energy = 0.0;
  /// Best attainable energy for the problem this report answers.
  double infimum = 0.0;
  /// Relative deviation from the first-order optimality condition.
  double kkt_residual = 0.0;
  /// |sum(xi) - (Lambda - 1)|.
  double feasibility_residual = 0.0;
  /// Some branches carry no flow, so their ratio was floored instead of zero.
  bool boundary_degenerate = false;
  std::vector<BranchIndex> floored_branches;
  std::vector<BranchIndex> monotonicity_violations;
};

struct MinimizingSequenceElement {
  double epsilon = 0.0;
  TreeGeometry geometry;
  FlowState flow_state;
  double energy = 0.0;
};

inline void require_volume_cap(double lambda_cap) {
  if (!(lambda_cap > 1.0) || !std::isfinite(lambda_cap)) {
    throw ValidationError("volume cap Lambda must be > 1, got " + std::to_string(lambda_cap));
  }
}

/// r0 Phi^2 (1 + N^2 / (Lambda - 1)).
inline double infimum_energy(int levels, double lambda_cap, double r0, double phi) {
  require_levels(levels);
  require_volume_cap(lambda_cap);
  const double n = levels;
  return r0 * phi * phi * (1.0 + n * n / (lambda_cap - 1.0));
}

/// Ratios (Lambda - 1) / (N 2^i): level i receives an equal share of the volume.
inline Vector symmetric_xi(int levels, double lambda_cap) {
  require_levels(levels);
  require_volume_cap(lambda_cap);
  Vector xi(static_cast<Eigen::Index>(branch_count(levels)));
  for (int i = 1; i <= levels; ++i) {
    xi.segment(static_cast<Eigen::Index>(level_offset(i)), 1 << i)
        .setConstant((lambda_cap - 1.0) / (levels * std::ldexp(1.0, i)));
  }
  return xi;
}

/// Prescribed outlet flows: xi*(i,j) = (Lambda - 1) |q(i,j)| / sum |q|.
/// Branches without flow are floored at limits.xi_min and the rest rescaled
/// so the volume constraint still holds; the report is then flagged
/// boundary_degenerate.
inline OptimalityReport optimal_xi_case1(const Vector& outlet_flows, double lambda_cap, double r0,
                                         double inlet_pressure = 0.0, const SolverOptions& opts = {}) {
  require_volume_cap(lambda_cap);
  const Vector q = propagate_flows(outlet_flows);
  const Vector mag = q.cwiseAbs();
  const double total = mag.sum();
  if (!(total > 0.0)) {
    throw ValidationError("outlet flows are all zero; no admissible positive geometry exists");
  }

  const double budget = lambda_cap - 1.0;
  const double floor = opts.limits.xi_min;
  OptimalityReport rep;
  Vector xi = budget * mag / total;
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    if (mag[k] == 0.0) rep.floored_branches.push_back(branch_at(static_cast<std::size_t>(k)));
  }
  if (!rep.floored_branches.empty()) {
    rep.boundary_degenerate = true;
    const double reserved = floor * static_cast<double>(rep.floored_branches.size());
    if (!(reserved < budget)) throw ValidationError("volume budget cannot cover the floored branches");
    const double scale = (budget - reserved) / budget;
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi[k] = mag[k] == 0.0 ? floor : xi[k] * scale;
  }

  const TreeGeometry g(r0, xi, std::nullopt, std::nullopt, opts.limits);
  rep.flow_state = pressures_from_flows(g, outlet_flows, inlet_pressure, opts);
  rep.energy = rep.flow_state.energy;
  const double phi = outlet_flows.sum();
  rep.infimum = r0 * (phi * phi + total * total / budget);
  rep.feasibility_residual = std::abs(xi.sum() - budget);

  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    if (mag[k] == 0.0) continue;
    const double ratio = q[k] * q[k] / (xi[k] * xi[k]);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  rep.kkt_residual = (hi - lo) / hi;
  rep.monotonicity_violations = monotonicity_violations(g);
  rep.xi_star = std::move(xi);
  return rep;
}

/// Equal outlet pressures: the symmetric tree is optimal and every level
/// splits the flow evenly.
inline OptimalityReport equal_pressure_optimum(int levels, double lambda_cap, double r0, double phi,
                                               double outlet_pressure = 0.0, const SolverOptions& opts = {}) {
  OptimalityReport rep;
  rep.xi_star = symmetric_xi(levels, lambda_cap);
  const TreeGeometry g(r0, rep.xi_star, std::nullopt, std::nullopt, opts.limits);
  rep.flow_state = flows_from_pressures(g, Vector::Constant(static_cast<Eigen::Index>(g.outlets()),
                                                            outlet_pressure),
                                        phi, opts);
  rep.energy = rep.flow_state.energy;
  rep.infimum = infimum_energy(levels, lambda_cap, r0, phi);
  rep.feasibility_residual = std::abs(rep.xi_star.sum() - (lambda_cap - 1.0));
  // q / xi = N Phi / (Lambda - 1) on every branch
  const double target = levels * phi / (lambda_cap - 1.0);
  rep.kkt_residual =
      ((rep.flow_state.branch_flows.array() / rep.xi_star.array()) - target).abs().maxCoeff() /
      std::abs(target);
  rep.monotonicity_violations = monotonicity_violations(g);
  return rep;
}

/// Largest epsilon keeping the main-path ratios positive.
inline double epsilon_max(int levels, double lambda_cap) {
  require_levels(levels);
  require_volume_cap(lambda_cap);
  const double n = levels;
  const double slope = (static_cast<double>(branch_count(levels)) / n) - 1.0;
  return (lambda_cap - 1.0) / n / slope;
}

/// Geometry that keeps the path to `main_outlet` open with ratio
/// (Lambda-1)/N - ((2^{N+1}-2)/N - 1) eps and closes every other branch to eps.
inline Vector pipe_collapse_xi(int levels, double lambda_cap, double epsilon, int main_outlet = 1) {
  const double eps_hi = epsilon_max(levels, lambda_cap);
  if (!(epsilon > 0.0) || !(epsilon < eps_hi)) {
    throw ValidationError("epsilon must lie in (0, " + std::to_string(eps_hi) + "), got " +
                          std::to_string(epsilon));
  }
  if (main_outlet < 1 || static_cast<std::size_t>(main_outlet) > outlet_count(levels)) {
    throw ValidationError("main outlet " + std::to_string(main_outlet) + " out of range");
  }
  const double n = levels;
  const double slope = static_cast<double>(branch_count(levels)) / n - 1.0;
  Vector xi = Vector::Constant(static_cast<Eigen::Index>(branch_count(levels)), epsilon);
  for (const auto& b : path_to({levels, main_outlet})) {
    xi[static_cast<Eigen::Index>(flat_index(b))] = (lambda_cap - 1.0) / n - slope * epsilon;
  }
  return xi;
}

inline MinimizingSequenceElement minimizing_sequence_element(int levels, double lambda_cap, double r0,
                                                             double phi, const Vector& outlet_pressures,
                                                             double epsilon, int main_outlet = 1,
                                                             const SolverOptions& opts = {}) {
  SolverOptions local = opts;
  local.limits.xi_min = std::min(local.limits.xi_min, epsilon);
  TreeGeometry g(r0, pipe_collapse_xi(levels, lambda_cap, epsilon, main_outlet), std::nullopt,
                 std::nullopt, local.limits);
  FlowState s = flows_from_pressures(g, outlet_pressures, phi, local);
  const double e = s.energy;
  return {epsilon, std::move(g), std::move(s), e};
}

struct SweepSchedule {
  /// First epsilon as a fraction of epsilon_max.
  double start_fraction = 0.1;
  double ratio = 0.5;
  int steps = 20;
};

struct SweepRow {
  double epsilon = 0.0;
  double energy = 0.0;
  double infimum = 0.0;
  double gap = 0.0;
  /// Flow through the outlet kept open.
  double main_flow = 0.0;
  double max_other_flow = 0.0;
  double volume_residual = 0.0;
};

inline SweepRow sweep_row(const MinimizingSequenceElement& el, double lambda_cap, int main_outlet) {
  SweepRow row;
  row.epsilon = el.epsilon;
  row.energy = el.energy;
  row.infimum = infimum_energy(el.geometry.levels(), lambda_cap, el.geometry.r0(), el.flow_state.total_flow);
  row.gap = row.energy - row.infimum;
  const Vector& q = el.flow_state.outlet_flows;
  row.main_flow = q[main_outlet - 1];
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (k != main_outlet - 1) row.max_other_flow = std::max(row.max_other_flow, std::abs(q[k]));
  }
  row.volume_residual = el.geometry.xi().sum() - (lambda_cap - 1.0);
  return row;
}

/// Evaluates the minimizing sequence along eps_k = eps0 * ratio^k. With
/// jobs > 1 the elements are computed on worker threads; row order is fixed.
inline std::vector<SweepRow> epsilon_sweep(int levels, double lambda_cap, double r0, double phi,
                                           const Vector& outlet_pressures, const SweepSchedule& schedule = {},
                                           int main_outlet = 1, unsigned jobs = 1,
                                           const SolverOptions& opts = {}) {
  if (schedule.steps < 1 || !(schedule.ratio > 0.0 && schedule.ratio < 1.0) ||
      !(schedule.start_fraction > 0.0 && schedule.start_fraction < 1.0)) {
    throw ValidationError("sweep schedule needs steps >= 1, ratio and start fraction in (0, 1)");
  }
  const double eps0 = schedule.start_fraction * epsilon_max(levels, lambda_cap);
  std::vector<SweepRow> rows(static_cast<std::size_t>(schedule.steps));
  auto work = [&](std::size_t k) {
    const double eps = eps0 * std::pow(schedule.ratio, static_cast<double>(k));
    rows[k] = sweep_row(
        minimizing_sequence_element(levels, lambda_cap, r0, phi, outlet_pressures, eps, main_outlet, opts),
        lambda_cap, main_outlet);
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(rows.size())));
  if (jobs == 1) {
    for (std::size_t k = 0; k < rows.size(); ++k) work(k);
    return rows;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t k = t; k < rows.size(); k += jobs) work(k);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return rows;
}

namespace detail {

inline int checked_aux_levels(const Vector& xi) { return checked_levels_for(xi, "xi"); }

}  // namespace detail

/// Inner minimizer of the relaxed problem: q(i,j) = xi(i,j) / y_i * Phi with
/// y_i the level sum. Each level carries Phi in total, but flows are not
/// conserved node by node.
inline Vector aux_inner_flows(const Vector& xi, double phi) {
  const int levels = detail::checked_aux_levels(xi);
  Vector q(xi.size());
  for (int i = 1; i <= levels; ++i) {
    const auto seg = xi.segment(static_cast<Eigen::Index>(level_offset(i)), 1 << i);
    q.segment(static_cast<Eigen::Index>(level_offset(i)), 1 << i) = seg * (phi / seg.sum());
  }
  return q;
}

/// r0 Phi^2 (1 + sum_i 1 / y_i).
inline double aux_reduced_energy(const Vector& xi, double r0, double phi) {
  const int levels = detail::checked_aux_levels(xi);
  double s = 1.0;
  for (int i = 1; i <= levels; ++i) {
    s += 1.0 / xi.segment(static_cast<Eigen::Index>(level_offset(i)), 1 << i).sum();
  }
  return r0 * phi * phi * s;
}

}  // namespace dyadic
