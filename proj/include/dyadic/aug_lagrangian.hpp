#pragma once

// Augmented Lagrangian minimization of the dissipated energy over the ratio
// vector xi under the volume equality constraint
//     G(xi) = sum(xi) - (Lambda - 1) = 0,
// with L_b(xi, l) = E(xi) + l G(xi) + (b/2) G(xi)^2.
//
// Outer iteration k: descend L_b(., l_k) in xi with projected gradient steps
// (each accepted step must not increase L_b), then update
//     l_{k+1} = l_k + tau G(xi_{k+1})
// and stop once |l_{k+1} - l_k| <= eps_stop.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dyadic/analytic_optima.hpp"
#include "dyadic/errors.hpp"
#include "dyadic/flow_solver.hpp"
#include "dyadic/resistance_network.hpp"

namespace dyadic {

struct AugLagConfig {
  double b = 10.0;
  double tau = 10.0;
  double ell0 = 0.0;
  double eps_stop = 1e-9;
  int max_outer = 20000;
  double step0 = 0.1;
  double step_shrink = 0.5;
  double xi_floor = 1e-12;
  int max_backtracks = 50;
  int max_inner = 200;
  /// Inner descent stops once the free gradient falls below this (sup norm).
  double inner_tol = 1e-13;
  /// A converged run must end with |G| at or below this.
  double feasibility_tol = 1e-8;
  /// Starting geometry; defaults to the level-symmetric feasible tree.
  std::optional<Vector> initial_xi;
  /// Keep every accepted L_b value of the inner descents (for diagnostics).
  bool record_inner_trace = false;

  void validate() const {
    if (!(b > 0.0)) throw ValidationError("auglag: b must be > 0");
    if (!(tau > 0.0)) throw ValidationError("auglag: tau must be > 0");
    if (!(eps_stop > 0.0)) throw ValidationError("auglag: eps_stop must be > 0");
    if (!(step_shrink > 0.0 && step_shrink < 1.0)) throw ValidationError("auglag: step_shrink must lie in (0, 1)");
    if (!(step0 > 0.0)) throw ValidationError("auglag: step0 must be > 0");
    if (!(xi_floor > 0.0)) throw ValidationError("auglag: xi_floor must be > 0");
    if (max_outer < 1 || max_inner < 1 || max_backtracks < 0) {
      throw ValidationError("auglag: iteration limits must be positive");
    }
    if (!(feasibility_tol > 0.0)) throw ValidationError("auglag: feasibility_tol must be > 0");
  }
};

/// Energy as a function of the geometry alone, with its gradient.
struct EnergyObjective {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  /// Optional E(to) - E(from) evaluated without cancellation. When absent the
  /// line search subtracts values.
  std::function<double(const Vector& from, const Vector& to)> change;
};

inline double volume_constraint(const Vector& xi, double lambda_cap) { return xi.sum() - (lambda_cap - 1.0); }

inline double augmented_lagrangian(double energy, double constraint, double ell, double b) {
  return energy + ell * constraint + 0.5 * b * constraint * constraint;
}

inline double augmented_lagrangian(const Vector& xi, double ell, double b, double lambda_cap,
                                   const EnergyObjective& objective) {
  if ((xi.array() <= 0.0).any()) throw ValidationError("augmented Lagrangian needs positive xi");
  return augmented_lagrangian(objective.value(xi), volume_constraint(xi, lambda_cap), ell, b);
}

/// Prescribed outlet flows: branch flows are fixed, so
/// E = r0 Phi^2 + sum r0 q^2 / xi and dE/dxi = -r0 q^2 / xi^2.
inline EnergyObjective case1_objective(const Vector& outlet_flows, double r0) {
  const Vector q2 = propagate_flows(outlet_flows).array().square();
  const double phi = outlet_flows.sum();
  return {[q2, phi, r0](const Vector& xi) { return r0 * (phi * phi + (q2.array() / xi.array()).sum()); },
          [q2, r0](const Vector& xi) -> Vector { return -r0 * q2.array() / xi.array().square(); },
          [q2, r0](const Vector& from, const Vector& to) {
            return r0 * (q2.array() * (from - to).array() / (from.array() * to.array())).sum();
          }};
}

/// Prescribed outlet pressures and inlet flow: E(q(xi), xi) with q from the
/// mixed system. Gradient by central differences with step 1e-7 max(xi, 1e-6).
inline EnergyObjective case2_objective(const Vector& outlet_pressures, double phi, double r0,
                                       double xi_floor) {
  SolverOptions opts;
  opts.limits.xi_min = std::min(opts.limits.xi_min, xi_floor);
  auto value = [outlet_pressures, phi, r0, opts](const Vector& xi) {
    const TreeGeometry g(r0, xi, std::nullopt, std::nullopt, opts.limits);
    return flows_from_pressures(g, outlet_pressures, phi, opts).energy;
  };
  auto gradient = [value, xi_floor](const Vector& xi) -> Vector {
    Vector grad(xi.size());
    Vector probe = xi;
    for (Eigen::Index k = 0; k < xi.size(); ++k) {
      const double h = 1e-7 * std::max(xi[k], 1e-6);
      probe[k] = xi[k] + h;
      const double up_value = value(probe);
      if (xi[k] - h >= xi_floor) {
        probe[k] = xi[k] - h;
        grad[k] = (up_value - value(probe)) / (2.0 * h);
      } else {
        // one-sided next to the floor
        probe[k] = xi[k];
        grad[k] = (up_value - value(probe)) / h;
      }
      probe[k] = xi[k];
    }
    return grad;
  };
  return {value, gradient};
}

struct AugLagIterate {
  int k = 0;
  Vector xi;
  /// Multiplier after this iteration's update.
  double ell = 0.0;
  /// L_b(xi_{k+1}, l_k): the value the inner descent reached.
  double lagrangian = 0.0;
  double energy = 0.0;
  double volume_residual = 0.0;
  int inner_steps = 0;
  /// L_b(., l_k) at the start and after each accepted inner step, when
  /// record_inner_trace is set.
  std::vector<double> inner_trace;
};

enum class StopReason { MultiplierConverged, FloorSaturated, MaxOuter };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::MultiplierConverged: return "multiplier_converged";
    case StopReason::FloorSaturated: return "floor_saturated";
    case StopReason::MaxOuter: return "max_outer";
  }
  return "unknown";
}

struct OptimizationRun {
  std::vector<AugLagIterate> iterates;
  bool converged = false;
  StopReason stop_reason = StopReason::MaxOuter;
  std::vector<BranchIndex> floored_branches;
  /// Final energy minus the reference optimum (closed form or infimum).
  double energy_gap = 0.0;
  OptimalityReport final_report;
};

namespace detail {

inline constexpr double kResolution = 8.0 * std::numeric_limits<double>::epsilon();

struct InnerResult {
  int steps = 0;
  bool stalled_at_start = false;
};

/// Projected gradient descent on L_b(., ell). Trial steps use the
/// Barzilai-Borwein length when it is positive, step0 otherwise, and shrink
/// by step_shrink until L_b does not increase (sufficient decrease unless
/// the predicted decrease is below rounding).
inline InnerResult inner_descent(Vector& xi, double ell, double lambda_cap, const EnergyObjective& obj,
                                 const AugLagConfig& cfg, std::vector<double>* trace) {
  auto lagrangian = [&](const Vector& x) {
    double e = 0.0;
    try {
      e = obj.value(x);
    } catch (const NumericalDegeneracyError&) {
      return std::numeric_limits<double>::infinity();
    }
    return augmented_lagrangian(e, volume_constraint(x, lambda_cap), ell, cfg.b);
  };
  // L_b(to) - L_b(from); the penalty part is exact for a linear constraint
  auto lagrangian_change = [&](const Vector& from, const Vector& to, double from_value, double to_value) {
    if (!obj.change || !std::isfinite(to_value)) return to_value - from_value;
    const double g0 = volume_constraint(from, lambda_cap);
    const double dg = (to - from).sum();
    return obj.change(from, to) + ell * dg + 0.5 * cfg.b * dg * (2.0 * g0 + dg);
  };
  auto free_gradient = [&](const Vector& x) {
    const double g = volume_constraint(x, lambda_cap);
    Vector grad = obj.gradient(x).array() + (ell + cfg.b * g);
    for (Eigen::Index k = 0; k < x.size(); ++k) {
      if (x[k] <= cfg.xi_floor && grad[k] > 0.0) grad[k] = 0.0;
    }
    return grad;
  };

  InnerResult res;
  Vector grad = free_gradient(xi);
  double current = lagrangian(xi);
  if (trace) trace->push_back(current);
  Vector prev_xi, prev_grad;
  for (int t = 0; t < cfg.max_inner; ++t) {
    if (grad.cwiseAbs().maxCoeff() <= cfg.inner_tol) break;
    double step = cfg.step0;
    if (t > 0) {
      const Vector s = xi - prev_xi;
      const Vector y = grad - prev_grad;
      const double sy = s.dot(y);
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    bool accepted = false;
    Vector trial;
    double trial_value = current;
    for (int h = 0; h <= cfg.max_backtracks; ++h, step *= cfg.step_shrink) {
      trial = (xi - step * grad).cwiseMax(cfg.xi_floor);
      trial_value = lagrangian(trial);
      const double delta = lagrangian_change(xi, trial, current, trial_value);
      const double predicted = 1e-4 * grad.dot(xi - trial);
      if (delta <= -predicted || (predicted <= kResolution * std::abs(current) && delta <= 0.0)) {
        accepted = true;
        break;
      }
    }
    if (!accepted || trial == xi) {
      res.stalled_at_start = (t == 0);
      break;
    }
    if (trace) trace->push_back(trial_value);
    prev_xi = xi;
    prev_grad = grad;
    xi = trial;
    current = trial_value;
    grad = free_gradient(xi);
    ++res.steps;
  }
  return res;
}

inline std::vector<BranchIndex> floored(const Vector& xi, double floor) {
  std::vector<BranchIndex> out;
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    if (xi[k] <= floor) out.push_back(branch_at(static_cast<std::size_t>(k)));
  }
  return out;
}

}  // namespace detail

/// Generic driver; the case-specific entry points wrap it.
inline OptimizationRun run_augmented_lagrangian(const EnergyObjective& obj, int levels, double lambda_cap,
                                                const AugLagConfig& cfg) {
  cfg.validate();
  require_volume_cap(lambda_cap);
  Vector xi = cfg.initial_xi ? *cfg.initial_xi : symmetric_xi(levels, lambda_cap);
  if (static_cast<std::size_t>(xi.size()) != branch_count(levels)) {
    throw ValidationError("auglag: initial xi has length " + std::to_string(xi.size()) + ", expected " +
                          std::to_string(branch_count(levels)));
  }
  if ((xi.array() <= 0.0).any()) throw ValidationError("auglag: initial xi must be positive");
  xi = xi.cwiseMax(cfg.xi_floor);

  OptimizationRun run;
  double ell = cfg.ell0;
  for (int k = 0; k < cfg.max_outer; ++k) {
    std::vector<double> trace;
    const auto inner = detail::inner_descent(xi, ell, lambda_cap, obj, cfg, cfg.record_inner_trace ? &trace : nullptr);
    const double g = volume_constraint(xi, lambda_cap);
    const double energy = obj.value(xi);
    const double next_ell = ell + cfg.tau * g;
    run.iterates.push_back({k, xi, next_ell, augmented_lagrangian(energy, g, ell, cfg.b), energy, g,
                            inner.steps, std::move(trace)});
    const bool multiplier_settled = std::abs(next_ell - ell) <= cfg.eps_stop;
    ell = next_ell;
    if (multiplier_settled) {
      run.stop_reason = StopReason::MultiplierConverged;
      break;
    }
    if (inner.stalled_at_start && !detail::floored(xi, cfg.xi_floor).empty() &&
        std::abs(g) <= cfg.feasibility_tol) {
      run.stop_reason = StopReason::FloorSaturated;
      break;
    }
  }
  run.floored_branches = detail::floored(xi, cfg.xi_floor);
  run.converged = run.stop_reason != StopReason::MaxOuter &&
                  std::abs(volume_constraint(xi, lambda_cap)) <= cfg.feasibility_tol;
  return run;
}

struct OscillationSummary {
  double first_quartile = 0.0;
  double last_quartile = 0.0;
};

/// Largest multiplier move |l_{k+1} - l_k| over the first and over the last
/// quarter of the outer iterations (at least one iteration each).
inline OscillationSummary multiplier_oscillation(const OptimizationRun& run, double ell0) {
  std::vector<double> moves;
  double prev = ell0;
  for (const auto& it : run.iterates) {
    moves.push_back(std::abs(it.ell - prev));
    prev = it.ell;
  }
  OscillationSummary out;
  if (moves.empty()) return out;
  const std::size_t q = std::max<std::size_t>(1, moves.size() / 4);
  for (std::size_t i = 0; i < q; ++i) out.first_quartile = std::max(out.first_quartile, moves[i]);
  for (std::size_t i = moves.size() - q; i < moves.size(); ++i) {
    out.last_quartile = std::max(out.last_quartile, moves[i]);
  }
  return out;
}

namespace detail {

inline void finish_report(OptimizationRun& run, const Vector& xi, double lambda_cap) {
  run.final_report.xi_star = xi;
  run.final_report.feasibility_residual = std::abs(volume_constraint(xi, lambda_cap));
  run.final_report.floored_branches = run.floored_branches;
  run.final_report.boundary_degenerate = !run.floored_branches.empty();
}

}  // namespace detail

/// Prescribed outlet flows. The reference optimum is the closed form of
/// optimal_xi_case1; the final report's kkt_residual measures the spread of
/// q^2 / xi^2 over branches that carry flow.
inline OptimizationRun optimize_case1(const Vector& outlet_flows, double lambda_cap, double r0,
                                      const AugLagConfig& cfg = {}) {
  const int levels = levels_for_outlet_count(static_cast<std::size_t>(outlet_flows.size()));
  OptimizationRun run = run_augmented_lagrangian(case1_objective(outlet_flows, r0), levels, lambda_cap, cfg);
  const Vector& xi = run.iterates.back().xi;

  SolverOptions opts;
  opts.limits.xi_min = std::min(opts.limits.xi_min, cfg.xi_floor);
  const TreeGeometry g(r0, xi, std::nullopt, std::nullopt, opts.limits);
  auto& rep = run.final_report;
  rep.flow_state = pressures_from_flows(g, outlet_flows, 0.0, opts);
  rep.energy = rep.flow_state.energy;
  const Vector q = propagate_flows(outlet_flows);
  const double total = q.cwiseAbs().sum();
  const double phi = outlet_flows.sum();
  rep.infimum = r0 * (phi * phi + total * total / (lambda_cap - 1.0));
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Eigen::Index k = 0; k < q.size(); ++k) {
    if (q[k] == 0.0) continue;
    const double ratio = q[k] * q[k] / (xi[k] * xi[k]);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  rep.kkt_residual = hi > 0.0 ? (hi - lo) / hi : 0.0;
  rep.monotonicity_violations = monotonicity_violations(g);
  detail::finish_report(run, xi, lambda_cap);
  run.energy_gap = rep.energy - rep.infimum;
  return run;
}

/// Prescribed outlet pressures and inlet flow. No minimizer exists unless the
/// pressures are all equal; with distinct pressures the run is expected to
/// push ratios toward the floor. The reference value is infimum_energy.
inline OptimizationRun optimize_case2(const Vector& outlet_pressures, double phi, double lambda_cap, double r0,
                                      const AugLagConfig& cfg = {}) {
  const int levels = levels_for_outlet_count(static_cast<std::size_t>(outlet_pressures.size()));
  OptimizationRun run = run_augmented_lagrangian(case2_objective(outlet_pressures, phi, r0, cfg.xi_floor),
                                                 levels, lambda_cap, cfg);
  const Vector& xi = run.iterates.back().xi;

  SolverOptions opts;
  opts.limits.xi_min = std::min(opts.limits.xi_min, cfg.xi_floor);
  const TreeGeometry g(r0, xi, std::nullopt, std::nullopt, opts.limits);
  auto& rep = run.final_report;
  rep.flow_state = flows_from_pressures(g, outlet_pressures, phi, opts);
  rep.energy = rep.flow_state.energy;
  rep.infimum = infimum_energy(levels, lambda_cap, r0, phi);
  const double target = levels * phi / (lambda_cap - 1.0);
  rep.kkt_residual =
      ((rep.flow_state.branch_flows.array() / xi.array()) - target).abs().maxCoeff() / std::abs(target);
  rep.monotonicity_violations = monotonicity_violations(g);
  detail::finish_report(run, xi, lambda_cap);
  run.energy_gap = rep.energy - rep.infimum;
  return run;
}

}  // namespace dyadic
