#pragma once

// JSON and CSV formats for geometries, boundary conditions, flow states,
// optimality reports, sweeps and optimizer runs. Layouts are documented in
// docs/schemas.md.

#include <charconv>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "dyadic/analytic_optima.hpp"
#include "dyadic/aug_lagrangian.hpp"
#include "dyadic/errors.hpp"
#include "dyadic/flow_solver.hpp"
#include "dyadic/resistance_network.hpp"

namespace dyadic::io {

using Json = nlohmann::json;

/// Shortest form is not used on purpose: 17 significant digits, '.' as the
/// decimal separator, independent of the global locale.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open file");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

namespace detail {

inline void require_keys(const Json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ValidationError(where + ": unknown field \"" + key + "\"");
  }
}

inline const Json& field(const Json& j, const std::string& where, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing field \"" + key + "\"");
  return *it;
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw ValidationError(where + ": expected a number, got " + v.dump());
  return v.get<double>();
}

inline int integer(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ValidationError(where + ": expected an integer, got " + v.dump());
  return v.get<int>();
}

inline std::optional<double> optional_number(const Json& j, const std::string& where, const std::string& key) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return number(*it, where + "." + key);
}

inline Vector number_array(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ValidationError(where + ": expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] = number(v[k], where + "[" + std::to_string(k) + "]");
  }
  return out;
}

inline Json array(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

inline Json keyed_by_branch(const Vector& v) {
  Json out = Json::object();
  for (Eigen::Index k = 0; k < v.size(); ++k) out[to_string(branch_at(static_cast<std::size_t>(k)))] = v[k];
  return out;
}

inline Json branch_list(const std::vector<BranchIndex>& bs) {
  Json out = Json::array();
  for (const auto& b : bs) out.push_back(to_string(b));
  return out;
}

}  // namespace detail

// ---- geometry ----

inline TreeGeometry geometry_from_json(const Json& j, const NetworkLimits& limits = {}) {
  const std::string where = "geometry";
  detail::require_keys(j, where, {"levels", "r0", "R0", "L0", "xi"});
  const int levels = detail::integer(detail::field(j, where, "levels"), where + ".levels");
  require_levels(levels);
  const double r0 = detail::number(detail::field(j, where, "r0"), where + ".r0");
  const Vector xi = detail::number_array(detail::field(j, where, "xi"), where + ".xi");
  if (static_cast<std::size_t>(xi.size()) != branch_count(levels)) {
    throw ValidationError(where + ".xi: length " + std::to_string(xi.size()) + ", expected 2^(N+1) - 2 = " +
                          std::to_string(branch_count(levels)) + " for levels = " + std::to_string(levels));
  }
  for (Eigen::Index k = 0; k < xi.size(); ++k) {
    if (!(xi[k] > 0.0)) {
      throw ValidationError(where + ".xi[" + std::to_string(k) + "] (branch " +
                            to_string(branch_at(static_cast<std::size_t>(k))) + "): must be > 0, got " +
                            format_number(xi[k]));
    }
  }
  try {
    return TreeGeometry(r0, xi, detail::optional_number(j, where, "R0"), detail::optional_number(j, where, "L0"),
                        limits);
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
}

inline Json to_json(const TreeGeometry& g) {
  Json j;
  j["levels"] = g.levels();
  j["r0"] = g.r0();
  j["R0"] = g.root_radius() ? Json(*g.root_radius()) : Json(nullptr);
  j["L0"] = g.root_length() ? Json(*g.root_length()) : Json(nullptr);
  j["xi"] = detail::array(g.xi());
  return j;
}

// ---- boundary conditions ----

inline BoundaryConditions boundary_conditions_from_json(const Json& j) {
  const std::string where = "bc";
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  const Json& type = detail::field(j, where, "type");
  if (type == "outlet_flows") {
    detail::require_keys(j, where, {"type", "values", "p0"});
    return OutletFlows{detail::number_array(detail::field(j, where, "values"), where + ".values"),
                       detail::number(detail::field(j, where, "p0"), where + ".p0")};
  }
  if (type == "outlet_pressures") {
    detail::require_keys(j, where, {"type", "values", "phi"});
    return OutletPressures{detail::number_array(detail::field(j, where, "values"), where + ".values"),
                           detail::number(detail::field(j, where, "phi"), where + ".phi")};
  }
  throw ValidationError(where + ".type: expected \"outlet_flows\" or \"outlet_pressures\", got " + type.dump());
}

inline Json to_json(const BoundaryConditions& bc) {
  return std::visit(
      [](const auto& c) -> Json {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, OutletFlows>) {
          return {{"type", "outlet_flows"}, {"values", detail::array(c.flows)}, {"p0", c.inlet_pressure}};
        } else {
          return {{"type", "outlet_pressures"}, {"values", detail::array(c.pressures)}, {"phi", c.inlet_flow}};
        }
      },
      bc);
}

/// A bare array of numbers, or an object carrying it under "values".
inline Vector outlet_vector_from_json(const Json& j, const std::string& where) {
  if (j.is_array()) return detail::number_array(j, where);
  if (j.is_object()) return detail::number_array(detail::field(j, where, "values"), where + ".values");
  throw ValidationError(where + ": expected an array of numbers or an object with \"values\"");
}

// ---- results ----

inline Json to_json(const FlowState& s) {
  Json j;
  j["total_flow"] = s.total_flow;
  j["inlet_pressure"] = s.inlet_pressure;
  j["root_outlet_pressure"] = s.root_outlet_pressure;
  j["outlet_flows"] = detail::array(s.outlet_flows);
  j["outlet_pressures"] = detail::array(s.outlet_pressures);
  j["branch_flows"] = detail::keyed_by_branch(s.branch_flows);
  j["branch_pressures"] = detail::keyed_by_branch(s.branch_pressures);
  j["energy"] = s.energy;
  return j;
}

inline Json to_json(const OptimalityReport& r) {
  Json j;
  j["xi_star"] = detail::array(r.xi_star);
  j["energy"] = r.energy;
  j["infimum"] = r.infimum;
  j["kkt_residual"] = r.kkt_residual;
  j["feasibility_residual"] = r.feasibility_residual;
  j["boundary_degenerate"] = r.boundary_degenerate;
  j["floored_branches"] = detail::branch_list(r.floored_branches);
  j["monotonicity_violations"] = detail::branch_list(r.monotonicity_violations);
  j["flow_state"] = to_json(r.flow_state);
  return j;
}

inline Json to_json(const MinimizingSequenceElement& el, double lambda_cap, int main_outlet) {
  const SweepRow row = sweep_row(el, lambda_cap, main_outlet);
  Json j;
  j["epsilon"] = el.epsilon;
  j["geometry"] = to_json(el.geometry);
  j["energy"] = el.energy;
  j["infimum"] = row.infimum;
  j["gap"] = row.gap;
  j["volume_residual"] = row.volume_residual;
  j["flow_state"] = to_json(el.flow_state);
  return j;
}

inline Json to_json(const OptimizationRun& run) {
  const auto& last = run.iterates.back();
  Json j;
  j["converged"] = run.converged;
  j["stop_reason"] = to_string(run.stop_reason);
  j["outer_iterations"] = run.iterates.size();
  j["final_multiplier"] = last.ell;
  j["final_lagrangian"] = last.lagrangian;
  j["volume_residual"] = last.volume_residual;
  j["energy_gap"] = run.energy_gap;
  j["floored_branches"] = detail::branch_list(run.floored_branches);
  j["report"] = to_json(run.final_report);
  return j;
}

// ---- optimizer configuration ----

inline AugLagConfig auglag_config_from_json(const Json& j) {
  const std::string where = "config";
  detail::require_keys(j, where,
                       {"b", "tau", "ell0", "eps_stop", "max_outer", "max_inner", "max_backtracks", "step0",
                        "step_shrink", "xi_floor", "inner_tol", "feasibility_tol", "initial_xi"});
  AugLagConfig cfg;
  auto num = [&](const char* key, double& dst) {
    if (const auto it = j.find(key); it != j.end()) dst = detail::number(*it, where + "." + key);
  };
  auto whole = [&](const char* key, int& dst) {
    if (const auto it = j.find(key); it != j.end()) dst = detail::integer(*it, where + "." + key);
  };
  num("b", cfg.b);
  num("tau", cfg.tau);
  num("ell0", cfg.ell0);
  num("eps_stop", cfg.eps_stop);
  whole("max_outer", cfg.max_outer);
  whole("max_inner", cfg.max_inner);
  whole("max_backtracks", cfg.max_backtracks);
  num("step0", cfg.step0);
  num("step_shrink", cfg.step_shrink);
  num("xi_floor", cfg.xi_floor);
  num("inner_tol", cfg.inner_tol);
  num("feasibility_tol", cfg.feasibility_tol);
  if (const auto it = j.find("initial_xi"); it != j.end() && !it->is_null()) {
    cfg.initial_xi = detail::number_array(*it, where + ".initial_xi");
  }
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + ": " + e.what());
  }
  return cfg;
}

inline Json to_json(const AugLagConfig& cfg) {
  Json j;
  j["b"] = cfg.b;
  j["tau"] = cfg.tau;
  j["ell0"] = cfg.ell0;
  j["eps_stop"] = cfg.eps_stop;
  j["max_outer"] = cfg.max_outer;
  j["max_inner"] = cfg.max_inner;
  j["max_backtracks"] = cfg.max_backtracks;
  j["step0"] = cfg.step0;
  j["step_shrink"] = cfg.step_shrink;
  j["xi_floor"] = cfg.xi_floor;
  j["inner_tol"] = cfg.inner_tol;
  j["feasibility_tol"] = cfg.feasibility_tol;
  j["initial_xi"] = cfg.initial_xi ? detail::array(*cfg.initial_xi) : Json(nullptr);
  return j;
}

// ---- CSV ----

inline void write_csv_row(std::ostream& out, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    if (!first) out << ',';
    out << format_number(v);
    first = false;
  }
  out << '\n';
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "epsilon,energy,infimum,gap,q_1,max_other_q,volume_residual\n";
  for (const auto& r : rows) {
    write_csv_row(out, {r.epsilon, r.energy, r.infimum, r.gap, r.main_flow, r.max_other_flow, r.volume_residual});
  }
}

inline void write_history_csv(std::ostream& out, const OptimizationRun& run) {
  out << "k,ell,lagrangian,energy,volume_residual\n";
  for (const auto& it : run.iterates) {
    out << it.k << ',';
    write_csv_row(out, {it.ell, it.lagrangian, it.energy, it.volume_residual});
  }
}

}  // namespace dyadic::io
