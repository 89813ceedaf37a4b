#pragma once

// Command-line front end. Exit status: 0 success, 1 invalid input,
// 2 numerical degeneracy (or a failed verify check).

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dyadic/analytic_optima.hpp"
#include "dyadic/aug_lagrangian.hpp"
#include "dyadic/errors.hpp"
#include "dyadic/flow_solver.hpp"
#include "dyadic/io.hpp"
#include "dyadic/verify.hpp"

namespace dyadic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitDegenerate = 2;

namespace detail {

inline void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError(path + ": cannot open for writing");
  f << text;
}

inline std::string dump(const io::Json& j) { return j.dump(2) + "\n"; }

inline Vector outlet_file(const std::string& path, const char* what) {
  return io::outlet_vector_from_json(io::read_json_file(path), std::string(what) + " (" + path + ")");
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Poiseuille flow and optimal geometries on dyadic pipe trees", "dyadic"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", "dyadic 1.0.0");
  std::uint64_t seed = 20240601;
  app.add_option("--seed", seed, "Seed for randomized checks")->capture_default_str();

  // solve
  auto* solve = app.add_subcommand("solve", "Flows and pressures for one geometry and boundary condition");
  std::string geometry_path, bc_type, bc_path, flows_path, pressures_path, output;
  double p0 = 0.0, phi = 1.0;
  solve->add_option("--geometry", geometry_path, "Geometry JSON")->required()->check(CLI::ExistingFile);
  auto* bc_file_opt = solve->add_option("--bc-file", bc_path, "Boundary-condition JSON")->check(CLI::ExistingFile);
  solve->add_option("--bc", bc_type, "Boundary-condition type")
      ->check(CLI::IsMember({"outlet_flows", "outlet_pressures"}))
      ->excludes(bc_file_opt);
  solve->add_option("--flows", flows_path, "Outlet flows JSON (with --bc outlet_flows)")->check(CLI::ExistingFile);
  solve->add_option("--pressures", pressures_path, "Outlet pressures JSON (with --bc outlet_pressures)")
      ->check(CLI::ExistingFile);
  solve->add_option("--p0", p0, "Inlet pressure (outlet_flows)")->capture_default_str();
  solve->add_option("--phi", phi, "Inlet flow (outlet_pressures)")->capture_default_str();
  solve->add_option("-o,--output", output, "Write JSON here instead of stdout");

  // optimize-flows
  auto* opt_flows = app.add_subcommand("optimize-flows", "Closed-form optimum for prescribed outlet flows");
  double lambda_cap = 0.0, r0 = 1.0;
  opt_flows->add_option("--flows", flows_path, "Outlet flows JSON")->required()->check(CLI::ExistingFile);
  opt_flows->add_option("--lambda", lambda_cap, "Volume cap Lambda > 1")->required();
  opt_flows->add_option("--r0", r0, "Root resistance")->capture_default_str();
  opt_flows->add_option("--p0", p0, "Inlet pressure")->capture_default_str();
  opt_flows->add_option("-o,--output", output, "Write JSON here instead of stdout");

  // optimize-pressures
  auto* opt_press = app.add_subcommand(
      "optimize-pressures", "Equal-pressure optimum, or one element of the minimizing sequence");
  double epsilon = 1e-4, equal_tol = 0.0;
  int main_outlet = 1;
  opt_press->add_option("--pressures", pressures_path, "Outlet pressures JSON")->required()->check(CLI::ExistingFile);
  opt_press->add_option("--lambda", lambda_cap, "Volume cap Lambda > 1")->required();
  opt_press->add_option("--r0", r0, "Root resistance")->capture_default_str();
  opt_press->add_option("--phi", phi, "Inlet flow")->capture_default_str();
  opt_press->add_option("--epsilon", epsilon, "Sequence parameter for unequal pressures")->capture_default_str();
  opt_press->add_option("--main-outlet", main_outlet, "Outlet kept open by the sequence")->capture_default_str();
  opt_press->add_option("--equal-pressure-tol", equal_tol, "Pressures whose spread is <= this count as equal")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  opt_press->add_option("-o,--output", output, "Write JSON here instead of stdout");

  // sweep-epsilon
  auto* sweep = app.add_subcommand("sweep-epsilon", "Minimizing sequence along a geometric epsilon schedule");
  int levels = 0;
  unsigned jobs = 1;
  std::string format = "csv";
  SweepSchedule schedule;
  sweep->add_option("--levels", levels, "Level count N")->required();
  sweep->add_option("--lambda", lambda_cap, "Volume cap Lambda > 1")->required();
  sweep->add_option("--r0", r0, "Root resistance")->capture_default_str();
  sweep->add_option("--phi", phi, "Inlet flow")->capture_default_str();
  sweep->add_option("--pressures", pressures_path, "Outlet pressures JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--steps", schedule.steps, "Number of epsilon values")->capture_default_str();
  sweep->add_option("--ratio", schedule.ratio, "Geometric ratio")->capture_default_str();
  sweep->add_option("--start-fraction", schedule.start_fraction, "eps0 as a fraction of the largest valid eps")
      ->capture_default_str();
  sweep->add_option("--main-outlet", main_outlet, "Outlet kept open")->capture_default_str();
  sweep->add_option("--jobs", jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  sweep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  sweep->add_option("-o,--output", output, "Write here instead of stdout");

  // auglag
  auto* auglag = app.add_subcommand("auglag", "Augmented Lagrangian optimization of the ratios");
  std::string problem, config_path, history_path;
  std::string run_format = "json";
  auglag->add_option("--case", problem, "flows or pressures")->required()->check(CLI::IsMember({"flows", "pressures"}));
  auglag->add_option("--flows", flows_path, "Outlet flows JSON (--case flows)")->check(CLI::ExistingFile);
  auglag->add_option("--pressures", pressures_path, "Outlet pressures JSON (--case pressures)")
      ->check(CLI::ExistingFile);
  auglag->add_option("--phi", phi, "Inlet flow (--case pressures)")->capture_default_str();
  auglag->add_option("--lambda", lambda_cap, "Volume cap Lambda > 1")->required();
  auglag->add_option("--r0", r0, "Root resistance")->capture_default_str();
  auglag->add_option("--config", config_path, "Optimizer configuration JSON")->check(CLI::ExistingFile);
  auglag->add_option("--history", history_path, "Also write the iterate history CSV here");
  auglag->add_option("--format", run_format, "json (summary) or csv (history)")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
  auglag->add_option("-o,--output", output, "Write here instead of stdout");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the built-in identity checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitInvalid;
  }

  try {
    if (solve->parsed()) {
      const TreeGeometry g = io::geometry_from_json(io::read_json_file(geometry_path));
      BoundaryConditions bc;
      if (!bc_path.empty()) {
        bc = io::boundary_conditions_from_json(io::read_json_file(bc_path));
      } else if (bc_type == "outlet_flows") {
        if (flows_path.empty()) throw ValidationError("--bc outlet_flows needs --flows");
        bc = OutletFlows{detail::outlet_file(flows_path, "flows"), p0};
      } else if (bc_type == "outlet_pressures") {
        if (pressures_path.empty()) throw ValidationError("--bc outlet_pressures needs --pressures");
        bc = OutletPressures{detail::outlet_file(pressures_path, "pressures"), phi};
      } else {
        throw ValidationError("solve needs --bc-file or --bc");
      }
      detail::emit(detail::dump(io::to_json(dyadic::solve(g, bc))), output, out);
    } else if (opt_flows->parsed()) {
      const Vector q = detail::outlet_file(flows_path, "flows");
      io::Json j;
      j["levels"] = levels_for_outlet_count(static_cast<std::size_t>(q.size()));
      j["lambda"] = lambda_cap;
      j["report"] = io::to_json(optimal_xi_case1(q, lambda_cap, r0, p0));
      detail::emit(detail::dump(j), output, out);
    } else if (opt_press->parsed()) {
      const Vector p = detail::outlet_file(pressures_path, "pressures");
      const int n = levels_for_outlet_count(static_cast<std::size_t>(p.size()));
      io::Json j;
      j["levels"] = n;
      j["lambda"] = lambda_cap;
      if (p.maxCoeff() - p.minCoeff() <= equal_tol) {
        j["regime"] = "equal_pressures";
        j["report"] = io::to_json(equal_pressure_optimum(n, lambda_cap, r0, phi, p[0]));
      } else {
        j["regime"] = "minimizing_sequence";
        j["epsilon_max"] = epsilon_max(n, lambda_cap);
        j["element"] = io::to_json(
            minimizing_sequence_element(n, lambda_cap, r0, phi, p, epsilon, main_outlet), lambda_cap, main_outlet);
      }
      detail::emit(detail::dump(j), output, out);
    } else if (sweep->parsed()) {
      require_levels(levels);
      const Vector p = detail::outlet_file(pressures_path, "pressures");
      const auto rows = epsilon_sweep(levels, lambda_cap, r0, phi, p, schedule, main_outlet, jobs);
      if (format == "csv") {
        std::ostringstream s;
        io::write_sweep_csv(s, rows);
        detail::emit(s.str(), output, out);
      } else {
        io::Json arr = io::Json::array();
        for (const auto& r : rows) {
          arr.push_back({{"epsilon", r.epsilon},
                         {"energy", r.energy},
                         {"infimum", r.infimum},
                         {"gap", r.gap},
                         {"q_1", r.main_flow},
                         {"max_other_q", r.max_other_flow},
                         {"volume_residual", r.volume_residual}});
        }
        detail::emit(detail::dump(arr), output, out);
      }
    } else if (auglag->parsed()) {
      const AugLagConfig cfg =
          config_path.empty() ? AugLagConfig{} : io::auglag_config_from_json(io::read_json_file(config_path));
      OptimizationRun run;
      if (problem == "flows") {
        if (flows_path.empty()) throw ValidationError("--case flows needs --flows");
        run = optimize_case1(detail::outlet_file(flows_path, "flows"), lambda_cap, r0, cfg);
      } else {
        if (pressures_path.empty()) throw ValidationError("--case pressures needs --pressures");
        run = optimize_case2(detail::outlet_file(pressures_path, "pressures"), phi, lambda_cap, r0, cfg);
      }
      std::ostringstream history;
      io::write_history_csv(history, run);
      if (!history_path.empty()) detail::emit(history.str(), history_path, out);
      if (run_format == "csv") {
        detail::emit(history.str(), output, out);
      } else {
        io::Json j = io::to_json(run);
        j["config"] = io::to_json(cfg);
        detail::emit(detail::dump(j), output, out);
      }
    } else if (verify->parsed()) {
      bool all = true;
      for (const auto& c : run_identity_checks(seed)) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name << " (worst " << io::format_number(c.worst)
            << ", tolerance " << io::format_number(c.tolerance) << ")\n";
        all = all && c.passed;
      }
      return all ? kExitOk : kExitDegenerate;
    }
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericalDegeneracyError& e) {
    err << "numerical degeneracy: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("dyadic");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace dyadic::cli
