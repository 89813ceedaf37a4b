#include <locale>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dyadic/cli.hpp"
#include "dyadic/io.hpp"

using namespace dyadic;
namespace fs = std::filesystem;

namespace {

const std::string kSamples = DYADIC_SAMPLES_DIR;

std::string sample(const std::string& name) { return kSamples + "/" + name; }

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path dir = fs::temp_directory_path() / "dyadic_tests";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << contents;
  return p;
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(Io, NumberFormat) {
  EXPECT_EQ(io::format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(io::format_number(2.0), "2");
  EXPECT_EQ(io::format_number(-1.5e-20), "-1.5000000000000001e-20");
}

TEST(Io, NumberFormatIgnoresLocale) {
  struct Comma : std::numpunct<char> {
    char do_decimal_point() const override { return ','; }
  };
  const std::locale saved = std::locale::global(std::locale(std::locale::classic(), new Comma));
  EXPECT_EQ(io::format_number(0.5), "0.5");
  std::ostringstream csv;
  io::write_csv_row(csv, {1.25, -0.5});
  EXPECT_EQ(csv.str(), "1.25,-0.5\n");
  std::locale::global(saved);
}

TEST(Io, GeometryRoundTrip) {
  const TreeGeometry g = io::geometry_from_json(io::read_json_file(sample("geometry_n2_symmetric.json")));
  EXPECT_EQ(g.levels(), 2);
  EXPECT_DOUBLE_EQ(*g.root_radius(), 0.01);
  const TreeGeometry back = io::geometry_from_json(io::to_json(g));
  EXPECT_EQ(back.xi(), g.xi());
  EXPECT_EQ(io::to_json(back), io::to_json(g));
}

TEST(Io, GeometryErrorsNameTheField) {
  auto msg = [](const io::Json& j) {
    try {
      io::geometry_from_json(j);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  io::Json j = io::Json::parse(R"({"levels": 2, "r0": 1, "xi": [1, 1, 1, 1, 1]})");
  EXPECT_NE(msg(j).find("geometry.xi: length 5"), std::string::npos);
  j = io::Json::parse(R"({"levels": 1, "r0": 1, "xi": [1, -2]})");
  EXPECT_NE(msg(j).find("geometry.xi[1] (branch 1,2)"), std::string::npos);
  j = io::Json::parse(R"({"levels": 1, "r0": "x", "xi": [1, 1]})");
  EXPECT_NE(msg(j).find("geometry.r0"), std::string::npos);
  j = io::Json::parse(R"({"levels": 1, "r0": 1, "xi": [1, 1], "extra": 0})");
  EXPECT_NE(msg(j).find("unknown field \"extra\""), std::string::npos);
  j = io::Json::parse(R"({"r0": 1, "xi": [1, 1]})");
  EXPECT_NE(msg(j).find("missing field \"levels\""), std::string::npos);
}

TEST(Io, ParseErrorReportsLine) {
  const fs::path p = temp_file("bad.json", "{\n  \"levels\": 2,\n  \"r0\": ,\n}\n");
  try {
    io::read_json_file(p.string());
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Io, BoundaryConditions) {
  const BoundaryConditions bc = io::boundary_conditions_from_json(io::read_json_file(sample("bc_outlet_pressures_n1.json")));
  ASSERT_TRUE(std::holds_alternative<OutletPressures>(bc));
  EXPECT_EQ(std::get<OutletPressures>(bc).inlet_flow, 1.0);
  EXPECT_EQ(io::to_json(io::boundary_conditions_from_json(io::to_json(bc))), io::to_json(bc));
  EXPECT_THROW(io::boundary_conditions_from_json(io::Json::parse(R"({"type": "outlet_flows", "values": [1]})")),
               ValidationError);
  EXPECT_THROW(io::boundary_conditions_from_json(io::Json::parse(R"({"type": "other", "values": [1], "p0": 0})")),
               ValidationError);
}

TEST(Io, FlowStateKeysBranches) {
  const TreeGeometry g(1.0, Vector::Ones(6));
  const io::Json j = io::to_json(pressures_from_flows(g, Vector::Constant(4, 0.25), 0.0));
  EXPECT_DOUBLE_EQ(j["branch_flows"]["1,2"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["branch_flows"]["2,3"].get<double>(), 0.25);
  EXPECT_EQ(j["branch_flows"].size(), 6u);
  EXPECT_DOUBLE_EQ(j["energy"].get<double>(), 1.75);
}

TEST(Io, AugLagConfig) {
  const AugLagConfig cfg = io::auglag_config_from_json(io::read_json_file(sample("auglag_config.json")));
  const AugLagConfig defaults;
  EXPECT_EQ(cfg.b, defaults.b);
  EXPECT_EQ(cfg.tau, defaults.tau);
  EXPECT_EQ(io::to_json(cfg), io::to_json(defaults));
  EXPECT_THROW(io::auglag_config_from_json(io::Json::parse(R"({"b": -1})")), ValidationError);
  EXPECT_THROW(io::auglag_config_from_json(io::Json::parse(R"({"beta": 1})")), ValidationError);
}

TEST(Io, SweepCsvLayout) {
  Vector p(8);
  p << 0.3, 0.1, 0.9, 0.2, 0.5, 0.7, 0.0, 0.4;
  std::ostringstream s;
  io::write_sweep_csv(s, epsilon_sweep(3, 10.0, 1.0, 1.0, p, {0.1, 0.5, 3}));
  const auto lines = split_lines(s.str());
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0], "epsilon,energy,infimum,gap,q_1,max_other_q,volume_residual");
  EXPECT_EQ(std::count(lines[1].begin(), lines[1].end(), ','), 6);
}

TEST(Io, HistoryCsvLayout) {
  std::ostringstream s;
  const OptimizationRun run = optimize_case1(Vector::Constant(2, 0.5), 3.0, 1.0);
  io::write_history_csv(s, run);
  const auto lines = split_lines(s.str());
  EXPECT_EQ(lines[0], "k,ell,lagrangian,energy,volume_residual");
  EXPECT_EQ(lines.size(), run.iterates.size() + 1);
  EXPECT_EQ(lines[1].substr(0, 2), "0,");
}

TEST(Cli, VerifyPasses) {
  const Result r = run_cli({"verify"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
  EXPECT_EQ(split_lines(r.out).size(), 5u);
}

TEST(Cli, SolveSymmetricOptimumWithEqualPressures) {
  const Result r = run_cli({"solve", "--geometry", sample("geometry_n2_symmetric.json"), "--bc", "outlet_pressures",
                            "--pressures", sample("pressures_equal_n2.json"), "--phi", "1.0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  for (const auto& q : j["outlet_flows"]) EXPECT_NEAR(q.get<double>(), 0.25, 1e-12);
}

TEST(Cli, SolveFromBcFile) {
  const Result r = run_cli({"solve", "--geometry", sample("geometry_n1.json"), "--bc-file",
                            sample("bc_outlet_pressures_n1.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  EXPECT_NEAR(j["outlet_flows"][0].get<double>(), 1.0, 1e-15);
  EXPECT_NEAR(j["inlet_pressure"].get<double>(), 2.0, 1e-15);
}

TEST(Cli, SolveOutletFlows) {
  const Result r = run_cli({"solve", "--geometry", sample("geometry_n2_symmetric.json"), "--bc-file",
                            sample("bc_outlet_flows_n2.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  // 1 + 2 * 0.25 + 4 * (0.0625 / 0.5)
  EXPECT_NEAR(j["energy"].get<double>(), 2.0, 1e-14);
}

TEST(Cli, OptimizeFlows) {
  const Result r = run_cli({"optimize-flows", "--flows", sample("flows_n2.json"), "--lambda", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  EXPECT_LE(j["report"]["kkt_residual"].get<double>(), 1e-10);
  EXPECT_EQ(j["report"]["xi_star"].size(), 6u);
}

TEST(Cli, OptimizePressuresRegimes) {
  Result r = run_cli({"optimize-pressures", "--pressures", sample("pressures_equal_n2.json"), "--lambda", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::Json::parse(r.out)["regime"], "equal_pressures");
  EXPECT_NEAR(io::Json::parse(r.out)["report"]["energy"].get<double>(), 2.0, 1e-12);

  const fs::path near = temp_file("near_equal.json", "[0.0, 1e-9, 0.0, 0.0]");
  r = run_cli({"optimize-pressures", "--pressures", near.string(), "--lambda", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::Json::parse(r.out)["regime"], "minimizing_sequence");
  r = run_cli({"optimize-pressures", "--pressures", near.string(), "--lambda", "5", "--equal-pressure-tol", "1e-8"});
  EXPECT_EQ(io::Json::parse(r.out)["regime"], "equal_pressures");
}

TEST(Cli, SweepEpsilonLastGapWithinOnePercent) {
  const Result r = run_cli({"sweep-epsilon", "--levels", "3", "--lambda", "10", "--r0", "1", "--phi", "1",
                            "--pressures", sample("pressures_n3.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = split_lines(r.out);
  ASSERT_EQ(lines.size(), 21u);
  std::vector<double> cells;
  std::istringstream row(lines.back());
  for (std::string c; std::getline(row, c, ',');) cells.push_back(std::stod(c));
  ASSERT_EQ(cells.size(), 7u);
  EXPECT_LE(cells[3], 0.01 * cells[2]);
}

TEST(Cli, SweepIsDeterministicAcrossJobs) {
  const std::vector<std::string> base{"sweep-epsilon", "--levels", "3", "--lambda", "10", "--pressures",
                                      sample("pressures_n3.json")};
  auto with_jobs = base;
  with_jobs.insert(with_jobs.end(), {"--jobs", "4"});
  const Result a = run_cli(base);
  const Result b = run_cli(base);
  const Result c = run_cli(with_jobs);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
}

TEST(Cli, SweepJsonFormat) {
  const Result r = run_cli({"sweep-epsilon", "--levels", "3", "--lambda", "10", "--pressures",
                            sample("pressures_n3.json"), "--steps", "4", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  ASSERT_EQ(j.size(), 4u);
  EXPECT_TRUE(j[0].contains("max_other_q"));
}

TEST(Cli, AuglagWritesSummaryAndHistory) {
  const fs::path history = fs::temp_directory_path() / "dyadic_tests" / "history.csv";
  fs::create_directories(history.parent_path());
  const Result r = run_cli({"auglag", "--case", "flows", "--flows", sample("flows_n2.json"), "--lambda", "5",
                            "--config", sample("auglag_config.json"), "--history", history.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const io::Json j = io::Json::parse(r.out);
  EXPECT_TRUE(j["converged"].get<bool>());
  EXPECT_EQ(j["stop_reason"], "multiplier_converged");
  std::ifstream in(history);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "k,ell,lagrangian,energy,volume_residual");
}

TEST(Cli, AuglagPressuresCsv) {
  const Result r = run_cli({"auglag", "--case", "pressures", "--pressures", sample("pressures_equal_n2.json"),
                            "--lambda", "5", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(split_lines(r.out)[0], "k,ell,lagrangian,energy,volume_residual");
}

TEST(Cli, OutputFileMatchesStdout) {
  const fs::path out = fs::temp_directory_path() / "dyadic_tests" / "solve.json";
  fs::create_directories(out.parent_path());
  const std::vector<std::string> args{"solve", "--geometry", sample("geometry_n1.json"), "--bc-file",
                                      sample("bc_outlet_pressures_n1.json")};
  auto to_file = args;
  to_file.insert(to_file.end(), {"-o", out.string()});
  const Result a = run_cli(args);
  const Result b = run_cli(to_file);
  ASSERT_EQ(b.code, 0);
  EXPECT_TRUE(b.out.empty());
  std::ifstream in(out);
  std::stringstream s;
  s << in.rdbuf();
  EXPECT_EQ(s.str(), a.out);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"verify", "--bogus"}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"optimize-flows", "--flows", sample("flows_n2.json"), "--lambda", "0.5"}).code, 1);
  // pressure vector does not match the geometry
  const Result r = run_cli({"solve", "--geometry", sample("geometry_n1.json"), "--bc", "outlet_pressures",
                            "--pressures", sample("pressures_n3.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("outlet pressures has length 8"), std::string::npos) << r.err;
  const fs::path bad = temp_file("bad_geometry.json", R"({"levels": 1, "r0": 1, "xi": [1, 0]})");
  const Result g = run_cli({"solve", "--geometry", bad.string(), "--bc-file", sample("bc_outlet_pressures_n1.json")});
  EXPECT_EQ(g.code, 1);
  EXPECT_NE(g.err.find("geometry.xi[1]"), std::string::npos) << g.err;
}

TEST(Cli, DegeneracyExitCode) {
  // epsilon so small that the mixed system is numerically singular
  const fs::path p = temp_file("far_apart.json", "[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]");
  const Result r = run_cli({"optimize-pressures", "--pressures", p.string(), "--lambda", "10", "--epsilon", "1e-300"});
  EXPECT_EQ(r.code, 2) << r.err << r.out;
}
