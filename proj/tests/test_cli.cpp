#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dsn/cli/commands.hpp"

namespace {

namespace fs = std::filesystem;
using dsn::cli::Invocation;

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dsn_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void put(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

struct Result {
    int code;
    std::string log;
    std::string err;
};

Result run(const std::string& command, const fs::path& config, const fs::path& out,
           std::optional<std::uint64_t> seed = std::nullopt, unsigned workers = 1) {
    Invocation inv{command, config.string(), out, seed, workers};
    std::ostringstream log, err;
    const int code = dsn::cli::run(inv, log, err);
    return {code, log.str(), err.str()};
}

// Small replica sample count keeps these tests fast.
const char* kFast = R"("replica": {"n_samples": 20000})";

TEST(Config, DefaultsAreStandardSetup) {
    const auto c = dsn::cli::parse_config("{}");
    EXPECT_EQ(c.prior.var_common, 0.5);
    EXPECT_EQ(c.prior.var_private[1], 0.5);
    EXPECT_EQ(c.prior.rate_common, 0.3);
    EXPECT_EQ(c.prior.rate_private[0], 0.1);
    EXPECT_EQ(c.noise_var[0], 0.01);
    EXPECT_EQ(c.lambda[0], c.lambda[1]);
    EXPECT_EQ(c.fig2.psis, (std::vector<double>{0.0, 0.3, 0.8}));
    EXPECT_EQ(c.fig2.lambdas.front(), 0.01);
    EXPECT_EQ(c.fig2.lambdas.back(), 0.12);
}

TEST(Config, ResolvedJsonRoundTrips) {
    auto c = dsn::cli::parse_config(R"({"rho": [0.5, 0.7], "psi": 0.4, "utility": "l21",
                                        "proxcheck": {"psi": 0.2}})");
    const auto text = dsn::cli::to_json(c).dump();
    EXPECT_EQ(dsn::cli::to_json(dsn::cli::parse_config(text)).dump(), text);
}

TEST(Config, DiagnosticsNameLineAndField) {
    try {
        dsn::cli::parse_config("{\n  \"rho\": 0.8,\n  \"fig3\": {\n    \"resolution\": -1\n  }\n}", "cfg.json");
        FAIL() << "expected ConfigError";
    } catch (const dsn::ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("cfg.json:4:"), std::string::npos) << msg;
        EXPECT_NE(msg.find("fig3.resolution"), std::string::npos) << msg;
    }
    EXPECT_THROW(dsn::cli::parse_config(R"({"rho": [0.5]})"), dsn::ConfigError);
    EXPECT_THROW(dsn::cli::parse_config(R"({"utility": "l1"})"), dsn::ConfigError);
    EXPECT_THROW(dsn::cli::parse_config(R"({"simulation": {"trials": 1.5}})"), dsn::ConfigError);
    EXPECT_THROW(dsn::cli::parse_config(R"({"psi": 1.5})"), dsn::ConfigError);
}

TEST(Commands, MalformedConfigExitsTwoWithoutOutput) {
    const fs::path dir = scratch("malformed");
    put(dir / "bad.json", "{\n  \"rho\": 0.8,\n  \"replca\": {}\n}\n");
    const Result r = run("replica", dir / "bad.json", dir / "out");
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("bad.json:3"), std::string::npos) << r.err;
    EXPECT_NE(r.err.find("'replca'"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "out"));

    put(dir / "broken.json", "{\"rho\": }");
    EXPECT_EQ(run("fig2", dir / "broken.json", dir / "out").code, 2);
    EXPECT_EQ(run("replica", dir / "missing.json", dir / "out").code, 2);
    EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Commands, NonConvergenceExitsThree) {
    const fs::path dir = scratch("nonconv");
    put(dir / "c.json", R"({"replica": {"max_iter": 2, "n_samples": 20000}})");
    const Result r = run("replica", dir / "c.json", dir / "out");
    EXPECT_EQ(r.code, 3);
    EXPECT_FALSE(fs::exists(dir / "out" / "replica.csv"));
}

TEST(Replica, ZeroSourceWritesSentinel) {
    const fs::path dir = scratch("zero");
    put(dir / "c.json", std::string("{") + kFast +
                            R"(, "prior": {"var_common": 0, "var_private": 0}, "noise_var": 0})");
    ASSERT_EQ(run("replica", dir / "c.json", dir / "out").code, 0);
    std::istringstream csv(slurp(dir / "out" / "replica.csv"));
    std::string header, row;
    std::getline(csv, header);
    EXPECT_EQ(header, "terminal,chi,p,p_stderr,tau,theta2,mse,mse_db,iterations,residual");
    int rows = 0;
    while (std::getline(csv, row)) {
        ++rows;
        EXPECT_NE(row.find(",0,-inf,"), std::string::npos) << row;
    }
    EXPECT_EQ(rows, 2);
}

TEST(Replica, MatchesSimulateWithinHalfDb) {
    const fs::path dir = scratch("cross");
    put(dir / "c.json", R"({"psi": 0.8, "lambda": 0.04})");
    ASSERT_EQ(run("replica", dir / "c.json", dir / "rep").code, 0);
    ASSERT_EQ(run("simulate", dir / "c.json", dir / "sim").code, 0);
    std::istringstream csv(slurp(dir / "rep" / "replica.csv"));
    std::string line;
    std::getline(csv, line);
    std::getline(csv, line);
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    const double replica_db = std::stod(cells.at(7));
    const auto report = nlohmann::json::parse(slurp(dir / "sim" / "simulate.json"));
    EXPECT_NEAR(report["mean_db"].get<double>(), replica_db, 0.5);
}

TEST(Simulate, ReportSchema) {
    const fs::path dir = scratch("simschema");
    put(dir / "c.json", R"({"simulation": {"trials": 1, "n": 40, "seed": 77}})");
    ASSERT_EQ(run("simulate", dir / "c.json", dir / "a").code, 0);
    const auto j = nlohmann::json::parse(slurp(dir / "a" / "simulate.json"));
    EXPECT_EQ(j["flagged"], 0);
    EXPECT_EQ(j["trials"], 1);
    EXPECT_EQ(j["seeds"]["first"], 77);
    EXPECT_EQ(j["manifest"]["command"], "simulate");
    EXPECT_EQ(j["manifest"]["seeds"]["simulation"], 77);
    EXPECT_FALSE(j["manifest"].contains("wall_clock_seconds"));
    const auto m = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
    for (const auto& f : m["outputs"]) EXPECT_TRUE(fs::exists(dir / "a" / f.get<std::string>())) << f;
}

// Every command, rerun with the same config or with the previous manifest,
// reproduces its data files byte for byte.
TEST(Determinism, RerunsAreByteIdentical) {
    const fs::path dir = scratch("determinism");
    put(dir / "c.json", std::string("{") + kFast + R"(,
        "simulation": {"trials": 3, "n": 30},
        "fig2": {"lambdas": [0.03, 0.05], "psis": [0, 0.8], "simulate": true,
                 "simulate_lambdas": [0.05], "l21": true},
        "fig3": {"rho_grid": [0.6, 1.0], "psis": [0.8], "resolution": 0.05},
        "proxcheck": {"samples": 200}})");
    for (const std::string cmd : {"replica", "fig2", "fig3", "simulate", "proxcheck"}) {
        ASSERT_EQ(run(cmd, dir / "c.json", dir / (cmd + "_a"), std::nullopt, 1).code, 0) << cmd;
        ASSERT_EQ(run(cmd, dir / "c.json", dir / (cmd + "_b"), std::nullopt, 3).code, 0) << cmd;
        ASSERT_EQ(run(cmd, dir / (cmd + "_a") / "manifest.json", dir / (cmd + "_c")).code, 0) << cmd;
        const auto m = nlohmann::json::parse(slurp(dir / (cmd + "_a") / "manifest.json"));
        for (const auto& f : m["outputs"]) {
            const std::string name = f.get<std::string>();
            if (name == "manifest.json") continue;
            const std::string a = slurp(dir / (cmd + "_a") / name);
            EXPECT_FALSE(a.empty()) << name;
            EXPECT_EQ(a, slurp(dir / (cmd + "_b") / name)) << cmd << "/" << name;
            EXPECT_EQ(a, slurp(dir / (cmd + "_c") / name)) << cmd << "/" << name;
        }
    }
}

TEST(Determinism, SeedOverrideIsRecorded) {
    const fs::path dir = scratch("seed");
    put(dir / "c.json", std::string("{") + kFast + "}");
    ASSERT_EQ(run("replica", dir / "c.json", dir / "a").code, 0);
    ASSERT_EQ(run("replica", dir / "c.json", dir / "b", 99).code, 0);
    EXPECT_NE(slurp(dir / "a" / "replica.csv"), slurp(dir / "b" / "replica.csv"));
    const auto m = nlohmann::json::parse(slurp(dir / "b" / "manifest.json"));
    EXPECT_EQ(m["seeds"]["replica"], 99);
    ASSERT_EQ(run("replica", dir / "b" / "manifest.json", dir / "c").code, 0);
    EXPECT_EQ(slurp(dir / "b" / "replica.csv"), slurp(dir / "c" / "replica.csv"));
}

TEST(Fig2, OverlayMergesSimulateReport) {
    const fs::path dir = scratch("overlay");
    put(dir / "s.json", R"({"psi": 0.8, "lambda": 0.04, "simulation": {"trials": 2, "n": 30}})");
    ASSERT_EQ(run("simulate", dir / "s.json", dir / "sim").code, 0);
    const std::string report = (dir / "sim" / "simulate.json").string();
    put(dir / "f.json", std::string("{") + kFast +
                            R"(, "fig2": {"lambdas": [0.04], "psis": [0.8], "overlay": [")" +
                            report + "\"]}}");
    const Result r = run("fig2", dir / "f.json", dir / "fig");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto sim = nlohmann::json::parse(slurp(report));
    const std::string csv = slurp(dir / "fig" / "fig2.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "scheme,psi,lambda,replica_mse,replica_mse_db,sim_mse,sim_mse_db,sim_stderr,sim_trials,sim_flagged");
    EXPECT_NE(csv.find("two_dim,0.8,0.04,"), std::string::npos);
    EXPECT_NE(csv.find("," + dsn::cli::fmt(sim["mean"].get<double>()) + ","), std::string::npos) << csv;
    EXPECT_NE(r.log.find("replica min"), std::string::npos);

    put(dir / "g.json", R"({"fig2": {"overlay": ["/nonexistent/report.json"]}})");
    EXPECT_EQ(run("fig2", dir / "g.json", dir / "fig_bad").code, 2);
}

TEST(Fig3, VacuousThresholdGivesGridMinimum) {
    const fs::path dir = scratch("fig3vac");
    put(dir / "c.json", std::string("{") + kFast +
                            R"(, "fig3": {"mse0_db": 10, "rho_grid": [0.2, 0.5, 1.0], "psis": [0, 0.8]}})");
    ASSERT_EQ(run("fig3", dir / "c.json", dir / "out").code, 0);
    std::istringstream csv(slurp(dir / "out" / "fig3.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "psi,rho1,rho2_boundary,mse_db,status");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        EXPECT_NE(line.find(",0.2,"), std::string::npos) << line;
        EXPECT_NE(line.find("grid_min"), std::string::npos) << line;
    }
    EXPECT_EQ(rows, 6);
}

TEST(Fig3, UnreachableThresholdIsMarked) {
    const fs::path dir = scratch("fig3unr");
    put(dir / "c.json", std::string("{") + kFast +
                            R"(, "fig3": {"mse0_db": -60, "rho_grid": [0.5, 1.0], "psis": [0]}})");
    ASSERT_EQ(run("fig3", dir / "c.json", dir / "out").code, 0);
    const std::string csv = slurp(dir / "out" / "fig3.csv");
    EXPECT_NE(csv.find("0,0.5,,"), std::string::npos) << csv;
    EXPECT_NE(csv.find("unreachable"), std::string::npos);
}

TEST(Fig3, MonotonicityCheck) {
    using dsn::cli::BoundaryPoint;
    std::vector<BoundaryPoint> ok{{0, 0.1, 0, 0, "unreachable"}, {0, 0.2, 0.9, 0, "ok"},
                                  {0, 0.3, 0.5, 0, "ok"}, {0, 0.4, 0.5005, 0, "ok"}};
    EXPECT_FALSE(dsn::cli::check_monotone(ok, 1e-3));
    auto up = ok;
    up[3].rho2 = 0.6;
    EXPECT_TRUE(dsn::cli::check_monotone(up, 1e-3));
    auto gap = ok;
    gap[2].status = "unreachable";
    EXPECT_TRUE(dsn::cli::check_monotone(gap, 1e-3));
}

TEST(Proxcheck, DefaultPasses) {
    const fs::path dir = scratch("prox");
    put(dir / "c.json", "{}");
    const Result r = run("proxcheck", dir / "c.json", dir / "out", std::nullopt, 2);
    EXPECT_EQ(r.code, 0);
    EXPECT_EQ(r.log.rfind("PASS, max deviation <= 1e-06", 0), 0u) << r.log;
}

TEST(Proxcheck, LargePsiRoutesToOracle) {
    const fs::path dir = scratch("prox12");
    put(dir / "c.json", R"({"proxcheck": {"psi": 1.2, "samples": 300}})");
    const Result r = run("proxcheck", dir / "c.json", dir / "out");
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.log.find("routed to oracle"), std::string::npos) << r.log;
    EXPECT_NE(r.log.find("PASS"), std::string::npos);
}

TEST(Proxcheck, InjectedGeometryBugFails) {
    const fs::path dir = scratch("proxbug");
    put(dir / "c.json", R"({"proxcheck": {"inject_geometry_bug": true, "samples": 300}})");
    const Result r = run("proxcheck", dir / "c.json", dir / "out");
    EXPECT_EQ(r.code, 4);
    EXPECT_EQ(r.log.rfind("FAIL", 0), 0u) << r.log;
    EXPECT_NE(r.log.find("at y=("), std::string::npos);
    const auto j = nlohmann::json::parse(slurp(dir / "out" / "proxcheck.json"));
    EXPECT_EQ(j["status"], "FAIL");
}

// The installed binary: argument parsing and the DSN_WORKERS fallback.
int sh(const std::string& cmd) {
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ArgumentsAndEnvironment) {
    const fs::path dir = scratch("binary");
    const std::string bin = DSN_BIN;
    put(dir / "c.json", R"({"proxcheck": {"samples": 100}})");
    const std::string cfg = (dir / "c.json").string();
    EXPECT_EQ(sh(bin + " proxcheck --config " + cfg + " --out " + (dir / "a").string() + " >/dev/null"), 0);
    EXPECT_EQ(sh("DSN_WORKERS=2 " + bin + " proxcheck --config " + cfg + " --out " +
                 (dir / "b").string() + " >/dev/null"),
              0);
    EXPECT_EQ(nlohmann::json::parse(slurp(dir / "b" / "manifest.json"))["workers"], 2);
    EXPECT_EQ(slurp(dir / "a" / "proxcheck.csv"), slurp(dir / "b" / "proxcheck.csv"));
    EXPECT_EQ(sh(bin + " proxcheck --out " + (dir / "c").string() + " 2>/dev/null"), 2);
    EXPECT_EQ(sh(bin + " plot --config " + cfg + " --out x 2>/dev/null >/dev/null"), 2);
    EXPECT_EQ(sh(bin + " replica --config " + cfg + " --out " + (dir / "d").string() +
                 " --seed notanumber 2>/dev/null"),
              2);
    EXPECT_FALSE(fs::exists(dir / "c"));
}

}  // namespace
