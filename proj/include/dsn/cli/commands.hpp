#pragma once

// Command implementations behind `dsn <command>`. Each command validates its
// config, computes everything in memory, then writes its data files followed
// by manifest.json. Data files carry no timing information, so reruns with
// the same resolved config are byte-identical; the wall clock lives only in
// manifest.json.
//
// CSV layouts (header row first):
//   replica.csv   terminal,chi,p,p_stderr,tau,theta2,mse,mse_db,iterations,residual
//   fig2.csv      scheme,psi,lambda,replica_mse,replica_mse_db,sim_mse,sim_mse_db,sim_stderr,sim_trials,sim_flagged
//   fig3.csv      psi,rho1,rho2_boundary,mse_db,status
//   trials.csv    trial,seed,distortion,distortion_db,converged,iterations
//   proxcheck.csv sample,y1,y2,tau1,tau2,psi,deviation   (worst 10 samples)

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "dsn/cli/config.hpp"
#include "dsn/errors.hpp"
#include "dsn/parallel.hpp"
#include "dsn/replica.hpp"
#include "dsn/rng.hpp"
#include "dsn/scalar_map.hpp"
#include "dsn/sim_harness.hpp"

#ifndef DSN_VERSION
#define DSN_VERSION "0.0.0"
#endif

namespace dsn::cli {

namespace fs = std::filesystem;

/// Raised when an output fails a post-condition the tool asserts on.
class InvariantError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Context {
    RunConfig config;
    fs::path out;
    unsigned workers = 1;
    std::ostream* log = &std::cout;
};

/// Fixed textual form for CSV and console output: %.12g, "inf"/"-inf", "nan".
inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// JSON cannot hold infinities; dB values use the CSV sentinel strings instead.
inline json json_number(double v) {
    if (std::isfinite(v)) return v;
    return fmt(v);
}

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) line += ',';
        line += cells[i];
    }
    return line + '\n';
}

/// Collects output files and writes them, then the manifest.
class Outputs {
public:
    explicit Outputs(const Context& ctx) : ctx_(ctx) {}

    void add(const std::string& name, std::string content) {
        files_.emplace_back(name, std::move(content));
    }

    std::vector<std::string> names() const {
        std::vector<std::string> n;
        for (const auto& f : files_) n.push_back(f.first);
        n.push_back("manifest.json");
        return n;
    }

    void write(const std::string& command, double wall_seconds) const {
        fs::create_directories(ctx_.out);
        for (const auto& [name, content] : files_) write_file(ctx_.out / name, content);
        json m = manifest_body(command, ctx_.config, names());
        m["workers"] = ctx_.workers;
        m["wall_clock_seconds"] = wall_seconds;
        write_file(ctx_.out / "manifest.json", m.dump(2) + "\n");
    }

    /// Manifest fields that do not depend on the run's timing or scheduling.
    static json manifest_body(const std::string& command, const RunConfig& c,
                              const std::vector<std::string>& outputs) {
        json m;
        m["command"] = command;
        m["tool_version"] = DSN_VERSION;
        m["config"] = to_json(c);
        m["seeds"] = {{"replica", c.replica.seed},
                      {"simulation", c.simulation.seed},
                      {"proxcheck", c.proxcheck.seed}};
        m["outputs"] = outputs;
        return m;
    }

private:
    static void write_file(const fs::path& path, const std::string& content) {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path.string());
        f << content;
        if (!f) throw std::runtime_error("write failed for " + path.string());
    }

    const Context& ctx_;
    std::vector<std::pair<std::string, std::string>> files_;
};

// ---------------------------------------------------------------- replica

inline int cmd_replica(const Context& ctx, Outputs& out) {
    const RunConfig& c = ctx.config;
    const ReplicaState s = solve_fixed_point(c.network(), c.replica);
    std::string csv = csv_row({"terminal", "chi", "p", "p_stderr", "tau", "theta2", "mse", "mse_db",
                               "iterations", "residual"});
    for (int j = 0; j < 2; ++j) {
        const auto& t = s.terminals[j];
        csv += csv_row({std::to_string(j + 1), fmt(t.chi), fmt(t.p), fmt(t.p_stderr), fmt(t.tau),
                        fmt(t.theta2), fmt(s.mse()), fmt(s.mse_db()), std::to_string(s.iterations),
                        fmt(s.residual)});
    }
    out.add("replica.csv", csv);
    *ctx.log << "replica: mse " << fmt(s.mse()) << " (" << fmt(s.mse_db()) << " dB) after "
             << s.iterations << " iterations\n";
    return 0;
}

// ---------------------------------------------------------------- simulate

inline json report_json(const SimulationReport& r, UtilityKind kind) {
    const ExperimentConfig& e = r.config;
    json j;
    j["utility"] = utility_name(kind);
    j["psi"] = e.tuning.psi;
    j["lambda"] = e.tuning.lambda;
    j["n"] = e.n;
    j["rho"] = e.rho;
    j["noise_var"] = e.noise_var;
    j["trials"] = static_cast<int>(r.trials.size());
    j["accepted"] = static_cast<int>(r.distortions.size());
    j["flagged"] = r.flagged;
    j["warning"] = r.warning;
    j["mean"] = json_number(r.mean);
    j["mean_db"] = json_number(r.mean_db);
    j["standard_error"] = json_number(r.standard_error);
    j["snr_db"] = json_number(r.snr_db);
    j["seeds"] = {{"base", e.base_seed},
                  {"first", e.base_seed},
                  {"last", e.base_seed + static_cast<std::uint64_t>(e.trials) - 1}};
    return j;
}

inline int cmd_simulate(const Context& ctx, Outputs& out) {
    const RunConfig& c = ctx.config;
    const ExperimentConfig e = c.experiment();
    const SimulationReport r = run_experiment(e, ctx.workers);

    std::string csv = csv_row({"trial", "seed", "distortion", "distortion_db", "converged", "iterations"});
    for (std::size_t i = 0; i < r.trials.size(); ++i) {
        const auto& t = r.trials[i];
        csv += csv_row({std::to_string(i), std::to_string(t.seed), fmt(t.distortion),
                        fmt(to_db(t.distortion)), t.converged ? "1" : "0",
                        std::to_string(t.iterations)});
    }
    json j = report_json(r, c.utility);
    j["manifest"] = Outputs::manifest_body("simulate", c, {"simulate.json", "trials.csv", "manifest.json"});
    out.add("simulate.json", j.dump(2) + "\n");
    out.add("trials.csv", csv);
    *ctx.log << "simulate: mean " << fmt(r.mean) << " (" << fmt(r.mean_db) << " dB), stderr "
             << fmt(r.standard_error) << ", flagged " << r.flagged << "/" << r.trials.size() << "\n";
    if (r.warning) {
        *ctx.log << "warning: more than 10% of trials did not converge\n";
    }
    return 0;
}

// ---------------------------------------------------------------- fig2

struct Fig2Row {
    std::string scheme;  // "two_dim" or "l21"
    double psi = 0.0;
    double lambda = 0.0;
    std::optional<double> replica;
    std::optional<double> sim;
    double sim_stderr = 0.0;
    int sim_trials = 0;
    int sim_flagged = 0;
};

/// Reads a simulate.json report for the overlay.
inline Fig2Row overlay_row(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError(path + ": cannot open overlay report");
    json j;
    try {
        j = json::parse(in);
        Fig2Row r;
        r.scheme = j.at("utility").get<std::string>();
        r.psi = r.scheme == "l21" ? 0.0 : j.at("psi").get<double>();
        const auto lam = j.at("lambda").get<std::array<double, 2>>();
        if (lam[0] != lam[1]) throw ConfigError(path + ": overlay needs lambda_1 == lambda_2");
        r.lambda = lam[0];
        const json& mean = j.at("mean");
        r.sim = mean.is_number() ? mean.get<double>() : std::numeric_limits<double>::quiet_NaN();
        const json& se = j.at("standard_error");
        r.sim_stderr = se.is_number() ? se.get<double>() : std::numeric_limits<double>::quiet_NaN();
        r.sim_trials = j.at("accepted").get<int>();
        r.sim_flagged = j.at("flagged").get<int>();
        return r;
    } catch (const json::exception& e) {
        throw ConfigError(path + ": not a simulate report: " + e.what());
    }
}

inline int cmd_fig2(const Context& ctx, Outputs& out) {
    const RunConfig& c = ctx.config;
    if (c.lambda[0] != c.lambda[1]) {
        *ctx.log << "note: fig2 sweeps lambda_1 = lambda_2; the configured lambda is ignored\n";
    }
    // Read overlay reports first so a bad path fails before any computation.
    std::vector<Fig2Row> overlays;
    for (const auto& path : c.fig2.overlay) overlays.push_back(overlay_row(path));

    // Replica points for every scheme, then simulation points, as one job list.
    struct Job {
        std::string scheme;
        double psi;
        double lambda;
        bool simulate;
    };
    std::vector<Job> jobs;
    auto schemes = [&] {
        std::vector<std::pair<std::string, double>> s;
        for (double psi : c.fig2.psis) s.emplace_back("two_dim", psi);
        if (c.fig2.l21) s.emplace_back("l21", 0.0);
        return s;
    }();
    for (const auto& [scheme, psi] : schemes) {
        for (double lam : c.fig2.lambdas) jobs.push_back({scheme, psi, lam, false});
    }
    if (c.fig2.simulate) {
        for (const auto& [scheme, psi] : schemes) {
            for (double lam : c.fig2.simulate_lambdas) jobs.push_back({scheme, psi, lam, true});
        }
    }
    std::vector<SimulationReport> sims(jobs.size());
    std::vector<double> replica(jobs.size(), 0.0);
    parallel_for(jobs.size(), ctx.workers, [&](std::size_t i) {
        const Job& jb = jobs[i];
        const UtilityKind kind = jb.scheme == "l21" ? UtilityKind::L21 : UtilityKind::TwoDimSoftThreshold;
        if (jb.simulate) {
            sims[i] = run_experiment(c.experiment(jb.psi, {jb.lambda, jb.lambda}, kind), 1);
        } else {
            replica[i] = solve_fixed_point(c.network(jb.psi, {jb.lambda, jb.lambda}, kind), c.replica).mse();
        }
    });

    // Merge by (scheme, psi, lambda); scheme order is two_dim then l21.
    using Key = std::tuple<int, double, double>;
    auto key = [](const std::string& scheme, double psi, double lambda) {
        return Key{scheme == "l21" ? 1 : 0, psi, lambda};
    };
    std::map<Key, Fig2Row> rows;
    auto row_for = [&](const std::string& scheme, double psi, double lambda) -> Fig2Row& {
        Fig2Row& r = rows[key(scheme, psi, lambda)];
        r.scheme = scheme;
        r.psi = psi;
        r.lambda = lambda;
        return r;
    };
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const Job& jb = jobs[i];
        Fig2Row& r = row_for(jb.scheme, jb.psi, jb.lambda);
        if (!jb.simulate) {
            r.replica = replica[i];
        } else {
            r.sim = sims[i].mean;
            r.sim_stderr = sims[i].standard_error;
            r.sim_trials = static_cast<int>(sims[i].distortions.size());
            r.sim_flagged = sims[i].flagged;
            if (sims[i].warning) {
                *ctx.log << "warning: " << jb.scheme << " psi=" << fmt(jb.psi) << " lambda="
                         << fmt(jb.lambda) << ": more than 10% of trials did not converge\n";
            }
        }
    }
    for (const Fig2Row& o : overlays) {
        Fig2Row& r = row_for(o.scheme, o.psi, o.lambda);
        r.sim = o.sim;
        r.sim_stderr = o.sim_stderr;
        r.sim_trials = o.sim_trials;
        r.sim_flagged = o.sim_flagged;
    }

    std::string csv = csv_row({"scheme", "psi", "lambda", "replica_mse", "replica_mse_db", "sim_mse",
                               "sim_mse_db", "sim_stderr", "sim_trials", "sim_flagged"});
    for (const auto& [k, r] : rows) {
        (void)k;
        const bool has_sim = r.sim.has_value();
        csv += csv_row({r.scheme, fmt(r.psi), fmt(r.lambda), r.replica ? fmt(*r.replica) : "",
                        r.replica ? fmt(to_db(*r.replica)) : "", has_sim ? fmt(*r.sim) : "",
                        has_sim ? fmt(to_db(*r.sim)) : "", has_sim ? fmt(r.sim_stderr) : "",
                        has_sim ? std::to_string(r.sim_trials) : "",
                        has_sim ? std::to_string(r.sim_flagged) : ""});
    }
    out.add("fig2.csv", csv);

    // Min-over-lambda summary per scheme.
    for (const auto& [scheme, psi] : schemes) {
        double best_rep = std::numeric_limits<double>::infinity(), best_rep_lam = 0.0;
        double best_sim = std::numeric_limits<double>::infinity(), best_sim_lam = 0.0;
        for (const auto& [k, r] : rows) {
            (void)k;
            if (r.scheme != scheme || r.psi != psi) continue;
            if (r.replica && *r.replica < best_rep) best_rep = *r.replica, best_rep_lam = r.lambda;
            if (r.sim && *r.sim < best_sim) best_sim = *r.sim, best_sim_lam = r.lambda;
        }
        *ctx.log << "fig2: " << scheme;
        if (scheme != "l21") *ctx.log << " psi=" << fmt(psi);
        *ctx.log << " replica min " << fmt(to_db(best_rep)) << " dB at lambda=" << fmt(best_rep_lam);
        if (std::isfinite(best_sim)) {
            *ctx.log << ", sim min " << fmt(to_db(best_sim)) << " dB at lambda=" << fmt(best_sim_lam);
        }
        *ctx.log << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------- fig3

struct BoundaryPoint {
    double psi = 0.0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double mse_db = 0.0;
    std::string status;  // "ok", "grid_min" or "unreachable"
};

/// Smallest rho2 in [grid_min, 1] whose replica MSE is <= mse0, by bisection.
/// A fixed point that fails to converge counts as infeasible.
inline BoundaryPoint fig3_boundary(const RunConfig& c, double psi, double rho1) {
    const double lo_end = *std::min_element(c.fig3.rho_grid.begin(), c.fig3.rho_grid.end());
    const double target = c.fig3.mse0_db;
    auto mse_db = [&](double rho2) -> std::optional<double> {
        RunConfig rc = c;
        rc.rho = {rho1, rho2};
        try {
            return solve_fixed_point(rc.network(psi, {c.fig3.lambda, c.fig3.lambda},
                                                UtilityKind::TwoDimSoftThreshold),
                                     c.replica)
                .mse_db();
        } catch (const ConvergenceError&) {
            return std::nullopt;
        }
    };
    auto feasible = [&](const std::optional<double>& v) { return v && *v <= target; };

    BoundaryPoint b{psi, rho1, 1.0, 0.0, "ok"};
    const auto at_lo = mse_db(lo_end);
    if (feasible(at_lo)) {
        b.rho2 = lo_end;
        b.mse_db = *at_lo;
        b.status = "grid_min";
        return b;
    }
    auto at_hi = mse_db(1.0);
    if (!feasible(at_hi)) {
        b.rho2 = std::numeric_limits<double>::quiet_NaN();
        b.mse_db = at_hi ? *at_hi : std::numeric_limits<double>::quiet_NaN();
        b.status = "unreachable";
        return b;
    }
    double lo = lo_end, hi = 1.0;
    while (hi - lo > c.fig3.resolution) {
        const double mid = 0.5 * (lo + hi);
        const auto v = mse_db(mid);
        if (feasible(v)) {
            hi = mid;
            at_hi = v;
        } else {
            lo = mid;
        }
    }
    b.rho2 = hi;
    b.mse_db = *at_hi;
    return b;
}

/// Boundary must be non-increasing in rho1 (up to the bisection resolution),
/// and an unreachable point may not follow a reachable one.
inline std::optional<std::string> check_monotone(const std::vector<BoundaryPoint>& block,
                                                 double resolution) {
    bool reachable_seen = false;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& b : block) {
        if (b.status == "unreachable") {
            if (reachable_seen) {
                return "psi=" + fmt(b.psi) + ": threshold unreachable at rho1=" + fmt(b.rho1) +
                       " but reachable at a smaller rho1";
            }
            continue;
        }
        if (b.rho2 > prev + resolution) {
            return "psi=" + fmt(b.psi) + ": boundary increases to " + fmt(b.rho2) + " at rho1=" +
                   fmt(b.rho1);
        }
        reachable_seen = true;
        prev = b.rho2;
    }
    return std::nullopt;
}

inline int cmd_fig3(const Context& ctx, Outputs& out) {
    const RunConfig& c = ctx.config;
    std::vector<double> grid = c.fig3.rho_grid;
    std::sort(grid.begin(), grid.end());
    std::vector<std::pair<double, double>> jobs;
    for (double psi : c.fig3.psis) {
        for (double r1 : grid) jobs.emplace_back(psi, r1);
    }
    std::vector<BoundaryPoint> pts(jobs.size());
    parallel_for(jobs.size(), ctx.workers, [&](std::size_t i) {
        pts[i] = fig3_boundary(c, jobs[i].first, jobs[i].second);
    });
    std::string csv = csv_row({"psi", "rho1", "rho2_boundary", "mse_db", "status"});
    for (const auto& b : pts) {
        csv += csv_row({fmt(b.psi), fmt(b.rho1), std::isnan(b.rho2) ? "" : fmt(b.rho2),
                        fmt(b.mse_db), b.status});
    }
    out.add("fig3.csv", csv);

    std::optional<std::string> violation;
    for (std::size_t k = 0; k < c.fig3.psis.size() && !violation; ++k) {
        const std::vector<BoundaryPoint> block(pts.begin() + static_cast<long>(k * grid.size()),
                                               pts.begin() + static_cast<long>((k + 1) * grid.size()));
        violation = check_monotone(block, c.fig3.resolution);
        int unreachable = 0;
        for (const auto& b : block) unreachable += b.status == "unreachable";
        *ctx.log << "fig3: psi=" << fmt(c.fig3.psis[k]) << " " << grid.size() - unreachable << "/"
                 << grid.size() << " grid columns reach " << fmt(c.fig3.mse0_db) << " dB\n";
    }
    if (violation) {
        // Outputs are still written for inspection.
        throw InvariantError("fig3 monotonicity violated: " + *violation);
    }
    return 0;
}

// ---------------------------------------------------------------- proxcheck

struct ProxSample {
    std::size_t index = 0;
    Vec2 y;
    double tau1 = 0.0;
    double tau2 = 0.0;
    double psi = 0.0;
    double deviation = 0.0;
};

/// Compares the closed-form threshold with the oracle on random draws
/// y in [-5, 5]^2, tau_j in [0.05, 2], psi in [0, 1] (or fixed).
inline std::vector<ProxSample> prox_samples(const ProxcheckSection& pc) {
    Philox4x32 rng(pc.seed, streams::kProxcheck);
    std::uniform_real_distribution<double> ys(-5.0, 5.0), ts(0.05, 2.0), ps(0.0, 1.0);
    std::vector<ProxSample> out(static_cast<std::size_t>(pc.samples));
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& s = out[i];
        s.index = i;
        s.y[0] = ys(rng);
        s.y[1] = ys(rng);
        s.tau1 = ts(rng);
        s.tau2 = ts(rng);
        s.psi = pc.psi ? *pc.psi : ps(rng);
    }
    return out;
}

inline int cmd_proxcheck(const Context& ctx, Outputs& out) {
    const ProxcheckSection& pc = ctx.config.proxcheck;
    std::vector<ProxSample> samples = prox_samples(pc);
    if (pc.psi && *pc.psi > 1.0) {
        *ctx.log << "notice: psi=" << fmt(*pc.psi)
                 << " > 1, closed-form partition does not apply; routed to oracle\n";
    }
    parallel_for(samples.size(), ctx.workers, [&](std::size_t i) {
        auto& s = samples[i];
        // The hook shifts the partition's corner points by inflating tau1.
        const double geom_tau1 = pc.inject_geometry_bug ? 1.25 * s.tau1 : s.tau1;
        const Vec2 closed = two_dim_soft_threshold(
            s.y, ThresholdGeometry::make(geom_tau1, s.tau2, s.psi));
        const Vec2 oracle = scalar_prox_oracle(s.y, s.tau1, s.tau2, pairwise_l1_utility(s.psi));
        s.deviation = (closed - oracle).lpNorm<Eigen::Infinity>();
    });
    std::vector<ProxSample> worst = samples;
    std::stable_sort(worst.begin(), worst.end(),
                     [](const ProxSample& a, const ProxSample& b) { return a.deviation > b.deviation; });
    worst.resize(std::min<std::size_t>(10, worst.size()));

    std::string csv = csv_row({"sample", "y1", "y2", "tau1", "tau2", "psi", "deviation"});
    for (const auto& s : worst) {
        csv += csv_row({std::to_string(s.index), fmt(s.y[0]), fmt(s.y[1]), fmt(s.tau1), fmt(s.tau2),
                        fmt(s.psi), fmt(s.deviation)});
    }
    const ProxSample& w = worst.front();
    const bool pass = w.deviation <= pc.tolerance;
    json j;
    j["samples"] = pc.samples;
    j["tolerance"] = pc.tolerance;
    j["max_deviation"] = w.deviation;
    j["worst"] = {{"sample", w.index}, {"y", {w.y[0], w.y[1]}}, {"tau1", w.tau1},
                  {"tau2", w.tau2}, {"psi", w.psi}};
    j["routed_to_oracle"] = pc.psi && *pc.psi > 1.0;
    j["status"] = pass ? "PASS" : "FAIL";
    out.add("proxcheck.json", j.dump(2) + "\n");
    out.add("proxcheck.csv", csv);

    if (pass) {
        *ctx.log << "PASS, max deviation <= " << fmt(pc.tolerance) << " (observed "
                 << fmt(w.deviation) << " over " << pc.samples << " samples)\n";
        return 0;
    }
    *ctx.log << "FAIL, max deviation " << fmt(w.deviation) << " > " << fmt(pc.tolerance)
             << " at y=(" << fmt(w.y[0]) << ", " << fmt(w.y[1]) << "), tau=(" << fmt(w.tau1)
             << ", " << fmt(w.tau2) << "), psi=" << fmt(w.psi) << "\n";
    return static_cast<int>(ExitCode::kInvariantViolation);
}

// ---------------------------------------------------------------- dispatch

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"replica", "fig2", "fig3", "simulate", "proxcheck"};
    return names;
}

struct Invocation {
    std::string command;
    std::string config_path;
    fs::path out;
    std::optional<std::uint64_t> seed;
    unsigned workers = 1;
};

/// Runs one command and maps failures onto the documented exit codes.
/// Outputs are written only after the config parsed and validated.
inline int run(const Invocation& inv, std::ostream& log = std::cout, std::ostream& err = std::cerr) {
    const auto start = std::chrono::steady_clock::now();
    try {
        Context ctx;
        ctx.config = load_config(inv.config_path);
        if (inv.seed) ctx.config.set_seed(*inv.seed);
        ctx.out = inv.out;
        ctx.workers = std::max(1u, inv.workers);
        ctx.log = &log;
        if (ctx.config.utility == UtilityKind::L21 && ctx.config.psi != 0.0 &&
            (inv.command == "replica" || inv.command == "simulate")) {
            log << "note: l21 utility ignores psi\n";
        }
        Outputs out(ctx);
        int code = 0;
        std::optional<InvariantError> deferred;
        try {
            if (inv.command == "replica") {
                code = cmd_replica(ctx, out);
            } else if (inv.command == "fig2") {
                code = cmd_fig2(ctx, out);
            } else if (inv.command == "fig3") {
                code = cmd_fig3(ctx, out);
            } else if (inv.command == "simulate") {
                code = cmd_simulate(ctx, out);
            } else if (inv.command == "proxcheck") {
                code = cmd_proxcheck(ctx, out);
            } else {
                throw ConfigError("unknown command '" + inv.command + "'");
            }
        } catch (const InvariantError& e) {
            deferred = e;
        }
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.write(inv.command, wall);
        if (deferred) {
            err << "error: " << deferred->what() << "\n";
            return static_cast<int>(ExitCode::kInvariantViolation);
        }
        return code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfigError);
    } catch (const ConvergenceError& e) {
        err << "non-convergence: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kNonConvergence);
    } catch (const NegativeVarianceError& e) {
        err << "non-convergence: " << e.what() << " (chi=" << e.chi << ", p=" << e.p << ")\n";
        return static_cast<int>(ExitCode::kNonConvergence);
    } catch (const std::invalid_argument& e) {
        err << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kConfigError);
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::kInvariantViolation);
    }
}

}  // namespace dsn::cli
