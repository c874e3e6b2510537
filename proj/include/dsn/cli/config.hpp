#pragma once

// JSON run configuration for the command-line front end. Every key is
// optional and defaults to the standard two-terminal setup; unknown keys are
// rejected so typos do not silently fall back to defaults.
//
// Schema (all sections optional):
//   prior:      {var_common, var_private, rate_common, rate_private}
//   rho, noise_var, lambda:   number or [terminal1, terminal2]
//   psi:        number >= 0
//   utility:    "two_dim" | "l21"
//   replica:    {damping, tol, max_iter, n_samples, seed}
//   simulation: {n, trials, seed, tol, max_iter}
//   fig2:       {lambdas, psis, simulate, simulate_lambdas, l21, overlay}
//   fig3:       {lambda, mse0_db, rho_grid, psis, resolution}
//   proxcheck:  {samples, psi, seed, tolerance, inject_geometry_bug}
// A run manifest (an object with "command" and "config") is accepted too and
// replays its resolved config.

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsn/errors.hpp"
#include "dsn/priors.hpp"
#include "dsn/recovery.hpp"
#include "dsn/replica.hpp"
#include "dsn/sim_harness.hpp"

namespace dsn::cli {

using json = nlohmann::json;

struct SimulationSection {
    int n = 100;
    int trials = 200;
    std::uint64_t seed = 1;
    double tol = 1e-8;
    int max_iter = 50'000;
};

struct Fig2Section {
    std::vector<double> lambdas{0.01, 0.02, 0.03, 0.04, 0.05, 0.06,
                                0.07, 0.08, 0.09, 0.10, 0.11, 0.12};
    std::vector<double> psis{0.0, 0.3, 0.8};
    bool simulate = false;
    std::vector<double> simulate_lambdas{0.02, 0.04, 0.08};
    bool l21 = false;
    std::vector<std::string> overlay;
};

struct Fig3Section {
    double lambda = 0.04;
    double mse0_db = -15.0;
    std::vector<double> rho_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> psis{0.0, 0.8};
    double resolution = 1e-3;
};

struct ProxcheckSection {
    int samples = 10'000;
    std::optional<double> psi;  // fixed coupling weight; random in [0, 1] when absent
    std::uint64_t seed = 1;
    double tolerance = 1e-6;
    bool inject_geometry_bug = false;  // test hook: perturbs the closed-form geometry
};

struct RunConfig {
    PriorParams prior;
    std::array<double, 2> rho{0.8, 0.8};
    std::array<double, 2> noise_var{0.01, 0.01};
    std::array<double, 2> lambda{0.04, 0.04};
    double psi = 0.0;
    UtilityKind utility = UtilityKind::TwoDimSoftThreshold;
    FixedPointOptions replica;
    SimulationSection simulation;
    Fig2Section fig2;
    Fig3Section fig3;
    ProxcheckSection proxcheck;

    /// Replica network at the given coupling, tuning and utility.
    NetworkConfig network(double psi_value, std::array<double, 2> lambdas,
                          UtilityKind kind) const {
        NetworkConfig c;
        for (int j = 0; j < 2; ++j) {
            c.terminals[j] = TerminalConfig{EnsembleSpec::marchenko_pastur(rho[j]), noise_var[j],
                                            lambdas[j]};
        }
        c.prior = prior;
        c.psi = psi_value;
        c.utility = kind;
        return c;
    }

    NetworkConfig network() const { return network(psi, lambda, utility); }

    ExperimentConfig experiment(double psi_value, std::array<double, 2> lambdas,
                                UtilityKind kind) const {
        ExperimentConfig e;
        e.n = simulation.n;
        e.rho = rho;
        e.prior = prior;
        e.noise_var = noise_var;
        e.tuning.lambda = lambdas;
        e.tuning.psi = kind == UtilityKind::L21 ? 0.0 : psi_value;
        e.tuning.penalty = kind == UtilityKind::L21 ? Penalty::L21 : Penalty::PairwiseL1;
        e.trials = simulation.trials;
        e.base_seed = simulation.seed;
        e.solver.tol = simulation.tol;
        e.solver.max_iter = simulation.max_iter;
        return e;
    }

    ExperimentConfig experiment() const { return experiment(psi, lambda, utility); }

    /// Applies a --seed override to every seeded component.
    void set_seed(std::uint64_t seed) {
        replica.seed = seed;
        simulation.seed = seed;
        proxcheck.seed = seed;
    }
};

inline const char* utility_name(UtilityKind k) {
    return k == UtilityKind::L21 ? "l21" : "two_dim";
}

namespace detail {

/// Best-effort source line of a JSON path: walks the object keys in order
/// through the raw text. Array indices resolve to their parent key's line.
inline int locate_line(const std::string& text, const std::vector<std::string>& path) {
    std::size_t pos = 0;
    bool found_any = false;
    for (const auto& key : path) {
        if (!key.empty() && key[0] == '[') continue;
        const std::size_t at = text.find("\"" + key + "\"", pos);
        if (at == std::string::npos) break;
        pos = at;
        found_any = true;
    }
    if (!found_any) return 1;
    int line = 1;
    for (std::size_t i = 0; i < pos; ++i) line += text[i] == '\n';
    return line;
}

class Reader {
public:
    Reader(std::string text, std::string source) : text_(std::move(text)), source_(std::move(source)) {}

    [[noreturn]] void fail(const std::vector<std::string>& path, const std::string& message) const {
        std::string field;
        for (const auto& p : path) {
            if (!p.empty() && p[0] == '[') {
                field += p;
            } else {
                field += (field.empty() ? "" : ".") + p;
            }
        }
        std::ostringstream os;
        os << source_ << ":" << locate_line(text_, path) << ": field '"
           << (field.empty() ? "<root>" : field) << "': " << message;
        throw ConfigError(os.str());
    }

    void only_keys(const json& obj, const std::vector<std::string>& path,
                   const std::set<std::string>& allowed) const {
        if (!obj.is_object()) fail(path, "expected an object");
        for (const auto& [key, value] : obj.items()) {
            (void)value;
            if (!allowed.count(key)) {
                auto p = path;
                p.push_back(key);
                fail(p, "unknown key");
            }
        }
    }

    double number(const json& v, const std::vector<std::string>& path, double lo, double hi,
                  bool lo_open = false) const {
        if (!v.is_number()) fail(path, "expected a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) fail(path, "must be finite");
        if (x < lo || (lo_open && x == lo) || x > hi) {
            std::ostringstream os;
            os << "value " << x << " outside " << (lo_open ? "(" : "[") << lo << ", " << hi << "]";
            fail(path, os.str());
        }
        return x;
    }

    long long integer(const json& v, const std::vector<std::string>& path, long long lo,
                      long long hi) const {
        if (!v.is_number_integer()) fail(path, "expected an integer");
        const long long x = v.get<long long>();
        if (x < lo || x > hi) {
            std::ostringstream os;
            os << "value " << x << " outside [" << lo << ", " << hi << "]";
            fail(path, os.str());
        }
        return x;
    }

    std::uint64_t seed(const json& v, const std::vector<std::string>& path) const {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
            fail(path, "expected a nonnegative integer seed");
        }
        return v.get<std::uint64_t>();
    }

    bool boolean(const json& v, const std::vector<std::string>& path) const {
        if (!v.is_boolean()) fail(path, "expected true or false");
        return v.get<bool>();
    }

    std::array<double, 2> pair(const json& v, const std::vector<std::string>& path, double lo,
                               double hi, bool lo_open) const {
        if (v.is_number()) {
            const double x = number(v, path, lo, hi, lo_open);
            return {x, x};
        }
        if (!v.is_array() || v.size() != 2) fail(path, "expected a number or a two-element array");
        std::array<double, 2> out{};
        for (int j = 0; j < 2; ++j) {
            auto p = path;
            p.push_back("[" + std::to_string(j) + "]");
            out[j] = number(v[j], p, lo, hi, lo_open);
        }
        return out;
    }

    std::vector<double> list(const json& v, const std::vector<std::string>& path, double lo,
                             double hi, bool lo_open) const {
        if (!v.is_array() || v.empty()) fail(path, "expected a non-empty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            auto p = path;
            p.push_back("[" + std::to_string(i) + "]");
            out.push_back(number(v[i], p, lo, hi, lo_open));
        }
        return out;
    }

private:
    std::string text_;
    std::string source_;
};

}  // namespace detail

inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        // Convert the byte offset to a line number.
        int line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i) line += text[i] == '\n';
        std::ostringstream os;
        os << source << ":" << line << ": malformed JSON: " << e.what();
        throw ConfigError(os.str());
    }
    const detail::Reader rd(text, source);
    if (root.is_object() && root.contains("command") && root.contains("config")) {
        root = root["config"];  // replay a run manifest
    }
    rd.only_keys(root, {}, {"prior", "rho", "noise_var", "lambda", "psi", "utility", "replica",
                            "simulation", "fig2", "fig3", "proxcheck"});
    RunConfig c;
    constexpr double kBig = 1e12;

    if (root.contains("prior")) {
        const json& p = root["prior"];
        rd.only_keys(p, {"prior"}, {"var_common", "var_private", "rate_common", "rate_private"});
        if (p.contains("var_common")) c.prior.var_common = rd.number(p["var_common"], {"prior", "var_common"}, 0, kBig);
        if (p.contains("var_private")) c.prior.var_private = rd.pair(p["var_private"], {"prior", "var_private"}, 0, kBig, false);
        if (p.contains("rate_common")) c.prior.rate_common = rd.number(p["rate_common"], {"prior", "rate_common"}, 0, 1);
        if (p.contains("rate_private")) c.prior.rate_private = rd.pair(p["rate_private"], {"prior", "rate_private"}, 0, 1, false);
    }
    if (root.contains("rho")) c.rho = rd.pair(root["rho"], {"rho"}, 0, kBig, true);
    if (root.contains("noise_var")) c.noise_var = rd.pair(root["noise_var"], {"noise_var"}, 0, kBig, false);
    if (root.contains("lambda")) c.lambda = rd.pair(root["lambda"], {"lambda"}, 0, kBig, true);
    if (root.contains("psi")) c.psi = rd.number(root["psi"], {"psi"}, 0, kBig);
    if (root.contains("utility")) {
        const json& u = root["utility"];
        if (u == "two_dim") {
            c.utility = UtilityKind::TwoDimSoftThreshold;
        } else if (u == "l21") {
            c.utility = UtilityKind::L21;
        } else {
            rd.fail({"utility"}, "expected \"two_dim\" or \"l21\"");
        }
    }
    if (root.contains("replica")) {
        const json& r = root["replica"];
        rd.only_keys(r, {"replica"}, {"damping", "tol", "max_iter", "n_samples", "seed"});
        if (r.contains("damping")) c.replica.damping = rd.number(r["damping"], {"replica", "damping"}, 0, 1, true);
        if (r.contains("tol")) c.replica.tol = rd.number(r["tol"], {"replica", "tol"}, 0, 1, true);
        if (r.contains("max_iter")) c.replica.max_iter = static_cast<int>(rd.integer(r["max_iter"], {"replica", "max_iter"}, 1, 100'000'000));
        if (r.contains("n_samples")) c.replica.n_samples = static_cast<std::size_t>(rd.integer(r["n_samples"], {"replica", "n_samples"}, static_cast<long long>(kMinChannelSamples), 1'000'000'000));
        if (r.contains("seed")) c.replica.seed = rd.seed(r["seed"], {"replica", "seed"});
    }
    if (root.contains("simulation")) {
        const json& s = root["simulation"];
        rd.only_keys(s, {"simulation"}, {"n", "trials", "seed", "tol", "max_iter"});
        if (s.contains("n")) c.simulation.n = static_cast<int>(rd.integer(s["n"], {"simulation", "n"}, 1, 1'000'000));
        if (s.contains("trials")) c.simulation.trials = static_cast<int>(rd.integer(s["trials"], {"simulation", "trials"}, 1, 100'000'000));
        if (s.contains("seed")) c.simulation.seed = rd.seed(s["seed"], {"simulation", "seed"});
        if (s.contains("tol")) c.simulation.tol = rd.number(s["tol"], {"simulation", "tol"}, 0, 1, true);
        if (s.contains("max_iter")) c.simulation.max_iter = static_cast<int>(rd.integer(s["max_iter"], {"simulation", "max_iter"}, 1, 100'000'000));
    }
    if (root.contains("fig2")) {
        const json& f = root["fig2"];
        rd.only_keys(f, {"fig2"}, {"lambdas", "psis", "simulate", "simulate_lambdas", "l21", "overlay"});
        if (f.contains("lambdas")) c.fig2.lambdas = rd.list(f["lambdas"], {"fig2", "lambdas"}, 0, kBig, true);
        if (f.contains("psis")) c.fig2.psis = rd.list(f["psis"], {"fig2", "psis"}, 0, 1, false);
        if (f.contains("simulate")) c.fig2.simulate = rd.boolean(f["simulate"], {"fig2", "simulate"});
        if (f.contains("simulate_lambdas")) c.fig2.simulate_lambdas = rd.list(f["simulate_lambdas"], {"fig2", "simulate_lambdas"}, 0, kBig, true);
        if (f.contains("l21")) c.fig2.l21 = rd.boolean(f["l21"], {"fig2", "l21"});
        if (f.contains("overlay")) {
            const json& o = f["overlay"];
            if (!o.is_array()) rd.fail({"fig2", "overlay"}, "expected an array of report paths");
            for (std::size_t i = 0; i < o.size(); ++i) {
                if (!o[i].is_string()) rd.fail({"fig2", "overlay", "[" + std::to_string(i) + "]"}, "expected a path string");
                c.fig2.overlay.push_back(o[i].get<std::string>());
            }
        }
    }
    if (root.contains("fig3")) {
        const json& f = root["fig3"];
        rd.only_keys(f, {"fig3"}, {"lambda", "mse0_db", "rho_grid", "psis", "resolution"});
        if (f.contains("lambda")) c.fig3.lambda = rd.number(f["lambda"], {"fig3", "lambda"}, 0, kBig, true);
        if (f.contains("mse0_db")) c.fig3.mse0_db = rd.number(f["mse0_db"], {"fig3", "mse0_db"}, -1000, 1000);
        if (f.contains("rho_grid")) c.fig3.rho_grid = rd.list(f["rho_grid"], {"fig3", "rho_grid"}, 0, 1, true);
        if (f.contains("psis")) c.fig3.psis = rd.list(f["psis"], {"fig3", "psis"}, 0, 1, false);
        if (f.contains("resolution")) c.fig3.resolution = rd.number(f["resolution"], {"fig3", "resolution"}, 0, 1, true);
    }
    if (root.contains("proxcheck")) {
        const json& f = root["proxcheck"];
        rd.only_keys(f, {"proxcheck"}, {"samples", "psi", "seed", "tolerance", "inject_geometry_bug"});
        if (f.contains("samples")) c.proxcheck.samples = static_cast<int>(rd.integer(f["samples"], {"proxcheck", "samples"}, 1, 100'000'000));
        if (f.contains("psi") && !f["psi"].is_null()) c.proxcheck.psi = rd.number(f["psi"], {"proxcheck", "psi"}, 0, kBig);
        if (f.contains("seed")) c.proxcheck.seed = rd.seed(f["seed"], {"proxcheck", "seed"});
        if (f.contains("tolerance")) c.proxcheck.tolerance = rd.number(f["tolerance"], {"proxcheck", "tolerance"}, 0, 1, true);
        if (f.contains("inject_geometry_bug")) c.proxcheck.inject_geometry_bug = rd.boolean(f["inject_geometry_bug"], {"proxcheck", "inject_geometry_bug"});
    }
    // Cross-field checks.
    for (int j = 0; j < 2; ++j) {
        if (std::lround(c.rho[j] * c.simulation.n) < 1) {
            rd.fail({"rho"}, "round(rho_j * simulation.n) must be at least 1");
        }
    }
    if (c.utility == UtilityKind::TwoDimSoftThreshold && c.psi > 1.0) {
        // The replica side routes psi > 1 to the oracle; the finite-N solver does not.
        rd.fail({"psi"}, "psi must lie in [0, 1] for the two_dim utility");
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(path + ": cannot open config file");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

/// Resolved configuration, every default filled in. Parsing it back yields
/// the same RunConfig.
inline json to_json(const RunConfig& c) {
    json j;
    j["prior"] = {{"var_common", c.prior.var_common},
                  {"var_private", c.prior.var_private},
                  {"rate_common", c.prior.rate_common},
                  {"rate_private", c.prior.rate_private}};
    j["rho"] = c.rho;
    j["noise_var"] = c.noise_var;
    j["lambda"] = c.lambda;
    j["psi"] = c.psi;
    j["utility"] = utility_name(c.utility);
    j["replica"] = {{"damping", c.replica.damping},
                    {"tol", c.replica.tol},
                    {"max_iter", c.replica.max_iter},
                    {"n_samples", c.replica.n_samples},
                    {"seed", c.replica.seed}};
    j["simulation"] = {{"n", c.simulation.n},
                       {"trials", c.simulation.trials},
                       {"seed", c.simulation.seed},
                       {"tol", c.simulation.tol},
                       {"max_iter", c.simulation.max_iter}};
    j["fig2"] = {{"lambdas", c.fig2.lambdas},
                 {"psis", c.fig2.psis},
                 {"simulate", c.fig2.simulate},
                 {"simulate_lambdas", c.fig2.simulate_lambdas},
                 {"l21", c.fig2.l21},
                 {"overlay", c.fig2.overlay}};
    j["fig3"] = {{"lambda", c.fig3.lambda},
                 {"mse0_db", c.fig3.mse0_db},
                 {"rho_grid", c.fig3.rho_grid},
                 {"psis", c.fig3.psis},
                 {"resolution", c.fig3.resolution}};
    j["proxcheck"] = {{"samples", c.proxcheck.samples},
                      {"psi", c.proxcheck.psi ? json(*c.proxcheck.psi) : json(nullptr)},
                      {"seed", c.proxcheck.seed},
                      {"tolerance", c.proxcheck.tolerance},
                      {"inject_geometry_bug", c.proxcheck.inject_geometry_bug}};
    return j;
}

}  // namespace dsn::cli
