#pragma once

// Finite-N Monte Carlo: draw sources, Gaussian sensing matrices and noise,
// recover, and score with the per-sample distortion
//     (1/N) sum_n [ 0.5 (xhat_1n - x_1n)^2 + 0.5 (xhat_2n - x_2n)^2 ].
//
// Trial i uses seed base_seed + i. Inside a trial every random quantity has
// its own Philox stream (see streams:: in rng.hpp), so trials are independent
// of scheduling and of each other.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dsn/parallel.hpp"
#include "dsn/priors.hpp"
#include "dsn/recovery.hpp"
#include "dsn/replica.hpp"
#include "dsn/rng.hpp"

namespace dsn {

struct ExperimentConfig {
    int n = 100;
    std::array<double, 2> rho{0.8, 0.8};
    PriorParams prior;
    std::array<double, 2> noise_var{0.01, 0.01};
    RecoveryTuning tuning;
    int trials = 200;
    std::uint64_t base_seed = 1;
    SolverOptions solver;

    /// M_j = round(rho_j N).
    std::array<int, 2> rows() const {
        return {static_cast<int>(std::lround(rho[0] * n)), static_cast<int>(std::lround(rho[1] * n))};
    }

    void validate() const {
        if (n < 1) throw std::invalid_argument("N must be at least 1");
        if (trials < 1) throw std::invalid_argument("trials must be at least 1");
        for (int j = 0; j < 2; ++j) {
            if (!(rho[j] > 0.0) || !std::isfinite(rho[j])) {
                throw std::invalid_argument("compression ratio must be positive and finite");
            }
            if (!(noise_var[j] >= 0.0) || !std::isfinite(noise_var[j])) {
                throw std::invalid_argument("noise variance must be finite and nonnegative");
            }
        }
        for (int m : rows()) {
            if (m < 1) throw std::invalid_argument("round(rho_j N) must be at least 1");
        }
        prior.validate();
        tuning.validate();
    }
};

struct TrialData {
    RecoveryProblem problem;
    Estimates truth;
    std::array<Eigen::VectorXd, 2> noise;
};

/// Draws one instance of the measurement model y_j = A_j x_j + z_j.
inline TrialData generate_trial(const ExperimentConfig& config, std::uint64_t seed) {
    config.validate();
    const int n = config.n;
    const auto m = config.rows();
    TrialData d;
    Philox4x32 source_rng(seed, streams::kSources);
    const auto pairs = sample_sources(config.prior, static_cast<std::size_t>(n), source_rng);
    for (int j = 0; j < 2; ++j) {
        d.truth[j].resize(n);
        for (int i = 0; i < n; ++i) d.truth[j][i] = pairs[i][j];

        Philox4x32 matrix_rng(seed, j == 0 ? streams::kMatrix1 : streams::kMatrix2);
        std::normal_distribution<double> normal(0.0, 1.0);
        const double entry_sd = 1.0 / std::sqrt(static_cast<double>(m[j]));
        d.problem.A[j].resize(m[j], n);
        // Row-major fill so the draw order is independent of Eigen's storage order.
        for (int r = 0; r < m[j]; ++r) {
            for (int c = 0; c < n; ++c) d.problem.A[j](r, c) = entry_sd * normal(matrix_rng);
        }

        Philox4x32 noise_rng(seed, j == 0 ? streams::kNoise1 : streams::kNoise2);
        std::normal_distribution<double> noise(0.0, 1.0);
        const double noise_sd = std::sqrt(config.noise_var[j]);
        d.noise[j].resize(m[j]);
        for (int r = 0; r < m[j]; ++r) d.noise[j][r] = noise_sd * noise(noise_rng);

        d.problem.y[j] = d.problem.A[j] * d.truth[j] + d.noise[j];
    }
    return d;
}

struct TrialResult {
    std::uint64_t seed = 0;
    double distortion = 0.0;
    bool converged = true;
    int iterations = 0;
    double signal_power = 0.0;  // mean of x_jn^2 over both terminals
    double noise_power = 0.0;   // mean of z_jm^2 over both terminals
};

inline TrialResult run_trial(const ExperimentConfig& config, std::uint64_t seed) {
    const TrialData d = generate_trial(config, seed);
    const SolverReport report = solve_recovery(d.problem, config.tuning, config.solver);
    TrialResult r;
    r.seed = seed;
    r.converged = report.converged;
    r.iterations = report.iterations;
    double sq = 0.0;
    for (int j = 0; j < 2; ++j) sq += 0.5 * (report.x[j] - d.truth[j]).squaredNorm();
    r.distortion = sq / config.n;
    r.signal_power = (d.truth[0].squaredNorm() + d.truth[1].squaredNorm()) / (2.0 * config.n);
    r.noise_power = (d.noise[0].squaredNorm() + d.noise[1].squaredNorm()) /
                    static_cast<double>(d.noise[0].size() + d.noise[1].size());
    return r;
}

struct SimulationReport {
    ExperimentConfig config;
    std::vector<TrialResult> trials;  // every trial, in seed order
    std::vector<double> distortions;  // accepted trials only
    int flagged = 0;                  // non-converged trials, excluded
    bool warning = false;             // more than 10% flagged
    double mean = 0.0;
    double standard_error = 0.0;
    double mean_db = 0.0;
    double snr_db = 0.0;  // 10 log10(sum signal power / sum noise power)
};

/// Sum by recursive halving; fixed association for a given length.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline SimulationReport summarize(const ExperimentConfig& config, std::vector<TrialResult> trials) {
    SimulationReport rep;
    rep.config = config;
    rep.trials = std::move(trials);
    std::vector<double> signal, noise;
    for (const auto& t : rep.trials) {
        signal.push_back(t.signal_power);
        noise.push_back(t.noise_power);
        if (t.converged) {
            rep.distortions.push_back(t.distortion);
        } else {
            ++rep.flagged;
        }
    }
    rep.warning = 10 * rep.flagged > static_cast<int>(rep.trials.size());
    const std::size_t k = rep.distortions.size();
    if (k > 0) {
        rep.mean = pairwise_sum(rep.distortions.data(), k) / static_cast<double>(k);
        if (k > 1) {
            std::vector<double> dev(k);
            for (std::size_t i = 0; i < k; ++i) {
                dev[i] = (rep.distortions[i] - rep.mean) * (rep.distortions[i] - rep.mean);
            }
            const double var = pairwise_sum(dev.data(), k) / static_cast<double>(k - 1);
            rep.standard_error = std::sqrt(var / static_cast<double>(k));
        }
        rep.mean_db = to_db(rep.mean);
    } else {
        rep.mean = std::numeric_limits<double>::quiet_NaN();
        rep.mean_db = std::numeric_limits<double>::quiet_NaN();
    }
    const double ns = pairwise_sum(noise.data(), noise.size());
    const double ss = pairwise_sum(signal.data(), signal.size());
    rep.snr_db = ns > 0.0 ? 10.0 * std::log10(ss / ns) : std::numeric_limits<double>::infinity();
    return rep;
}

inline SimulationReport run_experiment(const ExperimentConfig& config, unsigned workers = 1) {
    config.validate();
    std::vector<TrialResult> results(static_cast<std::size_t>(config.trials));
    parallel_for(results.size(), workers, [&](std::size_t i) {
        results[i] = run_trial(config, config.base_seed + i);
    });
    return summarize(config, std::move(results));
}

}  // namespace dsn
