#pragma once

// Replica-symmetric fixed point of the decoupled two-terminal network and the
// asymptotic distortion evaluated over it.
//
// Per terminal j the decoupled channel is y_j = x_j + z_j, z_j ~ N(0, theta_j^2),
// followed by the single-letter estimator with tuning (tau_1, tau_2). The
// fixed point couples
//     p_j     = E[(xhat_j - x_j)^2]
//     chi_j   = tau_j E[(xhat_j - x_j) z_j] / theta_j^2
// with tau_j = effective_tuning(chi_j) and theta_j^2 = effective_noise_variance(chi_j, p_j).
// Expectations are Monte Carlo averages over one fixed set of draws (common
// random numbers), so the damped Picard iteration is a deterministic map.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "dsn/errors.hpp"
#include "dsn/priors.hpp"
#include "dsn/rng.hpp"
#include "dsn/scalar_map.hpp"
#include "dsn/spectra.hpp"

namespace dsn {

enum class UtilityKind { TwoDimSoftThreshold, L21, Custom };

/// xhat = estimator(y, tau1, tau2).
using ScalarEstimator = std::function<Vec2(const Vec2&, double, double)>;
/// d(xhat; x) for one sample.
using Distortion = std::function<double(const Vec2&, const Vec2&)>;

/// 0.5 (xhat_1 - x_1)^2 + 0.5 (xhat_2 - x_2)^2.
inline double mean_squared_distortion(const Vec2& xhat, const Vec2& x) {
    return 0.5 * (xhat - x).squaredNorm();
}

inline double to_db(double value) {
    return value > 0.0 ? 10.0 * std::log10(value) : -std::numeric_limits<double>::infinity();
}

struct TerminalConfig {
    EnsembleSpec ensemble = EnsembleSpec::marchenko_pastur(0.8);
    double noise_var = 0.01;
    double lambda = 0.04;
};

struct NetworkConfig {
    std::array<TerminalConfig, 2> terminals;
    PriorParams prior;
    double psi = 0.0;
    UtilityKind utility = UtilityKind::TwoDimSoftThreshold;
    ScalarEstimator custom_estimator;  // used when utility == Custom
    Distortion distortion;             // empty means mean_squared_distortion

    void validate() const {
        prior.validate();
        for (const auto& t : terminals) {
            if (!(t.noise_var >= 0.0) || !std::isfinite(t.noise_var)) {
                throw std::invalid_argument("noise variance must be finite and nonnegative");
            }
            if (!(t.lambda > 0.0) || !std::isfinite(t.lambda)) {
                throw std::invalid_argument("lambda must be positive and finite");
            }
        }
        if (!(psi >= 0.0) || !std::isfinite(psi)) {
            throw std::invalid_argument("psi must be finite and nonnegative");
        }
        if (utility == UtilityKind::Custom && !custom_estimator) {
            throw std::invalid_argument("custom utility requires an estimator");
        }
    }

    Vec2 estimate(const Vec2& y, double tau1, double tau2) const {
        switch (utility) {
            case UtilityKind::TwoDimSoftThreshold:
                return two_dim_soft_threshold(y, ThresholdGeometry{tau1, tau2, psi});
            case UtilityKind::L21:
                return weighted_block_soft_threshold(y, tau1, tau2);
            case UtilityKind::Custom:
                return custom_estimator(y, tau1, tau2);
        }
        return Vec2::Zero();
    }

    double distortion_of(const Vec2& xhat, const Vec2& x) const {
        return distortion ? distortion(xhat, x) : mean_squared_distortion(xhat, x);
    }

    /// Symmetric standard setup: rho_1 = rho_2 = rho, sigma_j^2 = 0.01, lambda_1 = lambda_2.
    static NetworkConfig standard(double rho, double lambda, double psi) {
        NetworkConfig c;
        for (auto& t : c.terminals) {
            t = TerminalConfig{EnsembleSpec::marchenko_pastur(rho), 0.01, lambda};
        }
        c.psi = psi;
        return c;
    }
};

struct TerminalState {
    double chi = 0.0;
    double p = 0.0;
    double tau = 0.0;
    double theta2 = 0.0;
    double p_stderr = 0.0;  // Monte Carlo standard error of p at the fixed point
};

struct ReplicaState {
    std::array<TerminalState, 2> terminals{};
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_trace;

    /// (p_1 + p_2) / 2, the mean squared distortion at the fixed point.
    double mse() const { return 0.5 * (terminals[0].p + terminals[1].p); }
    double mse_db() const { return to_db(mse()); }
};

/// Minimum sample count accepted by the channel expectations.
inline constexpr std::size_t kMinChannelSamples = 1000;
inline constexpr std::size_t kChannelBlock = 4096;

/// One fixed set of draws: sources from the prior and standard normals.
struct ChannelSamples {
    std::vector<Vec2> x;
    std::vector<Vec2> xi;

    std::size_t size() const { return x.size(); }

    /// Block b uses stream (seed, kReplicaBase + b), so the draws do not depend
    /// on how blocks are later distributed over workers.
    ///
    /// When the prior is exchangeable in the two terminals every odd sample is
    /// the terminal swap of the preceding one. Symmetric networks then produce
    /// symmetric moments up to rounding instead of up to Monte Carlo error.
    static ChannelSamples draw(const PriorParams& prior, std::size_t n, std::uint64_t seed) {
        if (n < kMinChannelSamples) {
            std::ostringstream os;
            os << "channel expectations need at least " << kMinChannelSamples
               << " samples, got " << n;
            throw std::invalid_argument(os.str());
        }
        prior.validate();
        const bool paired = prior.var_private[0] == prior.var_private[1] &&
                            prior.rate_private[0] == prior.rate_private[1];
        ChannelSamples s;
        s.x.reserve(n);
        s.xi.reserve(n);
        for (std::size_t start = 0, block = 0; start < n; start += kChannelBlock, ++block) {
            Philox4x32 rng(seed, streams::kReplicaBase + block);
            std::normal_distribution<double> normal(0.0, 1.0);
            const std::size_t end = std::min(n, start + kChannelBlock);
            for (std::size_t i = start; i < end; ++i) {
                if (paired && (i - start) % 2 == 1) {
                    s.x.push_back(s.x.back().reverse().eval());
                    s.xi.push_back(s.xi.back().reverse().eval());
                    continue;
                }
                s.x.push_back(sample_source(prior, rng));
                const double a = normal(rng);
                const double b = normal(rng);
                s.xi.emplace_back(a, b);
            }
        }
        return s;
    }

    /// Marginal draws for a single terminal j, stored in slot 0 of x / xi.
    static ChannelSamples draw_marginal(const PriorParams& prior, int j, std::size_t n,
                                        std::uint64_t seed) {
        if (n < kMinChannelSamples) {
            throw std::invalid_argument("channel expectations need at least 1000 samples");
        }
        ChannelSamples s;
        s.x.reserve(n);
        s.xi.reserve(n);
        for (std::size_t start = 0, block = 0; start < n; start += kChannelBlock, ++block) {
            Philox4x32 rng(seed, streams::kReplicaBase + block);
            std::normal_distribution<double> normal(0.0, 1.0);
            const std::size_t end = std::min(n, start + kChannelBlock);
            for (std::size_t i = start; i < end; ++i) {
                s.x.emplace_back(sample_marginal(prior, j, rng), 0.0);
                s.xi.emplace_back(normal(rng), 0.0);
            }
        }
        return s;
    }
};

/// Per-terminal channel moments.
struct ChannelMoments {
    std::array<double, 2> sq_error{};        // E[(xhat_j - x_j)^2]
    std::array<double, 2> cross{};           // E[(xhat_j - x_j) z_j], z_j ~ N(0, theta_j^2)
    std::array<double, 2> response{};        // E[(xhat_j - x_j) z_j] / theta_j^2
    std::array<double, 2> sq_error_stderr{};
    /// Covariance of one sampling unit of (e_1^2, r_1, e_2^2, r_2), where r_j is
    /// the per-sample response term, and the number of units behind the means.
    Eigen::Matrix4d unit_covariance = Eigen::Matrix4d::Zero();
    double units = 0.0;
};

namespace detail {

/// Pairwise (block-ordered) accumulation of a per-sample vector statistic.
template <std::size_t K, class PerSample>
std::array<double, K> block_sum(std::size_t n, PerSample&& per_sample) {
    std::array<double, K> total{};
    for (std::size_t start = 0; start < n; start += kChannelBlock) {
        std::array<double, K> partial{};
        const std::size_t end = std::min(n, start + kChannelBlock);
        for (std::size_t i = start; i < end; ++i) {
            per_sample(i, partial);
        }
        for (std::size_t k = 0; k < K; ++k) {
            total[k] += partial[k];
        }
    }
    return total;
}

/// Moments of an estimator over CRN draws. When theta_j = 0 the response is
/// the limit E[d xhat_j / d y_j], taken by central differences.
///
/// Second moments are taken over consecutive pairs of samples, which are the
/// independent units when the draws are swap-paired.
template <class Estimator>
ChannelMoments channel_moments(const ChannelSamples& s, const std::array<double, 2>& tau,
                               const std::array<double, 2>& theta2, int terminals,
                               Estimator&& estimate) {
    const std::size_t n = s.size();
    const std::array<double, 2> theta{std::sqrt(theta2[0]), std::sqrt(theta2[1])};
    Eigen::Vector4d unit = Eigen::Vector4d::Zero();
    // Layout: [0, 4) sums of u, [4, 20) sums of unit outer products.
    const auto sums = block_sum<20>(n, [&](std::size_t i, std::array<double, 20>& acc) {
        const Vec2& x = s.x[i];
        const Vec2 y(x[0] + theta[0] * s.xi[i][0], x[1] + theta[1] * s.xi[i][1]);
        const Vec2 err = estimate(y, tau) - x;
        Eigen::Vector4d u = Eigen::Vector4d::Zero();
        for (int j = 0; j < terminals; ++j) {
            u[2 * j] = err[j] * err[j];
            if (theta[j] > 0.0) {
                u[2 * j + 1] = err[j] * s.xi[i][j] / theta[j];
            } else {
                const double h = 1e-7 * (1.0 + std::abs(y[j]));
                Vec2 up = y, dn = y;
                up[j] += h;
                dn[j] -= h;
                u[2 * j + 1] = (estimate(up, tau)[j] - estimate(dn, tau)[j]) / (2 * h);
            }
        }
        for (int k = 0; k < 4; ++k) acc[k] += u[k];
        const bool closes_unit = i % 2 == 1 || i + 1 == n;
        unit = i % 2 == 0 ? u : Eigen::Vector4d(0.5 * (unit + u));
        if (closes_unit) {
            for (int r = 0; r < 4; ++r) {
                for (int c = 0; c < 4; ++c) acc[4 + 4 * r + c] += unit[r] * unit[c];
            }
        }
    });
    ChannelMoments m;
    const double nn = static_cast<double>(n);
    m.units = std::ceil(nn / 2);
    Eigen::Vector4d mean;
    for (int k = 0; k < 4; ++k) mean[k] = sums[k] / nn;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            m.unit_covariance(r, c) = sums[4 + 4 * r + c] / m.units - mean[r] * mean[c];
        }
    }
    for (int j = 0; j < terminals; ++j) {
        m.sq_error[j] = mean[2 * j];
        m.sq_error_stderr[j] = std::sqrt(std::max(0.0, m.unit_covariance(2 * j, 2 * j)) / m.units);
        m.response[j] = mean[2 * j + 1];
        m.cross[j] = theta2[j] * mean[2 * j + 1];
    }
    return m;
}

struct TerminalSpec {
    const EnsembleSpec* ensemble;
    double noise_var;
    double lambda;
};

inline double relative_change(double before, double after) {
    const double delta = std::abs(after - before);
    if (delta == 0.0) {
        return 0.0;
    }
    return delta / std::max(std::abs(before), std::abs(after));
}

}  // namespace detail

struct FixedPointOptions {
    double damping = 0.5;
    double tol = 1e-7;
    int max_iter = 3000;
    std::size_t n_samples = 200'000;
    std::uint64_t seed = 1;
    /// Overrides for the starting point; defaults are p_j = E[x_j^2], chi_j = p_j / lambda_j.
    std::optional<std::array<double, 2>> initial_p;
    std::optional<std::array<double, 2>> initial_chi;

    void validate() const {
        if (!(damping > 0.0 && damping <= 1.0)) {
            throw std::invalid_argument("damping must lie in (0, 1]");
        }
        if (!(tol > 0.0)) {
            throw std::invalid_argument("tolerance must be positive");
        }
        if (max_iter < 1) {
            throw std::invalid_argument("max_iter must be at least 1");
        }
    }
};

/// Fills tau_j and theta_j^2 from (chi_j, p_j).
inline void refresh_derived(ReplicaState& state, const NetworkConfig& config) {
    for (int j = 0; j < 2; ++j) {
        auto& t = state.terminals[j];
        const auto& c = config.terminals[j];
        t.tau = effective_tuning(c.ensemble, t.chi, c.lambda);
        t.theta2 = effective_noise_variance(c.ensemble, t.chi, t.p, c.lambda, c.noise_var);
    }
}

/// Channel moments at `state` over prepared CRN draws.
inline ChannelMoments channel_expectations(const ReplicaState& state, const NetworkConfig& config,
                                           const ChannelSamples& samples) {
    const std::array<double, 2> tau{state.terminals[0].tau, state.terminals[1].tau};
    const std::array<double, 2> theta2{state.terminals[0].theta2, state.terminals[1].theta2};
    for (double t2 : theta2) {
        if (!(t2 >= 0.0)) {
            throw std::invalid_argument("channel expectations need theta^2 >= 0");
        }
    }
    return detail::channel_moments(samples, tau, theta2, 2,
                                   [&](const Vec2& y, const std::array<double, 2>& t) {
                                       return config.estimate(y, t[0], t[1]);
                                   });
}

/// Convenience overload drawing fresh samples from `seed`.
inline ChannelMoments channel_expectations(const ReplicaState& state, const NetworkConfig& config,
                                           std::size_t n_samples, std::uint64_t seed) {
    return channel_expectations(state, config,
                                ChannelSamples::draw(config.prior, n_samples, seed));
}

namespace detail {

/// Standard error of a fixed point of the CRN map v -> F(v), v = (p_j, chi_j)_j.
/// Sampling noise e in F moves the fixed point by (I - dF/dv)^-1 e; dF/dv is
/// taken by central differences on the same draws.
template <std::size_t J, class Moments>
void attach_stderr(ReplicaState& state, const std::array<TerminalSpec, J>& spec,
                   const std::array<double, J>& p, const std::array<double, J>& chi,
                   Moments&& moments) {
    constexpr int K = 2 * static_cast<int>(J);
    using Vec = Eigen::Matrix<double, K, 1>;
    using Mat = Eigen::Matrix<double, K, K>;
    Vec v;
    for (std::size_t j = 0; j < J; ++j) {
        v[2 * j] = p[j];
        v[2 * j + 1] = chi[j];
    }
    ChannelMoments at_fixed_point;
    auto map = [&](const Vec& w, ChannelMoments* keep) {
        ReplicaState s;
        for (std::size_t j = 0; j < J; ++j) {
            auto& t = s.terminals[j];
            t.p = w[2 * j];
            t.chi = w[2 * j + 1];
            t.tau = effective_tuning(*spec[j].ensemble, t.chi, spec[j].lambda);
            t.theta2 = effective_noise_variance(*spec[j].ensemble, t.chi, t.p, spec[j].lambda,
                                                spec[j].noise_var);
        }
        const ChannelMoments m = moments(s);
        if (keep) *keep = m;
        Vec f;
        for (std::size_t j = 0; j < J; ++j) {
            f[2 * j] = m.sq_error[j];
            f[2 * j + 1] = s.terminals[j].tau * m.response[j];
        }
        return f;
    };
    try {
        (void)map(v, &at_fixed_point);
        Mat jac;
        for (int k = 0; k < K; ++k) {
            const double h = 1e-3 * std::max(std::abs(v[k]), 1e-6);
            Vec up = v, dn = v;
            up[k] += h;
            dn[k] = std::max(0.0, v[k] - h);
            jac.col(k) = (map(up, nullptr) - map(dn, nullptr)) / (up[k] - dn[k]);
        }
        Mat scale = Mat::Zero();
        Mat noise;
        for (int r = 0; r < K; ++r) {
            scale(r, r) = r % 2 == 0 ? 1.0 : state.terminals[r / 2].tau;
            for (int c = 0; c < K; ++c) noise(r, c) = at_fixed_point.unit_covariance(r, c);
        }
        noise = scale * noise * scale / at_fixed_point.units;
        const Mat gain = (Mat::Identity() - jac).inverse();
        const Mat cov = gain * noise * gain.transpose();
        bool finite = cov.allFinite();
        for (std::size_t j = 0; j < J; ++j) {
            finite = finite && cov(2 * j, 2 * j) >= 0.0;
        }
        for (std::size_t j = 0; j < J; ++j) {
            state.terminals[j].p_stderr = finite ? std::sqrt(cov(2 * j, 2 * j))
                                                 : at_fixed_point.sq_error_stderr[j];
        }
    } catch (const std::exception&) {
        // Perturbed points left the valid domain; keep the per-evaluation error.
        for (std::size_t j = 0; j < J; ++j) {
            state.terminals[j].p_stderr = at_fixed_point.sq_error_stderr[j];
        }
    }
}

/// Damped Picard iteration shared by the two-terminal and single-terminal solvers.
template <std::size_t J, class Moments>
ReplicaState iterate(const std::array<TerminalSpec, J>& spec, std::array<double, J> p,
                     std::array<double, J> chi, const FixedPointOptions& opt,
                     Moments&& moments) {
    ReplicaState state;
    auto derive = [&](std::size_t j) {
        auto& t = state.terminals[j];
        t.chi = chi[j];
        t.p = p[j];
        t.tau = effective_tuning(*spec[j].ensemble, chi[j], spec[j].lambda);
        t.theta2 = effective_noise_variance(*spec[j].ensemble, chi[j], p[j], spec[j].lambda,
                                            spec[j].noise_var);
    };
    for (std::size_t j = 0; j < J; ++j) derive(j);

    const double a = opt.damping;
    for (int it = 1; it <= opt.max_iter; ++it) {
        const ChannelMoments m = moments(state);
        double residual = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            const auto& t = state.terminals[j];
            const double p_new = (1 - a) * p[j] + a * m.sq_error[j];
            const double chi_new = (1 - a) * chi[j] + a * t.tau * m.response[j];
            residual = std::max({residual, relative_change(p[j], p_new),
                                 relative_change(chi[j], chi_new)});
            p[j] = p_new;
            chi[j] = chi_new;
        }
        for (std::size_t j = 0; j < J; ++j) derive(j);
        state.iterations = it;
        state.residual = residual;
        state.residual_trace.push_back(residual);
        if (residual <= opt.tol) {
            attach_stderr(state, spec, p, chi, moments);
            return state;
        }
    }
    std::ostringstream os;
    os << "replica fixed point did not converge in " << opt.max_iter
       << " iterations (residual " << state.residual << ")";
    throw ConvergenceError(os.str(), state.residual_trace);
}

}  // namespace detail

/// Damped iteration
///   p_j   <- (1 - a) p_j   + a E[(xhat_j - x_j)^2]
///   chi_j <- (1 - a) chi_j + a tau_j E[(xhat_j - x_j) z_j] / theta_j^2
/// until the largest relative update is at most `tol`.
inline ReplicaState solve_fixed_point(const NetworkConfig& config,
                                      const FixedPointOptions& opt = {}) {
    config.validate();
    opt.validate();
    const ChannelSamples samples = ChannelSamples::draw(config.prior, opt.n_samples, opt.seed);

    std::array<detail::TerminalSpec, 2> spec;
    std::array<double, 2> p{}, chi{};
    for (int j = 0; j < 2; ++j) {
        const auto& c = config.terminals[j];
        spec[j] = {&c.ensemble, c.noise_var, c.lambda};
        p[j] = opt.initial_p ? (*opt.initial_p)[j] : config.prior.second_moment(j);
        chi[j] = opt.initial_chi ? (*opt.initial_chi)[j] : p[j] / c.lambda;
    }
    return detail::iterate(spec, p, chi, opt, [&](const ReplicaState& s) {
        return channel_expectations(s, config, samples);
    });
}

/// Single-terminal fixed point for terminal j with the marginal prior of x_j and
/// the scalar soft threshold (the psi = 0 estimator). Result in terminals[0].
inline ReplicaState solve_single_terminal(const TerminalConfig& terminal, const PriorParams& prior,
                                          int j, const FixedPointOptions& opt = {}) {
    opt.validate();
    const ChannelSamples samples = ChannelSamples::draw_marginal(prior, j, opt.n_samples, opt.seed);
    const std::array<detail::TerminalSpec, 1> spec{
        detail::TerminalSpec{&terminal.ensemble, terminal.noise_var, terminal.lambda}};
    const double p0 = opt.initial_p ? (*opt.initial_p)[0] : prior.second_moment(j);
    const double chi0 = opt.initial_chi ? (*opt.initial_chi)[0] : p0 / terminal.lambda;
    return detail::iterate(spec, std::array<double, 1>{p0}, std::array<double, 1>{chi0}, opt,
                           [&](const ReplicaState& s) {
                               const auto& t = s.terminals[0];
                               return detail::channel_moments(
                                   samples, {t.tau, 1.0}, {t.theta2, 0.0}, 1,
                                   [](const Vec2& y, const std::array<double, 2>& tau) {
                                       return Vec2(soft_threshold(y[0], tau[0]), 0.0);
                                   });
                           });
}

struct DistortionEstimate {
    double value = 0.0;
    double standard_error = 0.0;
    double db() const { return to_db(value); }
};

/// E[d(xhat; x)] over the decoupled channel at `state`, with fresh draws.
inline DistortionEstimate asymptotic_distortion(const ReplicaState& state,
                                                const NetworkConfig& config,
                                                std::size_t n_samples, std::uint64_t seed) {
    const ChannelSamples s = ChannelSamples::draw(config.prior, n_samples, seed);
    const double th1 = std::sqrt(state.terminals[0].theta2);
    const double th2 = std::sqrt(state.terminals[1].theta2);
    const double t1 = state.terminals[0].tau;
    const double t2 = state.terminals[1].tau;
    const auto sums = detail::block_sum<2>(s.size(), [&](std::size_t i, std::array<double, 2>& acc) {
        const Vec2& x = s.x[i];
        const Vec2 y(x[0] + th1 * s.xi[i][0], x[1] + th2 * s.xi[i][1]);
        const double d = config.distortion_of(config.estimate(y, t1, t2), x);
        acc[0] += d;
        acc[1] += d * d;
    });
    const double n = static_cast<double>(s.size());
    DistortionEstimate out;
    out.value = sums[0] / n;
    out.standard_error = std::sqrt(std::max(0.0, sums[1] / n - out.value * out.value) / n);
    return out;
}

}  // namespace dsn
