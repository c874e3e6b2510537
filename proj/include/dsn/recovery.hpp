#pragma once

// Finite-N joint MAP recovery for two terminals:
//     minimize  sum_j ||y_j - A_j v_j||^2 / (2 lambda_j) + w * u(v_1, v_2)
// with u either ||v_1||_1 + ||v_2||_1 + psi ||v_1 - v_2||_1 (pairwise coupling)
// or sum_n sqrt(v_1n^2 + v_2n^2) (l2,1 group norm). Solved by monotone FISTA
// whose per-sample proximal step is the scalar map from scalar_map.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dsn/scalar_map.hpp"

namespace dsn {

enum class Penalty { PairwiseL1, L21 };

struct RecoveryProblem {
    std::array<Eigen::MatrixXd, 2> A;
    std::array<Eigen::VectorXd, 2> y;

    Eigen::Index n() const { return A[0].cols(); }

    void validate() const {
        const Eigen::Index cols = A[0].cols();
        if (cols < 1) {
            throw std::invalid_argument("recovery problem needs N >= 1");
        }
        for (int j = 0; j < 2; ++j) {
            if (A[j].rows() < 1) {
                throw std::invalid_argument("recovery problem needs M_j >= 1");
            }
            if (A[j].cols() != cols) {
                throw std::invalid_argument("sensing matrices disagree on N");
            }
            if (y[j].size() != A[j].rows()) {
                std::ostringstream os;
                os << "measurement " << j << " has length " << y[j].size() << ", expected "
                   << A[j].rows();
                throw std::invalid_argument(os.str());
            }
        }
    }
};

struct RecoveryTuning {
    std::array<double, 2> lambda{0.04, 0.04};
    double psi = 0.0;
    Penalty penalty = Penalty::PairwiseL1;
    double penalty_weight = 1.0;

    void validate() const {
        for (double l : lambda) {
            if (!(l > 0.0) || !std::isfinite(l)) {
                throw std::invalid_argument("lambda must be positive and finite");
            }
        }
        if (!(psi >= 0.0 && psi <= 1.0)) {
            throw std::invalid_argument("psi must lie in [0, 1] for recovery");
        }
        if (!(penalty_weight > 0.0) || !std::isfinite(penalty_weight)) {
            throw std::invalid_argument("penalty weight must be positive and finite");
        }
    }
};

struct SolverOptions {
    double tol = 1e-8;            // relative objective change
    double gradient_tol = 1e-6;   // sup-norm of the prox-gradient residual over the penalty weight
    int max_iter = 50'000;
    double step_factor = 0.99;    // gamma = step_factor / L
};

struct SolverReport {
    std::array<Eigen::VectorXd, 2> x;
    std::vector<double> objective_trace;
    int iterations = 0;
    double relative_change = 0.0;
    double step = 0.0;
    bool converged = false;
};

using Estimates = std::array<Eigen::VectorXd, 2>;

inline double penalty_value(const RecoveryTuning& tuning, const Estimates& v) {
    double u = 0.0;
    if (tuning.penalty == Penalty::PairwiseL1) {
        u = v[0].lpNorm<1>() + v[1].lpNorm<1>() + tuning.psi * (v[0] - v[1]).lpNorm<1>();
    } else {
        u = (v[0].array().square() + v[1].array().square()).sqrt().sum();
    }
    return tuning.penalty_weight * u;
}

inline double data_term(const RecoveryProblem& problem, const RecoveryTuning& tuning,
                        const Estimates& v) {
    double f = 0.0;
    for (int j = 0; j < 2; ++j) {
        f += (problem.y[j] - problem.A[j] * v[j]).squaredNorm() / (2.0 * tuning.lambda[j]);
    }
    return f;
}

inline double objective(const RecoveryProblem& problem, const RecoveryTuning& tuning,
                        const Estimates& v) {
    problem.validate();
    for (int j = 0; j < 2; ++j) {
        if (v[j].size() != problem.n()) {
            throw std::invalid_argument("estimate length does not match N");
        }
    }
    return data_term(problem, tuning, v) + penalty_value(tuning, v);
}

/// Gradient of the data term.
inline Estimates data_gradient(const RecoveryProblem& problem, const RecoveryTuning& tuning,
                               const Estimates& v) {
    Estimates g;
    for (int j = 0; j < 2; ++j) {
        g[j] = problem.A[j].transpose() * (problem.A[j] * v[j] - problem.y[j]) / tuning.lambda[j];
    }
    return g;
}

/// Largest eigenvalue of A^T A by power iteration from a fixed start.
inline double spectral_norm_squared(const Eigen::MatrixXd& A, int iterations = 50,
                                    double rel_tol = 1e-6) {
    Eigen::VectorXd v = Eigen::VectorXd::Ones(A.cols());
    // Break symmetry so the start is not orthogonal to the top eigenvector by accident.
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] += 1e-3 * static_cast<double>(i);
    v.normalize();
    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        Eigen::VectorXd w = A.transpose() * (A * v);
        const double next = v.dot(w);
        const double norm = w.norm();
        if (norm == 0.0) {
            return 0.0;
        }
        v = w / norm;
        const bool done = std::abs(next - estimate) <= rel_tol * std::abs(next);
        estimate = next;
        if (done) break;
    }
    return estimate;
}

/// Per-sample proximal map of gamma * penalty.
inline Estimates penalty_prox(const RecoveryTuning& tuning, const Estimates& w, double gamma) {
    const double t = gamma * tuning.penalty_weight;
    Estimates out{Eigen::VectorXd(w[0].size()), Eigen::VectorXd(w[1].size())};
    const ThresholdGeometry geom = ThresholdGeometry::make(t, t, tuning.psi);
    for (Eigen::Index n = 0; n < w[0].size(); ++n) {
        const Vec2 v(w[0][n], w[1][n]);
        Vec2 r;
        if (tuning.penalty == Penalty::PairwiseL1) {
            r = two_dim_soft_threshold(v, geom);
        } else {
            const Eigen::VectorXd b = block_soft_threshold(v, t);
            r = Vec2(b[0], b[1]);
        }
        out[0][n] = r[0];
        out[1][n] = r[1];
    }
    return out;
}

namespace detail {

inline double sup_distance(const Estimates& a, const Estimates& b) {
    return std::max((a[0] - b[0]).lpNorm<Eigen::Infinity>(), (a[1] - b[1]).lpNorm<Eigen::Infinity>());
}

inline Estimates combine(const Estimates& a, double ca, const Estimates& b, double cb) {
    return {ca * a[0] + cb * b[0], ca * a[1] + cb * b[1]};
}

}  // namespace detail

/// Monotone FISTA with function-value restart.
///
/// Step gamma = step_factor / L with L = max_j ||A_j||^2 / lambda_j from power
/// iteration; halved if the quadratic upper bound ever fails (the power
/// estimate is a lower bound). Stops when the relative objective change is at
/// most `tol` and the prox-gradient residual at the iterate is small.
inline SolverReport solve_recovery(const RecoveryProblem& problem, const RecoveryTuning& tuning,
                                   const SolverOptions& options = {}) {
    problem.validate();
    tuning.validate();
    const Eigen::Index n = problem.n();
    double lipschitz = 0.0;
    for (int j = 0; j < 2; ++j) {
        lipschitz = std::max(lipschitz, spectral_norm_squared(problem.A[j]) / tuning.lambda[j]);
    }
    SolverReport report;
    if (!(options.step_factor > 0.0 && options.step_factor <= 1.0)) {
        throw std::invalid_argument("step factor must lie in (0, 1]");
    }
    report.step = lipschitz > 0.0 ? options.step_factor / lipschitz : 1.0;
    double& gamma = report.step;

    Estimates x{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
    Estimates x_prev = x;
    Estimates yk = x;
    double fx = objective(problem, tuning, x);
    report.objective_trace.push_back(fx);
    double t = 1.0;
    double scale = 0.0;
    for (int j = 0; j < 2; ++j) {
        scale = std::max(scale, (problem.A[j].transpose() * problem.y[j]).lpNorm<Eigen::Infinity>() /
                                    tuning.lambda[j]);
    }
    scale = std::max(scale, tuning.penalty_weight);

    for (int it = 1; it <= options.max_iter; ++it) {
        Estimates correlation;  // A_j^T (A_j v_j - y_j)
        Estimates grad;
        for (int j = 0; j < 2; ++j) {
            correlation[j] = problem.A[j].transpose() * (problem.A[j] * yk[j] - problem.y[j]);
            grad[j] = correlation[j] / tuning.lambda[j];
        }
        const double fy = data_term(problem, tuning, yk);
        Estimates z;
        double fz_data = 0.0;
        for (;;) {
            // gamma / lambda_j is formed first so gamma == lambda_j gives an exact unit step.
            const Estimates w{yk[0] - (gamma / tuning.lambda[0]) * correlation[0],
                              yk[1] - (gamma / tuning.lambda[1]) * correlation[1]};
            z = penalty_prox(tuning, w, gamma);
            fz_data = data_term(problem, tuning, z);
            double model = fy;
            for (int j = 0; j < 2; ++j) {
                const Eigen::VectorXd d = z[j] - yk[j];
                model += grad[j].dot(d) + d.squaredNorm() / (2.0 * gamma);
            }
            if (fz_data <= model + 1e-12 * std::max(1.0, std::abs(model))) break;
            gamma *= 0.5;
        }
        const double fz = fz_data + penalty_value(tuning, z);

        x_prev = x;
        const double f_before = fx;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        if (fz <= fx) {
            x = z;
            fx = fz;
            yk = detail::combine(x, 1.0, detail::combine(x, 1.0, x_prev, -1.0), (t - 1.0) / t_next);
            t = t_next;
        } else {
            // Keep x; restart momentum from it.
            yk = x;
            t = 1.0;
        }
        report.objective_trace.push_back(fx);
        report.iterations = it;
        report.relative_change = std::abs(f_before - fx) / std::max(std::abs(fx), 1e-300);
        if (report.relative_change <= options.tol) {
            const Estimates g = data_gradient(problem, tuning, x);
            const Estimates px = penalty_prox(tuning, detail::combine(x, 1.0, g, -gamma), gamma);
            const double residual = detail::sup_distance(x, px) / gamma;
            const double floor = 64.0 * std::numeric_limits<double>::epsilon() * scale;
            if (residual <= std::max(options.gradient_tol * tuning.penalty_weight, floor)) {
                report.converged = true;
                break;
            }
        }
    }
    report.x = x;
    return report;
}

inline SolverReport solve_joint_map(const RecoveryProblem& problem, RecoveryTuning tuning,
                                    const SolverOptions& options = {}) {
    tuning.penalty = Penalty::PairwiseL1;
    return solve_recovery(problem, tuning, options);
}

inline SolverReport solve_l21_rls(const RecoveryProblem& problem, RecoveryTuning tuning,
                                  const SolverOptions& options = {}) {
    tuning.penalty = Penalty::L21;
    tuning.psi = 0.0;
    return solve_recovery(problem, tuning, options);
}

namespace detail {

/// Distance from `value` to the subdifferential of |.| at `at`; kinks within
/// `kink` of zero use the interval [-1, 1].
inline double abs_subgradient_gap(double value, double at, double kink) {
    if (std::abs(at) <= kink) {
        return std::max(0.0, std::abs(value) - 1.0);
    }
    return std::abs(value - (at > 0 ? 1.0 : -1.0));
}

}  // namespace detail

/// Largest per-sample violation of 0 in the subdifferential of the objective
/// at v, in units of the penalty's subgradient (gradient divided by the
/// penalty weight). Zero at an exact minimizer.
inline double optimality_gap(const RecoveryProblem& problem, const RecoveryTuning& tuning,
                             const Estimates& v, double kink = 1e-9) {
    const Estimates g = data_gradient(problem, tuning, v);
    const double w = tuning.penalty_weight;
    double worst = 0.0;
    for (Eigen::Index n = 0; n < problem.n(); ++n) {
        const double g1 = -g[0][n] / w;
        const double g2 = -g[1][n] / w;
        const double v1 = v[0][n];
        const double v2 = v[1][n];
        double gap = 0.0;
        if (tuning.penalty == Penalty::PairwiseL1) {
            // Need s1 + psi t = g1, s2 - psi t = g2 with s_j in d|v_j|, t in d|v1 - v2|.
            const double psi = tuning.psi;
            auto residual = [&](double t) {
                return std::max(detail::abs_subgradient_gap(g1 - psi * t, v1, kink),
                                detail::abs_subgradient_gap(g2 + psi * t, v2, kink));
            };
            const double d = v1 - v2;
            if (psi == 0.0 || std::abs(d) > kink) {
                gap = residual(psi == 0.0 ? 0.0 : (d > 0 ? 1.0 : -1.0));
            } else {
                // Max of convex functions of t is convex: ternary search on [-1, 1].
                double lo = -1.0, hi = 1.0;
                for (int k = 0; k < 200; ++k) {
                    const double m1 = lo + (hi - lo) / 3.0;
                    const double m2 = hi - (hi - lo) / 3.0;
                    if (residual(m1) <= residual(m2)) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                gap = residual(0.5 * (lo + hi));
            }
        } else {
            const double norm = std::hypot(v1, v2);
            if (norm <= kink) {
                gap = std::max(0.0, std::hypot(g1, g2) - 1.0);
            } else {
                gap = std::max(std::abs(g1 - v1 / norm), std::abs(g2 - v2 / norm));
            }
        }
        worst = std::max(worst, gap);
    }
    return worst;
}

}  // namespace dsn
