#pragma once

// Single-letter estimators of the decoupled two-terminal network.
//
// The central object is the proximal map of
//     u(v) = |v1| + |v2| + psi |v1 - v2|
// under the weighted fidelity sum_j (y_j - v_j)^2 / (2 tau_j). Its optimality
// conditions split the (y1, y2) plane into 13 polygonal partitions bounded by
// the corner points A..F and the unit-slope lines through A, B, D, E. Each
// partition fixes which of v1, v2, v1 - v2 vanish, and the estimate is affine
// in y inside it.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsn/errors.hpp"

namespace dsn {

using Vec2 = Eigen::Vector2d;

inline double soft_threshold(double y, double t) {
    if (y > t) {
        return y - t;
    }
    if (y < -t) {
        return y + t;
    }
    return 0.0;
}

/// Tuning factors and coupling weight of the two-dimensional threshold.
struct ThresholdGeometry {
    double tau1 = 1.0;
    double tau2 = 1.0;
    double psi = 0.0;

    static ThresholdGeometry make(double tau1, double tau2, double psi) {
        if (!(tau1 > 0.0) || !(tau2 > 0.0) || !std::isfinite(tau1) || !std::isfinite(tau2)) {
            throw std::invalid_argument("threshold tuning factors must be positive and finite");
        }
        if (!(psi >= 0.0) || !std::isfinite(psi)) {
            throw std::invalid_argument("coupling weight psi must be finite and nonnegative");
        }
        return ThresholdGeometry{tau1, tau2, psi};
    }

    /// The closed-form partition is only used for psi <= 1.
    bool closed_form() const { return psi <= 1.0; }

    Vec2 A() const { return {(1.0 - psi) * tau1, (1.0 + psi) * tau2}; }
    Vec2 B() const { return {(1.0 + psi) * tau1, (1.0 - psi) * tau2}; }
    Vec2 C() const { return {(1.0 + psi) * tau1, -(1.0 + psi) * tau2}; }
    Vec2 D() const { return -A(); }
    Vec2 E() const { return -B(); }
    Vec2 F() const { return -C(); }
};

/// Per-terminal label. D/S: shifted by (1 -/+ psi) tau toward zero, with the
/// index giving the sign branch (1: positive, 2: negative). H: both outputs
/// pooled onto the diagonal. O: clipped to zero.
enum class RegionLabel { D1, H1, S1, D2, H2, S2, O };

inline const char* to_string(RegionLabel l) {
    switch (l) {
        case RegionLabel::D1: return "D1";
        case RegionLabel::H1: return "H1";
        case RegionLabel::S1: return "S1";
        case RegionLabel::D2: return "D2";
        case RegionLabel::H2: return "H2";
        case RegionLabel::S2: return "S2";
        case RegionLabel::O: return "O";
    }
    return "?";
}

namespace detail {

/// Index k of the partition P_k containing y. Ties on shared boundaries go to
/// the partition listed first below; the estimate is continuous so the choice
/// does not change the output. The open strip around the diagonal (P1, P7)
/// is empty at psi = 0, so that case runs purely through the D/S branches.
inline int partition(const Vec2& y, const ThresholdGeometry& g) {
    const double a1 = (1.0 - g.psi) * g.tau1;
    const double b1 = (1.0 + g.psi) * g.tau1;
    const double a2 = (1.0 - g.psi) * g.tau2;
    const double b2 = (1.0 + g.psi) * g.tau2;
    const double y1 = y[0];
    const double y2 = y[1];
    const double d = y1 - y2;
    // Lines through A and B (upper strip), D and E (lower strip).
    const double upper_lo = a1 - b2;
    const double upper_hi = b1 - a2;
    const double lower_lo = a2 - b1;
    const double lower_hi = b2 - a1;
    // Segment AB is {y1 tau2 + y2 tau1 = 2 tau1 tau2}; DE is its mirror.
    const double pooled = y1 * g.tau2 + y2 * g.tau1;
    const double corner = 2.0 * g.tau1 * g.tau2;

    // v1 > v2 > 0 and v2 > v1 > 0.
    if (y2 > a2 && d >= upper_hi) return 2;
    if (y1 > a1 && d <= upper_lo) return 12;
    if (d > upper_lo && d < upper_hi && pooled > corner) return 1;
    // Mirrors: v1 < v2 < 0 and v2 < v1 < 0.
    if (y2 < -a2 && d <= lower_lo) return 8;
    if (y1 < -a1 && d >= lower_hi) return 6;
    if (d > lower_lo && d < lower_hi && pooled < -corner) return 7;
    // One coordinate clipped.
    if (y1 > b1 && y2 >= -b2 && y2 <= a2) return 3;
    if (y1 < -b1 && y2 >= -a2 && y2 <= b2) return 9;
    if (y2 < -b2 && y1 >= -a1 && y1 <= b1) return 5;
    if (y2 > b2 && y1 >= -b1 && y1 <= a1) return 11;
    // Opposite-sign quadrants.
    if (y1 > b1 && y2 < -b2) return 4;
    if (y1 < -b1 && y2 > b2) return 10;
    return 0;
}

inline std::pair<RegionLabel, RegionLabel> labels_of_partition(int k) {
    using L = RegionLabel;
    auto first = [](int p) {
        if (p == 12) return L::D1;
        if (p == 1) return L::H1;
        if (p >= 2 && p <= 4) return L::S1;
        if (p == 6) return L::D2;
        if (p == 7) return L::H2;
        if (p >= 8 && p <= 10) return L::S2;
        return L::O;
    };
    auto second = [](int p) {
        if (p == 2) return L::D1;
        if (p == 1) return L::H1;
        if (p >= 10 && p <= 12) return L::S1;
        if (p == 8) return L::D2;
        if (p == 7) return L::H2;
        if (p >= 4 && p <= 6) return L::S2;
        return L::O;
    };
    return {first(k), second(k)};
}

inline double apply_label(RegionLabel l, int j, const Vec2& y, const ThresholdGeometry& g) {
    const double tau = j == 0 ? g.tau1 : g.tau2;
    const double yj = y[j];
    switch (l) {
        case RegionLabel::D1: return yj - (1.0 - g.psi) * tau;
        case RegionLabel::D2: return yj + (1.0 - g.psi) * tau;
        case RegionLabel::S1: return yj - (1.0 + g.psi) * tau;
        case RegionLabel::S2: return yj + (1.0 + g.psi) * tau;
        case RegionLabel::H1:
            return (y[0] * g.tau2 + y[1] * g.tau1 - 2.0 * g.tau1 * g.tau2) / (g.tau1 + g.tau2);
        case RegionLabel::H2:
            return (y[0] * g.tau2 + y[1] * g.tau1 + 2.0 * g.tau1 * g.tau2) / (g.tau1 + g.tau2);
        case RegionLabel::O: return 0.0;
    }
    return 0.0;
}

}  // namespace detail

/// Labels (L1(y), L2(y)). Requires psi <= 1.
inline std::pair<RegionLabel, RegionLabel> label(const Vec2& y, const ThresholdGeometry& g) {
    if (!g.closed_form()) {
        throw std::invalid_argument("region labels are defined for psi in [0, 1]");
    }
    return detail::labels_of_partition(detail::partition(y, g));
}

/// u(v) = |v1| + |v2| + psi |v1 - v2| as a callable.
inline std::function<double(const Vec2&)> pairwise_l1_utility(double psi) {
    return [psi](const Vec2& v) {
        return std::abs(v[0]) + std::abs(v[1]) + psi * std::abs(v[0] - v[1]);
    };
}

/// Euclidean norm across terminals as a callable (single sample of the l2,1 norm).
inline std::function<double(const Vec2&)> l21_utility() {
    return [](const Vec2& v) { return v.norm(); };
}

struct OracleOptions {
    int grid_points = 61;      // per axis, coarse search
    int line_iterations = 200;  // golden-section budget per face
    int newton_iterations = 60;
};

namespace detail {

inline constexpr double kGolden = 0.6180339887498949;

/// Golden-section search for a convex function on [lo, hi].
template <class Fn>
double golden_minimize(Fn&& f, double lo, double hi, int budget) {
    double x1 = hi - kGolden * (hi - lo);
    double x2 = lo + kGolden * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    for (int it = 0; it < budget && hi - lo > 1e-14 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - kGolden * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + kGolden * (hi - lo);
            f2 = f(x2);
        }
    }
    return f1 <= f2 ? x1 : x2;
}

/// Newton iterations with finite-difference derivatives and backtracking.
/// Returns the best point visited.
template <class Fn>
Vec2 newton_polish(Fn&& f, Vec2 x, double scale, int budget) {
    const double h = 1e-5 * scale;
    double fx = f(x);
    for (int it = 0; it < budget; ++it) {
        const Vec2 e1(h, 0.0);
        const Vec2 e2(0.0, h);
        const double fp1 = f(x + e1), fm1 = f(x - e1);
        const double fp2 = f(x + e2), fm2 = f(x - e2);
        const double fpp = f(x + e1 + e2), fmm = f(x - e1 - e2);
        Vec2 grad((fp1 - fm1) / (2 * h), (fp2 - fm2) / (2 * h));
        Eigen::Matrix2d hess;
        hess(0, 0) = (fp1 - 2 * fx + fm1) / (h * h);
        hess(1, 1) = (fp2 - 2 * fx + fm2) / (h * h);
        hess(0, 1) = hess(1, 0) =
            (fpp - fp1 - fp2 + 2 * fx - fm1 - fm2 + fmm) / (2 * h * h);
        Vec2 step;
        if (hess.determinant() > 0 && hess(0, 0) > 0) {
            step = -hess.ldlt().solve(grad);
        } else {
            step = -grad * scale;
        }
        if (!step.allFinite() || step.norm() < 1e-15 * scale) {
            break;
        }
        // Below the resolution of f, trust the quadratic model.
        const bool tiny = step.norm() < 1e-6 * scale;
        const double slack = 4e-16 * (1.0 + std::abs(fx));
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            const Vec2 cand = x + t * step;
            const double fc = f(cand);
            if (fc < fx || (tiny && ls == 0 && fc <= fx + slack)) {
                x = cand;
                fx = fc;
                moved = true;
                break;
            }
        }
        if (!moved || (t * step).norm() < 1e-14 * scale) {
            break;
        }
    }
    return x;
}

/// One-dimensional counterpart of newton_polish.
template <class Fn>
double newton_polish_1d(Fn&& f, double s, double scale, int budget) {
    const double h = 1e-5 * scale;
    double fs = f(s);
    for (int it = 0; it < budget; ++it) {
        const double fp = f(s + h), fm = f(s - h);
        const double g = (fp - fm) / (2 * h);
        const double c = (fp - 2 * fs + fm) / (h * h);
        const double step = c > 0 ? -g / c : -g * scale;
        if (!std::isfinite(step) || std::abs(step) < 1e-15 * scale) {
            break;
        }
        const bool tiny = std::abs(step) < 1e-6 * scale;
        const double slack = 4e-16 * (1.0 + std::abs(fs));
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
            const double fc = f(s + t * step);
            if (fc < fs || (tiny && ls == 0 && fc <= fs + slack)) {
                s += t * step;
                fs = fc;
                moved = true;
                break;
            }
        }
        if (!moved) {
            break;
        }
    }
    return s;
}

}  // namespace detail

/// Brute-force minimizer of sum_j (y_j - v_j)^2 / (2 tau_j) + utility(v).
///
/// Independent of the closed-form partition: a coarse grid over a box that
/// provably contains the minimizer, exact 1-D searches on the kink lines
/// v1 = 0, v2 = 0, v1 = v2, and Newton refinement from one seed per smooth
/// sector. The best candidate is returned after a local descent check.
/// Throws ConvergenceError if some nearby point is still clearly better.
inline Vec2 scalar_prox_oracle(const Vec2& y, double tau1, double tau2,
                               const std::function<double(const Vec2&)>& utility,
                               const OracleOptions& opt = {}) {
    if (!(tau1 > 0.0) || !(tau2 > 0.0)) {
        throw std::invalid_argument("oracle tuning factors must be positive");
    }
    auto objective = [&](const Vec2& v) {
        const double r1 = y[0] - v[0];
        const double r2 = y[1] - v[1];
        return r1 * r1 / (2 * tau1) + r2 * r2 / (2 * tau2) + utility(v);
    };

    // F(v*) <= F(y) = u(y) bounds each residual: |y_j - v_j| <= sqrt(2 tau_j u(y)).
    const double uy = std::max(0.0, utility(y));
    const double r1 = std::sqrt(2 * tau1 * uy) + 1e-9;
    const double r2 = std::sqrt(2 * tau2 * uy) + 1e-9;
    const double lo1 = std::min(y[0] - r1, 0.0), hi1 = std::max(y[0] + r1, 0.0);
    const double lo2 = std::min(y[1] - r2, 0.0), hi2 = std::max(y[1] + r2, 0.0);
    const double scale = std::max({1.0, std::abs(y[0]), std::abs(y[1]), tau1, tau2});

    std::vector<std::pair<double, Vec2>> candidates;
    Vec2 best = y;
    double best_f = objective(y);
    auto consider = [&](const Vec2& v) {
        const double fv = objective(v);
        candidates.emplace_back(fv, v);
        if (fv < best_f) {
            best_f = fv;
            best = v;
        }
    };
    consider(y);
    consider(Vec2::Zero());

    const int n = std::max(opt.grid_points, 3);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n; ++k) {
            consider(Vec2(lo1 + (hi1 - lo1) * i / (n - 1), lo2 + (hi2 - lo2) * k / (n - 1)));
        }
    }

    // Kink lines, each parametrized by s along a direction through the origin.
    const std::array<Vec2, 3> directions{Vec2(1.0, 0.0), Vec2(0.0, 1.0), Vec2(1.0, 1.0)};
    const double reach = std::max({std::abs(lo1), std::abs(hi1), std::abs(lo2), std::abs(hi2)});
    for (const Vec2& dir : directions) {
        auto along = [&](double s) { return objective(s * dir); };
        double s = detail::golden_minimize(along, -reach, reach, opt.line_iterations);
        s = detail::newton_polish_1d(along, s, scale, opt.newton_iterations);
        consider(s * dir);
    }

    // One seed per sector cut out by the kink lines.
    const double q = 0.5 * reach + 0.5;
    const std::array<Vec2, 6> seeds{Vec2(2 * q, q),  Vec2(q, 2 * q),   Vec2(q, -q),
                                    Vec2(-q, q),     Vec2(-q, -2 * q), Vec2(-2 * q, -q)};
    for (const Vec2& seed : seeds) {
        consider(detail::newton_polish(objective, seed, scale, opt.newton_iterations));
    }
    consider(detail::newton_polish(objective, best, scale, opt.newton_iterations));

    // Candidates tied with the best to within the resolution of the objective
    // are told apart by their worst one-sided directional derivative.
    const double tie = 1e-13 * (1.0 + std::abs(best_f));
    const double h = 1e-7 * scale;
    auto descent_rate = [&](const Vec2& v, double fv) {
        double worst = 0.0;
        for (int k = 0; k < 16; ++k) {
            const double a = 2.0 * 3.14159265358979323846 * k / 16.0;
            const double slope = (objective(v + h * Vec2(std::cos(a), std::sin(a))) - fv) / h;
            worst = std::max(worst, -slope);
        }
        return worst;
    };
    double best_rate = descent_rate(best, best_f);
    for (const auto& [fv, v] : candidates) {
        if (fv <= best_f + tie && v != best) {
            const double rate = descent_rate(v, fv);
            if (rate < best_rate) {
                best_rate = rate;
                best = v;
            }
        }
    }
    best_f = objective(best);

    // Local descent check in 16 directions at two radii.
    const double slack = 1e-12 * (1.0 + std::abs(best_f));
    for (double radius : {1e-3 * scale, 1e-6 * scale}) {
        for (int k = 0; k < 16; ++k) {
            const double a = 2.0 * 3.14159265358979323846 * k / 16.0;
            const Vec2 probe = best + radius * Vec2(std::cos(a), std::sin(a));
            if (objective(probe) < best_f - slack) {
                std::ostringstream os;
                os << "prox oracle did not converge at y = (" << y[0] << ", " << y[1]
                   << "): descent direction remains at radius " << radius;
                throw ConvergenceError(os.str());
            }
        }
    }
    return best;
}

/// Closed-form two-dimensional soft threshold. For psi > 1 the partition
/// geometry no longer applies and the call is routed to the oracle.
inline Vec2 two_dim_soft_threshold(const Vec2& y, const ThresholdGeometry& g) {
    if (!g.closed_form()) {
        return scalar_prox_oracle(y, g.tau1, g.tau2, pairwise_l1_utility(g.psi));
    }
    const auto [l1, l2] = detail::labels_of_partition(detail::partition(y, g));
    if (l1 == RegionLabel::H1 || l1 == RegionLabel::H2) {
        // Both coordinates share one pooled value.
        const double w = detail::apply_label(l1, 0, y, g);
        return {w, w};
    }
    return {detail::apply_label(l1, 0, y, g), detail::apply_label(l2, 1, y, g)};
}

/// max(0, 1 - tau / ||y||) * y.
inline Eigen::VectorXd block_soft_threshold(const Eigen::VectorXd& y, double tau) {
    if (!(tau >= 0.0)) {
        throw std::invalid_argument("block threshold must be nonnegative");
    }
    const double norm = y.norm();
    if (norm <= tau) {
        return Eigen::VectorXd::Zero(y.size());
    }
    return (1.0 - tau / norm) * y;
}

/// Prox of ||v|| under the weighted fidelity sum_j (y_j - v_j)^2 / (2 tau_j).
/// Zero iff ||(y1/tau1, y2/tau2)|| <= 1. Otherwise v_j = y_j r / (r + tau_j)
/// where r = ||v|| solves sum_j y_j^2 / (r + tau_j)^2 = 1 (decreasing in r).
inline Vec2 weighted_block_soft_threshold(const Vec2& y, double tau1, double tau2) {
    if (std::hypot(y[0] / tau1, y[1] / tau2) <= 1.0) {
        return Vec2::Zero();
    }
    if (tau1 == tau2) {
        const Eigen::VectorXd v = block_soft_threshold(y, tau1);
        return {v[0], v[1]};
    }
    auto secular = [&](double r) {
        const double a = y[0] / (r + tau1);
        const double b = y[1] / (r + tau2);
        return a * a + b * b - 1.0;
    };
    // secular(0) > 0 and secular(||y||) < 0.
    double lo = 0.0;
    double hi = y.norm();
    for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (secular(mid) > 0.0 ? lo : hi) = mid;
    }
    const double r = 0.5 * (lo + hi);
    return {y[0] * r / (r + tau1), y[1] * r / (r + tau2)};
}

}  // namespace dsn
