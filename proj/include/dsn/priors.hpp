#pragma once

// Jointly sparse Gaussian source law for two terminals:
//   x_j = w_C s_C + w_j s_j,  w_C ~ N(0, var_common), w_j ~ N(0, var_private[j]),
//   s_C ~ Bern(rate_common), s_j ~ Bern(rate_private[j]), all independent.

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "dsn/rng.hpp"

namespace dsn {

struct PriorParams {
    double var_common = 0.5;
    std::array<double, 2> var_private{0.5, 0.5};
    double rate_common = 0.3;
    std::array<double, 2> rate_private{0.1, 0.1};

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        auto var = [](double v) { return v >= 0.0 && std::isfinite(v); };
        if (!var(var_common) || !var(var_private[0]) || !var(var_private[1])) {
            throw std::invalid_argument("prior variances must be finite and nonnegative");
        }
        if (!prob(rate_common) || !prob(rate_private[0]) || !prob(rate_private[1])) {
            throw std::invalid_argument("prior support rates must lie in [0, 1]");
        }
    }

    /// E[x_j^2] for terminal j in {0, 1}.
    double second_moment(int j) const {
        return rate_common * var_common + rate_private[j] * var_private[j];
    }

    /// Defaults of the two-terminal experiments.
    static PriorParams standard() { return PriorParams{}; }

    /// Prior that puts all mass on (0, 0).
    static PriorParams zero() { return PriorParams{0.5, {0.5, 0.5}, 0.0, {0.0, 0.0}}; }
};

using SourcePair = Eigen::Vector2d;

/// One of the eight support patterns (s_C, s_1, s_2) with its probability and
/// the covariance of (x_1, x_2) conditioned on it.
struct MixtureComponent {
    double weight = 0.0;
    std::array<bool, 3> support{};  // s_C, s_1, s_2
    Eigen::Matrix2d covariance = Eigen::Matrix2d::Zero();
};

inline std::vector<MixtureComponent> mixture_components(const PriorParams& params) {
    params.validate();
    std::vector<MixtureComponent> out;
    out.reserve(8);
    for (int mask = 0; mask < 8; ++mask) {
        const bool sc = mask & 4;
        const bool s1 = mask & 2;
        const bool s2 = mask & 1;
        MixtureComponent c;
        c.support = {sc, s1, s2};
        c.weight = (sc ? params.rate_common : 1.0 - params.rate_common) *
                   (s1 ? params.rate_private[0] : 1.0 - params.rate_private[0]) *
                   (s2 ? params.rate_private[1] : 1.0 - params.rate_private[1]);
        if (sc) {
            c.covariance.setConstant(params.var_common);
        }
        c.covariance(0, 0) += s1 ? params.var_private[0] : 0.0;
        c.covariance(1, 1) += s2 ? params.var_private[1] : 0.0;
        out.push_back(c);
    }
    return out;
}

/// Weighted sum of the component covariances.
inline Eigen::Matrix2d mixture_covariance(const PriorParams& params) {
    Eigen::Matrix2d sum = Eigen::Matrix2d::Zero();
    for (const auto& c : mixture_components(params)) {
        sum += c.weight * c.covariance;
    }
    return sum;
}

/// P(x_j != 0) = 1 - (1 - mu_C)(1 - mu_j), j in {0, 1}.
inline double marginal_nonzero_rate(const PriorParams& params, int j) {
    if (j != 0 && j != 1) {
        throw std::out_of_range("terminal index must be 0 or 1");
    }
    return 1.0 - (1.0 - params.rate_common) * (1.0 - params.rate_private[j]);
}

/// Draws one pair. Draw order is fixed: s_C, w_C, s_1, w_1, s_2, w_2; the
/// Gaussian amplitudes are drawn whether or not their support bit is set so
/// the stream position does not depend on the outcome.
template <class Rng>
SourcePair sample_source(const PriorParams& params, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool sc = uniform(rng) < params.rate_common;
    const double wc = normal(rng) * std::sqrt(params.var_common);
    const bool s1 = uniform(rng) < params.rate_private[0];
    const double w1 = normal(rng) * std::sqrt(params.var_private[0]);
    const bool s2 = uniform(rng) < params.rate_private[1];
    const double w2 = normal(rng) * std::sqrt(params.var_private[1]);
    const double common = sc ? wc : 0.0;
    return {common + (s1 ? w1 : 0.0), common + (s2 ? w2 : 0.0)};
}

template <class Rng>
std::vector<SourcePair> sample_sources(const PriorParams& params, std::size_t n, Rng& rng) {
    if (n == 0) {
        throw std::invalid_argument("sample_sources: n must be at least 1");
    }
    params.validate();
    std::vector<SourcePair> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(sample_source(params, rng));
    }
    return out;
}

/// Draw from the marginal law of x_j alone (a zero atom plus three Gaussians).
template <class Rng>
double sample_marginal(const PriorParams& params, int j, Rng& rng) {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const bool sc = uniform(rng) < params.rate_common;
    const double wc = normal(rng) * std::sqrt(params.var_common);
    const bool sj = uniform(rng) < params.rate_private[j];
    const double wj = normal(rng) * std::sqrt(params.var_private[j]);
    return (sc ? wc : 0.0) + (sj ? wj : 0.0);
}

}  // namespace dsn
