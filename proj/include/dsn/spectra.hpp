#pragma once

// Spectral models of sensing-matrix Gram ensembles and the two quantities the
// decoupled scalar channel needs from them: the effective tuning factor tau
// and the effective noise variance theta^2.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <utility>

#include "dsn/errors.hpp"

namespace dsn {

/// Relative margin kept between an argument and the Marchenko-Pastur pole.
inline constexpr double kPoleMargin = 1e-12;

/// A spectral model exposing an R-transform.
///
/// `MarchenkoPastur` is the Gram ensemble of an M x N matrix with i.i.d.
/// N(0, 1/M) entries and compression ratio rho = M/N; its R-transform is
/// rho / (rho - w). `Generic` wraps a caller-supplied R-transform together
/// with a domain predicate; all derived quantities then go through numeric
/// differentiation.
class EnsembleSpec {
public:
    enum class Kind { MarchenkoPastur, Generic };

    using RFunction = std::function<double(double)>;
    using DomainPredicate = std::function<bool(double)>;

    static EnsembleSpec marchenko_pastur(double rho) {
        check_ratio(rho);
        return EnsembleSpec(Kind::MarchenkoPastur, rho, {}, {});
    }

    /// `in_domain` defaults to "every finite argument".
    static EnsembleSpec generic(double rho, RFunction r, DomainPredicate in_domain = {}) {
        check_ratio(rho);
        if (!r) {
            throw std::invalid_argument("generic ensemble needs an R-transform");
        }
        return EnsembleSpec(Kind::Generic, rho, std::move(r), std::move(in_domain));
    }

    /// Generic wrapper around the Marchenko-Pastur formula. Used to exercise
    /// the numeric path against the closed forms.
    static EnsembleSpec generic_marchenko_pastur(double rho) {
        check_ratio(rho);
        return generic(
            rho, [rho](double w) { return rho / (rho - w); },
            [rho](double w) { return w < rho * (1.0 - kPoleMargin); });
    }

    Kind kind() const { return kind_; }
    double rho() const { return rho_; }

    bool in_domain(double w) const {
        if (!std::isfinite(w)) {
            return false;
        }
        if (kind_ == Kind::MarchenkoPastur) {
            return w < rho_ * (1.0 - kPoleMargin);
        }
        return !in_domain_ || in_domain_(w);
    }

    double evaluate(double w) const {
        if (!in_domain(w)) {
            std::ostringstream os;
            os << "R-transform argument " << w << " outside domain (rho = " << rho_ << ")";
            throw DomainError(os.str());
        }
        if (kind_ == Kind::MarchenkoPastur) {
            return rho_ / (rho_ - w);
        }
        return r_(w);
    }

private:
    EnsembleSpec(Kind kind, double rho, RFunction r, DomainPredicate d)
        : kind_(kind), rho_(rho), r_(std::move(r)), in_domain_(std::move(d)) {}

    static void check_ratio(double rho) {
        if (!(rho > 0.0) || !std::isfinite(rho)) {
            throw std::invalid_argument("compression ratio must be positive and finite");
        }
    }

    Kind kind_;
    double rho_;
    RFunction r_;
    DomainPredicate in_domain_;
};

inline double r_transform(const EnsembleSpec& ensemble, double w) {
    return ensemble.evaluate(w);
}

/// tau = lambda / R(-chi / lambda). For Marchenko-Pastur this is lambda + chi / rho.
inline double effective_tuning(const EnsembleSpec& ensemble, double chi, double lambda) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("tuning factor lambda must be positive");
    }
    if (ensemble.kind() == EnsembleSpec::Kind::MarchenkoPastur) {
        // Keep the domain contract even though the closed form has no pole here.
        (void)r_transform(ensemble, -chi / lambda);
        return lambda + chi / ensemble.rho();
    }
    return lambda / r_transform(ensemble, -chi / lambda);
}

/// Default central-difference step for the derivative in chi.
inline double default_derivative_step(double chi) {
    return std::max(1e-6, 1e-6 * std::abs(chi));
}

/// theta^2 = R(-chi/lambda)^-2 * d/dchi [ (sigma^2 chi - lambda p) R(-chi/lambda) ],
/// with p held fixed under the derivative.
///
/// Marchenko-Pastur uses the closed form sigma^2 + p / rho. Generic ensembles
/// differentiate numerically: a plain central difference with `step` when one is
/// given, otherwise a Richardson-extrapolated pair at `default_derivative_step`.
/// A negative result throws NegativeVarianceError.
inline double effective_noise_variance(const EnsembleSpec& ensemble, double chi, double p,
                                       double lambda, double noise_var,
                                       double step = std::numeric_limits<double>::quiet_NaN()) {
    if (!(lambda > 0.0)) {
        throw std::invalid_argument("tuning factor lambda must be positive");
    }
    if (!std::isfinite(chi) || !std::isfinite(p) || !std::isfinite(noise_var)) {
        throw std::invalid_argument("effective_noise_variance: non-finite input");
    }
    double theta2 = 0.0;
    if (ensemble.kind() == EnsembleSpec::Kind::MarchenkoPastur) {
        (void)r_transform(ensemble, -chi / lambda);
        theta2 = noise_var + p / ensemble.rho();
    } else {
        auto bracket = [&](double c) {
            return (noise_var * c - lambda * p) * r_transform(ensemble, -c / lambda);
        };
        auto central = [&](double h) { return (bracket(chi + h) - bracket(chi - h)) / (2.0 * h); };
        double derivative = 0.0;
        if (std::isnan(step)) {
            // Richardson extrapolation of two central differences cancels the h^2
            // term; R can vary on a chi scale as small as lambda * rho.
            const double h = default_derivative_step(chi);
            derivative = (4.0 * central(0.5 * h) - central(h)) / 3.0;
        } else {
            derivative = central(step);
        }
        const double r = r_transform(ensemble, -chi / lambda);
        theta2 = derivative / (r * r);
    }
    if (theta2 < 0.0) {
        std::ostringstream os;
        os << "negative effective noise variance " << theta2 << " at chi=" << chi
           << " p=" << p << " lambda=" << lambda << " sigma2=" << noise_var
           << " rho=" << ensemble.rho();
        throw NegativeVarianceError(os.str(), chi, p, lambda, noise_var, theta2);
    }
    return theta2;
}

}  // namespace dsn
