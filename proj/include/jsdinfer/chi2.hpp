#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

namespace jsdinfer {

namespace detail {

/// Regularized lower incomplete gamma P(a, z), a > 0, z >= 0.
/// Series for z < a+1, Lentz continued fraction otherwise.
inline double lower_reg_gamma(double a, double z) {
    if (z <= 0.0) return 0.0;
    const double eps = 1e-16;
    const double log_prefix = a * std::log(z) - z - std::lgamma(a);
    if (z < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        double ap = a;
        for (int i = 0; i < 10000; ++i) {
            ap += 1.0;
            term *= z / ap;
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) break;
        }
        return std::exp(log_prefix) * sum;
    }
    // Lentz's method for the upper-tail continued fraction
    const double tiny = 1e-300;
    double b = z + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return 1.0 - std::exp(log_prefix) * h;
}

}  // namespace detail

/// Chi-square CDF with dof degrees of freedom.
inline double chi2_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw std::invalid_argument("chi2_cdf: dof must be positive");
    if (x <= 0.0) return 0.0;
    const double p = detail::lower_reg_gamma(0.5 * dof, 0.5 * x);
    return std::min(1.0, std::max(0.0, p));
}

/// Chi-square quantile; bisection on the CDF to interval width 1e-13.
inline double chi2_quantile(double prob, double dof) {
    if (!(dof > 0.0)) throw std::invalid_argument("chi2_quantile: dof must be positive");
    if (!(prob >= 0.0 && prob < 1.0))
        throw std::invalid_argument("chi2_quantile: prob must lie in [0,1)");
    if (prob == 0.0) return 0.0;
    double hi = dof + 10.0 * std::sqrt(2.0 * dof) + 10.0;
    while (chi2_cdf(hi, dof) < prob) hi *= 2.0;
    double lo = 0.0;
    while (hi - lo > 1e-13 * (1.0 + hi)) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, dof) < prob)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace jsdinfer
