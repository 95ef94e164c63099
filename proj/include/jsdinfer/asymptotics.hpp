#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "jsdinfer/categorical.hpp"
#include "jsdinfer/divergence.hpp"

namespace jsdinfer {

namespace detail {

/// Binomial pmf via log-gamma; stable for n up to 10^6.
inline double binom_pmf(long long r, long long n, double x) {
    if (x <= 0.0) return (r == 0) ? 1.0 : 0.0;
    if (x >= 1.0) return (r == n) ? 1.0 : 0.0;
    const double nr = static_cast<double>(n), rr = static_cast<double>(r);
    const double lp = std::lgamma(nr + 1.0) - std::lgamma(rr + 1.0) -
                      std::lgamma(nr - rr + 1.0) + rr * std::log(x) +
                      (nr - rr) * std::log1p(-x);
    return std::exp(lp);
}

}  // namespace detail

/// Bernstein operator Be_n(u, x) = sum_{r=0..n} u(r/n) binompmf(r; n, x).
inline double bernstein_operator(const std::function<double(double)>& u, long long n,
                                 double x) {
    if (n < 1) throw std::invalid_argument("bernstein_operator: n must be >= 1");
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("bernstein_operator: x outside [0,1]");
    double acc = 0.0;
    for (long long r = 0; r <= n; ++r) {
        const double w = detail::binom_pmf(r, n, x);
        if (w > 0.0) acc += u(static_cast<double>(r) / static_cast<double>(n)) * w;
    }
    return acc;
}

/// Exact E[ D_JS(p_hat, Q_hat) ] over multinomial sampling of Q_hat at size n,
/// reduced to k independent binomial sums. Cost O(k n).
inline double exact_expected_jsd(const CategoricalPmf& p_hat, const CategoricalPmf& p_theta,
                                 long long n, MixingWeight w = MixingWeight()) {
    if (p_hat.size() != p_theta.size())
        throw std::invalid_argument("exact_expected_jsd: dimension mismatch");
    if (!p_theta.interior())
        throw std::domain_error("exact_expected_jsd: p_theta must be interior");
    if (n < 1) throw std::invalid_argument("exact_expected_jsd: n must be >= 1");
    const double pi = w.pi;
    const double nd = static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t i = 0; i < p_hat.size(); ++i) {
        const double ph = p_hat[i];
        const double x = p_theta[i];
        for (long long r = 0; r <= n; ++r) {
            const double b = detail::binom_pmf(r, n, x);
            if (b == 0.0) continue;
            const double t = static_cast<double>(r) / nd;
            const double m = pi * ph + (1.0 - pi) * t;
            double term = 0.0;
            if (ph > 0.0) term += pi * ph * std::log(ph / m);
            if (t > 0.0) term += (1.0 - pi) * t * std::log(t / m);
            acc += b * term;
        }
    }
    return std::max(0.0, acc);
}

/// Voronovskaya remainder coefficient
/// V_F = (1-pi) [ (k-1) - (1-pi) sum_i p_i(1-p_i) / (pi p_hat_i + (1-pi) p_i) ].
/// Equals pi (1-pi) (k-1) when p_hat == p_theta.
inline double vf_remainder(const CategoricalPmf& p_theta, const CategoricalPmf& p_hat,
                           MixingWeight w = MixingWeight()) {
    if (p_hat.size() != p_theta.size())
        throw std::invalid_argument("vf_remainder: dimension mismatch");
    const double pi = w.pi;
    double sum = 0.0;
    for (std::size_t i = 0; i < p_theta.size(); ++i) {
        const double x = p_theta[i];
        if (x == 0.0) continue;
        const double m = pi * p_hat[i] + (1.0 - pi) * x;
        if (m <= 0.0) throw std::domain_error("vf_remainder: zero mixture denominator");
        sum += x * (1.0 - x) / m;
    }
    const double k = static_cast<double>(p_theta.size());
    return (1.0 - pi) * ((k - 1.0) - (1.0 - pi) * sum);
}

/// Second-order expectation JSD(p_hat, p_theta) + V_F / (2n); error o(1/n).
inline double voronovskaya_expected_jsd(const CategoricalPmf& p_hat,
                                        const CategoricalPmf& p_theta, long long n,
                                        MixingWeight w = MixingWeight()) {
    if (!p_theta.interior())
        throw std::domain_error("voronovskaya_expected_jsd: p_theta must be interior");
    if (n < 1) throw std::invalid_argument("voronovskaya_expected_jsd: n must be >= 1");
    return jsd(p_hat, p_theta, w) +
           vf_remainder(p_theta, p_hat, w) / (2.0 * static_cast<double>(n));
}

/// First and diagonal second partial derivatives of q -> D_JS(p_hat, q) at q.
/// Mixed partials are identically zero and not represented.
struct JsdPartials {
    std::vector<double> gradient;  // (1-pi) ln(q_j / m_j)
    std::vector<double> second;    // (p_hat_j / q_j) pi (1-pi) / m_j
};

inline JsdPartials jsd_partials(const CategoricalPmf& p_hat, const CategoricalPmf& q,
                                MixingWeight w = MixingWeight()) {
    if (p_hat.size() != q.size()) throw std::invalid_argument("jsd_partials: dimension mismatch");
    if (!q.interior()) throw std::domain_error("jsd_partials: q must be interior");
    const double pi = w.pi;
    JsdPartials out;
    out.gradient.resize(q.size());
    out.second.resize(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double m = pi * p_hat[j] + (1.0 - pi) * q[j];
        out.gradient[j] = (1.0 - pi) * std::log(q[j] / m);
        out.second[j] = (p_hat[j] / q[j]) * pi * (1.0 - pi) / m;
    }
    return out;
}

/// The seven terms of the second-order MSE expansion, in display order.
struct MseTaylorTerms {
    std::array<double, 7> terms;
    double total;
};

/// MSE of JSD(p_hat, Q_hat) around JSD(p_hat, p_theta) to second order,
/// built on the exact multinomial central moments. Needs both pmfs interior.
inline MseTaylorTerms mse_taylor_terms(const CategoricalPmf& p_hat,
                                       const CategoricalPmf& p_theta, long long n,
                                       MixingWeight w = MixingWeight()) {
    if (p_hat.size() != p_theta.size())
        throw std::invalid_argument("mse_taylor: dimension mismatch");
    if (!p_hat.interior() || !p_theta.interior())
        throw std::domain_error("mse_taylor: p_hat and p_theta must be interior");
    if (n < 1) throw std::invalid_argument("mse_taylor: n must be >= 1");
    const std::size_t k = p_theta.size();
    const double pi = w.pi;
    const double nd = static_cast<double>(n);
    std::vector<double> a(k), b(k), s2(k), p(k);
    for (std::size_t j = 0; j < k; ++j) {
        p[j] = p_theta[j];
        const double m = pi * p_hat[j] + (1.0 - pi) * p[j];
        a[j] = (1.0 - pi) * std::log(p[j] / m);
        b[j] = (p_hat[j] / p[j]) * pi * (1.0 - pi) / m;
        s2[j] = p[j] * (1.0 - p[j]);
    }
    MseTaylorTerms out{};
    double t1 = 0.0, t2 = 0.0, t4 = 0.0, t5 = 0.0, t6 = 0.0, t7 = 0.0;
    double sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        t1 += a[j] * a[j] * s2[j];
        t4 += b[j] * b[j] * s2[j] * (1.0 + 3.0 * s2[j] * (nd - 2.0));
        sa += a[j] * p[j];
        sb += b[j] * p[j] * (2.0 * p[j] - 1.0);
        for (std::size_t i = 0; i < j; ++i) {
            t2 += a[i] * a[j] * p[i] * p[j];
            const double bb = b[i] * b[j];
            t5 += bb * p[i] * p[i] * p[j] * p[j];
            t6 += bb * p[i] * p[j] * (1.0 - p[i] - p[j]);
            t7 += bb * p[i] * p[j];
        }
    }
    out.terms[0] = t1 / nd;
    out.terms[1] = -2.0 * t2 / nd;
    out.terms[2] = sa * sb / (nd * nd);
    out.terms[3] = t4 / (4.0 * nd * nd * nd);
    out.terms[4] = 3.0 * (nd - 2.0) * t5 / (2.0 * nd * nd * nd);
    out.terms[5] = (nd - 2.0) * t6 / (2.0 * nd * nd * nd);
    out.terms[6] = t7 / (2.0 * nd * nd * nd);
    out.total = 0.0;
    for (double t : out.terms) out.total += t;
    return out;
}

inline double mse_taylor(const CategoricalPmf& p_hat, const CategoricalPmf& p_theta,
                         long long n, MixingWeight w = MixingWeight()) {
    return mse_taylor_terms(p_hat, p_theta, n, w).total;
}

/// Var = MSE - [V_F/(2n)]^2, the o(1/n) term dropped.
inline double variance_taylor(const CategoricalPmf& p_hat, const CategoricalPmf& p_theta,
                              long long n, MixingWeight w = MixingWeight()) {
    const double bias = vf_remainder(p_theta, p_hat, w) / (2.0 * static_cast<double>(n));
    return mse_taylor(p_hat, p_theta, n, w) - bias * bias;
}

/// Uniform concentration tail bound 2k exp(-2 n eps^2 / (K_u^2 k^3)).
inline double concentration_bound(double epsilon, long long n, std::size_t k, double ku) {
    if (!(epsilon > 0.0) || !(ku > 0.0) || k < 2 || n < 0)
        throw std::invalid_argument("concentration_bound: invalid arguments");
    const double kd = static_cast<double>(k);
    return 2.0 * kd *
           std::exp(-2.0 * static_cast<double>(n) * epsilon * epsilon / (ku * ku * kd * kd * kd));
}

/// Grid estimate of the Lipschitz-type constant K_u = (1-pi)(K_1 + pi K_2),
/// maximizing over the supplied p(theta) grid. The true constants are
/// existence-level maxima over the whole parameter space; callers owning a
/// better K_u can bypass this.
inline double estimate_ku(const CategoricalPmf& p_hat,
                          const std::vector<CategoricalPmf>& grid,
                          MixingWeight w = MixingWeight()) {
    if (grid.empty()) throw std::invalid_argument("estimate_ku: empty grid");
    const double pi = w.pi;
    double k1 = 0.0, k2 = 0.0;
    for (const auto& q : grid) {
        if (q.size() != p_hat.size()) throw std::invalid_argument("estimate_ku: dimension mismatch");
        if (!q.interior()) throw std::domain_error("estimate_ku: grid pmfs must be interior");
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double m = pi * p_hat[j] + (1.0 - pi) * q[j];
            k1 = std::max(k1, std::abs(std::log(q[j] / m)));
            k2 = std::max(k2, std::abs(p_hat[j] / q[j] / m));
        }
    }
    return (1.0 - pi) * (k1 + pi * k2);
}

}  // namespace jsdinfer
