#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "jsdinfer/categorical.hpp"

namespace jsdinfer {

/// Mixing weight pi of the JSD mixture M = pi P + (1-pi) Q; open (0,1).
struct MixingWeight {
    double pi;
    explicit MixingWeight(double pi_ = 0.5) : pi(pi_) {
        if (!(pi > 0.0 && pi < 1.0))
            throw std::invalid_argument("MixingWeight: pi must lie in (0,1)");
    }
};

/// Binary entropy B(t) = -t ln t - (1-t) ln(1-t), nats; B(0) = B(1) = 0.
inline double binary_entropy(double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("binary_entropy: t outside [0,1]");
    double h = 0.0;
    if (t > 0.0) h -= t * std::log(t);
    if (t < 1.0) h -= (1.0 - t) * std::log(1.0 - t);
    return h;
}

/// Shannon entropy, nats. Zero-mass terms contribute 0.
inline double entropy(const CategoricalPmf& p) {
    double h = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return std::max(0.0, h);
}

/// Kullback-Leibler divergence, nats. Support violations give +infinity,
/// not an error: callers probe arbitrary pairs.
inline double kl(const CategoricalPmf& p, const CategoricalPmf& q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl: dimension mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
        d += p[i] * std::log(p[i] / q[i]);
    }
    return std::max(0.0, d);
}

/// Jensen-Shannon divergence with mixing weight pi, nats.
/// Computed as H(M) - pi H(p) - (1-pi) H(q); always finite,
/// bounded by B(pi) <= ln 2, with equality iff the supports are disjoint.
inline double jsd(const CategoricalPmf& p, const CategoricalPmf& q,
                  MixingWeight w = MixingWeight()) {
    if (p.size() != q.size()) throw std::invalid_argument("jsd: dimension mismatch");
    std::vector<double> m(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        m[i] = w.pi * p[i] + (1.0 - w.pi) * q[i];
    const double hm = entropy(CategoricalPmf(std::move(m)));
    return std::max(0.0, hm - w.pi * entropy(p) - (1.0 - w.pi) * entropy(q));
}

/// Two-category JSD at pi = 1/2 in closed form:
/// B((p_hat + q_hat)/2) - B(p_hat)/2 - B(q_hat)/2.
inline double jsd_bernoulli(double p_hat, double q_hat) {
    if (p_hat < 0.0 || p_hat > 1.0 || q_hat < 0.0 || q_hat > 1.0)
        throw std::invalid_argument("jsd_bernoulli: arguments outside [0,1]");
    return std::max(0.0, binary_entropy(0.5 * (p_hat + q_hat)) -
                             0.5 * binary_entropy(p_hat) - 0.5 * binary_entropy(q_hat));
}

/// Total variation distance sum_i |p_i - q_i|, in [0,2].
inline double tv(const CategoricalPmf& p, const CategoricalPmf& q) {
    if (p.size() != q.size()) throw std::invalid_argument("tv: dimension mismatch");
    double v = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) v += std::abs(p[i] - q[i]);
    return v;
}

/// chi-square divergence sum_i (p_i - q_i)^2 / q_i; needs interior q.
inline double chi2_divergence(const CategoricalPmf& p, const CategoricalPmf& q) {
    if (p.size() != q.size()) throw std::invalid_argument("chi2_divergence: dimension mismatch");
    if (!q.interior()) throw std::domain_error("chi2_divergence: q must be interior");
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double diff = p[i] - q[i];
        d += diff * diff / q[i];
    }
    return d;
}

/// Pearson goodness-of-fit statistic sum_i (n_i - n p_i)^2 / (n p_i).
inline double pearson_statistic(const EmpiricalCounts& obs, const CategoricalPmf& p) {
    if (obs.size() != p.size())
        throw std::invalid_argument("pearson_statistic: dimension mismatch");
    if (!p.interior()) throw std::domain_error("pearson_statistic: p must be interior");
    const double n = static_cast<double>(obs.n());
    double t = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = n * p[i];
        const double diff = static_cast<double>(obs[i]) - e;
        t += diff * diff / e;
    }
    return t;
}

/// Neyman modified chi-square statistic: simulated counts against the
/// observed relative frequencies, sum_i (xi_i - n p_hat_i)^2 / (n p_hat_i).
inline double neyman_statistic(const EmpiricalCounts& sim, const CategoricalPmf& obs_pmf) {
    return pearson_statistic(sim, obs_pmf);
}

/// Analytic bound suite at one (p,q,pi): each bound dominates the quantity
/// next to it. The two V-based bounds need V(p,q) < 1/2.
struct BoundSuite {
    double tv_value;             // V(p,q)
    bool small_v;                // V < 1/2; applicability of the two bounds below
    double entropy_diff;         // |H(p) - H(q)|
    double entropy_diff_bound;   // -V ln(V/k); NaN when inapplicable
    double jsd_value;            // D_JS(p,q,pi)
    double jsd_tv_bound;         // -pi(1-pi)ln(pi(1-pi)) V - 2 pi(1-pi) V ln(V/k); NaN when inapplicable
    double kl_value;             // KL(p,q), may be +infinity
    double reverse_pinsker;      // V^2 / min_j q_j; +infinity when q has a zero
};

inline BoundSuite bound_suite(const CategoricalPmf& p, const CategoricalPmf& q,
                              MixingWeight w = MixingWeight()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    BoundSuite b{};
    b.tv_value = tv(p, q);
    b.small_v = b.tv_value < 0.5;
    b.entropy_diff = std::abs(entropy(p) - entropy(q));
    b.jsd_value = jsd(p, q, w);
    b.kl_value = kl(p, q);
    const double k = static_cast<double>(p.size());
    const double v = b.tv_value;
    if (b.small_v) {
        const double vlog = (v == 0.0) ? 0.0 : -v * std::log(v / k);
        b.entropy_diff_bound = vlog;
        const double pq = w.pi * (1.0 - w.pi);
        b.jsd_tv_bound = -pq * std::log(pq) * v + 2.0 * pq * vlog;
    } else {
        b.entropy_diff_bound = nan;
        b.jsd_tv_bound = nan;
    }
    double qmin = 1.0;
    for (std::size_t i = 0; i < q.size(); ++i) qmin = std::min(qmin, q[i]);
    b.reverse_pinsker = (qmin > 0.0) ? v * v / qmin : std::numeric_limits<double>::infinity();
    return b;
}

}  // namespace jsdinfer
