#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jsdinfer/rng.hpp"

namespace jsdinfer {

/// A probability vector on the (k-1)-simplex, k >= 2.
///
/// Construction normalizes away float noise (sum within 1e-9 of 1) and
/// rejects anything further off. Entries must be non-negative. After
/// construction the entries sum to 1 within 1e-12.
class CategoricalPmf {
public:
    explicit CategoricalPmf(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.size() < 2)
            throw std::invalid_argument("CategoricalPmf: need at least 2 categories");
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0))
                throw std::invalid_argument("CategoricalPmf: negative or non-finite entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("CategoricalPmf: entries sum to " +
                                        std::to_string(sum) + ", not 1");
        for (double& p : probs_) p /= sum;
    }

    static CategoricalPmf uniform(std::size_t k) {
        return CategoricalPmf(std::vector<double>(k, 1.0 / static_cast<double>(k)));
    }

    std::size_t size() const { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }

    /// True when every entry is strictly positive.
    bool interior() const {
        return std::all_of(probs_.begin(), probs_.end(), [](double p) { return p > 0.0; });
    }

private:
    std::vector<double> probs_;
};

/// Category counts with their total; the empirical side of a pmf.
class EmpiricalCounts {
public:
    explicit EmpiricalCounts(std::vector<long long> counts) : counts_(std::move(counts)) {
        if (counts_.size() < 2)
            throw std::invalid_argument("EmpiricalCounts: need at least 2 categories");
        n_ = 0;
        for (long long c : counts_) {
            if (c < 0) throw std::invalid_argument("EmpiricalCounts: negative count");
            n_ += c;
        }
        if (n_ < 1) throw std::invalid_argument("EmpiricalCounts: total must be >= 1");
    }

    std::size_t size() const { return counts_.size(); }
    long long operator[](std::size_t i) const { return counts_[i]; }
    const std::vector<long long>& counts() const { return counts_; }
    long long n() const { return n_; }

    CategoricalPmf to_pmf() const {
        std::vector<double> p(counts_.size());
        for (std::size_t i = 0; i < counts_.size(); ++i)
            p[i] = static_cast<double>(counts_[i]) / static_cast<double>(n_);
        return CategoricalPmf(std::move(p));
    }

private:
    std::vector<long long> counts_;
    long long n_;
};

/// Multinomial draw by conditional binomials; O(k) binomial draws.
inline EmpiricalCounts multinomial_sample(const CategoricalPmf& p, long long n,
                                          RngStream& rng) {
    if (n < 1) throw std::invalid_argument("multinomial_sample: n must be >= 1");
    const std::size_t k = p.size();
    std::vector<long long> counts(k, 0);
    long long remaining = n;
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < k && remaining > 0; ++i) {
        // conditional success probability, clamped against rounding drift
        const double cond = std::min(1.0, std::max(0.0, p[i] / rest));
        counts[i] = rng.binomial(remaining, cond);
        remaining -= counts[i];
        rest -= p[i];
        if (rest <= 0.0) break;
    }
    counts[k - 1] += remaining;
    return EmpiricalCounts(std::move(counts));
}

/// n categorical draws with P(i) = exp(g_i)/sum_j exp(g_j), each realized as
/// argmax_i { g_i + Gumbel noise }. The normalizing constant is never formed.
inline EmpiricalCounts gumbel_softmax_sample(const std::vector<double>& g, long long n,
                                             RngStream& rng) {
    if (g.size() < 2)
        throw std::invalid_argument("gumbel_softmax_sample: need at least 2 categories");
    if (n < 1) throw std::invalid_argument("gumbel_softmax_sample: n must be >= 1");
    for (double gi : g)
        if (!std::isfinite(gi))
            throw std::invalid_argument("gumbel_softmax_sample: non-finite score");
    std::vector<long long> counts(g.size(), 0);
    for (long long t = 0; t < n; ++t) {
        std::size_t best = 0;
        double best_val = g[0] + rng.gumbel();
        for (std::size_t i = 1; i < g.size(); ++i) {
            const double v = g[i] + rng.gumbel();
            if (v > best_val) {
                best_val = v;
                best = i;
            }
        }
        ++counts[best];
    }
    return EmpiricalCounts(std::move(counts));
}

/// Which central moment of the multinomial counts xi ~ Mult(n, p) to evaluate.
struct MomentSpec {
    enum class Kind { cov, third, fourth, mixed4 };
    Kind kind;
    std::size_t i = 0;
    std::size_t j = 0;

    /// E[(xi_i - n p_i)(xi_j - n p_j)]
    static MomentSpec cov(std::size_t i, std::size_t j) {
        return {Kind::cov, i, j};
    }
    /// E[(xi_i - n p_i)(xi_j - n p_j)^2], i != j
    static MomentSpec third(std::size_t i, std::size_t j) {
        return {Kind::third, i, j};
    }
    /// E[(xi_j - n p_j)^4]
    static MomentSpec fourth(std::size_t j) {
        return {Kind::fourth, 0, j};
    }
    /// E[(xi_i - n p_i)^2 (xi_j - n p_j)^2], i != j
    static MomentSpec mixed4(std::size_t i, std::size_t j) {
        return {Kind::mixed4, i, j};
    }
};

inline double multinomial_central_moment(const CategoricalPmf& p, long long n,
                                         const MomentSpec& spec) {
    if (n < 1) throw std::invalid_argument("multinomial_central_moment: n must be >= 1");
    const std::size_t k = p.size();
    if (spec.i >= k || spec.j >= k)
        throw std::invalid_argument("multinomial_central_moment: index out of range");
    const double nd = static_cast<double>(n);
    const double pi = p[spec.i];
    const double pj = p[spec.j];
    switch (spec.kind) {
        case MomentSpec::Kind::cov:
            return (spec.i == spec.j) ? nd * pi * (1.0 - pi) : -nd * pi * pj;
        case MomentSpec::Kind::third:
            if (spec.i == spec.j)
                throw std::invalid_argument("multinomial_central_moment: third needs i != j");
            return nd * pi * pj * (2.0 * pj - 1.0);
        case MomentSpec::Kind::fourth: {
            const double s2 = pj * (1.0 - pj);
            return nd * s2 * (1.0 + 3.0 * s2 * (nd - 2.0));
        }
        case MomentSpec::Kind::mixed4:
            if (spec.i == spec.j)
                throw std::invalid_argument("multinomial_central_moment: mixed4 needs i != j");
            return 3.0 * nd * (nd - 2.0) * pi * pi * pj * pj +
                   nd * (nd - 2.0) * pi * pj * (1.0 - pi - pj) + nd * pi * pj;
    }
    throw std::logic_error("multinomial_central_moment: unreachable");
}

}  // namespace jsdinfer
