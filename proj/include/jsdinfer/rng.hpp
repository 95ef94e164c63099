#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace jsdinfer {

/// SplitMix64 output mixer. Bijective on u64.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based splittable random stream.
///
/// A (seed, stream) pair identifies an independent sequence; substream()
/// derives further independent streams. Replicates and purposes get their
/// own streams so results do not depend on scheduling or worker count.
/// Satisfies UniformRandomBitGenerator, so standard distributions apply.
class RngStream {
public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix64(seed + 0x9e3779b97f4a7c15ULL) ^
                 mix64(stream * 0xda942042e4dd58b5ULL + 0xe7037ed1a0b428dbULL)) {}

    /// Independent stream derived from this one's identity, not its position.
    RngStream substream(std::uint64_t id) const {
        RngStream r(0);
        r.state_ = mix64(state_ ^ mix64(id + 0x9e3779b97f4a7c15ULL));
        return r;
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return next_u64(); }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return mix64(state_);
    }

    /// Uniform on the open interval (0,1); never returns 0 or 1.
    double uniform() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1p-52;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("below: n must be positive");
        const std::uint64_t limit = max() - max() % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Standard Gumbel (location 0, scale 1).
    double gumbel() { return -std::log(-std::log(uniform())); }

    double normal() {
        std::normal_distribution<double> d;
        return d(*this);
    }

    long long binomial(long long n, double p) {
        if (n < 0 || p < 0.0 || p > 1.0)
            throw std::invalid_argument("binomial: need n >= 0 and p in [0,1]");
        if (n == 0 || p == 0.0) return 0;
        if (p == 1.0) return n;
        std::binomial_distribution<long long> d(n, p);
        return d(*this);
    }

    long long poisson(double lambda) {
        if (lambda < 0.0) throw std::invalid_argument("poisson: lambda must be >= 0");
        if (lambda == 0.0) return 0;
        std::poisson_distribution<long long> d(lambda);
        return d(*this);
    }

    /// Draws from Hypergeometric(ngood, nbad, ndraw): successes when drawing
    /// ndraw items without replacement from ngood + nbad.
    /// Inversion scans outward from the mode so tail pmfs never underflow.
    long long hypergeometric(long long ngood, long long nbad, long long ndraw) {
        if (ngood < 0 || nbad < 0 || ndraw < 0 || ndraw > ngood + nbad)
            throw std::invalid_argument("hypergeometric: invalid parameters");
        const long long total = ngood + nbad;
        const long long lo = std::max(0LL, ndraw - nbad);
        const long long hi = std::min(ndraw, ngood);
        if (lo == hi) return lo;

        auto log_pmf = [&](long long x) {
            return lchoose(ngood, x) + lchoose(nbad, ndraw - x) - lchoose(total, ndraw);
        };
        // up(x) = pmf(x+1)/pmf(x), down(x) = pmf(x-1)/pmf(x)
        auto up = [&](long long x) {
            return static_cast<double>(ngood - x) * static_cast<double>(ndraw - x) /
                   (static_cast<double>(x + 1) * static_cast<double>(nbad - ndraw + x + 1));
        };
        auto down = [&](long long x) {
            return static_cast<double>(x) * static_cast<double>(nbad - ndraw + x) /
                   (static_cast<double>(ngood - x + 1) * static_cast<double>(ndraw - x + 1));
        };

        long long mode = static_cast<long long>(
            (static_cast<double>(ndraw + 1) * static_cast<double>(ngood + 1)) /
            (static_cast<double>(total) + 2.0));
        mode = std::min(hi, std::max(lo, mode));

        const double u = uniform();
        double acc = std::exp(log_pmf(mode));
        if (u <= acc) return mode;
        long long a = mode, b = mode;
        double pa = acc, pb = acc;
        while (a > lo || b < hi) {
            if (b < hi && (a == lo || pb * up(b) >= pa * down(a))) {
                pb *= up(b);
                ++b;
                acc += pb;
                if (u <= acc) return b;
            } else {
                pa *= down(a);
                --a;
                acc += pa;
                if (u <= acc) return a;
            }
        }
        return (pb >= pa) ? b : a;  // u landed in accumulated rounding slack
    }

private:
    static double lchoose(long long n, long long k) {
        return std::lgamma(static_cast<double>(n + 1)) -
               std::lgamma(static_cast<double>(k + 1)) -
               std::lgamma(static_cast<double>(n - k + 1));
    }

    std::uint64_t state_;
};

}  // namespace jsdinfer
