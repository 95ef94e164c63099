#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "jsdinfer/asymptotics.hpp"
#include "jsdinfer/divergence.hpp"
#include "jsdinfer/rng.hpp"

using namespace jsdinfer;
using Catch::Approx;

namespace {

CategoricalPmf random_interior(RngStream& rng, std::size_t k) {
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) {
        x = 0.05 - std::log(rng.uniform());
        s += x;
    }
    for (auto& x : v) x /= s;
    return CategoricalPmf(std::move(v));
}

// Exhaustive multinomial expectation of JSD(p_hat, counts/n); k <= 4, n small.
double enumerated_expected_jsd(const CategoricalPmf& p_hat, const CategoricalPmf& p_theta,
                               long long n, MixingWeight w) {
    const std::size_t k = p_theta.size();
    std::vector<long long> counts(k, 0);
    double total = 0.0;
    std::function<void(std::size_t, long long, double)> rec = [&](std::size_t i, long long left,
                                                                  double logw) {
        if (i + 1 == k) {
            counts[i] = left;
            double lw = logw - std::lgamma(static_cast<double>(left) + 1.0);
            if (left > 0) lw += static_cast<double>(left) * std::log(p_theta[i]);
            std::vector<double> q(k);
            for (std::size_t t = 0; t < k; ++t)
                q[t] = static_cast<double>(counts[t]) / static_cast<double>(n);
            total += std::exp(lw + std::lgamma(static_cast<double>(n) + 1.0)) *
                     jsd(p_hat, CategoricalPmf(std::move(q)), w);
            return;
        }
        for (long long c = 0; c <= left; ++c) {
            counts[i] = c;
            double lw = logw - std::lgamma(static_cast<double>(c) + 1.0);
            if (c > 0) lw += static_cast<double>(c) * std::log(p_theta[i]);
            rec(i + 1, left - c, lw);
        }
    };
    rec(0, n, 0.0);
    return total;
}

// Independent MSE path: substitute the Taylor partials into the closed-form
// multinomial central moments. The third-moment diagonal intentionally uses
// the off-diagonal formula value n p_j^2 (2 p_j - 1), matching the resolved
// seven-term expression term for term.
double mse_from_moments(const CategoricalPmf& p_hat, const CategoricalPmf& p_theta,
                        long long n, MixingWeight w) {
    const std::size_t k = p_hat.size();
    const double nd = static_cast<double>(n);
    std::vector<double> a(k), b(k);
    for (std::size_t j = 0; j < k; ++j) {
        const double m = w.pi * p_hat[j] + (1.0 - w.pi) * p_theta[j];
        a[j] = (1.0 - w.pi) * std::log(p_theta[j] / m);
        b[j] = (p_hat[j] / p_theta[j]) * w.pi * (1.0 - w.pi) / m;
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            mse += a[i] * a[j] * multinomial_central_moment(p_theta, n, MomentSpec::cov(i, j)) /
                   (nd * nd);
            const double third =
                (i == j) ? nd * p_theta[j] * p_theta[j] * (2.0 * p_theta[j] - 1.0)
                         : multinomial_central_moment(p_theta, n, MomentSpec::third(i, j));
            mse += a[i] * b[j] * third / (nd * nd * nd);
            const double fourth =
                (i == j) ? multinomial_central_moment(p_theta, n, MomentSpec::fourth(j))
                         : multinomial_central_moment(p_theta, n, MomentSpec::mixed4(i, j));
            mse += 0.25 * b[i] * b[j] * fourth / (nd * nd * nd * nd);
        }
    return mse;
}

}  // namespace

TEST_CASE("bernstein operator") {
    auto sq = [](double t) { return t * t; };
    REQUIRE(bernstein_operator(sq, 2, 0.5) == Approx(0.375).epsilon(1e-14));
    // reproduces the function at the endpoints and on affine functions
    auto aff = [](double t) { return 2.0 * t + 1.0; };
    REQUIRE(bernstein_operator(aff, 7, 0.3) == Approx(1.6).epsilon(1e-12));
    REQUIRE(bernstein_operator(sq, 50, 0.0) == Approx(0.0).margin(1e-15));
    REQUIRE(bernstein_operator(sq, 50, 1.0) == Approx(1.0).epsilon(1e-14));
    REQUIRE_THROWS_AS(bernstein_operator(sq, 0, 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(bernstein_operator(sq, 3, 1.5), std::invalid_argument);
}

TEST_CASE("exact expected jsd, pinned and enumerated") {
    const CategoricalPmf h({0.5, 0.5});
    REQUIRE(exact_expected_jsd(h, h, 1) == Approx(0.21576155433883565).epsilon(1e-13));

    RngStream rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t k = 2 + rep % 3;
        const auto p_hat = random_interior(rng, k);
        const auto p_theta = random_interior(rng, k);
        const MixingWeight w(0.2 + 0.6 * rng.uniform());
        for (long long n : {1, 3, 5}) {
            REQUIRE(exact_expected_jsd(p_hat, p_theta, n, w) ==
                    Approx(enumerated_expected_jsd(p_hat, p_theta, n, w)).margin(1e-12));
        }
    }
    REQUIRE_THROWS_AS(exact_expected_jsd(h, CategoricalPmf({1.0, 0.0}), 5),
                      std::domain_error);
}

TEST_CASE("exact expected jsd stays cheap at large n") {
    const CategoricalPmf p({0.3, 0.25, 0.2, 0.15, 0.1});
    const double e = exact_expected_jsd(p, p, 200000);
    // E = JSD + V_F/(2n) + o(1/n) = 0 + 1/(2n) + o(1/n) at p_hat == p_theta
    REQUIRE(e == Approx(1.0 / 400000.0).epsilon(2e-3));
}

TEST_CASE("vf remainder") {
    RngStream rng(13);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t k = 2 + rep % 5;
        const auto p = random_interior(rng, k);
        const double pi = 0.1 + 0.8 * rng.uniform();
        // closed form at coinciding arguments
        REQUIRE(vf_remainder(p, p, MixingWeight(pi)) ==
                Approx(pi * (1.0 - pi) * static_cast<double>(k - 1)).margin(1e-12));
    }
    REQUIRE(vf_remainder(CategoricalPmf::uniform(5), CategoricalPmf::uniform(5)) ==
            Approx(1.0).epsilon(1e-14));
    REQUIRE(vf_remainder(CategoricalPmf::uniform(2), CategoricalPmf::uniform(2)) ==
            Approx(0.25).epsilon(1e-14));
}

TEST_CASE("voronovskaya expectation") {
    const auto u5 = CategoricalPmf::uniform(5);
    REQUIRE(voronovskaya_expected_jsd(u5, u5, 100) == Approx(0.005).epsilon(1e-13));

    // |exact - voronovskaya| shrinks faster than 1/n
    const CategoricalPmf p_hat({0.35, 0.3, 0.2, 0.15});
    const CategoricalPmf p_theta({0.3, 0.3, 0.25, 0.15});
    double prev = 1e9;
    for (long long n : {50, 200, 800}) {
        const double err = std::abs(exact_expected_jsd(p_hat, p_theta, n) -
                                    voronovskaya_expected_jsd(p_hat, p_theta, n));
        REQUIRE(err < prev);
        prev = err;
    }
    const double e50 = std::abs(exact_expected_jsd(p_hat, p_theta, 50) -
                                voronovskaya_expected_jsd(p_hat, p_theta, 50));
    const double e800 = std::abs(exact_expected_jsd(p_hat, p_theta, 800) -
                                 voronovskaya_expected_jsd(p_hat, p_theta, 800));
    REQUIRE(800.0 * e800 < 50.0 * e50);
}

TEST_CASE("jsd partials, pinned fixture") {
    const CategoricalPmf p_hat({0.5, 0.3, 0.2});
    const CategoricalPmf q({0.25, 0.5, 0.25});
    const auto d = jsd_partials(p_hat, q, MixingWeight(0.4));
    REQUIRE(d.gradient[0] == Approx(-0.20188334197272773).epsilon(1e-13));
    REQUIRE(d.gradient[1] == Approx(0.10461203228686665).epsilon(1e-13));
    REQUIRE(d.gradient[2] == Approx(0.0500289653634306).epsilon(1e-13));
    REQUIRE(d.second[0] == Approx(1.3714285714285714).epsilon(1e-13));
    REQUIRE(d.second[1] == Approx(0.34285714285714286).epsilon(1e-13));
    REQUIRE(d.second[2] == Approx(0.8347826086956522).epsilon(1e-13));
    REQUIRE_THROWS_AS(jsd_partials(p_hat, CategoricalPmf({0.5, 0.5, 0.0})),
                      std::domain_error);
}

TEST_CASE("jsd partials match finite differences") {
    // central differences along the unnormalized q_j coordinate; JSD extends
    // smoothly off the simplex through its defining formula
    RngStream rng(19);
    const double h = 1e-6;
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t k = 2 + rep % 4;
        const auto p_hat = random_interior(rng, k);
        const auto q = random_interior(rng, k);
        const double pi = 0.2 + 0.6 * rng.uniform();
        const MixingWeight w(pi);
        const auto d = jsd_partials(p_hat, q, w);
        auto f = [&](const std::vector<double>& qv) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double m = pi * p_hat[j] + (1.0 - pi) * qv[j];
                if (p_hat[j] > 0.0) acc += pi * p_hat[j] * std::log(p_hat[j] / m);
                if (qv[j] > 0.0) acc += (1.0 - pi) * qv[j] * std::log(qv[j] / m);
            }
            return acc;
        };
        for (std::size_t j = 0; j < k; ++j) {
            auto up = q.probs(), dn = q.probs();
            up[j] += h;
            dn[j] -= h;
            const double fd1 = (f(up) - f(dn)) / (2.0 * h);
            const double fd2 = (f(up) - 2.0 * f(q.probs()) + f(dn)) / (h * h);
            REQUIRE(d.gradient[j] == Approx(fd1).margin(1e-6));
            REQUIRE(d.second[j] == Approx(fd2).margin(2e-3));
        }
    }
}

TEST_CASE("mse taylor, pinned fixture") {
    const CategoricalPmf p_hat({0.4, 0.35, 0.25});
    const CategoricalPmf p_theta({0.3, 0.4, 0.3});
    const auto t = mse_taylor_terms(p_hat, p_theta, 200);
    REQUIRE(t.terms[0] == Approx(9.474586815107216e-06).epsilon(1e-12));
    REQUIRE(t.terms[1] == Approx(4.31781555062731e-06).epsilon(1e-12));
    REQUIRE(t.terms[2] == Approx(-1.7862071005713642e-08).epsilon(1e-12));
    REQUIRE(t.terms[3] == Approx(1.5884111619441163e-06).epsilon(1e-12));
    REQUIRE(t.terms[4] == Approx(7.502142857142858e-07).epsilon(1e-12));
    REQUIRE(t.terms[5] == Approx(7.658035714285713e-07).epsilon(1e-12));
    REQUIRE(t.terms[6] == Approx(1.1539502164502166e-08).epsilon(1e-12));
    REQUIRE(t.total == Approx(1.6890508815980288e-05).epsilon(1e-12));
    REQUIRE(mse_taylor(p_hat, p_theta, 200) == Approx(t.total).margin(0.0));
    REQUIRE(variance_taylor(p_hat, p_theta, 200) ==
            Approx(1.533368546887285e-05).epsilon(1e-12));
    REQUIRE_THROWS_AS(mse_taylor(p_hat, CategoricalPmf({0.5, 0.5, 0.0}), 200),
                      std::domain_error);
}

TEST_CASE("mse taylor agrees with the moment-substitution path") {
    RngStream rng(29);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t k = 2 + rep % 5;
        const auto p_hat = random_interior(rng, k);
        const auto p_theta = random_interior(rng, k);
        const MixingWeight w(0.15 + 0.7 * rng.uniform());
        const long long n = 50 + 37 * rep;
        const double direct = mse_taylor(p_hat, p_theta, n, w);
        const double viamoments = mse_from_moments(p_hat, p_theta, n, w);
        REQUIRE(direct == Approx(viamoments).epsilon(1e-12));
    }
}

TEST_CASE("concentration bound") {
    REQUIRE(concentration_bound(0.1, 1000, 2, 1.0) ==
            Approx(0.3283399944955952).epsilon(1e-14));  // 4 exp(-5/2)
    REQUIRE(concentration_bound(0.1, 0, 2, 1.0) == Approx(4.0));
    REQUIRE(concentration_bound(0.1, 2000, 2, 1.0) <
            concentration_bound(0.1, 1000, 2, 1.0));
    REQUIRE(concentration_bound(0.1, 1000, 2, 2.0) >
            concentration_bound(0.1, 1000, 2, 1.0));
    REQUIRE_THROWS_AS(concentration_bound(0.0, 10, 2, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(concentration_bound(0.1, 10, 1, 1.0), std::invalid_argument);
}

TEST_CASE("ku estimation") {
    const CategoricalPmf p_hat({0.4, 0.35, 0.25});
    std::vector<CategoricalPmf> grid = {CategoricalPmf({0.3, 0.4, 0.3}),
                                        CategoricalPmf({0.25, 0.35, 0.4})};
    const double base = estimate_ku(p_hat, grid);
    REQUIRE(base > 0.0);
    // adding a more extreme grid point cannot shrink the max
    grid.push_back(CategoricalPmf({0.9, 0.05, 0.05}));
    REQUIRE(estimate_ku(p_hat, grid) >= base);
    REQUIRE_THROWS_AS(estimate_ku(p_hat, {}), std::invalid_argument);
}
