#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "jsdinfer/simulators.hpp"

using namespace jsdinfer;
using Catch::Approx;

namespace {

const std::vector<double> kNfdsTrueTheta = {-5.3, -2.5, -5.3};

NfdsLiteConfig small_nfds() {
    NfdsLiteConfig cfg;
    cfg.kappa = 2e4;
    cfg.clusters = 10;
    cfg.sample_epochs = {12, 24};
    return cfg;
}

}  // namespace

TEST_CASE("softmax decay model") {
    SoftmaxDecayModel m(5);
    REQUIRE(m.dim() == 1);
    REQUIRE(m.epochs() == 1);
    REQUIRE(m.k() == 5);
    REQUIRE(m.name() == "softmax_decay");

    const auto p = m.true_pmf({0.2})[0];
    const std::vector<double> expect = {0.286763726302377, 0.2347822815909934,
                                        0.19222347421636085, 0.15737926980442712,
                                        0.1288512480858415};
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(p[i] == Approx(expect[i]).epsilon(1e-14));

    RngStream rng(1);
    const auto sims = m.simulate({0.2}, 1000, rng);
    REQUIRE(sims.size() == 1);
    REQUIRE(sims[0].n() == 1000);
    REQUIRE(sims[0].size() == 5);
    REQUIRE_THROWS_AS(m.simulate({2.5}, 100, rng), std::domain_error);
    REQUIRE_THROWS_AS(m.simulate({0.1, 0.2}, 100, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(m.simulate({0.2}, 0, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(SoftmaxDecayModel(1), std::invalid_argument);

    // theta = 0 is uniform
    const auto u = m.true_pmf({0.0})[0];
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(u[i] == Approx(0.2).epsilon(1e-14));
}

TEST_CASE("log linear model") {
    LogLinearModel two(false);
    REQUIRE(two.dim() == 2);
    REQUIRE(two.k() == 4);
    REQUIRE(two.name() == "log_linear");
    const auto p2 = two.true_pmf({-0.25, 0.15})[0];
    const std::vector<double> e2 = {0.21687541198316362, 0.1606652568149818,
                                    0.35756710482849535, 0.26489222637335924};
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(p2[i] == Approx(e2[i]).epsilon(1e-14));

    LogLinearModel sat(true);
    REQUIRE(sat.dim() == 3);
    REQUIRE(sat.name() == "log_linear_saturated");
    const auto p3 = sat.true_pmf({-0.20, 0.10, 0.40})[0];
    const std::vector<double> e3 = {0.3067858973963041, 0.11286022449343178,
                                    0.20564473686577547, 0.3747091412444887};
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(p3[i] == Approx(e3[i]).epsilon(1e-14));

    // the 2-parameter model is the saturated one at lxy = 0
    const auto a = two.true_pmf({0.3, -0.4})[0];
    const auto b = sat.true_pmf({0.3, -0.4, 0.0})[0];
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(a[i] == Approx(b[i]).margin(1e-15));
}

TEST_CASE("bernoulli model") {
    BernoulliModel m;
    const auto p = m.true_pmf({0.3})[0];
    REQUIRE(p[0] == Approx(0.7));
    REQUIRE(p[1] == Approx(0.3));
    RngStream rng(4);
    REQUIRE_THROWS_AS(m.simulate({0.0}, 10, rng), std::domain_error);
}

TEST_CASE("model factory") {
    REQUIRE(make_model("softmax_decay", 7)->k() == 7);
    REQUIRE(make_model("log_linear")->dim() == 2);
    REQUIRE(make_model("log_linear_saturated")->dim() == 3);
    REQUIRE(make_model("bernoulli")->k() == 2);
    REQUIRE(make_model("nfds_lite", 5, small_nfds())->epochs() == 2);
    REQUIRE_THROWS_AS(make_model("banana"), std::invalid_argument);
}

TEST_CASE("alias table matches its weights") {
    const std::vector<double> w = {0.5, 0.125, 0.25, 0.125};
    detail::AliasTable table(w);
    RngStream rng(9);
    const int n = 200000;
    std::vector<long long> hits(w.size(), 0);
    for (int i = 0; i < n; ++i) ++hits[table.sample(rng)];
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double phat = static_cast<double>(hits[i]) / n;
        const double se = std::sqrt(w[i] * (1.0 - w[i]) / n);
        REQUIRE(phat == Approx(w[i]).margin(4.5 * se));
    }
    REQUIRE_THROWS_AS(detail::AliasTable({}), std::invalid_argument);
    REQUIRE_THROWS_AS(detail::AliasTable({0.0, 0.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(detail::AliasTable({1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("nfds config validation") {
    NfdsLiteConfig cfg = small_nfds();
    cfg.clusters = 7;
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
    cfg = small_nfds();
    cfg.loci = 0;
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
    cfg = small_nfds();
    cfg.loci = 33;
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
    cfg = small_nfds();
    cfg.kappa = 500.0;
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
    cfg = small_nfds();
    cfg.vaccine_fraction = 0.6;
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
    cfg = small_nfds();
    cfg.sample_epochs = {};
    REQUIRE_THROWS_AS(NfdsLiteModel(cfg), std::invalid_argument);
}

TEST_CASE("nfds simulation basics") {
    NfdsLiteModel m(small_nfds());
    REQUIRE(m.dim() == 3);
    REQUIRE(m.k() == 4);
    REQUIRE(m.epochs() == 2);
    REQUIRE(m.name() == "nfds_lite");
    REQUIRE(m.config().clusters == 10);
    REQUIRE_FALSE(m.has_true_pmf());
    REQUIRE_THROWS_AS(m.true_pmf(kNfdsTrueTheta), std::logic_error);

    RngStream r1(100), r2(100);
    const auto a = m.simulate(kNfdsTrueTheta, 500, r1);
    const auto b = m.simulate(kNfdsTrueTheta, 500, r2);
    REQUIRE(a.size() == 2);
    for (std::size_t e = 0; e < 2; ++e) {
        REQUIRE(a[e].n() == 500);
        REQUIRE(a[e].size() == 4);
        for (std::size_t i = 0; i < 4; ++i) REQUIRE(a[e][i] == b[e][i]);
    }

    RngStream r3(101);
    const auto c = m.simulate(kNfdsTrueTheta, 500, r3);
    bool differs = false;
    for (std::size_t i = 0; i < 4; ++i) differs = differs || (a[0][i] != c[0][i]);
    REQUIRE(differs);

    REQUIRE_THROWS_AS(m.simulate({0.0, 0.0, 0.0}, 100, r3), std::domain_error);
}

TEST_CASE("nfds categories stay populated under selection") {
    // NFDS keeps rare types around: at the reference theta all four
    // categories should carry mass at both epochs for a large sample.
    NfdsLiteModel m(small_nfds());
    RngStream rng(7);
    std::vector<long long> totals(4, 0);
    for (int rep = 0; rep < 5; ++rep) {
        const auto sims = m.simulate(kNfdsTrueTheta, 2000, rng);
        for (const auto& s : sims)
            for (std::size_t i = 0; i < 4; ++i) totals[i] += s[i];
    }
    for (std::size_t i = 0; i < 4; ++i) REQUIRE(totals[i] > 0);
}

TEST_CASE("nfds counts are overdispersed relative to multinomial") {
    // Between-replicate variance of category proportions exceeds the
    // multinomial qbar(1-qbar)/n level; this is the effect the ESS corrects.
    NfdsLiteModel m(small_nfds());
    RngStream rng(11);
    const long long n = 1000;
    const int reps = 500;
    std::vector<std::vector<double>> props;
    props.reserve(reps);
    for (int r = 0; r < reps; ++r) {
        const auto sims = m.simulate(kNfdsTrueTheta, n, rng);
        const auto pmf = sims[1].to_pmf();
        props.push_back(pmf.probs());
    }
    std::vector<double> qbar(4, 0.0);
    for (const auto& row : props)
        for (std::size_t i = 0; i < 4; ++i) qbar[i] += row[i];
    for (auto& q : qbar) q /= reps;
    double obs_var = 0.0, mult_var = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        double v = 0.0;
        for (const auto& row : props) {
            const double d = row[i] - qbar[i];
            v += d * d;
        }
        obs_var += v / reps;
        mult_var += qbar[i] * (1.0 - qbar[i]) / static_cast<double>(n);
    }
    REQUIRE(obs_var > 1.1 * mult_var);
}
