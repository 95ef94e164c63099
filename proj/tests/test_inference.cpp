#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "jsdinfer/chi2.hpp"
#include "jsdinfer/inference.hpp"
#include "jsdinfer/simulators.hpp"

using namespace jsdinfer;
using Catch::Approx;

TEST_CASE("chi-square quantile and cdf") {
    REQUIRE(chi2_quantile(0.95, 4.0) == Approx(9.487729036781154).margin(1e-9));
    REQUIRE(chi2_quantile(0.999, 4.0) == Approx(18.46682695290317).margin(1e-9));
    // dof = 2 has the closed form -2 log(1 - p)
    REQUIRE(chi2_quantile(0.95, 2.0) == Approx(5.991464547107982).margin(1e-10));
    REQUIRE(chi2_cdf(5.991464547107982, 2.0) == Approx(0.95).margin(1e-12));
    REQUIRE(chi2_cdf(0.0, 4.0) == 0.0);
    REQUIRE(chi2_cdf(-3.0, 4.0) == 0.0);
    REQUIRE(chi2_quantile(0.0, 4.0) == 0.0);

    for (double dof : {1.0, 2.0, 4.0, 8.0, 31.0})
        for (double p : {0.01, 0.1, 0.5, 0.9, 0.95, 0.99, 0.999})
            REQUIRE(chi2_cdf(chi2_quantile(p, dof), dof) == Approx(p).margin(1e-9));

    REQUIRE_THROWS_AS(chi2_quantile(1.0, 4.0), std::invalid_argument);
    REQUIRE_THROWS_AS(chi2_quantile(-0.1, 4.0), std::invalid_argument);
    REQUIRE_THROWS_AS(chi2_quantile(0.5, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(chi2_cdf(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("test statistic") {
    // (2*1000/0.25)*0.005 - 4 = 36
    REQUIRE(test_statistic(0.005, 1000.0, 1000.0, 5) == Approx(36.0).margin(1e-12));
    REQUIRE(test_statistic(0.0, 1000.0, 1000.0, 5) == Approx(-4.0).margin(1e-12));
    // ESS substitution: with n_o == n_eff the centering is exactly k-1
    REQUIRE(test_statistic(0.0, 123.4, 123.4, 3) == Approx(-2.0).margin(1e-12));
    // asymmetric mixing weight rescales the leading factor
    MixingWeight w{0.25};
    REQUIRE(test_statistic(0.01, 100.0, 100.0, 2, w) ==
            Approx(2.0 * 100.0 / (0.25 * 0.75) * 0.01 - 1.0).margin(1e-12));
    REQUIRE_THROWS_AS(test_statistic(0.1, 0.5, 100.0, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(test_statistic(0.1, 100.0, 0.0, 3), std::invalid_argument);
    REQUIRE_THROWS_AS(test_statistic(0.1, 100.0, 100.0, 1), std::invalid_argument);
}

TEST_CASE("ess estimator") {
    // two replicates at opposite corners: qbar = (.5,.5), ESS = 1
    REQUIRE(ess({{1.0, 0.0}, {0.0, 1.0}}) == Approx(1.0).margin(1e-12));
    REQUIRE_THROWS_AS(ess({{0.5, 0.5}}), std::invalid_argument);
    REQUIRE_THROWS_AS(ess({{0.5, 0.5}, {0.5, 0.3, 0.2}}), std::invalid_argument);
    REQUIRE_THROWS_AS(ess({{0.5, 0.5}, {0.5, 0.5}}), std::domain_error);
}

TEST_CASE("ess recovers n for multinomial sampling") {
    const CategoricalPmf p({0.4, 0.35, 0.25});
    const long long n = 500;
    RngStream rng(21);
    std::vector<std::vector<double>> props;
    for (int r = 0; r < 2000; ++r)
        props.push_back(multinomial_sample(p, n, rng).to_pmf().probs());
    REQUIRE(ess(props) == Approx(static_cast<double>(n)).epsilon(0.08));
}

TEST_CASE("hypothesis test") {
    EpochStat e1{0.004, 800.0, 8000.0};
    EpochStat e2{0.0035, 800.0, 8000.0};
    const auto r1 = hypothesis_test({e1}, 5, {0.05});
    REQUIRE(r1.dof == 4);
    REQUIRE(r1.t_stat == Approx(test_statistic(0.004, 800.0, 8000.0, 5)).margin(1e-12));
    REQUIRE(r1.p_value == Approx(1.0 - chi2_cdf(r1.t_stat, 4.0)).margin(1e-12));

    const auto r2 = hypothesis_test({e1, e2}, 5, {0.05, 0.2});
    REQUIRE(r2.dof == 8);
    REQUIRE(r2.t_stat == Approx(test_statistic(0.004, 800.0, 8000.0, 5) +
                                test_statistic(0.0035, 800.0, 8000.0, 5))
                             .margin(1e-12));
    REQUIRE(r2.accepted.size() == 2);
    for (const auto& [a, acc] : r2.accepted)
        REQUIRE(acc == (r2.t_stat <= chi2_quantile(1.0 - a, 8.0)));

    // a far-off statistic is rejected, a null-like one accepted
    EpochStat big{0.2, 1000.0, 1000.0};
    REQUIRE_FALSE(hypothesis_test({big}, 5, {0.05}).accepted.at(0.05));
    EpochStat small{0.0005, 1000.0, 1000.0};
    REQUIRE(hypothesis_test({small}, 5, {0.05}).accepted.at(0.05));

    REQUIRE_THROWS_AS(hypothesis_test({}, 5, {0.05}), std::invalid_argument);
    REQUIRE_THROWS_AS(hypothesis_test({e1}, 5, {0.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(hypothesis_test({e1}, 5, {1.0}), std::invalid_argument);
}

TEST_CASE("count warnings") {
    REQUIRE(count_warnings({EmpiricalCounts({50, 60, 70})}).empty());
    const auto w = count_warnings({EmpiricalCounts({0, 3, 10})});
    REQUIRE(w.size() == 2);
    REQUIRE(w[0].find("no observations") != std::string::npos);
    REQUIRE(w[1].find("fewer than 5") != std::string::npos);
}

TEST_CASE("ess mode parsing") {
    REQUIRE(ess_mode_from_string("off") == EssMode::off);
    REQUIRE(ess_mode_from_string("at-min") == EssMode::at_min);
    REQUIRE(ess_mode_from_string("per-theta") == EssMode::per_theta);
    REQUIRE_THROWS_AS(ess_mode_from_string("auto"), std::invalid_argument);
}

TEST_CASE("expected jsd mc") {
    SoftmaxDecayModel model(5);
    RngStream rng(3);
    const auto observed = model.simulate({0.2}, 1000, rng);
    const auto est = expected_jsd_mc(model, {0.2}, observed, 2000, 50, MixingWeight(), rng);
    REQUIRE(est.size() == 1);
    REQUIRE(est[0].sim_proportions.size() == 50);
    REQUIRE(est[0].sim_proportions[0].size() == 5);
    REQUIRE(est[0].expected_jsd > 0.0);
    REQUIRE(est[0].expected_jsd < std::log(2.0));

    REQUIRE_THROWS_AS(expected_jsd_mc(model, {0.2}, observed, 2000, 1, MixingWeight(), rng),
                      std::invalid_argument);
    std::vector<EmpiricalCounts> two_epochs = {observed[0], observed[0]};
    REQUIRE_THROWS_AS(expected_jsd_mc(model, {0.2}, two_epochs, 2000, 10, MixingWeight(), rng),
                      std::invalid_argument);
}

TEST_CASE("evaluate theta") {
    SoftmaxDecayModel model(5);
    RngStream obs_rng(17);
    const auto observed = model.simulate({0.2}, 2000, obs_rng);

    TestOptions opt;
    opt.n = 20000;
    opt.m = 100;
    RngStream rng(18);
    const auto at_truth = evaluate_theta(model, {0.2}, observed, opt, rng);
    REQUIRE(at_truth.dof == 4);
    REQUIRE(at_truth.ess.empty());
    REQUIRE(at_truth.warnings.empty());
    REQUIRE(at_truth.t_stat < chi2_quantile(0.999, 4.0));

    RngStream rng2(18);
    const auto far_off = evaluate_theta(model, {1.5}, observed, opt, rng2);
    REQUIRE(far_off.t_stat > chi2_quantile(0.999, 4.0));
    REQUIRE_FALSE(far_off.accepted.at(0.05));

    TestOptions per = opt;
    per.ess_mode = EssMode::per_theta;
    RngStream rng3(18);
    const auto corrected = evaluate_theta(model, {0.2}, observed, per, rng3);
    REQUIRE(corrected.ess.size() == 1);
    REQUIRE(corrected.ess[0] > 0.0);

    TestOptions bad = opt;
    bad.ess_mode = EssMode::at_min;
    REQUIRE_THROWS_AS(evaluate_theta(model, {0.2}, observed, bad, rng3),
                      std::invalid_argument);
}

TEST_CASE("confidence set and grid minimizer") {
    SoftmaxDecayModel model(5);
    RngStream obs_rng(29);
    const auto observed = model.simulate({0.2}, 1000, obs_rng);

    std::vector<std::vector<double>> grid;
    for (double t = -0.5; t <= 0.9001; t += 0.05) grid.push_back({t});

    TestOptions opt;
    opt.n = 5000;
    opt.m = 60;
    RngStream rng(30);
    const auto cs = confidence_set(model, observed, grid, 0.05, opt, rng);
    REQUIRE(cs.grid.size() == grid.size());
    REQUIRE(cs.t_stat.size() == grid.size());
    REQUIRE(cs.accepted.size() == grid.size());
    REQUIRE(cs.dof == 4);
    const double h = chi2_quantile(0.95, 4.0);
    for (std::size_t g = 0; g < grid.size(); ++g)
        REQUIRE(cs.accepted[g] == (cs.t_stat[g] <= h));
    REQUIRE(std::abs(cs.grid[cs.min_index][0] - 0.2) < 0.15);
    REQUIRE(cs.accepted[cs.min_index]);

    // the same seed reproduces the same set
    RngStream rng_b(30);
    const auto cs_b = confidence_set(model, observed, grid, 0.05, opt, rng_b);
    for (std::size_t g = 0; g < grid.size(); ++g)
        REQUIRE(cs.t_stat[g] == cs_b.t_stat[g]);

    RngStream rng_m(31);
    const auto best = min_jsd_estimate(model, observed, grid, opt, rng_m);
    REQUIRE(std::abs(best.theta[0] - 0.2) < 0.15);
    REQUIRE(best.value >= 0.0);
    REQUIRE(best.index < grid.size());

    REQUIRE_THROWS_AS(confidence_set(model, observed, {}, 0.05, opt, rng),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(confidence_set(model, observed, grid, 0.0, opt, rng),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(min_jsd_estimate(model, observed, {}, opt, rng),
                      std::invalid_argument);
}

TEST_CASE("at-min ess applies the minimizer correction everywhere") {
    SoftmaxDecayModel model(5);
    RngStream obs_rng(41);
    const auto observed = model.simulate({0.2}, 500, obs_rng);
    std::vector<std::vector<double>> grid = {{0.0}, {0.2}, {0.4}};

    TestOptions opt;
    opt.n = 2000;
    opt.m = 40;
    opt.ess_mode = EssMode::at_min;
    RngStream rng(42);
    const auto cs = confidence_set(model, observed, grid, 0.05, opt, rng);

    // replay with ess off: same expected JSD draws, different centering
    TestOptions off = opt;
    off.ess_mode = EssMode::off;
    RngStream rng2(42);
    const auto plain = confidence_set(model, observed, grid, 0.05, off, rng2);
    REQUIRE(cs.min_index == plain.min_index);
    for (std::size_t g = 0; g < grid.size(); ++g)
        REQUIRE(cs.t_stat[g] != plain.t_stat[g]);
}
