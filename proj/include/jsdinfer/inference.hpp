#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "jsdinfer/asymptotics.hpp"
#include "jsdinfer/categorical.hpp"
#include "jsdinfer/chi2.hpp"
#include "jsdinfer/divergence.hpp"
#include "jsdinfer/simulators.hpp"

namespace jsdinfer {

/// Monte Carlo estimate of the expected JSD at one theta, per epoch.
/// The m simulated proportion vectors are retained for ESS estimation.
struct EpochEstimate {
    double expected_jsd;
    std::vector<std::vector<double>> sim_proportions;  // m rows of k proportions
};

inline std::vector<EpochEstimate> expected_jsd_mc(const SimulatorModel& model,
                                                  const std::vector<double>& theta,
                                                  const std::vector<EmpiricalCounts>& observed,
                                                  long long n, long long m,
                                                  MixingWeight w, RngStream& rng) {
    if (m < 2) throw std::invalid_argument("expected_jsd_mc: m must be >= 2");
    if (observed.size() != model.epochs())
        throw std::invalid_argument("expected_jsd_mc: observed epochs mismatch");
    const std::size_t epochs = observed.size();
    std::vector<CategoricalPmf> obs_pmf;
    obs_pmf.reserve(epochs);
    for (const auto& o : observed) obs_pmf.push_back(o.to_pmf());

    std::vector<EpochEstimate> out(epochs);
    for (auto& e : out) {
        e.expected_jsd = 0.0;
        e.sim_proportions.reserve(static_cast<std::size_t>(m));
    }
    for (long long j = 0; j < m; ++j) {
        const auto sims = model.simulate(theta, n, rng);
        for (std::size_t e = 0; e < epochs; ++e) {
            const auto q = sims[e].to_pmf();
            out[e].expected_jsd += jsd(obs_pmf[e], q, w);
            out[e].sim_proportions.push_back(q.probs());
        }
    }
    for (auto& e : out) e.expected_jsd /= static_cast<double>(m);
    return out;
}

/// Effective sample size from m replicate proportion vectors:
/// ESS = sum_i qbar_i(1-qbar_i) / ((1/m) sum_i sum_j (q_ij - qbar_i)^2).
inline double ess(const std::vector<std::vector<double>>& sim_proportions) {
    const std::size_t m = sim_proportions.size();
    if (m < 2) throw std::invalid_argument("ess: need at least 2 replicates");
    const std::size_t k = sim_proportions.front().size();
    std::vector<double> qbar(k, 0.0);
    for (const auto& row : sim_proportions) {
        if (row.size() != k) throw std::invalid_argument("ess: ragged proportions");
        for (std::size_t i = 0; i < k; ++i) qbar[i] += row[i];
    }
    for (double& q : qbar) q /= static_cast<double>(m);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < k; ++i) num += qbar[i] * (1.0 - qbar[i]);
    for (const auto& row : sim_proportions)
        for (std::size_t i = 0; i < k; ++i) {
            const double d = row[i] - qbar[i];
            den += d * d;
        }
    den /= static_cast<double>(m);
    if (den <= 0.0) throw std::domain_error("ess: degenerate variance (identical replicates)");
    return num / den;
}

/// Chi-square-calibrated statistic for one epoch:
/// T = (2 n_o / (pi (1-pi))) E[JSD] - (n_o / n_eff)(k-1).
/// Under the ESS correction both sizes are the epoch's ESS, so the second
/// term collapses to (k-1).
inline double test_statistic(double expected_jsd, double n_o, double n_eff, std::size_t k,
                             MixingWeight w = MixingWeight()) {
    if (!(n_o >= 1.0) || !(n_eff >= 1.0))
        throw std::invalid_argument("test_statistic: sample sizes must be >= 1");
    if (k < 2) throw std::invalid_argument("test_statistic: k must be >= 2");
    return (2.0 * n_o / (w.pi * (1.0 - w.pi))) * expected_jsd -
           (n_o / n_eff) * static_cast<double>(k - 1);
}

/// Per-epoch inputs to the chi-square test; multi-epoch T is the sum with
/// dof = epochs * (k-1).
struct EpochStat {
    double expected_jsd;
    double n_o;
    double n_eff;
};

struct JsdTestReport {
    std::vector<double> expected_jsd;  // per epoch
    std::vector<double> ess;           // per epoch; empty when no correction data
    double t_stat = 0.0;
    long long dof = 0;
    double p_value = 1.0;
    std::map<double, bool> accepted;  // alpha -> T <= h(alpha)
    std::vector<std::string> warnings;
};

inline JsdTestReport hypothesis_test(const std::vector<EpochStat>& epochs, std::size_t k,
                                     const std::vector<double>& alphas,
                                     MixingWeight w = MixingWeight()) {
    if (epochs.empty()) throw std::invalid_argument("hypothesis_test: no epochs");
    JsdTestReport r;
    for (const auto& e : epochs) {
        r.expected_jsd.push_back(e.expected_jsd);
        r.t_stat += test_statistic(e.expected_jsd, e.n_o, e.n_eff, k, w);
    }
    r.dof = static_cast<long long>(epochs.size() * (k - 1));
    r.p_value =
        std::min(1.0, std::max(0.0, 1.0 - chi2_cdf(r.t_stat, static_cast<double>(r.dof))));
    for (double a : alphas) {
        if (!(a > 0.0 && a < 1.0))
            throw std::invalid_argument("hypothesis_test: alpha outside (0,1)");
        r.accepted[a] = r.t_stat <= chi2_quantile(1.0 - a, static_cast<double>(r.dof));
    }
    return r;
}

/// Observed-count guard per the small-expected-count caveats: categories
/// below 5 observations weaken the chi-square approximation, below 1 more so.
inline std::vector<std::string> count_warnings(const std::vector<EmpiricalCounts>& observed) {
    std::vector<std::string> out;
    for (std::size_t e = 0; e < observed.size(); ++e)
        for (std::size_t i = 0; i < observed[e].size(); ++i) {
            const long long c = observed[e][i];
            if (c < 1)
                out.push_back("epoch " + std::to_string(e) + " category " + std::to_string(i) +
                              " has no observations; chi-square approximation unreliable");
            else if (c < 5)
                out.push_back("epoch " + std::to_string(e) + " category " + std::to_string(i) +
                              " has fewer than 5 observations");
        }
    return out;
}

enum class EssMode { off, at_min, per_theta };

inline EssMode ess_mode_from_string(const std::string& s) {
    if (s == "off") return EssMode::off;
    if (s == "at-min") return EssMode::at_min;
    if (s == "per-theta") return EssMode::per_theta;
    throw std::invalid_argument("ess mode must be off, at-min or per-theta, got " + s);
}

struct TestOptions {
    long long n = 1000;        // simulated size per epoch
    long long m = 200;         // MC replicates
    MixingWeight w{0.5};
    EssMode ess_mode = EssMode::off;
    std::vector<double> alphas = {0.05};
};

/// Full MC test of one theta. EssMode::at_min is a set-level concept and is
/// rejected here; confidence_set owns it.
inline JsdTestReport evaluate_theta(const SimulatorModel& model, const std::vector<double>& theta,
                                    const std::vector<EmpiricalCounts>& observed,
                                    const TestOptions& opt, RngStream& rng) {
    if (opt.ess_mode == EssMode::at_min)
        throw std::invalid_argument("evaluate_theta: at-min ESS needs a grid; use confidence_set");
    const auto est = expected_jsd_mc(model, theta, observed, opt.n, opt.m, opt.w, rng);
    std::vector<EpochStat> stats;
    std::vector<double> esses;
    for (std::size_t e = 0; e < est.size(); ++e) {
        EpochStat s{};
        s.expected_jsd = est[e].expected_jsd;
        if (opt.ess_mode == EssMode::per_theta) {
            const double se = ess(est[e].sim_proportions);
            esses.push_back(se);
            s.n_o = se;
            s.n_eff = se;
        } else {
            s.n_o = static_cast<double>(observed[e].n());
            s.n_eff = static_cast<double>(opt.n);
        }
        stats.push_back(s);
    }
    auto report = hypothesis_test(stats, model.k(), opt.alphas, opt.w);
    report.ess = std::move(esses);
    report.warnings = count_warnings(observed);
    return report;
}

struct ConfidenceSet {
    std::vector<std::vector<double>> grid;
    std::vector<bool> accepted;
    double alpha;
    std::vector<double> t_stat;  // per grid point
    long long dof = 0;
    std::size_t min_index = 0;   // argmin of summed expected JSD
};

/// Test inversion over a grid: the set of theta with T(theta) <= h(alpha).
/// EssMode::at_min estimates ESS at the grid minimizer of expected JSD and
/// applies it to every point; per_theta uses each point's own replicates.
inline ConfidenceSet confidence_set(const SimulatorModel& model,
                                    const std::vector<EmpiricalCounts>& observed,
                                    const std::vector<std::vector<double>>& grid, double alpha,
                                    const TestOptions& opt, RngStream& rng) {
    if (grid.empty()) throw std::invalid_argument("confidence_set: empty grid");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("confidence_set: alpha outside (0,1)");
    const std::size_t k = model.k();
    const std::size_t epochs = model.epochs();

    struct PointData {
        std::vector<double> expected;  // per epoch
        std::vector<double> ess;       // per epoch
        double total_expected = 0.0;
    };
    std::vector<PointData> pts(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto sub = rng.substream(g);
        const auto est = expected_jsd_mc(model, grid[g], observed, opt.n, opt.m, opt.w, sub);
        for (const auto& e : est) {
            pts[g].expected.push_back(e.expected_jsd);
            pts[g].total_expected += e.expected_jsd;
            if (opt.ess_mode != EssMode::off) pts[g].ess.push_back(ess(e.sim_proportions));
        }
    }

    std::size_t min_idx = 0;
    for (std::size_t g = 1; g < grid.size(); ++g)
        if (pts[g].total_expected < pts[min_idx].total_expected) min_idx = g;

    ConfidenceSet cs;
    cs.grid = grid;
    cs.alpha = alpha;
    cs.min_index = min_idx;
    cs.dof = static_cast<long long>(epochs * (k - 1));
    const double h = chi2_quantile(1.0 - alpha, static_cast<double>(cs.dof));
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double t = 0.0;
        for (std::size_t e = 0; e < epochs; ++e) {
            double n_o = static_cast<double>(observed[e].n());
            double n_eff = static_cast<double>(opt.n);
            if (opt.ess_mode == EssMode::per_theta) {
                n_o = n_eff = pts[g].ess[e];
            } else if (opt.ess_mode == EssMode::at_min) {
                n_o = n_eff = pts[min_idx].ess[e];
            }
            t += test_statistic(pts[g].expected[e], n_o, n_eff, k, opt.w);
        }
        cs.t_stat.push_back(t);
        cs.accepted.push_back(t <= h);
    }
    return cs;
}

struct MinJsdResult {
    std::vector<double> theta;
    double value = 0.0;   // summed expected JSD across epochs
    std::size_t index = 0;
};

/// Grid argmin of the MC-estimated expected JSD; ties break to the lowest
/// grid index. The surrogate path lives in the surrogate module.
inline MinJsdResult min_jsd_estimate(const SimulatorModel& model,
                                     const std::vector<EmpiricalCounts>& observed,
                                     const std::vector<std::vector<double>>& grid,
                                     const TestOptions& opt, RngStream& rng) {
    if (grid.empty()) throw std::invalid_argument("min_jsd_estimate: empty grid");
    MinJsdResult best;
    bool first = true;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        auto sub = rng.substream(g);
        const auto est = expected_jsd_mc(model, grid[g], observed, opt.n, opt.m, opt.w, sub);
        double total = 0.0;
        for (const auto& e : est) total += e.expected_jsd;
        if (first || total < best.value) {
            best.theta = grid[g];
            best.value = total;
            best.index = g;
            first = false;
        }
    }
    return best;
}

}  // namespace jsdinfer
