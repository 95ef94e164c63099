#pragma once

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "jsdinfer/gp.hpp"
#include "jsdinfer/inference.hpp"
#include "jsdinfer/simulators.hpp"

namespace jsdinfer {

/// Raised for malformed or inconsistent user configuration; the CLI maps
/// this (and std::invalid_argument/domain_error) to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form; keeps CSV output byte-stable.
inline std::string fmt_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

struct GridSpec {
    double lo;
    double hi;
    long long points;
};

/// Cartesian product of per-dimension linear grids, last dimension fastest.
inline std::vector<std::vector<double>> expand_grid(const std::vector<GridSpec>& spec) {
    if (spec.empty()) throw ConfigError("grid: no dimensions given");
    long long total = 1;
    for (const auto& g : spec) {
        if (g.points < 1) throw ConfigError("grid: points must be >= 1");
        if (g.points > 1 && !(g.hi > g.lo)) throw ConfigError("grid: hi must exceed lo");
        total *= g.points;
        if (total > 2000000) throw ConfigError("grid: more than 2e6 points");
    }
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(total));
    std::vector<double> point(spec.size());
    for (long long idx = 0; idx < total; ++idx) {
        long long rem = idx;
        for (std::size_t d = spec.size(); d-- > 0;) {
            const long long i = rem % spec[d].points;
            rem /= spec[d].points;
            point[d] = spec[d].points == 1
                           ? spec[d].lo
                           : spec[d].lo + (spec[d].hi - spec[d].lo) *
                                              static_cast<double>(i) /
                                              static_cast<double>(spec[d].points - 1);
        }
        out.push_back(point);
    }
    return out;
}

struct NRule {
    enum class Kind { n_o, multiple, fixed };
    Kind kind = Kind::n_o;
    double value = 0.0;

    long long resolve(long long n_o) const {
        switch (kind) {
            case Kind::n_o: return n_o;
            case Kind::multiple: return std::llround(value * static_cast<double>(n_o));
            case Kind::fixed: return static_cast<long long>(value);
        }
        throw std::logic_error("NRule: unreachable");
    }
};

struct ModelSpec {
    std::string name = "softmax_decay";
    std::size_t softmax_k = 5;
    NfdsLiteConfig nfds;

    std::unique_ptr<SimulatorModel> build() const { return make_model(name, softmax_k, nfds); }
};

struct ExperimentConfig {
    ModelSpec model;
    std::vector<double> true_theta;
    std::vector<long long> n_obs;
    NRule n_rule;
    long long m = 200;
    long long replicates = 300;
    std::vector<double> alphas{0.05};
    std::string mode = "mc";  // "mc" | "bolfi"
    EssMode ess_mode = EssMode::off;
    std::vector<GridSpec> grid;
    std::uint64_t master_seed = 0;
    MixingWeight w{0.5};
    std::optional<long long> collapse_threshold;
    std::vector<std::vector<long long>> observed;  // confset / teststat input
    BoConfig bolfi;
    long long sim_n = 1000;  // `simulate` subcommand sample size
};

namespace detail {

inline NRule parse_n_rule(const std::string& s) {
    NRule r;
    if (s == "n_o") {
        r.kind = NRule::Kind::n_o;
        return r;
    }
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
        const std::string head = s.substr(0, colon);
        std::string tail = s.substr(colon + 1);
        tail.erase(0, tail.find_first_not_of(" \t"));
        try {
            const double v = std::stod(tail);
            if (head == "multiple" && v > 0.0) {
                r.kind = NRule::Kind::multiple;
                r.value = v;
                return r;
            }
            if (head == "fixed" && v >= 1.0) {
                r.kind = NRule::Kind::fixed;
                r.value = std::floor(v);
                return r;
            }
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("n_rule must be \"n_o\", \"multiple: c\" or \"fixed: v\", got \"" + s +
                      "\"");
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig cfg;
    try {
        if (j.contains("model")) {
            const auto& m = j.at("model");
            cfg.model.name = m.at("name").get<std::string>();
            if (m.contains("k")) cfg.model.softmax_k = m.at("k").get<std::size_t>();
            auto& nf = cfg.model.nfds;
            if (m.contains("kappa")) nf.kappa = m.at("kappa").get<double>();
            if (m.contains("clusters")) nf.clusters = m.at("clusters").get<std::size_t>();
            if (m.contains("loci")) nf.loci = m.at("loci").get<std::size_t>();
            if (m.contains("vaccine_fraction"))
                nf.vaccine_fraction = m.at("vaccine_fraction").get<double>();
            if (m.contains("flip_prob")) nf.flip_prob = m.at("flip_prob").get<double>();
            if (m.contains("novel_genotypes"))
                nf.novel_genotypes = m.at("novel_genotypes").get<std::size_t>();
            if (m.contains("novel_pool_weight"))
                nf.novel_pool_weight = m.at("novel_pool_weight").get<double>();
            if (m.contains("sample_epochs"))
                nf.sample_epochs = m.at("sample_epochs").get<std::vector<long long>>();
            if (m.contains("init_seed")) nf.init_seed = m.at("init_seed").get<std::uint64_t>();
        }
        if (j.contains("true_theta"))
            cfg.true_theta = j.at("true_theta").get<std::vector<double>>();
        if (j.contains("n_obs")) {
            if (j.at("n_obs").is_array())
                cfg.n_obs = j.at("n_obs").get<std::vector<long long>>();
            else
                cfg.n_obs = {j.at("n_obs").get<long long>()};
        }
        if (j.contains("n_rule"))
            cfg.n_rule = detail::parse_n_rule(j.at("n_rule").get<std::string>());
        if (j.contains("m")) cfg.m = j.at("m").get<long long>();
        if (j.contains("replicates")) cfg.replicates = j.at("replicates").get<long long>();
        if (j.contains("alphas")) cfg.alphas = j.at("alphas").get<std::vector<double>>();
        if (j.contains("mode")) cfg.mode = j.at("mode").get<std::string>();
        if (j.contains("ess"))
            cfg.ess_mode = ess_mode_from_string(j.at("ess").get<std::string>());
        if (j.contains("grid"))
            for (const auto& g : j.at("grid"))
                cfg.grid.push_back({g.at("lo").get<double>(), g.at("hi").get<double>(),
                                    g.at("points").get<long long>()});
        if (j.contains("seed")) cfg.master_seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("mixing_weight"))
            cfg.w = MixingWeight(j.at("mixing_weight").get<double>());
        if (j.contains("collapse_threshold"))
            cfg.collapse_threshold = j.at("collapse_threshold").get<long long>();
        if (j.contains("observed"))
            cfg.observed = j.at("observed").get<std::vector<std::vector<long long>>>();
        if (j.contains("n")) cfg.sim_n = j.at("n").get<long long>();
        if (j.contains("bolfi")) {
            const auto& b = j.at("bolfi");
            if (b.contains("init")) cfg.bolfi.init_count = b.at("init").get<int>();
            if (b.contains("budget")) cfg.bolfi.budget = b.at("budget").get<int>();
            if (b.contains("lcb_weight")) cfg.bolfi.lcb_weight = b.at("lcb_weight").get<double>();
            if (b.contains("fit_subsample"))
                cfg.bolfi.fit_subsample = b.at("fit_subsample").get<int>();
            if (b.contains("n"))
                cfg.bolfi.n = b.at("n").get<long long>();
            else if (!cfg.n_obs.empty())
                cfg.bolfi.n = cfg.n_rule.resolve(cfg.n_obs.front());
        } else if (!cfg.n_obs.empty()) {
            cfg.bolfi.n = cfg.n_rule.resolve(cfg.n_obs.front());
        }
        cfg.bolfi.w = cfg.w;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    if (cfg.replicates < 1) throw ConfigError("config: replicates must be >= 1");
    if (cfg.m < 2) throw ConfigError("config: m must be >= 2");
    for (double a : cfg.alphas)
        if (!(a > 0.0 && a < 1.0)) throw ConfigError("config: alphas must lie in (0,1)");
    if (cfg.alphas.empty()) throw ConfigError("config: alphas must be non-empty");
    std::sort(cfg.alphas.begin(), cfg.alphas.end());
    if (std::adjacent_find(cfg.alphas.begin(), cfg.alphas.end()) != cfg.alphas.end())
        throw ConfigError("config: duplicate alpha");
    if (cfg.mode != "mc" && cfg.mode != "bolfi")
        throw ConfigError("config: mode must be \"mc\" or \"bolfi\"");
    for (long long n_o : cfg.n_obs)
        if (n_o < 1) throw ConfigError("config: n_obs entries must be >= 1");
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

/// Merges categories whose summed observed count falls below the threshold
/// into one appended tail category. Identity when nothing falls below.
struct CollapseMap {
    std::vector<std::size_t> category_of;  // input category -> output category
    std::size_t k_out = 0;
    bool active = false;
};

inline CollapseMap build_collapse_map(const std::vector<EmpiricalCounts>& observed,
                                      long long threshold) {
    if (observed.empty()) throw std::invalid_argument("collapse: no observed epochs");
    const std::size_t k = observed.front().size();
    std::vector<long long> total(k, 0);
    for (const auto& o : observed) {
        if (o.size() != k) throw std::invalid_argument("collapse: ragged observed epochs");
        for (std::size_t i = 0; i < k; ++i) total[i] += o[i];
    }
    CollapseMap map;
    map.category_of.resize(k);
    std::size_t kept = 0;
    bool merged = false;
    for (std::size_t i = 0; i < k; ++i)
        if (total[i] >= threshold)
            map.category_of[i] = kept++;
        else
            merged = true;
    if (!merged) {
        map.k_out = k;
        map.active = false;
        for (std::size_t i = 0; i < k; ++i) map.category_of[i] = i;
        return map;
    }
    map.k_out = kept + 1;
    if (map.k_out < 2) throw ConfigError("collapse: fewer than 2 categories would remain");
    for (std::size_t i = 0; i < k; ++i)
        if (total[i] < threshold) map.category_of[i] = kept;  // tail
    map.active = true;
    return map;
}

inline EmpiricalCounts apply_collapse(const CollapseMap& map, const EmpiricalCounts& counts) {
    if (counts.size() != map.category_of.size())
        throw std::invalid_argument("collapse: size mismatch");
    std::vector<long long> out(map.k_out, 0);
    for (std::size_t i = 0; i < counts.size(); ++i) out[map.category_of[i]] += counts[i];
    return EmpiricalCounts(std::move(out));
}

/// View of a base model with the collapse map applied to every epoch.
class CollapsedModel : public SimulatorModel {
public:
    CollapsedModel(const SimulatorModel& base, CollapseMap map)
        : base_(base), map_(std::move(map)) {
        if (map_.k_out < 2) throw std::invalid_argument("CollapsedModel: k_out must be >= 2");
    }
    std::size_t dim() const override { return base_.dim(); }
    std::vector<ParamBounds> bounds() const override { return base_.bounds(); }
    std::size_t epochs() const override { return base_.epochs(); }
    std::size_t k() const override { return map_.k_out; }
    std::string name() const override { return base_.name() + "_collapsed"; }

protected:
    std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta, long long n,
                                             RngStream& rng) const override {
        auto sims = base_.simulate(theta, n, rng);
        for (auto& s : sims) s = apply_collapse(map_, s);
        return sims;
    }

private:
    const SimulatorModel& base_;
    CollapseMap map_;
};

struct CoverageRow {
    long long n_obs;
    double alpha;
    double coverage;
    double se;
    long long replicates;
};

struct CoverageTable {
    std::vector<CoverageRow> rows;
    long long failures = 0;
};

inline std::string coverage_csv(const CoverageTable& t) {
    std::string out = "n_obs,alpha,coverage,se,replicates\n";
    for (const auto& r : t.rows)
        out += std::to_string(r.n_obs) + "," + fmt_double(r.alpha) + "," +
               fmt_double(r.coverage) + "," + fmt_double(r.se) + "," +
               std::to_string(r.replicates) + "\n";
    return out;
}

inline nlohmann::json coverage_json(const CoverageTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : t.rows)
        rows.push_back({{"n_obs", r.n_obs},
                        {"alpha", r.alpha},
                        {"coverage", r.coverage},
                        {"se", r.se},
                        {"replicates", r.replicates}});
    return {{"schema_version", 1}, {"rows", rows}, {"failures", t.failures}};
}

namespace detail {

/// Index-sharded worker pool; results must be written to index-keyed slots
/// so the reduction order is independent of scheduling.
template <typename Fn>
void parallel_for(long long count, int workers, Fn&& fn) {
    if (workers <= 1 || count <= 1) {
        for (long long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long long> next{0};
    auto body = [&]() {
        for (;;) {
            const long long i = next.fetch_add(1);
            if (i >= count) return;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int spawn = static_cast<int>(
        std::min<long long>(count, static_cast<long long>(workers)));
    pool.reserve(static_cast<std::size_t>(spawn));
    for (int t = 0; t < spawn; ++t) pool.emplace_back(body);
    for (auto& th : pool) th.join();
}

struct ReplicateOutcome {
    std::vector<char> accepted;  // per alpha
    std::vector<double> ess;     // per epoch, when estimated
    bool failed = false;
    std::string error;
};

}  // namespace detail

/// Coverage study: per replicate, observe at the true theta, test the true
/// theta, and count acceptances per alpha. Failures are recorded, not fatal.
inline CoverageTable run_coverage(const ExperimentConfig& cfg, int workers = 1) {
    const auto model = cfg.model.build();
    if (cfg.true_theta.size() != model->dim())
        throw ConfigError("config: true_theta dimension mismatch");
    model->check_theta(cfg.true_theta);
    if (cfg.n_obs.empty()) throw ConfigError("config: n_obs required for coverage");
    if (cfg.ess_mode == EssMode::at_min)
        throw ConfigError("config: at-min ESS needs a grid; use confset");
    if (cfg.mode == "bolfi") {
        if (model->epochs() != 1)
            throw ConfigError("config: bolfi estimation supports single-epoch models");
        if (cfg.ess_mode != EssMode::off)
            throw ConfigError("config: bolfi estimation has no replicate ESS");
    }

    CoverageTable table;
    for (std::size_t noi = 0; noi < cfg.n_obs.size(); ++noi) {
        const long long n_o = cfg.n_obs[noi];
        const long long n = cfg.n_rule.resolve(n_o);
        std::vector<detail::ReplicateOutcome> outcomes(
            static_cast<std::size_t>(cfg.replicates));

        detail::parallel_for(cfg.replicates, workers, [&](long long r) {
            auto& out = outcomes[static_cast<std::size_t>(r)];
            try {
                RngStream rep(cfg.master_seed,
                              static_cast<std::uint64_t>(noi) *
                                      static_cast<std::uint64_t>(cfg.replicates) +
                                  static_cast<std::uint64_t>(r));
                auto obs_rng = rep.substream(0);
                auto est_rng = rep.substream(1);
                auto observed = model->simulate(cfg.true_theta, n_o, obs_rng);

                const SimulatorModel* active = model.get();
                std::unique_ptr<CollapsedModel> collapsed;
                if (cfg.collapse_threshold) {
                    const auto map = build_collapse_map(observed, *cfg.collapse_threshold);
                    if (map.active) {
                        for (auto& o : observed) o = apply_collapse(map, o);
                        collapsed = std::make_unique<CollapsedModel>(*model, map);
                        active = collapsed.get();
                    }
                }

                if (cfg.mode == "mc") {
                    TestOptions opt;
                    opt.n = n;
                    opt.m = cfg.m;
                    opt.w = cfg.w;
                    opt.ess_mode = cfg.ess_mode;
                    opt.alphas = cfg.alphas;
                    const auto rep_out =
                        evaluate_theta(*active, cfg.true_theta, observed, opt, est_rng);
                    for (double a : cfg.alphas)
                        out.accepted.push_back(rep_out.accepted.at(a) ? 1 : 0);
                    out.ess = rep_out.ess;
                } else {
                    BoConfig bo = cfg.bolfi;
                    bo.n = n;
                    bo.w = cfg.w;
                    GpConfig gp;
                    gp.map_seed = est_rng.next_u64();
                    const auto s = bolfi_run(*active, observed, bo, gp, est_rng);
                    const double e_jsd = surrogate_expected_jsd(s, cfg.true_theta);
                    const double t = test_statistic(e_jsd, static_cast<double>(n_o),
                                                    static_cast<double>(n), active->k(),
                                                    cfg.w);
                    const double dof = static_cast<double>(active->k() - 1);
                    for (double a : cfg.alphas)
                        out.accepted.push_back(t <= chi2_quantile(1.0 - a, dof) ? 1 : 0);
                }
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
        });

        long long ok = 0;
        std::vector<long long> hits(cfg.alphas.size(), 0);
        for (const auto& out : outcomes) {
            if (out.failed) {
                ++table.failures;
                continue;
            }
            ++ok;
            for (std::size_t a = 0; a < cfg.alphas.size(); ++a) hits[a] += out.accepted[a];
        }
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
            CoverageRow row;
            row.n_obs = n_o;
            row.alpha = cfg.alphas[a];
            row.replicates = ok;
            row.coverage = ok > 0 ? static_cast<double>(hits[a]) / static_cast<double>(ok)
                                  : 0.0;
            row.se = ok > 0 ? std::sqrt(row.coverage * (1.0 - row.coverage) /
                                        static_cast<double>(ok))
                            : 0.0;
            table.rows.push_back(row);
        }
    }
    return table;
}

inline std::vector<EmpiricalCounts> counts_from_config(const ExperimentConfig& cfg,
                                                       const SimulatorModel& model) {
    if (cfg.observed.empty()) throw ConfigError("config: observed counts required");
    if (cfg.observed.size() != model.epochs())
        throw ConfigError("config: observed must have one row per epoch (" +
                          std::to_string(model.epochs()) + ")");
    std::vector<EmpiricalCounts> out;
    for (const auto& row : cfg.observed) {
        if (row.size() != model.k())
            throw ConfigError("config: observed rows must have k = " +
                              std::to_string(model.k()) + " entries");
        try {
            out.emplace_back(row);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: observed: ") + e.what());
        }
    }
    return out;
}

struct ConfsetReport {
    std::vector<std::vector<double>> grid;
    std::vector<double> t_stat;
    long long dof = 0;
    std::vector<double> alphas;
    std::vector<std::vector<char>> accepted;  // [alpha][grid point]
    std::size_t min_index = 0;
    std::vector<double> ess;  // per epoch at the minimizer, in at-min mode
};

/// Test inversion over the configured grid; decisions for every alpha are
/// derived from one t_stat pass since T does not depend on alpha.
inline ConfsetReport run_confset(const ExperimentConfig& cfg) {
    const auto model = cfg.model.build();
    if (cfg.mode != "mc") throw ConfigError("config: confset supports mc mode only");
    const auto observed = counts_from_config(cfg, *model);
    const auto grid = expand_grid(cfg.grid);
    if (grid.front().size() != model->dim())
        throw ConfigError("config: grid dimension mismatch");
    for (const auto& th : grid) model->check_theta(th);

    TestOptions opt;
    opt.n = cfg.n_rule.resolve(observed.front().n());
    opt.m = cfg.m;
    opt.w = cfg.w;
    opt.ess_mode = cfg.ess_mode;
    opt.alphas = cfg.alphas;

    RngStream root(cfg.master_seed, 0);
    auto est_rng = root.substream(1);
    const auto cs =
        confidence_set(*model, observed, grid, cfg.alphas.front(), opt, est_rng);

    ConfsetReport rep;
    rep.grid = cs.grid;
    rep.t_stat = cs.t_stat;
    rep.dof = cs.dof;
    rep.alphas = cfg.alphas;
    rep.min_index = cs.min_index;
    for (double a : cfg.alphas) {
        const double h = chi2_quantile(1.0 - a, static_cast<double>(cs.dof));
        std::vector<char> acc;
        acc.reserve(cs.t_stat.size());
        for (double t : cs.t_stat) acc.push_back(t <= h ? 1 : 0);
        rep.accepted.push_back(std::move(acc));
    }
    return rep;
}

inline std::string confset_csv(const ConfsetReport& r) {
    std::string out;
    const std::size_t d = r.grid.front().size();
    for (std::size_t j = 0; j < d; ++j) out += "theta_" + std::to_string(j) + ",";
    out += "t_stat";
    for (double a : r.alphas) out += ",accepted_" + fmt_double(a);
    out += "\n";
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
        for (std::size_t j = 0; j < d; ++j) out += fmt_double(r.grid[g][j]) + ",";
        out += fmt_double(r.t_stat[g]);
        for (std::size_t a = 0; a < r.alphas.size(); ++a)
            out += std::string(",") + (r.accepted[a][g] ? "1" : "0");
        out += "\n";
    }
    return out;
}

inline nlohmann::json confset_json(const ConfsetReport& r) {
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
        nlohmann::json acc = nlohmann::json::object();
        for (std::size_t a = 0; a < r.alphas.size(); ++a)
            acc[fmt_double(r.alphas[a])] = static_cast<bool>(r.accepted[a][g]);
        pts.push_back({{"theta", r.grid[g]}, {"t_stat", r.t_stat[g]}, {"accepted", acc}});
    }
    return {{"schema_version", 1},
            {"dof", r.dof},
            {"min_index", r.min_index},
            {"points", pts}};
}

struct NfdsEssResult {
    CoverageTable raw;        // n_o / n as configured
    CoverageTable corrected;  // both sizes replaced by the epoch ESS
    double mean_ess = 0.0;
    long long failures = 0;
};

/// Paired coverage study on identical replicates: raw chi-square calibration
/// against the ESS-corrected one.
inline NfdsEssResult run_nfds_ess_study(const ExperimentConfig& cfg, int workers = 1) {
    if (cfg.model.name != "nfds_lite")
        throw ConfigError("config: nfds-ess requires the nfds_lite model");
    const auto model = cfg.model.build();
    if (cfg.true_theta.size() != model->dim())
        throw ConfigError("config: true_theta dimension mismatch");
    model->check_theta(cfg.true_theta);
    if (cfg.n_obs.empty()) throw ConfigError("config: n_obs required");
    if (cfg.mode != "mc") throw ConfigError("config: nfds-ess supports mc mode only");

    const std::size_t k = model->k();
    const std::size_t epochs = model->epochs();
    NfdsEssResult res;
    double ess_sum = 0.0;
    long long ess_count = 0;

    for (std::size_t noi = 0; noi < cfg.n_obs.size(); ++noi) {
        const long long n_o = cfg.n_obs[noi];
        const long long n = cfg.n_rule.resolve(n_o);
        struct Pair {
            detail::ReplicateOutcome raw;
            detail::ReplicateOutcome corrected;
        };
        std::vector<Pair> outcomes(static_cast<std::size_t>(cfg.replicates));

        detail::parallel_for(cfg.replicates, workers, [&](long long r) {
            auto& out = outcomes[static_cast<std::size_t>(r)];
            try {
                RngStream rep(cfg.master_seed,
                              static_cast<std::uint64_t>(noi) *
                                      static_cast<std::uint64_t>(cfg.replicates) +
                                  static_cast<std::uint64_t>(r));
                auto obs_rng = rep.substream(0);
                auto est_rng = rep.substream(1);
                const auto observed = model->simulate(cfg.true_theta, n_o, obs_rng);
                const auto est = expected_jsd_mc(*model, cfg.true_theta, observed, n, cfg.m,
                                                 cfg.w, est_rng);
                std::vector<EpochStat> raw_stats, ess_stats;
                for (std::size_t e = 0; e < epochs; ++e) {
                    const double s_ess = ess(est[e].sim_proportions);
                    out.raw.ess.push_back(s_ess);
                    raw_stats.push_back({est[e].expected_jsd,
                                         static_cast<double>(observed[e].n()),
                                         static_cast<double>(n)});
                    ess_stats.push_back({est[e].expected_jsd, s_ess, s_ess});
                }
                const auto t_raw = hypothesis_test(raw_stats, k, cfg.alphas, cfg.w);
                const auto t_ess = hypothesis_test(ess_stats, k, cfg.alphas, cfg.w);
                for (double a : cfg.alphas) {
                    out.raw.accepted.push_back(t_raw.accepted.at(a) ? 1 : 0);
                    out.corrected.accepted.push_back(t_ess.accepted.at(a) ? 1 : 0);
                }
            } catch (const std::exception& e) {
                out.raw.failed = true;
                out.raw.error = e.what();
            }
        });

        long long ok = 0;
        std::vector<long long> hits_raw(cfg.alphas.size(), 0), hits_ess(cfg.alphas.size(), 0);
        for (const auto& out : outcomes) {
            if (out.raw.failed) {
                ++res.failures;
                continue;
            }
            ++ok;
            for (double e : out.raw.ess) {
                ess_sum += e;
                ++ess_count;
            }
            for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
                hits_raw[a] += out.raw.accepted[a];
                hits_ess[a] += out.corrected.accepted[a];
            }
        }
        for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
            auto make_row = [&](long long hits) {
                CoverageRow row;
                row.n_obs = n_o;
                row.alpha = cfg.alphas[a];
                row.replicates = ok;
                row.coverage =
                    ok > 0 ? static_cast<double>(hits) / static_cast<double>(ok) : 0.0;
                row.se = ok > 0 ? std::sqrt(row.coverage * (1.0 - row.coverage) /
                                            static_cast<double>(ok))
                                : 0.0;
                return row;
            };
            res.raw.rows.push_back(make_row(hits_raw[a]));
            res.corrected.rows.push_back(make_row(hits_ess[a]));
        }
    }
    res.raw.failures = res.corrected.failures = res.failures;
    res.mean_ess = ess_count > 0 ? ess_sum / static_cast<double>(ess_count) : 0.0;
    return res;
}

inline std::string nfds_ess_csv(const NfdsEssResult& r) {
    std::string out = "rule,n_obs,alpha,coverage,se,replicates\n";
    auto emit = [&](const char* rule, const CoverageTable& t) {
        for (const auto& row : t.rows)
            out += std::string(rule) + "," + std::to_string(row.n_obs) + "," +
                   fmt_double(row.alpha) + "," + fmt_double(row.coverage) + "," +
                   fmt_double(row.se) + "," + std::to_string(row.replicates) + "\n";
    };
    emit("raw", r.raw);
    emit("ess", r.corrected);
    return out;
}

inline nlohmann::json nfds_ess_json(const NfdsEssResult& r) {
    return {{"schema_version", 1},
            {"raw", coverage_json(r.raw)},
            {"ess", coverage_json(r.corrected)},
            {"mean_ess", r.mean_ess},
            {"failures", r.failures}};
}

struct BolfiReport {
    GpSurrogate surrogate;
    std::vector<double> minimizer;
    double min_expected_jsd = 0.0;
    std::vector<EmpiricalCounts> observed;
};

/// One BOLFI estimation run; observed data comes from the config or is
/// simulated at the configured true theta.
inline BolfiReport run_bolfi(const ExperimentConfig& cfg) {
    const auto model = cfg.model.build();
    RngStream root(cfg.master_seed, 0);
    auto obs_rng = root.substream(0);
    auto est_rng = root.substream(1);
    auto min_rng = root.substream(2);

    std::vector<EmpiricalCounts> observed;
    if (!cfg.observed.empty()) {
        observed = counts_from_config(cfg, *model);
    } else {
        if (cfg.true_theta.empty() || cfg.n_obs.empty())
            throw ConfigError("config: bolfi needs observed counts or true_theta + n_obs");
        if (cfg.true_theta.size() != model->dim())
            throw ConfigError("config: true_theta dimension mismatch");
        observed = model->simulate(cfg.true_theta, cfg.n_obs.front(), obs_rng);
    }

    GpConfig gp;
    gp.map_seed = est_rng.next_u64();
    auto s = bolfi_run(*model, observed, cfg.bolfi, gp, est_rng);
    auto minimizer = surrogate_min(s, model->bounds(), min_rng);
    const double at_min = surrogate_expected_jsd(s, minimizer);
    return BolfiReport{std::move(s), std::move(minimizer), at_min, std::move(observed)};
}

inline nlohmann::json surrogate_json(const GpSurrogate& s) {
    return {{"schema_version", 1},
            {"inputs", s.inputs()},
            {"targets", s.targets()},
            {"hyperparams",
             {{"lengthscale", s.hyperparams().lengthscale},
              {"signal_var", s.hyperparams().signal_var},
              {"noise_var", s.hyperparams().noise_var}}},
            {"norm_epochs", s.norm_epochs()}};
}

inline GpSurrogate surrogate_from_json(const nlohmann::json& j) {
    try {
        GpHyperparams hp;
        hp.lengthscale = j.at("hyperparams").at("lengthscale").get<std::vector<double>>();
        hp.signal_var = j.at("hyperparams").at("signal_var").get<double>();
        hp.noise_var = j.at("hyperparams").at("noise_var").get<double>();
        return GpSurrogate::build(j.at("inputs").get<std::vector<std::vector<double>>>(),
                                  j.at("targets").get<std::vector<double>>(), std::move(hp),
                                  j.at("norm_epochs").get<std::size_t>());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("surrogate: ") + e.what());
    }
}

inline nlohmann::json bolfi_json(const BolfiReport& r) {
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : r.observed) obs.push_back(o.counts());
    return {{"schema_version", 1},
            {"minimizer", r.minimizer},
            {"min_expected_jsd", r.min_expected_jsd},
            {"observed", obs},
            {"surrogate", surrogate_json(r.surrogate)}};
}

inline std::string bolfi_csv(const BolfiReport& r) {
    std::string out;
    const std::size_t d = r.surrogate.dim();
    for (std::size_t j = 0; j < d; ++j) out += "theta_" + std::to_string(j) + ",";
    out += "target\n";
    for (std::size_t i = 0; i < r.surrogate.size(); ++i) {
        for (std::size_t j = 0; j < d; ++j)
            out += fmt_double(r.surrogate.inputs()[i][j]) + ",";
        out += fmt_double(r.surrogate.targets()[i]) + "\n";
    }
    return out;
}

inline nlohmann::json test_report_json(const JsdTestReport& r) {
    nlohmann::json acc = nlohmann::json::object();
    for (const auto& [a, ok] : r.accepted) acc[fmt_double(a)] = ok;
    return {{"schema_version", 1},
            {"expected_jsd", r.expected_jsd},
            {"ess", r.ess},
            {"t_stat", r.t_stat},
            {"dof", r.dof},
            {"p_value", r.p_value},
            {"accepted", acc},
            {"warnings", r.warnings}};
}

inline std::string test_report_csv(const JsdTestReport& r) {
    std::string out = "metric,value\n";
    for (std::size_t e = 0; e < r.expected_jsd.size(); ++e)
        out += "expected_jsd_" + std::to_string(e) + "," + fmt_double(r.expected_jsd[e]) + "\n";
    for (std::size_t e = 0; e < r.ess.size(); ++e)
        out += "ess_" + std::to_string(e) + "," + fmt_double(r.ess[e]) + "\n";
    out += "t_stat," + fmt_double(r.t_stat) + "\n";
    out += "dof," + std::to_string(r.dof) + "\n";
    out += "p_value," + fmt_double(r.p_value) + "\n";
    for (const auto& [a, ok] : r.accepted)
        out += "accepted_" + fmt_double(a) + "," + (ok ? std::string("1") : std::string("0")) +
               "\n";
    return out;
}

/// Counts files: CSV (epoch,category,count) or JSON {"counts": [[...]]}.
inline std::string counts_csv(const std::vector<EmpiricalCounts>& counts) {
    std::string out = "epoch,category,count\n";
    for (std::size_t e = 0; e < counts.size(); ++e)
        for (std::size_t i = 0; i < counts[e].size(); ++i)
            out += std::to_string(e) + "," + std::to_string(i) + "," +
                   std::to_string(counts[e][i]) + "\n";
    return out;
}

inline nlohmann::json counts_json(const std::vector<EmpiricalCounts>& counts) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& c : counts) rows.push_back(c.counts());
    return {{"schema_version", 1}, {"counts", rows}};
}

inline std::vector<EmpiricalCounts> parse_counts_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("counts: empty file");
    std::map<long long, std::map<long long, long long>> table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string e, c, v;
        if (!std::getline(row, e, ',') || !std::getline(row, c, ',') ||
            !std::getline(row, v))
            throw ConfigError("counts: malformed row \"" + line + "\"");
        try {
            table[std::stoll(e)][std::stoll(c)] = std::stoll(v);
        } catch (const std::exception&) {
            throw ConfigError("counts: malformed row \"" + line + "\"");
        }
    }
    if (table.empty()) throw ConfigError("counts: no rows");
    std::vector<EmpiricalCounts> out;
    long long expect_epoch = 0;
    for (const auto& [epoch, cats] : table) {
        if (epoch != expect_epoch++) throw ConfigError("counts: epochs must be 0,1,...");
        std::vector<long long> row;
        long long expect_cat = 0;
        for (const auto& [cat, count] : cats) {
            if (cat != expect_cat++) throw ConfigError("counts: categories must be 0,1,...");
            row.push_back(count);
        }
        try {
            out.emplace_back(std::move(row));
        } catch (const std::invalid_argument& e2) {
            throw ConfigError(std::string("counts: ") + e2.what());
        }
    }
    return out;
}

inline std::vector<EmpiricalCounts> load_counts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("counts: cannot open " + path);
    if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("counts: " + path + ": " + e.what());
        }
        const nlohmann::json& rows = j.is_object() ? j.at("counts") : j;
        std::vector<EmpiricalCounts> out;
        try {
            for (const auto& row : rows)
                out.emplace_back(row.get<std::vector<long long>>());
        } catch (const std::exception& e) {
            throw ConfigError(std::string("counts: ") + e.what());
        }
        if (out.empty()) throw ConfigError("counts: no rows");
        return out;
    }
    return parse_counts_csv(in);
}

}  // namespace jsdinfer
