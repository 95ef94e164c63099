// Command line front end: simulation, divergence reports, asymptotics,
// chi-square tests, confidence sets, coverage studies, BOLFI estimation.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "jsdinfer/experiment.hpp"

namespace {

using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_path;
    std::string format = "csv";
    int workers = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool need_config) {
    auto* c = cmd->add_option("--config", o.config_path, "JSON configuration file");
    if (need_config) c->required();
    cmd->add_option("--seed", o.seed, "Master seed (overrides the config seed)")
        ->each([&o](const std::string&) { o.seed_set = true; });
    cmd->add_option("--out", o.out_path, "Output path (default stdout)");
    cmd->add_option("--format", o.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--workers", o.workers, "Worker thread count")
        ->check(CLI::PositiveNumber);
}

jsdinfer::ExperimentConfig load_config(const CommonOpts& o) {
    auto cfg = jsdinfer::load_experiment_config(o.config_path);
    if (o.seed_set) cfg.master_seed = o.seed;
    return cfg;
}

void write_out(const CommonOpts& o, const std::string& csv, const json& js) {
    const std::string text = o.format == "json" ? js.dump(2) + "\n" : csv;
    if (o.out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(o.out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file " + o.out_path);
    out << text;
    if (!out) throw std::runtime_error("failed writing " + o.out_path);
}

int run_simulate(const CommonOpts& o) {
    auto cfg = load_config(o);
    const auto model = cfg.model.build();
    if (cfg.true_theta.empty())
        throw jsdinfer::ConfigError("config: simulate needs true_theta");
    if (cfg.sim_n < 1) throw jsdinfer::ConfigError("config: n must be >= 1");
    jsdinfer::RngStream root(cfg.master_seed, 0);
    auto rng = root.substream(0);
    const auto counts = model->simulate(cfg.true_theta, cfg.sim_n, rng);
    write_out(o, jsdinfer::counts_csv(counts), jsdinfer::counts_json(counts));
    return 0;
}

int run_jsd(const CommonOpts& o, const std::string& file_a, const std::string& file_b,
            double pi) {
    const auto a = jsdinfer::load_counts(file_a);
    const auto b = jsdinfer::load_counts(file_b);
    if (a.size() != b.size())
        throw jsdinfer::ConfigError("counts: epoch count mismatch between files");
    const jsdinfer::MixingWeight w(pi);

    std::string csv = "epoch,jsd,sqrt_jsd,tv,kl_ab,kl_ba,jsd_max\n";
    json rows = json::array();
    double total = 0.0;
    for (std::size_t e = 0; e < a.size(); ++e) {
        if (a[e].size() != b[e].size())
            throw jsdinfer::ConfigError("counts: category count mismatch at epoch " +
                                        std::to_string(e));
        const auto p = a[e].to_pmf();
        const auto q = b[e].to_pmf();
        const double d = jsdinfer::jsd(p, q, w);
        total += d;
        const double tvv = jsdinfer::tv(p, q);
        const double klab = jsdinfer::kl(p, q);
        const double klba = jsdinfer::kl(q, p);
        const double top = jsdinfer::binary_entropy(w.pi);
        csv += std::to_string(e) + "," + jsdinfer::fmt_double(d) + "," +
               jsdinfer::fmt_double(std::sqrt(d)) + "," + jsdinfer::fmt_double(tvv) + "," +
               jsdinfer::fmt_double(klab) + "," + jsdinfer::fmt_double(klba) + "," +
               jsdinfer::fmt_double(top) + "\n";
        rows.push_back({{"epoch", e},
                        {"jsd", d},
                        {"sqrt_jsd", std::sqrt(d)},
                        {"tv", tvv},
                        {"kl_ab", klab},
                        {"kl_ba", klba},
                        {"jsd_max", top}});
    }
    write_out(o, csv,
              json{{"schema_version", 1}, {"epochs", rows}, {"total_jsd", total}});
    return 0;
}

int run_moments(const CommonOpts& o) {
    std::ifstream in(o.config_path);
    if (!in) throw jsdinfer::ConfigError("config: cannot open " + o.config_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw jsdinfer::ConfigError(std::string("config: ") + e.what());
    }
    std::vector<double> ph, pt;
    long long n = 0;
    double pi = 0.5;
    try {
        ph = j.at("p_hat").get<std::vector<double>>();
        pt = j.at("p_theta").get<std::vector<double>>();
        n = j.at("n").get<long long>();
        if (j.contains("mixing_weight")) pi = j.at("mixing_weight").get<double>();
    } catch (const json::exception& e) {
        throw jsdinfer::ConfigError(std::string("config: ") + e.what());
    }
    const jsdinfer::CategoricalPmf p_hat(ph), p_theta(pt);
    const jsdinfer::MixingWeight w(pi);
    if (n < 1) throw jsdinfer::ConfigError("config: n must be >= 1");

    const double plug_in = jsdinfer::jsd(p_hat, p_theta, w);
    const double exact = jsdinfer::exact_expected_jsd(p_hat, p_theta, n, w);
    const double vf = jsdinfer::vf_remainder(p_theta, p_hat, w);
    const double voro = jsdinfer::voronovskaya_expected_jsd(p_hat, p_theta, n, w);
    const auto mse = jsdinfer::mse_taylor_terms(p_hat, p_theta, n, w);
    const double var = jsdinfer::variance_taylor(p_hat, p_theta, n, w);
    const auto partials = jsdinfer::jsd_partials(p_hat, p_theta, w);

    std::string csv = "metric,value\n";
    csv += "jsd_plug_in," + jsdinfer::fmt_double(plug_in) + "\n";
    csv += "exact_expected_jsd," + jsdinfer::fmt_double(exact) + "\n";
    csv += "voronovskaya_expected_jsd," + jsdinfer::fmt_double(voro) + "\n";
    csv += "vf_remainder," + jsdinfer::fmt_double(vf) + "\n";
    for (std::size_t t = 0; t < mse.terms.size(); ++t)
        csv += "mse_term_" + std::to_string(t + 1) + "," +
               jsdinfer::fmt_double(mse.terms[t]) + "\n";
    csv += "mse_taylor," + jsdinfer::fmt_double(mse.total) + "\n";
    csv += "variance_taylor," + jsdinfer::fmt_double(var) + "\n";
    for (std::size_t i = 0; i < partials.gradient.size(); ++i)
        csv += "gradient_" + std::to_string(i) + "," +
               jsdinfer::fmt_double(partials.gradient[i]) + "\n";
    for (std::size_t i = 0; i < partials.second.size(); ++i)
        csv += "second_" + std::to_string(i) + "," +
               jsdinfer::fmt_double(partials.second[i]) + "\n";

    write_out(o, csv,
              json{{"schema_version", 1},
                   {"jsd_plug_in", plug_in},
                   {"exact_expected_jsd", exact},
                   {"voronovskaya_expected_jsd", voro},
                   {"vf_remainder", vf},
                   {"mse_terms", mse.terms},
                   {"mse_taylor", mse.total},
                   {"variance_taylor", var},
                   {"gradient", partials.gradient},
                   {"second", partials.second}});
    return 0;
}

int run_teststat(const CommonOpts& o, const std::string& counts_file) {
    auto cfg = load_config(o);
    const auto model = cfg.model.build();
    std::vector<jsdinfer::EmpiricalCounts> observed;
    if (!counts_file.empty()) {
        observed = jsdinfer::load_counts(counts_file);
        if (observed.size() != model->epochs())
            throw jsdinfer::ConfigError("counts: expected one epoch row per model epoch");
        for (const auto& c : observed)
            if (c.size() != model->k())
                throw jsdinfer::ConfigError("counts: category count mismatch with model");
    } else {
        observed = jsdinfer::counts_from_config(cfg, *model);
    }
    if (cfg.true_theta.size() != model->dim())
        throw jsdinfer::ConfigError("config: true_theta dimension mismatch");

    jsdinfer::TestOptions opt;
    opt.n = cfg.n_rule.resolve(observed.front().n());
    opt.m = cfg.m;
    opt.w = cfg.w;
    opt.ess_mode = cfg.ess_mode;
    opt.alphas = cfg.alphas;
    jsdinfer::RngStream root(cfg.master_seed, 0);
    auto est_rng = root.substream(1);
    const auto report =
        jsdinfer::evaluate_theta(*model, cfg.true_theta, observed, opt, est_rng);
    write_out(o, jsdinfer::test_report_csv(report), jsdinfer::test_report_json(report));
    return 0;
}

int run_confset_cmd(const CommonOpts& o, const std::string& counts_file) {
    auto cfg = load_config(o);
    if (!counts_file.empty()) {
        const auto loaded = jsdinfer::load_counts(counts_file);
        cfg.observed.clear();
        for (const auto& c : loaded) cfg.observed.push_back(c.counts());
    }
    const auto report = jsdinfer::run_confset(cfg);
    write_out(o, jsdinfer::confset_csv(report), jsdinfer::confset_json(report));
    return 0;
}

int run_coverage_cmd(const CommonOpts& o) {
    const auto cfg = load_config(o);
    const auto table = jsdinfer::run_coverage(cfg, o.workers);
    write_out(o, jsdinfer::coverage_csv(table), jsdinfer::coverage_json(table));
    return 0;
}

int run_bolfi_cmd(const CommonOpts& o) {
    const auto cfg = load_config(o);
    const auto report = jsdinfer::run_bolfi(cfg);
    write_out(o, jsdinfer::bolfi_csv(report), jsdinfer::bolfi_json(report));
    return 0;
}

int run_nfds_ess(const CommonOpts& o) {
    const auto cfg = load_config(o);
    const auto result = jsdinfer::run_nfds_ess_study(cfg, o.workers);
    write_out(o, jsdinfer::nfds_ess_csv(result), jsdinfer::nfds_ess_json(result));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Likelihood-free inference for categorical simulators "
                 "via the Jensen-Shannon divergence"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string file_a, file_b, counts_file;
    double pi = 0.5;

    auto* simulate = app.add_subcommand("simulate", "Draw counts from a simulator model");
    add_common(simulate, o, true);

    auto* jsd_cmd = app.add_subcommand("jsd", "Divergence report for two count files");
    jsd_cmd->add_option("a", file_a, "First counts file (csv or json)")->required();
    jsd_cmd->add_option("b", file_b, "Second counts file (csv or json)")->required();
    jsd_cmd->add_option("--pi", pi, "Mixing weight");
    add_common(jsd_cmd, o, false);

    auto* moments = app.add_subcommand("moments", "Asymptotics report for p_hat vs p_theta");
    add_common(moments, o, true);

    auto* teststat = app.add_subcommand("teststat", "Chi-square JSD test at one theta");
    teststat->add_option("counts", counts_file, "Observed counts file (csv or json)");
    add_common(teststat, o, true);

    auto* confset = app.add_subcommand("confset", "Confidence set by test inversion");
    confset->add_option("counts", counts_file, "Observed counts file (csv or json)");
    add_common(confset, o, true);

    auto* coverage = app.add_subcommand("coverage", "Coverage study at the true theta");
    add_common(coverage, o, true);

    auto* bolfi = app.add_subcommand("bolfi", "Surrogate-based estimation run");
    add_common(bolfi, o, true);

    auto* nfds = app.add_subcommand("nfds-ess", "Paired raw/ESS coverage study");
    add_common(nfds, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (simulate->parsed()) return run_simulate(o);
        if (jsd_cmd->parsed()) return run_jsd(o, file_a, file_b, pi);
        if (moments->parsed()) return run_moments(o);
        if (teststat->parsed()) return run_teststat(o, counts_file);
        if (confset->parsed()) return run_confset_cmd(o, counts_file);
        if (coverage->parsed()) return run_coverage_cmd(o);
        if (bolfi->parsed()) return run_bolfi_cmd(o);
        if (nfds->parsed()) return run_nfds_ess(o);
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const jsdinfer::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
