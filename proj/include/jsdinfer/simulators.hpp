#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "jsdinfer/categorical.hpp"
#include "jsdinfer/rng.hpp"

namespace jsdinfer {

struct ParamBounds {
    double lo;
    double hi;
};

/// Contract for simulator models producing categorical counts at one or
/// more observation epochs. simulate is pure given the rng stream.
class SimulatorModel {
public:
    virtual ~SimulatorModel() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<ParamBounds> bounds() const = 0;
    virtual std::size_t epochs() const = 0;
    virtual std::size_t k() const = 0;
    virtual std::string name() const = 0;
    virtual bool has_true_pmf() const { return false; }

    std::vector<EmpiricalCounts> simulate(const std::vector<double>& theta, long long n,
                                          RngStream& rng) const {
        check_theta(theta);
        if (n < 1) throw std::invalid_argument("simulate: n must be >= 1");
        return do_simulate(theta, n, rng);
    }

    std::vector<CategoricalPmf> true_pmf(const std::vector<double>& theta) const {
        if (!has_true_pmf())
            throw std::logic_error("true_pmf: not available for model " + name());
        check_theta(theta);
        return do_true_pmf(theta);
    }

    void check_theta(const std::vector<double>& theta) const {
        const auto b = bounds();
        if (theta.size() != b.size())
            throw std::invalid_argument("theta: expected dimension " +
                                        std::to_string(b.size()));
        for (std::size_t i = 0; i < b.size(); ++i)
            if (!(theta[i] >= b[i].lo && theta[i] <= b[i].hi))
                throw std::domain_error("theta[" + std::to_string(i) + "] outside [" +
                                        std::to_string(b[i].lo) + ", " +
                                        std::to_string(b[i].hi) + "]");
    }

protected:
    virtual std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta,
                                                     long long n, RngStream& rng) const = 0;
    virtual std::vector<CategoricalPmf> do_true_pmf(const std::vector<double>&) const {
        throw std::logic_error("true_pmf: unreachable");
    }
};

/// Free-function faces of the contract.
inline std::vector<EmpiricalCounts> simulate(const SimulatorModel& model,
                                             const std::vector<double>& theta, long long n,
                                             RngStream& rng) {
    return model.simulate(theta, n, rng);
}

inline std::vector<CategoricalPmf> true_pmf(const SimulatorModel& model,
                                            const std::vector<double>& theta) {
    return model.true_pmf(theta);
}

/// p_i(theta) = exp(-theta (i-1)) / sum_j exp(-theta (j-1)), one epoch.
class SoftmaxDecayModel : public SimulatorModel {
public:
    explicit SoftmaxDecayModel(std::size_t k = 5) : k_(k) {
        if (k < 2) throw std::invalid_argument("SoftmaxDecayModel: k must be >= 2");
    }
    std::size_t dim() const override { return 1; }
    std::vector<ParamBounds> bounds() const override { return {{-2.0, 2.0}}; }
    std::size_t epochs() const override { return 1; }
    std::size_t k() const override { return k_; }
    std::string name() const override { return "softmax_decay"; }
    bool has_true_pmf() const override { return true; }

protected:
    std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta, long long n,
                                             RngStream& rng) const override {
        return {multinomial_sample(do_true_pmf(theta)[0], n, rng)};
    }
    std::vector<CategoricalPmf> do_true_pmf(const std::vector<double>& theta) const override {
        std::vector<double> p(k_);
        double sum = 0.0;
        for (std::size_t i = 0; i < k_; ++i) {
            p[i] = std::exp(-theta[0] * static_cast<double>(i));
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return {CategoricalPmf(std::move(p))};
    }

private:
    std::size_t k_;
};

/// 2x2 log-linear cell probabilities under effect coding
/// X = (1,1,-1,-1), Y = (1,-1,1,-1): p = softmax(X lx + Y ly + X Y lxy).
/// theta = (lx, ly) with lxy = 0, or (lx, ly, lxy) when saturated.
class LogLinearModel : public SimulatorModel {
public:
    explicit LogLinearModel(bool saturated = false) : saturated_(saturated) {}
    std::size_t dim() const override { return saturated_ ? 3 : 2; }
    std::vector<ParamBounds> bounds() const override {
        return std::vector<ParamBounds>(dim(), {-2.0, 2.0});
    }
    std::size_t epochs() const override { return 1; }
    std::size_t k() const override { return 4; }
    std::string name() const override {
        return saturated_ ? "log_linear_saturated" : "log_linear";
    }
    bool has_true_pmf() const override { return true; }
    bool saturated() const { return saturated_; }

protected:
    std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta, long long n,
                                             RngStream& rng) const override {
        return {multinomial_sample(do_true_pmf(theta)[0], n, rng)};
    }
    std::vector<CategoricalPmf> do_true_pmf(const std::vector<double>& theta) const override {
        static constexpr double X[4] = {1.0, 1.0, -1.0, -1.0};
        static constexpr double Y[4] = {1.0, -1.0, 1.0, -1.0};
        const double lxy = saturated_ ? theta[2] : 0.0;
        std::vector<double> p(4);
        double sum = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            p[i] = std::exp(X[i] * theta[0] + Y[i] * theta[1] + X[i] * Y[i] * lxy);
            sum += p[i];
        }
        for (double& v : p) v /= sum;
        return {CategoricalPmf(std::move(p))};
    }

private:
    bool saturated_;
};

/// k=2 coin with p(theta) = (1-theta, theta).
class BernoulliModel : public SimulatorModel {
public:
    std::size_t dim() const override { return 1; }
    std::vector<ParamBounds> bounds() const override { return {{1e-6, 1.0 - 1e-6}}; }
    std::size_t epochs() const override { return 1; }
    std::size_t k() const override { return 2; }
    std::string name() const override { return "bernoulli"; }
    bool has_true_pmf() const override { return true; }

protected:
    std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta, long long n,
                                             RngStream& rng) const override {
        return {multinomial_sample(do_true_pmf(theta)[0], n, rng)};
    }
    std::vector<CategoricalPmf> do_true_pmf(const std::vector<double>& theta) const override {
        return {CategoricalPmf({1.0 - theta[0], theta[0]})};
    }
};

namespace detail {

/// Walker/Vose alias table for O(1) categorical draws with fixed weights.
class AliasTable {
public:
    explicit AliasTable(const std::vector<double>& weights) {
        const std::size_t n = weights.size();
        if (n == 0) throw std::invalid_argument("AliasTable: empty weights");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("AliasTable: negative weight");
            total += w;
        }
        if (!(total > 0.0)) throw std::invalid_argument("AliasTable: zero total weight");
        prob_.resize(n);
        alias_.resize(n);
        std::vector<double> scaled(n);
        std::vector<std::size_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = weights[i] * static_cast<double>(n) / total;
            (scaled[i] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            const std::size_t s = small.back(), l = large.back();
            small.pop_back();
            large.pop_back();
            prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            (scaled[l] < 1.0 ? small : large).push_back(l);
        }
        for (std::size_t i : large) prob_[i] = 1.0, alias_[i] = i;
        for (std::size_t i : small) prob_[i] = 1.0, alias_[i] = i;
    }

    std::size_t sample(RngStream& rng) const {
        const std::size_t i = static_cast<std::size_t>(rng.below(prob_.size()));
        return (rng.uniform() < prob_[i]) ? i : alias_[i];
    }

private:
    std::vector<double> prob_;
    std::vector<std::size_t> alias_;
};

}  // namespace detail

struct NfdsLiteConfig {
    double kappa = 1e5;             // carrying capacity
    std::size_t clusters = 40;      // first half NVT-only, second half mixed
    std::size_t loci = 5;           // binary loci per genotype
    double vaccine_fraction = 0.35; // overall VT fraction at t=0
    double flip_prob = 0.1;         // per-locus deviation from the cluster base vector
    std::size_t novel_genotypes = 8;
    double novel_pool_weight = 0.25;
    std::vector<long long> sample_epochs = {36, 72};
    std::uint64_t init_seed = 12345;
};

/// Synthetic negative-frequency-dependent-selection population model.
///
/// The population is held at genotype-group granularity (cluster, locus
/// vector, VT flag). Each generation every group reproduces by
/// X ~ Poisson(count * (kappa/N)(1-m)(1-v*vt)(1+sigma_f)^pi_g) where pi_g is
/// the mean absolute deviation of the group's loci from the current
/// population allele frequencies, and Poisson(kappa m) migrants arrive from
/// a frozen pool of the initial genotypes plus novel NVT genotypes. At each
/// sampled epoch n isolates are drawn without replacement (with replacement
/// if n exceeds the population) and collapsed to 4 categories:
/// VT; NVT in an NVT-only cluster; NVT in a mixed cluster; NVT novel.
///
/// theta = (ln m, ln v, ln sigma_f), the log-compressed parameter domain.
class NfdsLiteModel : public SimulatorModel {
public:
    explicit NfdsLiteModel(NfdsLiteConfig cfg = {}) : cfg_(std::move(cfg)) {
        if (cfg_.clusters < 2 || cfg_.clusters % 2 != 0)
            throw std::invalid_argument("NfdsLiteModel: clusters must be even and >= 2");
        if (cfg_.loci < 1 || cfg_.loci > 32)
            throw std::invalid_argument("NfdsLiteModel: loci must lie in [1,32]");
        if (!(cfg_.kappa >= 1000.0))
            throw std::invalid_argument("NfdsLiteModel: kappa must be >= 1000");
        if (!(cfg_.vaccine_fraction > 0.0 && cfg_.vaccine_fraction < 0.5))
            throw std::invalid_argument("NfdsLiteModel: vaccine_fraction must lie in (0,0.5)");
        if (cfg_.sample_epochs.empty())
            throw std::invalid_argument("NfdsLiteModel: need at least one sample epoch");
        for (long long e : cfg_.sample_epochs)
            if (e < 1) throw std::invalid_argument("NfdsLiteModel: epochs must be >= 1");
        build_init();
    }

    std::size_t dim() const override { return 3; }
    std::vector<ParamBounds> bounds() const override {
        return {{-7.0, -1.6}, {-7.0, -0.7}, {-7.0, -1.6}};
    }
    std::size_t epochs() const override { return cfg_.sample_epochs.size(); }
    std::size_t k() const override { return 4; }
    std::string name() const override { return "nfds_lite"; }
    const NfdsLiteConfig& config() const { return cfg_; }

protected:
    std::vector<EmpiricalCounts> do_simulate(const std::vector<double>& theta, long long n,
                                             RngStream& rng) const override {
        const double mig = std::exp(theta[0]);
        const double vcost = std::exp(theta[1]);
        const double log1p_sf = std::log1p(std::exp(theta[2]));
        const std::size_t g_count = bits_.size();
        const std::size_t loci = cfg_.loci;
        std::vector<long long> counts = init_counts_;
        std::vector<double> f(loci);

        long long horizon = 0;
        for (long long e : cfg_.sample_epochs) horizon = std::max(horizon, e);
        std::vector<EmpiricalCounts> out;
        out.reserve(cfg_.sample_epochs.size());

        const double kappa = cfg_.kappa;
        for (long long t = 1; t <= horizon; ++t) {
            double total = 0.0;
            for (long long c : counts) total += static_cast<double>(c);
            if (total > 0.0) {
                for (std::size_t l = 0; l < loci; ++l) f[l] = 0.0;
                for (std::size_t g = 0; g < g_count; ++g) {
                    if (counts[g] == 0) continue;
                    const double c = static_cast<double>(counts[g]);
                    const std::uint32_t bg = bits_[g];
                    for (std::size_t l = 0; l < loci; ++l)
                        if (bg & (1u << l)) f[l] += c;
                }
                for (std::size_t l = 0; l < loci; ++l) f[l] /= total;
                const double base = (kappa / total) * (1.0 - mig);
                for (std::size_t g = 0; g < g_count; ++g) {
                    if (counts[g] == 0) continue;
                    const std::uint32_t bg = bits_[g];
                    double dev = 0.0;
                    for (std::size_t l = 0; l < loci; ++l)
                        dev += (bg & (1u << l)) ? 1.0 - f[l] : f[l];
                    dev /= static_cast<double>(loci);
                    double rate = base * std::exp(dev * log1p_sf);
                    if (vt_[g]) rate *= 1.0 - vcost;
                    counts[g] = rng.poisson(static_cast<double>(counts[g]) * rate);
                }
            }
            const long long nmig = rng.poisson(kappa * mig);
            for (long long i = 0; i < nmig; ++i) ++counts[pool_->sample(rng)];
            if (epoch_set_.count(t) > 0) out.push_back(sample_categories(counts, n, rng));
        }
        return out;
    }

private:
    void build_init() {
        RngStream rng(cfg_.init_seed);
        const std::size_t nc = cfg_.clusters;
        const std::size_t loci = cfg_.loci;
        const std::size_t patterns = std::size_t{1} << loci;
        const long long kappa = static_cast<long long>(cfg_.kappa);

        const auto cluster_sizes =
            multinomial_sample(CategoricalPmf::uniform(nc), kappa, rng);

        // base locus vector per cluster
        std::vector<std::uint32_t> base(nc);
        for (std::size_t c = 0; c < nc; ++c) {
            std::uint32_t v = 0;
            for (std::size_t l = 0; l < loci; ++l)
                if (rng.uniform() < 0.5) v |= (1u << l);
            base[c] = v;
        }

        // probability of each flip pattern; isolates deviate per locus i.i.d.
        std::vector<double> pattern_prob(patterns);
        for (std::size_t pat = 0; pat < patterns; ++pat) {
            double pr = 1.0;
            for (std::size_t l = 0; l < loci; ++l)
                pr *= (pat & (std::size_t{1} << l)) ? cfg_.flip_prob : 1.0 - cfg_.flip_prob;
            pattern_prob[pat] = pr;
        }
        const CategoricalPmf pattern_pmf(pattern_prob);

        // Mixed clusters are the second half; their per-isolate VT probability
        // is chosen so the overall VT fraction comes out as configured.
        const double mixed_vt_prob = std::min(1.0, 2.0 * cfg_.vaccine_fraction);

        auto add_group = [&](std::uint32_t cluster, std::uint32_t bv, bool vt, long long cnt) {
            if (cnt <= 0) return;
            cluster_.push_back(cluster);
            bits_.push_back(bv);
            vt_.push_back(vt ? 1 : 0);
            init_counts_.push_back(cnt);
        };

        for (std::size_t c = 0; c < nc; ++c) {
            const long long sz = cluster_sizes[c];
            if (sz == 0) continue;
            const bool mixed = c >= nc / 2;
            const long long n_vt = mixed ? rng.binomial(sz, mixed_vt_prob) : 0;
            for (int branch = 0; branch < 2; ++branch) {
                const long long bn = branch == 0 ? n_vt : sz - n_vt;
                if (bn == 0) continue;
                const auto pat_counts = multinomial_sample(pattern_pmf, bn, rng);
                for (std::size_t pat = 0; pat < patterns; ++pat)
                    add_group(static_cast<std::uint32_t>(c),
                              base[c] ^ static_cast<std::uint32_t>(pat), branch == 0,
                              pat_counts[pat]);
            }
        }

        // migration pool: initial composition (weight 1 - novel_pool_weight)
        // plus novel NVT genotypes in reserved clusters sharing the rest
        const std::size_t n_init_groups = init_counts_.size();
        for (std::size_t j = 0; j < cfg_.novel_genotypes; ++j) {
            std::uint32_t v = 0;
            for (std::size_t l = 0; l < loci; ++l)
                if (rng.uniform() < 0.5) v |= (1u << l);
            add_group(static_cast<std::uint32_t>(nc + j), v, false, 1);
            init_counts_.back() = 0;  // novel genotypes absent at t=0
        }

        std::vector<double> pool_w(init_counts_.size(), 0.0);
        long long init_total = 0;
        for (std::size_t g = 0; g < n_init_groups; ++g) init_total += init_counts_[g];
        for (std::size_t g = 0; g < n_init_groups; ++g)
            pool_w[g] = (1.0 - cfg_.novel_pool_weight) * static_cast<double>(init_counts_[g]) /
                        static_cast<double>(init_total);
        for (std::size_t g = n_init_groups; g < pool_w.size(); ++g)
            pool_w[g] = cfg_.novel_pool_weight / static_cast<double>(cfg_.novel_genotypes);
        pool_ = std::make_unique<detail::AliasTable>(pool_w);

        category_.resize(init_counts_.size());
        for (std::size_t g = 0; g < init_counts_.size(); ++g) {
            if (vt_[g])
                category_[g] = 0;
            else if (cluster_[g] >= nc)
                category_[g] = 3;
            else if (cluster_[g] < nc / 2)
                category_[g] = 1;
            else
                category_[g] = 2;
        }
        for (long long e : cfg_.sample_epochs) epoch_set_.insert(e);
    }

    EmpiricalCounts sample_categories(const std::vector<long long>& counts, long long n,
                                      RngStream& rng) const {
        std::vector<long long> tot(4, 0);
        for (std::size_t g = 0; g < counts.size(); ++g) tot[category_[g]] += counts[g];
        long long pop = tot[0] + tot[1] + tot[2] + tot[3];
        if (pop < 1) throw std::runtime_error("NfdsLiteModel: population extinct");
        std::vector<long long> draw(4, 0);
        if (n <= pop) {
            long long rem_n = n, rem_pop = pop;
            for (std::size_t c = 0; c + 1 < 4; ++c) {
                draw[c] = rem_n > 0 ? rng.hypergeometric(tot[c], rem_pop - tot[c], rem_n) : 0;
                rem_n -= draw[c];
                rem_pop -= tot[c];
            }
            draw[3] = rem_n;
            return EmpiricalCounts(std::move(draw));
        }
        std::vector<double> p(4);
        for (std::size_t c = 0; c < 4; ++c)
            p[c] = static_cast<double>(tot[c]) / static_cast<double>(pop);
        return multinomial_sample(CategoricalPmf(std::move(p)), n, rng);
    }

    NfdsLiteConfig cfg_;
    std::vector<std::uint32_t> cluster_;
    std::vector<std::uint32_t> bits_;
    std::vector<std::uint8_t> vt_;
    std::vector<std::uint8_t> category_;
    std::vector<long long> init_counts_;
    std::unique_ptr<detail::AliasTable> pool_;
    std::set<long long> epoch_set_;
};

/// Builds a model by name: "softmax_decay", "log_linear",
/// "log_linear_saturated", "bernoulli", "nfds_lite".
inline std::unique_ptr<SimulatorModel> make_model(const std::string& name,
                                                  std::size_t softmax_k = 5,
                                                  const NfdsLiteConfig& nfds = {}) {
    if (name == "softmax_decay") return std::make_unique<SoftmaxDecayModel>(softmax_k);
    if (name == "log_linear") return std::make_unique<LogLinearModel>(false);
    if (name == "log_linear_saturated") return std::make_unique<LogLinearModel>(true);
    if (name == "bernoulli") return std::make_unique<BernoulliModel>();
    if (name == "nfds_lite") return std::make_unique<NfdsLiteModel>(nfds);
    throw std::invalid_argument("make_model: unknown model " + name);
}

}  // namespace jsdinfer
