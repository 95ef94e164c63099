#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "jsdinfer/divergence.hpp"
#include "jsdinfer/inference.hpp"
#include "jsdinfer/simulators.hpp"

namespace jsdinfer {

/// Affine map from JSD in [0, L ln 2] (L = epoch count) onto [-1, 1].
inline double normalize_jsd(double y, std::size_t epochs = 1) {
    const double top = static_cast<double>(epochs) * std::log(2.0);
    y = std::min(top, std::max(0.0, y));
    return 2.0 * y / top - 1.0;
}

inline double denormalize_jsd(double yn, std::size_t epochs = 1) {
    const double top = static_cast<double>(epochs) * std::log(2.0);
    yn = std::min(1.0, std::max(-1.0, yn));
    return 0.5 * (yn + 1.0) * top;
}

struct GpHyperparams {
    std::vector<double> lengthscale;  // per input dimension
    double signal_var = 1.0;
    double noise_var = 0.01;
};

struct GpConfig {
    double lengthscale_shape = 2.0;
    /// Gamma prior mean per dimension; empty derives (input range)/3 from data.
    std::vector<double> lengthscale_prior_mean;
    std::optional<double> fixed_signal;
    std::optional<double> fixed_noise;
    double noise_shape = 1.1;
    double noise_prior_mean = 0.05;
    int map_starts = 3;
    int map_iters = 60;
    std::uint64_t map_seed = 12345;
};

/// Zero-mean GP with squared exponential kernel and homoscedastic noise,
/// over normalized targets. Immutable training state plus a cached Cholesky
/// factor; append() extends the factor in O(N^2).
class GpSurrogate {
public:
    static GpSurrogate build(std::vector<std::vector<double>> inputs, std::vector<double> targets,
                             GpHyperparams hp, std::size_t norm_epochs = 1) {
        GpSurrogate s;
        if (inputs.size() != targets.size() || inputs.size() < 2)
            throw std::invalid_argument("GpSurrogate: need >= 2 matching inputs/targets");
        s.x_ = std::move(inputs);
        s.y_ = std::move(targets);
        s.hp_ = std::move(hp);
        s.norm_epochs_ = norm_epochs;
        s.factorize();
        return s;
    }

    std::size_t size() const { return x_.size(); }
    std::size_t dim() const { return x_.front().size(); }
    const std::vector<std::vector<double>>& inputs() const { return x_; }
    const std::vector<double>& targets() const { return y_; }
    const GpHyperparams& hyperparams() const { return hp_; }
    std::size_t norm_epochs() const { return norm_epochs_; }
    double jitter() const { return jitter_; }

    struct Prediction {
        double mean;
        double variance;
    };

    Prediction predict(const std::vector<double>& theta) const {
        const Eigen::VectorXd ks = cross_kernel(theta);
        const Eigen::VectorXd v =
            chol_.triangularView<Eigen::Lower>().solve(ks);
        Prediction p;
        p.mean = ks.dot(alpha_);
        p.variance = std::max(0.0, hp_.signal_var - v.squaredNorm());
        return p;
    }

    /// Adds one observation under the current hyperparameters.
    void append(const std::vector<double>& theta, double target) {
        const std::size_t n = x_.size();
        const Eigen::VectorXd ks = cross_kernel(theta);
        const Eigen::VectorXd b = chol_.triangularView<Eigen::Lower>().solve(ks);
        const double diag = hp_.signal_var + hp_.noise_var + jitter_;
        const double d2 = diag - b.squaredNorm();
        const double d = std::sqrt(std::max(d2, 1e-12));
        chol_.conservativeResize(n + 1, n + 1);
        chol_.row(n).head(n) = b.transpose();
        chol_.col(n).setZero();
        chol_(n, n) = d;
        x_.push_back(theta);
        y_.push_back(target);
        refresh_alpha();
    }

private:
    friend GpSurrogate gp_fit(const std::vector<std::vector<double>>&, const std::vector<double>&,
                              const GpConfig&, std::size_t);

    double kernel(const std::vector<double>& a, const std::vector<double>& b) const {
        double q = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = (a[i] - b[i]) / hp_.lengthscale[i];
            q += d * d;
        }
        return hp_.signal_var * std::exp(-0.5 * q);
    }

    Eigen::VectorXd cross_kernel(const std::vector<double>& theta) const {
        Eigen::VectorXd ks(x_.size());
        for (std::size_t i = 0; i < x_.size(); ++i) ks(i) = kernel(theta, x_[i]);
        return ks;
    }

    /// Jitter ladder 1e-10 -> 1e-6; failure beyond that is a numerical error.
    void factorize() {
        const std::size_t n = x_.size();
        Eigen::MatrixXd kmat(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j)
                kmat(i, j) = kmat(j, i) = kernel(x_[i], x_[j]);
        for (double jit = 1e-10; jit <= 1.0000001e-6; jit *= 10.0) {
            Eigen::MatrixXd kn = kmat;
            kn.diagonal().array() += hp_.noise_var + jit;
            Eigen::LLT<Eigen::MatrixXd> llt(kn);
            if (llt.info() == Eigen::Success) {
                chol_ = llt.matrixL();
                jitter_ = jit;
                refresh_alpha();
                return;
            }
        }
        throw std::runtime_error("GpSurrogate: kernel matrix not PD after maximal jitter");
    }

    void refresh_alpha() {
        const Eigen::Map<const Eigen::VectorXd> y(y_.data(), static_cast<Eigen::Index>(y_.size()));
        alpha_ = chol_.triangularView<Eigen::Lower>().solve(y);
        alpha_ = chol_.transpose().triangularView<Eigen::Upper>().solve(alpha_);
    }

    std::vector<std::vector<double>> x_;
    std::vector<double> y_;
    GpHyperparams hp_;
    Eigen::MatrixXd chol_;   // lower factor of K + (noise + jitter) I
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
    std::size_t norm_epochs_ = 1;
};

namespace detail {

/// MAP objective for the GP hyperparameters over log-parameters:
/// log marginal likelihood plus gamma log-priors on lengthscales and noise
/// evaluated at the natural scale (no Jacobian term).
class GpMapObjective {
public:
    GpMapObjective(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                   const GpConfig& cfg)
        : x_(x), y_(Eigen::Map<const Eigen::VectorXd>(y.data(),
                                                      static_cast<Eigen::Index>(y.size()))),
          cfg_(cfg), d_(x.front().size()) {
        ls_rate_.resize(d_);
        for (std::size_t i = 0; i < d_; ++i) {
            double mean = 0.0;
            if (i < cfg_.lengthscale_prior_mean.size() && cfg_.lengthscale_prior_mean[i] > 0.0) {
                mean = cfg_.lengthscale_prior_mean[i];
            } else {
                double lo = x_.front()[i], hi = lo;
                for (const auto& row : x_) {
                    lo = std::min(lo, row[i]);
                    hi = std::max(hi, row[i]);
                }
                mean = std::max(1e-3, (hi - lo) / 3.0);
            }
            ls_rate_[i] = cfg_.lengthscale_shape / mean;
        }
        noise_rate_ = cfg_.noise_shape / cfg_.noise_prior_mean;
    }

    std::size_t dim() const { return d_; }
    std::size_t nparams() const { return d_ + 2; }  // ln l_1..d, ln s2, ln n2

    /// phi = (ln l, ln s2, ln n2). Returns the objective; grad optional.
    double eval(const Eigen::VectorXd& phi, Eigen::VectorXd* grad) const {
        const std::size_t n = x_.size();
        GpHyperparams hp = unpack(phi);
        Eigen::MatrixXd kf(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double q = 0.0;
                for (std::size_t t = 0; t < d_; ++t) {
                    const double dd = (x_[i][t] - x_[j][t]) / hp.lengthscale[t];
                    q += dd * dd;
                }
                kf(i, j) = kf(j, i) = hp.signal_var * std::exp(-0.5 * q);
            }
        Eigen::MatrixXd kn = kf;
        kn.diagonal().array() += hp.noise_var + 1e-10;
        Eigen::LLT<Eigen::MatrixXd> llt(kn);
        if (llt.info() != Eigen::Success) {
            if (grad) grad->setZero(static_cast<Eigen::Index>(nparams()));
            return -std::numeric_limits<double>::infinity();
        }
        const Eigen::MatrixXd l = llt.matrixL();
        Eigen::VectorXd alpha = l.triangularView<Eigen::Lower>().solve(y_);
        double logdet = 0.0;
        for (std::size_t i = 0; i < n; ++i) logdet += std::log(l(static_cast<Eigen::Index>(i),
                                                                 static_cast<Eigen::Index>(i)));
        const double quad = alpha.squaredNorm();
        alpha = l.transpose().triangularView<Eigen::Upper>().solve(alpha);
        double obj = -0.5 * quad - logdet -
                     0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
        for (std::size_t i = 0; i < d_; ++i)
            obj += (cfg_.lengthscale_shape - 1.0) * std::log(hp.lengthscale[i]) -
                   ls_rate_[i] * hp.lengthscale[i];
        if (!cfg_.fixed_noise)
            obj += (cfg_.noise_shape - 1.0) * std::log(hp.noise_var) - noise_rate_ * hp.noise_var;

        if (grad) {
            grad->resize(static_cast<Eigen::Index>(nparams()));
            const Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(
                static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
            const Eigen::MatrixXd aat = alpha * alpha.transpose();
            // d obj / d phi_j = 0.5 tr((alpha alpha^T - K^-1) dK/dphi_j) + prior term
            for (std::size_t t = 0; t < d_; ++t) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dd = (x_[i][t] - x_[j][t]) / hp.lengthscale[t];
                        const double dk = kf(i, j) * dd * dd;
                        acc += (aat(i, j) - kinv(i, j)) * dk;
                    }
                (*grad)(static_cast<Eigen::Index>(t)) =
                    0.5 * acc + (cfg_.lengthscale_shape - 1.0) - ls_rate_[t] * hp.lengthscale[t];
            }
            double acc_s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) acc_s += (aat(i, j) - kinv(i, j)) * kf(i, j);
            (*grad)(static_cast<Eigen::Index>(d_)) = cfg_.fixed_signal ? 0.0 : 0.5 * acc_s;
            double acc_n = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc_n += aat(i, i) - kinv(i, i);
            (*grad)(static_cast<Eigen::Index>(d_ + 1)) =
                cfg_.fixed_noise ? 0.0
                                 : 0.5 * hp.noise_var * acc_n + (cfg_.noise_shape - 1.0) -
                                       noise_rate_ * hp.noise_var;
        }
        return obj;
    }

    GpHyperparams unpack(const Eigen::VectorXd& phi) const {
        GpHyperparams hp;
        hp.lengthscale.resize(d_);
        for (std::size_t i = 0; i < d_; ++i)
            hp.lengthscale[i] = std::exp(phi(static_cast<Eigen::Index>(i)));
        hp.signal_var = cfg_.fixed_signal ? *cfg_.fixed_signal
                                          : std::exp(phi(static_cast<Eigen::Index>(d_)));
        hp.noise_var = cfg_.fixed_noise ? *cfg_.fixed_noise
                                        : std::exp(phi(static_cast<Eigen::Index>(d_ + 1)));
        return hp;
    }

    double prior_mean_lengthscale(std::size_t i) const {
        return cfg_.lengthscale_shape / ls_rate_[i];
    }

private:
    const std::vector<std::vector<double>>& x_;
    Eigen::VectorXd y_;
    const GpConfig& cfg_;
    std::size_t d_;
    std::vector<double> ls_rate_;
    double noise_rate_;
};

}  // namespace detail

/// MAP fit by multi-start gradient ascent with backtracking line search.
inline GpSurrogate gp_fit(const std::vector<std::vector<double>>& inputs,
                          const std::vector<double>& targets, const GpConfig& cfg,
                          std::size_t norm_epochs = 1) {
    if (inputs.size() != targets.size() || inputs.size() < 2)
        throw std::invalid_argument("gp_fit: need >= 2 matching inputs/targets");
    detail::GpMapObjective obj(inputs, targets, cfg);
    const std::size_t np = obj.nparams();
    RngStream rng(cfg.map_seed);

    double yvar = 0.0, ymean = 0.0;
    for (double y : targets) ymean += y;
    ymean /= static_cast<double>(targets.size());
    for (double y : targets) yvar += (y - ymean) * (y - ymean);
    yvar = std::max(1e-6, yvar / static_cast<double>(targets.size()));

    Eigen::VectorXd best_phi;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < std::max(1, cfg.map_starts); ++s) {
        Eigen::VectorXd phi(static_cast<Eigen::Index>(np));
        for (std::size_t i = 0; i < obj.dim(); ++i) {
            const double base = obj.prior_mean_lengthscale(i);
            phi(static_cast<Eigen::Index>(i)) =
                std::log(base) + (s == 0 ? 0.0 : 0.6 * rng.normal());
        }
        phi(static_cast<Eigen::Index>(obj.dim())) =
            std::log(cfg.fixed_signal.value_or(yvar)) + (s == 0 ? 0.0 : 0.5 * rng.normal());
        phi(static_cast<Eigen::Index>(obj.dim() + 1)) =
            std::log(cfg.fixed_noise.value_or(cfg.noise_prior_mean * 0.5)) +
            (s == 0 ? 0.0 : 0.5 * rng.normal());

        Eigen::VectorXd grad(static_cast<Eigen::Index>(np));
        double val = obj.eval(phi, &grad);
        double step = 0.1;
        for (int it = 0; it < cfg.map_iters; ++it) {
            if (!std::isfinite(val)) break;
            if (grad.norm() < 1e-5) break;
            bool moved = false;
            for (int bt = 0; bt < 25; ++bt) {
                Eigen::VectorXd cand = phi + step * grad;
                Eigen::VectorXd cgrad(static_cast<Eigen::Index>(np));
                const double cval = obj.eval(cand, &cgrad);
                if (cval > val) {
                    phi = cand;
                    val = cval;
                    grad = cgrad;
                    step *= 1.3;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;
        }
        if (val > best_val) {
            best_val = val;
            best_phi = phi;
        }
    }
    if (!std::isfinite(best_val))
        throw std::runtime_error("gp_fit: MAP objective non-finite at every start");
    return GpSurrogate::build(inputs, targets, obj.unpack(best_phi), norm_epochs);
}

/// Lower-confidence-bound acquisition: approximate argmin over the box of
/// mean - beta sqrt(var), from 64 random starts plus the best seen input,
/// refined by per-coordinate golden-section on the top candidates.
inline std::vector<double> lcb_acquire(const GpSurrogate& s, const std::vector<ParamBounds>& bounds,
                                       double beta, RngStream& rng) {
    if (bounds.size() != s.dim()) throw std::invalid_argument("lcb_acquire: bounds dimension");
    if (beta < 0.0) throw std::invalid_argument("lcb_acquire: beta must be >= 0");
    const std::size_t d = bounds.size();
    auto acq = [&](const std::vector<double>& th) {
        const auto p = s.predict(th);
        return p.mean - beta * std::sqrt(p.variance);
    };

    std::vector<std::pair<double, std::vector<double>>> cand;
    for (int i = 0; i < 64; ++i) {
        std::vector<double> th(d);
        for (std::size_t j = 0; j < d; ++j) th[j] = rng.uniform(bounds[j].lo, bounds[j].hi);
        cand.emplace_back(acq(th), std::move(th));
    }
    std::size_t best_seen = 0;
    for (std::size_t i = 1; i < s.size(); ++i)
        if (s.targets()[i] < s.targets()[best_seen]) best_seen = i;
    cand.emplace_back(acq(s.inputs()[best_seen]), s.inputs()[best_seen]);
    std::sort(cand.begin(), cand.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    auto refine = [&](std::vector<double> th) {
        for (std::size_t j = 0; j < d; ++j) {
            double lo = bounds[j].lo, hi = bounds[j].hi;
            double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
            th[j] = x1;
            double f1 = acq(th);
            th[j] = x2;
            double f2 = acq(th);
            for (int it = 0; it < 24; ++it) {
                if (f1 < f2) {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - gr * (hi - lo);
                    th[j] = x1;
                    f1 = acq(th);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + gr * (hi - lo);
                    th[j] = x2;
                    f2 = acq(th);
                }
            }
            th[j] = 0.5 * (lo + hi);
        }
        return th;
    };

    std::vector<double> best = cand.front().second;
    double best_val = cand.front().first;
    for (std::size_t c = 0; c < std::min<std::size_t>(2, cand.size()); ++c) {
        const auto r = refine(cand[c].second);
        const double v = acq(r);
        if (v < best_val) {
            best_val = v;
            best = r;
        }
    }
    return best;
}

struct BoConfig {
    int init_count = 20;
    int budget = 1000;
    double lcb_weight = 2.0;
    long long n = 1000;       // simulation size per evaluation
    MixingWeight w{0.5};
    int fit_subsample = 200;  // MAP refits use at most this many points
};

/// BOLFI-style loop: random initial design, then acquisition-driven
/// evaluations, one simulation each; hyperparameters are refit on a
/// doubling schedule and the kernel factor extended in between.
inline GpSurrogate bolfi_run(const SimulatorModel& model,
                             const std::vector<EmpiricalCounts>& observed, const BoConfig& bo,
                             GpConfig gp, RngStream& rng) {
    if (bo.init_count < 2 || bo.budget < bo.init_count)
        throw std::invalid_argument("bolfi_run: need 2 <= init_count <= budget");
    if (observed.size() != model.epochs())
        throw std::invalid_argument("bolfi_run: observed epochs mismatch");
    const auto bounds = model.bounds();
    const std::size_t epochs = model.epochs();
    std::vector<CategoricalPmf> obs_pmf;
    for (const auto& o : observed) obs_pmf.push_back(o.to_pmf());

    if (gp.lengthscale_prior_mean.empty())
        for (const auto& b : bounds) gp.lengthscale_prior_mean.push_back((b.hi - b.lo) / 3.0);

    auto evaluate = [&](const std::vector<double>& th) {
        const auto sims = model.simulate(th, bo.n, rng);
        double y = 0.0;
        for (std::size_t e = 0; e < epochs; ++e) y += jsd(obs_pmf[e], sims[e].to_pmf(), bo.w);
        return normalize_jsd(y, epochs);
    };

    std::vector<std::vector<double>> x;
    std::vector<double> y;
    for (int i = 0; i < bo.init_count; ++i) {
        std::vector<double> th(bounds.size());
        for (std::size_t j = 0; j < bounds.size(); ++j)
            th[j] = rng.uniform(bounds[j].lo, bounds[j].hi);
        y.push_back(evaluate(th));
        x.push_back(std::move(th));
    }

    auto fit_now = [&](const std::vector<std::vector<double>>& xs,
                       const std::vector<double>& ys) {
        if (static_cast<int>(xs.size()) <= bo.fit_subsample) return gp_fit(xs, ys, gp, epochs);
        // hyperparameters from a random subsample, factorization on everything
        std::vector<std::size_t> idx(xs.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (std::size_t i = 0; i < static_cast<std::size_t>(bo.fit_subsample); ++i)
            std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
        std::vector<std::vector<double>> xs2;
        std::vector<double> ys2;
        for (std::size_t i = 0; i < static_cast<std::size_t>(bo.fit_subsample); ++i) {
            xs2.push_back(xs[idx[i]]);
            ys2.push_back(ys[idx[i]]);
        }
        const auto sub = gp_fit(xs2, ys2, gp, epochs);
        return GpSurrogate::build(xs, ys, sub.hyperparams(), epochs);
    };

    GpSurrogate s = fit_now(x, y);
    std::size_t last_fit = s.size();
    while (static_cast<int>(s.size()) < bo.budget) {
        const auto th = lcb_acquire(s, bounds, bo.lcb_weight, rng);
        s.append(th, evaluate(th));
        if (s.size() >= 2 * last_fit && static_cast<int>(s.size()) < bo.budget) {
            s = fit_now(s.inputs(), s.targets());
            last_fit = s.size();
        }
    }
    s = fit_now(s.inputs(), s.targets());
    return s;
}

/// Posterior-mean expected JSD at theta, denormalized to [0, L ln 2].
inline double surrogate_expected_jsd(const GpSurrogate& s, const std::vector<double>& theta) {
    return denormalize_jsd(s.predict(theta).mean, s.norm_epochs());
}

/// Posterior-mean minimizer over the box (LCB with beta = 0).
inline std::vector<double> surrogate_min(const GpSurrogate& s,
                                         const std::vector<ParamBounds>& bounds, RngStream& rng) {
    return lcb_acquire(s, bounds, 0.0, rng);
}

}  // namespace jsdinfer
