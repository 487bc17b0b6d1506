#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/fitting/optimize.hpp"
#include "elmnet/theory.hpp"

namespace elmnet::fitting {

/// Which theory component an experiment gets its own free value for.
enum class Variant { none, budget, alpha, beta };

inline Variant parse_variant(std::string_view s) {
    if (s == "none" || s.empty()) return Variant::none;
    if (s == "budget" || s == "P") return Variant::budget;
    if (s == "alpha") return Variant::alpha;
    if (s == "beta") return Variant::beta;
    throw InvalidConfig("unknown variant '" + std::string(s) + "'", "variant");
}

inline std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::none: return "none";
        case Variant::budget: return "budget";
        case Variant::alpha: return "alpha";
        case Variant::beta: return "beta";
    }
    return "?";
}

/// One sweep: metric values at per-neuron budgets k_e, with the experiment's
/// nominal budget P and connectivity k_c.
struct Experiment {
    std::string tag;
    Variant variant = Variant::none;
    double P = 1e4;
    double k_c = 100.0;
    std::vector<double> k_e;
    std::vector<double> metric;
};

struct JointFitSpec {
    bool fit_shared = true;  ///< false fixes (alpha, beta, gamma, q_inf) at `initial`
    theory::TheoryParams initial;
    double log_lo_alpha = std::log(0.05), log_hi_alpha = std::log(5.0);
    double log_lo_beta = std::log(0.05), log_hi_beta = std::log(5.0);
    double log_lo_gamma = std::log(1e-6), log_hi_gamma = std::log(1.0);
    double log_lo_q = std::log(1e-8), log_hi_q = std::log(0.5);
    double log_budget_span = std::log(10.0);  ///< free budget variants range over P / span .. P * span
    DEOptions de;
    NMOptions nm;
};

struct JointFitResult {
    theory::TheoryParams shared;
    std::vector<double> variant_values;  ///< per experiment; NaN when the experiment has no variant
    double a = 0.0, b = 0.0;             ///< metric = a * (-I_rep) + b
    std::vector<std::vector<double>> residuals;
    std::vector<std::vector<double>> predicted;
    double rss = 0.0;
    double rms = 0.0;
    double pearson_r = 0.0;
    std::size_t n_points = 0;
    std::size_t n_free = 0;
    bool nm_max_iter = false;
};

namespace detail {

struct JointProblem {
    const std::vector<Experiment>& ex;
    const JointFitSpec& spec;
    std::vector<int> variant_slot;  // index into x, -1 if none
    std::size_t n_shared = 0;
    std::size_t dim = 0;

    JointProblem(const std::vector<Experiment>& e, const JointFitSpec& s) : ex(e), spec(s) {
        n_shared = spec.fit_shared ? 4 : 0;
        dim = n_shared;
        for (const auto& x : ex) variant_slot.push_back(x.variant == Variant::none ? -1 : static_cast<int>(dim++));
    }

    theory::TheoryParams theta_for(const std::vector<double>& x, std::size_t e) const {
        theory::TheoryParams th = spec.initial;
        if (spec.fit_shared) {
            th.alpha = std::exp(x[0]);
            th.beta = std::exp(x[1]);
            th.gamma = std::exp(x[2]);
            th.q_inf = std::exp(x[3]);
        }
        th.P = ex[e].P;
        th.k_c = ex[e].k_c;
        const int slot = variant_slot[e];
        if (slot >= 0) {
            const double v = x[static_cast<std::size_t>(slot)];
            switch (ex[e].variant) {
                case Variant::budget: th.P = ex[e].P * std::exp(v); break;
                case Variant::alpha: th.alpha = std::exp(v); break;
                case Variant::beta: th.beta = std::exp(v); break;
                case Variant::none: break;
            }
        }
        return th;
    }

    /// -I_rep at every point, flattened in experiment order; NaN if infeasible.
    std::vector<double> features(const std::vector<double>& x) const {
        std::vector<double> f;
        for (std::size_t e = 0; e < ex.size(); ++e) {
            const auto th = theta_for(x, e);
            for (double k : ex[e].k_e) {
                const long N = theory::neuron_count(k, th);
                f.push_back(N >= 1 ? -theory::i_rep_modes(N, theory::snr(k, th), th.beta)
                                   : std::numeric_limits<double>::quiet_NaN());
            }
        }
        return f;
    }

    std::vector<double> targets() const {
        std::vector<double> y;
        for (const auto& e : ex) y.insert(y.end(), e.metric.begin(), e.metric.end());
        return y;
    }
};

/// Least-squares (a, b) for y ~ a f + b; returns the RSS.
inline double profile_affine(const std::vector<double>& f, const std::vector<double>& y, double& a, double& b) {
    const double n = static_cast<double>(f.size());
    double sf = 0, sy = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (!std::isfinite(f[i])) return std::numeric_limits<double>::infinity();
        sf += f[i];
        sy += y[i];
    }
    const double mf = sf / n, my = sy / n;
    double sff = 0, sfy = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        sff += (f[i] - mf) * (f[i] - mf);
        sfy += (f[i] - mf) * (y[i] - my);
    }
    a = sff > 0 ? sfy / sff : 0.0;
    b = my - a * mf;
    double rss = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double r = a * f[i] + b - y[i];
        rss += r * r;
    }
    return rss;
}

}  // namespace detail

/// Fits metric = a * (-I_rep(k_e; theta_e)) + b jointly over experiments.
/// Differential evolution searches the theory parameters with (a, b)
/// solved in closed form at every evaluation; Nelder-Mead then polishes all
/// parameters together.
inline JointFitResult joint_theory_fit(const std::vector<Experiment>& experiments, const JointFitSpec& spec = {}) {
    if (experiments.empty()) throw DomainError("joint_theory_fit: no experiments");
    std::size_t n_points = 0;
    for (const auto& e : experiments) {
        if (e.k_e.size() != e.metric.size()) throw ShapeError("joint_theory_fit: '" + e.tag + "' k_e/metric lengths differ");
        for (double k : e.k_e)
            if (!(k > 0.0)) throw DomainError("joint_theory_fit: k_e must be > 0 in '" + e.tag + "'");
        n_points += e.k_e.size();
    }
    const detail::JointProblem prob(experiments, spec);
    const std::size_t n_free = prob.dim + 2;
    if (static_cast<double>(n_free) > static_cast<double>(n_points) / 2.0)
        throw DomainError("joint_theory_fit: under-determined (" + std::to_string(n_free) + " free parameters for " +
                          std::to_string(n_points) + " points)");
    const auto y = prob.targets();

    std::vector<double> x_theta;
    double a = 0.0, b = 0.0;
    if (prob.dim > 0) {
        Bounds bounds;
        if (spec.fit_shared) {
            bounds.lo = {spec.log_lo_alpha, spec.log_lo_beta, spec.log_lo_gamma, spec.log_lo_q};
            bounds.hi = {spec.log_hi_alpha, spec.log_hi_beta, spec.log_hi_gamma, spec.log_hi_q};
        }
        for (const auto& e : experiments) {
            switch (e.variant) {
                case Variant::none: break;
                case Variant::budget:
                    bounds.lo.push_back(-spec.log_budget_span);
                    bounds.hi.push_back(spec.log_budget_span);
                    break;
                case Variant::alpha:
                    bounds.lo.push_back(spec.log_lo_alpha);
                    bounds.hi.push_back(spec.log_hi_alpha);
                    break;
                case Variant::beta:
                    bounds.lo.push_back(spec.log_lo_beta);
                    bounds.hi.push_back(spec.log_hi_beta);
                    break;
            }
        }
        auto profiled = [&](const std::vector<double>& x) {
            double aa, bb;
            return detail::profile_affine(prob.features(x), y, aa, bb);
        };
        const auto de = differential_evolution(profiled, bounds, spec.de);
        x_theta = de.x;
        detail::profile_affine(prob.features(x_theta), y, a, b);
    } else {
        detail::profile_affine(prob.features({}), y, a, b);
    }

    JointFitResult res;
    if (prob.dim > 0) {
        // Polish theory parameters and the affine map together.
        std::vector<double> x0 = x_theta;
        x0.push_back(a);
        x0.push_back(b);
        auto full = [&](const std::vector<double>& x) {
            const std::vector<double> th(x.begin(), x.end() - 2);
            const auto f = prob.features(th);
            const double aa = x[x.size() - 2], bb = x.back();
            double rss = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                if (!std::isfinite(f[i])) return std::numeric_limits<double>::infinity();
                const double r = aa * f[i] + bb - y[i];
                rss += r * r;
            }
            return rss;
        };
        const double f0 = full(x0);
        const auto nm = nelder_mead(full, x0, spec.nm);
        if (nm.f <= f0) {
            x_theta.assign(nm.x.begin(), nm.x.end() - 2);
            a = nm.x[nm.x.size() - 2];
            b = nm.x.back();
        }
        res.nm_max_iter = nm.max_iter_reached;
    }

    res.shared = spec.initial;
    if (spec.fit_shared) {
        res.shared.alpha = std::exp(x_theta[0]);
        res.shared.beta = std::exp(x_theta[1]);
        res.shared.gamma = std::exp(x_theta[2]);
        res.shared.q_inf = std::exp(x_theta[3]);
    }
    for (std::size_t e = 0; e < experiments.size(); ++e) {
        const int slot = prob.variant_slot[e];
        if (slot < 0) {
            res.variant_values.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        const auto th = prob.theta_for(x_theta, e);
        res.variant_values.push_back(experiments[e].variant == Variant::budget ? th.P
                                     : experiments[e].variant == Variant::alpha ? th.alpha
                                                                                : th.beta);
    }
    res.a = a;
    res.b = b;
    const auto f = prob.features(x_theta);
    std::size_t k = 0;
    double sp = 0, sy = 0;
    std::vector<double> pred_all;
    for (const auto& e : experiments) {
        std::vector<double> pr, rr;
        for (std::size_t i = 0; i < e.k_e.size(); ++i, ++k) {
            const double p = a * f[k] + b;
            pr.push_back(p);
            rr.push_back(p - y[k]);
            res.rss += (p - y[k]) * (p - y[k]);
            pred_all.push_back(p);
            sp += p;
            sy += y[k];
        }
        res.predicted.push_back(std::move(pr));
        res.residuals.push_back(std::move(rr));
    }
    const double n = static_cast<double>(n_points);
    res.n_points = n_points;
    res.n_free = n_free;
    res.rms = std::sqrt(res.rss / n);
    const double mp = sp / n, my = sy / n;
    double spp = 0, syy = 0, spy = 0;
    for (std::size_t i = 0; i < n_points; ++i) {
        spp += (pred_all[i] - mp) * (pred_all[i] - mp);
        syy += (y[i] - my) * (y[i] - my);
        spy += (pred_all[i] - mp) * (y[i] - my);
    }
    res.pearson_r = (spp > 0 && syy > 0) ? spy / std::sqrt(spp * syy) : 0.0;
    return res;
}

}  // namespace elmnet::fitting
