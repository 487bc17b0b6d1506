#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>
#include <utility>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::fitting {

using Objective = std::function<double(const std::vector<double>&)>;

struct Bounds {
    std::vector<double> lo, hi;
    std::size_t dim() const noexcept { return lo.size(); }
};

struct DEOptions {
    int pop_factor = 15;   ///< population = pop_factor * dim (at least 4)
    double F = 0.8;
    double CR = 0.9;
    int generations = 300;
    std::uint64_t seed = 0;
    int jobs = 1;          ///< parallel objective evaluations within a generation
    double tol = 0.0;      ///< stop when the population's objective spread <= tol * |mean|
};

struct DEResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    int generations = 0;
    std::vector<double> best_history;  ///< best objective after each generation
};

namespace detail {

inline void evaluate_all(const Objective& f, const std::vector<std::vector<double>>& xs, std::vector<double>& out, int jobs) {
    out.resize(xs.size());
    auto safe = [&](std::size_t i) {
        const double v = f(xs[i]);
        out[i] = std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    if (jobs <= 1 || xs.size() < 2) {
        for (std::size_t i = 0; i < xs.size(); ++i) safe(i);
        return;
    }
    const int n = std::min<int>(jobs, static_cast<int>(xs.size()));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> err(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
        pool.emplace_back([&, j] {
            try {
                for (std::size_t i = static_cast<std::size_t>(j); i < xs.size(); i += static_cast<std::size_t>(n)) safe(i);
            } catch (...) {
                err[static_cast<std::size_t>(j)] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : err)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// rand/1/bin differential evolution. Trial vectors of a generation are all
/// drawn before any is evaluated, so the result does not depend on `jobs`.
inline DEResult differential_evolution(const Objective& f, const Bounds& b, const DEOptions& opt = {}) {
    const std::size_t d = b.dim();
    if (d == 0 || b.hi.size() != d) throw DomainError("differential_evolution: bounds must be non-empty and aligned");
    for (std::size_t k = 0; k < d; ++k)
        if (!(std::isfinite(b.lo[k]) && std::isfinite(b.hi[k]) && b.lo[k] <= b.hi[k]))
            throw DomainError("differential_evolution: bounds must be finite with lo <= hi");
    const std::size_t np = std::max<std::size_t>(4, static_cast<std::size_t>(opt.pop_factor) * d);
    Rng rng(opt.seed);
    std::vector<std::vector<double>> pop(np, std::vector<double>(d));
    for (auto& x : pop)
        for (std::size_t k = 0; k < d; ++k) x[k] = rng.uniform(b.lo[k], b.hi[k]);
    std::vector<double> fit;
    detail::evaluate_all(f, pop, fit, opt.jobs);

    DEResult res;
    auto best_index = [&] { return static_cast<std::size_t>(std::min_element(fit.begin(), fit.end()) - fit.begin()); };
    std::vector<std::vector<double>> trial(np, std::vector<double>(d));
    std::vector<double> tfit;
    for (int g = 0; g < opt.generations; ++g) {
        for (std::size_t i = 0; i < np; ++i) {
            std::size_t r[3];
            for (int k = 0; k < 3; ++k) {
                do {
                    r[k] = static_cast<std::size_t>(rng.below(np));
                } while (r[k] == i || (k > 0 && r[k] == r[0]) || (k > 1 && r[k] == r[1]));
            }
            const std::size_t jrand = static_cast<std::size_t>(rng.below(d));
            for (std::size_t k = 0; k < d; ++k) {
                if (k == jrand || rng.uniform() < opt.CR) {
                    double v = pop[r[0]][k] + opt.F * (pop[r[1]][k] - pop[r[2]][k]);
                    if (v < b.lo[k] || v > b.hi[k]) v = rng.uniform(b.lo[k], b.hi[k]);
                    trial[i][k] = v;
                } else {
                    trial[i][k] = pop[i][k];
                }
            }
        }
        detail::evaluate_all(f, trial, tfit, opt.jobs);
        for (std::size_t i = 0; i < np; ++i) {
            if (tfit[i] <= fit[i]) {
                pop[i] = trial[i];
                fit[i] = tfit[i];
            }
        }
        res.best_history.push_back(fit[best_index()]);
        res.generations = g + 1;
        if (opt.tol > 0.0) {
            const double mean = std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(np);
            double var = 0.0;
            for (double v : fit) var += (v - mean) * (v - mean);
            if (std::isfinite(mean) && std::sqrt(var / static_cast<double>(np)) <= opt.tol * std::abs(mean)) break;
        }
    }
    const auto bi = best_index();
    res.x = pop[bi];
    res.f = fit[bi];
    return res;
}

struct NMOptions {
    double xtol = 1e-10;
    double ftol = 1e-12;
    int max_iter = 20000;
    double initial_step = 0.05;  ///< relative; absolute 0.00025 for zero coordinates
};

struct NMResult {
    std::vector<double> x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool max_iter_reached = false;
};

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han).
inline NMResult nelder_mead(const Objective& f, std::vector<double> x0, const NMOptions& opt = {}) {
    const std::size_t n = x0.size();
    if (n == 0) throw DomainError("nelder_mead: empty start point");
    for (double v : x0)
        if (!std::isfinite(v)) throw DomainError("nelder_mead: start point must be finite");
    const double dn = static_cast<double>(n);
    const double a_refl = 1.0, a_exp = 1.0 + 2.0 / dn, a_con = 0.75 - 1.0 / (2.0 * dn), a_shr = 1.0 - 1.0 / dn;
    auto eval = [&](const std::vector<double>& x) {
        const double v = f(x);
        return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
    };
    std::vector<std::vector<double>> s(n + 1, x0);
    for (std::size_t k = 0; k < n; ++k) s[k + 1][k] = x0[k] != 0.0 ? x0[k] * (1.0 + opt.initial_step) : 0.00025;
    std::vector<double> fs(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fs[i] = eval(s[i]);
    std::vector<std::size_t> idx(n + 1);
    NMResult res;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fs[a] < fs[b]; });
        {
            std::vector<std::vector<double>> s2;
            std::vector<double> f2;
            for (auto i : idx) {
                s2.push_back(s[i]);
                f2.push_back(fs[i]);
            }
            s.swap(s2);
            fs.swap(f2);
        }
        double xspread = 0.0, fspread = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t k = 0; k < n; ++k) xspread = std::max(xspread, std::abs(s[i][k] - s[0][k]));
            fspread = std::max(fspread, std::abs(fs[i] - fs[0]));
        }
        if (xspread <= opt.xtol && fspread <= opt.ftol) break;

        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) c[k] += s[i][k] / dn;
        auto along = [&](double t) {
            std::vector<double> x(n);
            for (std::size_t k = 0; k < n; ++k) x[k] = c[k] + t * (s[n][k] - c[k]);
            return x;
        };
        const auto xr = along(-a_refl);
        const double fr = eval(xr);
        if (fr < fs[0]) {
            const auto xe = along(-a_refl * a_exp);
            const double fe = eval(xe);
            if (fe < fr) {
                s[n] = xe;
                fs[n] = fe;
            } else {
                s[n] = xr;
                fs[n] = fr;
            }
            continue;
        }
        if (fr < fs[n - 1]) {
            s[n] = xr;
            fs[n] = fr;
            continue;
        }
        const bool outside = fr < fs[n];
        const auto xc = outside ? along(-a_refl * a_con) : along(a_con);
        const double fc = eval(xc);
        if (fc <= (outside ? fr : fs[n])) {
            s[n] = xc;
            fs[n] = fc;
            continue;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            for (std::size_t k = 0; k < n; ++k) s[i][k] = s[0][k] + a_shr * (s[i][k] - s[0][k]);
            fs[i] = eval(s[i]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fs.begin(), fs.end()) - fs.begin());
    res.x = s[best];
    res.f = fs[best];
    res.iterations = it;
    res.max_iter_reached = it >= opt.max_iter;
    return res;
}

}  // namespace elmnet::fitting
