#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/fitting/least_squares.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::fitting {

enum class DecayModel { power, power_max_floor, power_add_floor, exponential, exponential_floor, logarithmic };

inline constexpr DecayModel kDecayModels[] = {DecayModel::power,       DecayModel::power_max_floor,
                                              DecayModel::power_add_floor, DecayModel::exponential,
                                              DecayModel::exponential_floor, DecayModel::logarithmic};

inline std::string_view to_string(DecayModel m) {
    switch (m) {
        case DecayModel::power: return "power";
        case DecayModel::power_max_floor: return "power_max_floor";
        case DecayModel::power_add_floor: return "power_add_floor";
        case DecayModel::exponential: return "exponential";
        case DecayModel::exponential_floor: return "exponential_floor";
        case DecayModel::logarithmic: return "logarithmic";
    }
    return "?";
}

inline DecayModel parse_decay_model(std::string_view s) {
    for (auto m : kDecayModels)
        if (to_string(m) == s) return m;
    throw InvalidConfig("unknown decay model '" + std::string(s) + "'", "model");
}

/// Names of the natural parameters, in order.
inline std::vector<std::string> param_names(DecayModel m) {
    switch (m) {
        case DecayModel::power:
        case DecayModel::exponential:
        case DecayModel::logarithmic: return {"c", "a"};
        default: return {"c", "a", "f"};
    }
}

inline std::size_t n_params(DecayModel m) { return param_names(m).size(); }

/// Model value at x for natural parameters (c, a[, f]).
inline double decay_eval(DecayModel m, std::span<const double> p, double x) {
    const double c = p[0], a = p[1];
    switch (m) {
        case DecayModel::power: return c * std::pow(x, -a);
        case DecayModel::power_max_floor: return std::max(c * std::pow(x, -a), p[2]);
        case DecayModel::power_add_floor: return c * std::pow(x, -a) + p[2];
        case DecayModel::exponential: return c * std::exp(-a * x);
        case DecayModel::exponential_floor: return c * std::exp(-a * x) + p[2];
        case DecayModel::logarithmic: return std::max(c - a * std::log(x), std::numeric_limits<double>::min());
    }
    return 0.0;
}

/// Corrected Akaike information criterion on a log-space RSS.
inline double aicc(double rss_log, std::size_t n, std::size_t k) {
    if (n <= k + 1) throw DomainError("aicc: need n > k + 1 (n = " + std::to_string(n) + ", k = " + std::to_string(k) + ")");
    const double dn = static_cast<double>(n), dk = static_cast<double>(k);
    return dn * std::log(std::max(rss_log, 1e-300) / dn) + 2.0 * dk + 2.0 * dk * (dk + 1.0) / (dn - dk - 1.0);
}

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;  ///< natural parameters, ordered as names
    double rss = 0.0;            ///< sum of squared log residuals
    std::size_t n = 0;
    std::size_t k = 0;
    double aicc = 0.0;
    std::vector<double> residuals;  ///< log(model) - log(y), in input order of retained points
    std::vector<std::string> warnings;
    std::size_t excluded = 0;  ///< points dropped for non-positive x or y

    double param(std::string_view name) const {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return params[i];
        throw DomainError("no parameter '" + std::string(name) + "'");
    }
};

struct DecayFitOptions {
    int random_starts = 4;  ///< extra perturbed starts on top of the deterministic seeds
    std::uint64_t seed = 0;
};

namespace detail {

// Internal coordinates: log c, a, log f. Logarithmic uses c, a directly.
inline std::vector<double> to_natural(DecayModel m, const Eigen::VectorXd& q) {
    if (m == DecayModel::logarithmic) return {q[0], q[1]};
    std::vector<double> p{std::exp(q[0]), q[1]};
    if (q.size() > 2) p.push_back(std::exp(q[2]));
    return p;
}

}  // namespace detail

/// Log-space nonlinear least squares for one decay model with multi-start.
/// Floor models start from the pure power fit with the floor at the last
/// evaluation point (and scaled variants of it).
inline FitResult fit_decay(std::span<const double> x_in, std::span<const double> y_in, DecayModel model,
                           const DecayFitOptions& opt = {}) {
    if (x_in.size() != y_in.size()) throw ShapeError("fit_decay: x and y lengths differ");
    std::vector<std::tuple<double, double, std::size_t>> pts;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < x_in.size(); ++i) {
        if (x_in[i] > 0.0 && y_in[i] > 0.0 && std::isfinite(x_in[i]) && std::isfinite(y_in[i]))
            pts.emplace_back(x_in[i], y_in[i], i);
        else
            ++excluded;
    }
    // Work on sorted points so the result does not depend on input order.
    std::sort(pts.begin(), pts.end());
    const std::size_t n = pts.size(), k = n_params(model);
    if (n < k + 2) throw DomainError("fit_decay: need at least k + 2 = " + std::to_string(k + 2) + " positive points");
    std::vector<double> lx(n), ly(n), xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        xs[i] = std::get<0>(pts[i]);
        ys[i] = std::get<1>(pts[i]);
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    auto residual_fn = [&](const Eigen::VectorXd& q) {
        const auto p = detail::to_natural(model, q);
        Eigen::VectorXd r(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) r[static_cast<Eigen::Index>(i)] = std::log(decay_eval(model, p, xs[i])) - ly[i];
        return r;
    };

    std::vector<Eigen::VectorXd> starts;
    const auto pw = linear_regression(lx, ly);  // log y = log c - a log x
    const double y_last = ys[static_cast<std::size_t>(std::max_element(xs.begin(), xs.end()) - xs.begin())];
    const double y_min = *std::min_element(ys.begin(), ys.end());
    switch (model) {
        case DecayModel::power: starts.push_back(Eigen::Vector2d(pw.intercept, -pw.slope)); break;
        case DecayModel::power_max_floor:
        case DecayModel::power_add_floor: {
            // Slope from the head of the curve, floor from the tail.
            const std::size_t head = std::max<std::size_t>(3, n / 2);
            const auto hf = linear_regression({lx.begin(), lx.begin() + static_cast<std::ptrdiff_t>(head)},
                                              {ly.begin(), ly.begin() + static_cast<std::ptrdiff_t>(head)});
            for (const auto& sl : {pw, hf})
                for (double fs : {1.0, 0.5, 0.9, 0.1})
                    starts.push_back(Eigen::Vector3d(sl.intercept, -sl.slope, std::log(std::min(y_last, y_min) * fs)));
            break;
        }
        case DecayModel::exponential:
        case DecayModel::exponential_floor: {
            const auto ex = linear_regression(xs, ly);  // log y = log c - a x
            if (model == DecayModel::exponential) {
                starts.push_back(Eigen::Vector2d(ex.intercept, -ex.slope));
            } else {
                for (double fs : {0.5, 0.9, 0.1})
                    starts.push_back(Eigen::Vector3d(ex.intercept, -ex.slope, std::log(y_min * fs)));
                const double xr = xs.back() - xs.front();
                for (double scale : {1.0, 5.0, 25.0})
                    starts.push_back(Eigen::Vector3d(std::log(ys.front()), scale / std::max(xr, 1e-300), std::log(y_min * 0.9)));
            }
            break;
        }
        case DecayModel::logarithmic: {
            const auto lf = linear_regression(lx, ys);  // y = c - a log x
            starts.push_back(Eigen::Vector2d(lf.intercept, -lf.slope));
            break;
        }
    }
    Rng rng(opt.seed ^ 0x5bd1e995ULL);
    const std::size_t base = starts.size();
    for (int r = 0; r < opt.random_starts; ++r) {
        Eigen::VectorXd q = starts[static_cast<std::size_t>(r) % base];
        for (Eigen::Index j = 0; j < q.size(); ++j) q[j] += 0.3 * rng.normal() * std::max(1.0, std::abs(q[j]));
        starts.push_back(q);
    }

    LeastSquaresResult best;
    for (const auto& q0 : starts) {
        if (!residual_fn(q0).allFinite()) continue;
        auto r = levenberg_marquardt(residual_fn, q0);
        if (r.residuals.allFinite() && r.rss < best.rss) best = std::move(r);
    }
    if (!std::isfinite(best.rss))
        throw FitFailure("fit_decay(" + std::string(to_string(model)) + "): all " + std::to_string(starts.size()) +
                         " starts produced non-finite residuals");

    FitResult fr;
    fr.model = std::string(to_string(model));
    fr.names = param_names(model);
    fr.params = detail::to_natural(model, best.x);
    fr.rss = best.rss;
    fr.n = n;
    fr.k = k;
    fr.aicc = aicc(fr.rss, n, k);
    // Residuals in the caller's order of retained points.
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) rank[i] = i;
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return std::get<2>(pts[a]) < std::get<2>(pts[b]); });
    for (std::size_t i : rank) fr.residuals.push_back(best.residuals[static_cast<Eigen::Index>(i)]);
    fr.excluded = excluded;
    if (excluded) fr.warnings.push_back(std::to_string(excluded) + " non-positive points excluded");
    if (!best.converged) fr.warnings.push_back("iteration limit reached");
    return fr;
}

inline FitResult fit_decay(std::span<const double> x, std::span<const double> y, std::string_view model,
                           const DecayFitOptions& opt = {}) {
    return fit_decay(x, y, parse_decay_model(model), opt);
}

/// Fits each model and returns them sorted by AICc (best first). Models that
/// fail or lack enough points are skipped.
inline std::vector<FitResult> select_decay_model(std::span<const double> x, std::span<const double> y,
                                                 std::span<const DecayModel> models, const DecayFitOptions& opt = {}) {
    std::vector<FitResult> out;
    for (auto m : models) {
        try {
            out.push_back(fit_decay(x, y, m, opt));
        } catch (const FitFailure&) {
        } catch (const DomainError&) {
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const FitResult& a, const FitResult& b) { return a.aicc < b.aicc; });
    return out;
}

}  // namespace elmnet::fitting
