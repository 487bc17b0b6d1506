#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "elmnet/config.hpp"
#include "elmnet/error.hpp"
#include "elmnet/fitting/least_squares.hpp"
#include "elmnet/fitting/spectrum.hpp"
#include "elmnet/network.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/training/trainer.hpp"

namespace elmnet::sweeps {

enum class SweepAxis { n_rec, d_m, d_s, rho_rec, ke_vs_kc, n_vs_ke };

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::n_rec: return "N_rec";
        case SweepAxis::d_m: return "d_m";
        case SweepAxis::d_s: return "d_s";
        case SweepAxis::rho_rec: return "rho_rec";
        case SweepAxis::ke_vs_kc: return "ke_vs_kc";
        case SweepAxis::n_vs_ke: return "n_vs_ke";
    }
    return "?";
}

inline SweepAxis parse_axis(std::string_view s) {
    for (auto a : {SweepAxis::n_rec, SweepAxis::d_m, SweepAxis::d_s, SweepAxis::rho_rec, SweepAxis::ke_vs_kc,
                   SweepAxis::n_vs_ke})
        if (to_string(a) == s) return a;
    throw InvalidConfig("unknown axis '" + std::string(s) + "'", "sweep.axis");
}

/// Grid over one axis. For ke_vs_kc and n_vs_ke the grid values are d_m and
/// `budget` is required.
struct SweepSpec {
    SweepAxis axis = SweepAxis::n_rec;
    std::vector<double> grid;
    std::optional<double> budget;
    int repeats = 3;
    bool timing = false;  ///< off: runtime_s is written as 0 so tables stay byte-identical

    void validate() const {
        if (grid.empty()) throw InvalidConfig("must list at least one value", "sweep.grid");
        if (repeats < 1) throw InvalidConfig("must be >= 1", "sweep.repeats");
        const bool needs_budget = axis == SweepAxis::ke_vs_kc || axis == SweepAxis::n_vs_ke;
        if (needs_budget && !budget) throw InvalidConfig("required for axis " + std::string(to_string(axis)), "sweep.budget");
        if (budget && !(*budget > 0.0)) throw InvalidConfig("must be > 0", "sweep.budget");
    }
};

inline std::vector<double> parse_grid(const std::string& s, const std::string& key = "sweep.grid") {
    std::vector<double> g;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = std::min(s.find(',', pos), s.size());
        const auto tok = KeyValues::trim(std::string_view(s).substr(pos, comma - pos));
        if (tok.empty()) throw InvalidConfig("empty grid entry", key);
        g.push_back(detail::parse_number<double>(tok, key));
        pos = comma + 1;
    }
    return g;
}

/// Consumes the sweep.* keys.
inline SweepSpec sweep_spec_from(KeyValues& kv) {
    SweepSpec s;
    if (auto v = kv.take("sweep.axis")) s.axis = parse_axis(*v);
    if (auto v = kv.take("sweep.grid")) s.grid = parse_grid(*v);
    if (auto v = kv.take("sweep.budget")) s.budget = detail::parse_number<double>(*v, "sweep.budget");
    if (auto v = kv.take("sweep.repeats")) s.repeats = detail::parse_number<int>(*v, "sweep.repeats");
    if (auto v = kv.take("sweep.timing")) s.timing = detail::parse_bool(*v, "sweep.timing");
    return s;
}

inline std::string to_text(const SweepSpec& s) {
    std::ostringstream os;
    os << "sweep.axis = " << to_string(s.axis) << "\nsweep.grid = ";
    for (std::size_t i = 0; i < s.grid.size(); ++i) os << (i ? ", " : "") << detail::fmt_double(s.grid[i]);
    os << "\nsweep.budget = " << (s.budget ? detail::fmt_double(*s.budget) : std::string("none"))
       << "\nsweep.repeats = " << s.repeats << "\nsweep.timing = " << (s.timing ? "true" : "false") << '\n';
    return os.str();
}

/// Network configuration for one grid value, or the reason it is infeasible.
struct GridPoint {
    double value = 0.0;
    std::optional<NetworkConfig> net;
    std::string skip_reason;
};

inline GridPoint build_point(const NetworkConfig& base, const SweepSpec& spec, double value) {
    GridPoint gp;
    gp.value = value;
    NetworkConfig n = base;
    auto as_int = [&](double v) { return static_cast<int>(std::floor(v + 1e-9)); };
    auto infeasible = [&](std::string why) {
        gp.skip_reason = std::move(why);
        return gp;
    };
    auto scale_mlp = [&](int d_m) {
        n.hidden.d_m = d_m;
        // d_mlp keeps the base ratio to d_m.
        const double ratio = static_cast<double>(base.hidden.d_mlp) / base.hidden.d_m;
        n.hidden.d_mlp = std::max(d_m, static_cast<int>(std::lround(ratio * d_m)));
    };
    auto budget_count = [&]() -> long {
        const auto pc = count_params(n.hidden);
        return static_cast<long>(std::floor(*spec.budget / static_cast<double>(pc.k_e + pc.k_c)));
    };
    switch (spec.axis) {
        case SweepAxis::n_rec:
            if (as_int(value) < 1) return infeasible("N_rec < 1");
            n.n_rec = as_int(value);
            break;
        case SweepAxis::d_m:
            if (as_int(value) < 1) return infeasible("d_m < 1");
            scale_mlp(as_int(value));
            break;
        case SweepAxis::d_s: {
            const int d_branch = as_int(value / base.hidden.d_tree);
            if (d_branch < 1) return infeasible("d_s < d_tree");
            n.hidden.d_branch = d_branch;
            break;
        }
        case SweepAxis::rho_rec:
            if (!(value >= 0.0 && value <= 1.0)) return infeasible("rho_rec outside [0, 1]");
            n.rho_rec = value;
            break;
        case SweepAxis::ke_vs_kc: {
            if (as_int(value) < 1) return infeasible("d_m < 1");
            scale_mlp(as_int(value));
            // Synapses per branch rounded down to fit the base N_rec, then N
            // is refilled to the budget.
            const double k_e = static_cast<double>(count_params(n.hidden).k_e);
            const double per_neuron = *spec.budget / base.n_rec;
            const int d_branch = static_cast<int>(std::floor((per_neuron - k_e) / base.hidden.d_tree));
            if (d_branch < 1) return infeasible("budget leaves less than one synapse per branch");
            n.hidden.d_branch = d_branch;
            const long N = budget_count();
            if (N < 1) return infeasible("budget admits no neuron");
            n.n_rec = static_cast<int>(N);
            break;
        }
        case SweepAxis::n_vs_ke: {
            if (as_int(value) < 1) return infeasible("d_m < 1");
            scale_mlp(as_int(value));
            const long N = budget_count();
            if (N < 1) return infeasible("budget admits no neuron");
            n.n_rec = static_cast<int>(N);
            break;
        }
    }
    try {
        n.validate();
    } catch (const InvalidConfig& e) {
        return infeasible(e.what());
    }
    gp.net = n;
    return gp;
}

struct SweepRow {
    double axis_value = 0.0;
    int d_m = 0, d_mlp = 0, d_branch = 0;
    double rho_rec = 0.0;
    std::size_t k_e = 0, k_c = 0;
    int N = 0;
    std::size_t P_total = 0;    ///< hidden-layer budget N (k_e + k_c)
    std::size_t P_network = 0;  ///< every trainable parameter
    std::uint64_t seed = 0;
    double metric = 0.0;  ///< test error (spike task) or BPC (bytes)
    double reducible = 0.0;
    bool reducible_clamped = false;
    double runtime_s = 0.0;
};

struct SkippedPoint {
    double axis_value = 0.0;
    std::string reason;
};

struct SweepResult {
    std::vector<SweepRow> rows;  ///< grid order, then seed order
    std::vector<SkippedPoint> skipped;
};

/// Called after each finished job (from worker threads, serialized).
using SweepProgress = std::function<void(const SweepRow&)>;

/// One training run per (feasible grid point, seed). Jobs run on `jobs`
/// threads and are merged back in grid order.
inline SweepResult run_sweep(const RunConfig& base, const training::TaskData& data, const SweepSpec& spec, int jobs = 1,
                             const SweepProgress& progress = {}) {
    spec.validate();
    SweepResult out;
    std::vector<GridPoint> feasible;
    for (double v : spec.grid) {
        auto gp = build_point(base.net, spec, v);
        if (gp.net)
            feasible.push_back(std::move(gp));
        else
            out.skipped.push_back({v, gp.skip_reason});
    }
    const std::size_t R = static_cast<std::size_t>(spec.repeats);
    const std::size_t n_jobs = feasible.size() * R;
    std::vector<SweepRow> rows(n_jobs);
    std::vector<std::exception_ptr> errors(n_jobs);
    std::atomic<std::size_t> next{0};
    std::mutex report;
    training::TrainConfig tc = base.train;
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n_jobs)));
    // Parallelism goes to jobs when there are several; a lone job uses the batch.
    tc.jobs = workers > 1 ? 1 : std::max(1, jobs);

    auto work = [&] {
        for (std::size_t j = next++; j < n_jobs; j = next++) {
            try {
                const auto& gp = feasible[j / R];
                const std::uint64_t seed = base.seed + j % R;
                const auto t0 = std::chrono::steady_clock::now();
                Network net(*gp.net, seed);
                const auto tr = training::train_run(net, data, tc, seed);
                const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                SweepRow r;
                r.axis_value = gp.value;
                r.d_m = gp.net->hidden.d_m;
                r.d_mlp = gp.net->hidden.d_mlp;
                r.d_branch = gp.net->hidden.d_branch;
                r.rho_rec = gp.net->rho_rec;
                const auto pc = count_params(gp.net->hidden);
                r.k_e = pc.k_e;
                r.k_c = pc.k_c;
                r.N = gp.net->n_rec;
                r.P_total = net.hidden_budget();
                r.P_network = net.n_params();
                r.seed = seed;
                r.metric = data.kind == training::TaskKind::spike_adding ? 1.0 - tr.test.metric : tr.test.metric;
                r.reducible = tr.reducible;
                r.reducible_clamped = tr.reducible_clamped;
                r.runtime_s = spec.timing ? secs : 0.0;
                rows[j] = r;
                if (progress) {
                    std::lock_guard lk(report);
                    progress(r);
                }
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    out.rows = std::move(rows);
    return out;
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& res, SweepAxis axis) {
    os << "axis,axis_value,d_m,d_mlp,d_branch,rho_rec,k_e,k_c,N,P_total,P_network,seed,metric,reducible,reducible_clamped,"
          "runtime_s\n";
    auto num = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const auto& r : res.rows)
        os << to_string(axis) << ',' << num(r.axis_value) << ',' << r.d_m << ',' << r.d_mlp << ',' << r.d_branch << ','
           << num(r.rho_rec) << ',' << r.k_e << ',' << r.k_c << ',' << r.N << ',' << r.P_total << ',' << r.P_network << ','
           << r.seed << ',' << num(r.metric) << ',' << num(r.reducible) << ',' << (r.reducible_clamped ? 1 : 0) << ','
           << num(r.runtime_s) << '\n';
}

struct PointSummary {
    double axis_value = 0.0;
    std::size_t k_e = 0, k_c = 0;
    int N = 0;
    int n = 0;
    double metric_mean = 0.0, metric_std = 0.0;
    double reducible_mean = 0.0, reducible_std = 0.0;
};

/// Mean and sample standard deviation over seeds at each grid point.
inline std::vector<PointSummary> summarize(const SweepResult& res) {
    std::vector<PointSummary> out;
    std::vector<std::vector<const SweepRow*>> groups;
    for (const auto& r : res.rows) {
        if (out.empty() || out.back().axis_value != r.axis_value) {
            out.push_back({r.axis_value, r.k_e, r.k_c, r.N});
            groups.emplace_back();
        }
        groups.back().push_back(&r);
    }
    for (std::size_t g = 0; g < out.size(); ++g) {
        const auto& rs = groups[g];
        const double n = static_cast<double>(rs.size());
        double sm = 0, sr = 0;
        for (auto* r : rs) {
            sm += r->metric;
            sr += r->reducible;
        }
        out[g].n = static_cast<int>(rs.size());
        out[g].metric_mean = sm / n;
        out[g].reducible_mean = sr / n;
        if (rs.size() > 1) {
            double vm = 0, vr = 0;
            for (auto* r : rs) {
                vm += (r->metric - out[g].metric_mean) * (r->metric - out[g].metric_mean);
                vr += (r->reducible - out[g].reducible_mean) * (r->reducible - out[g].reducible_mean);
            }
            out[g].metric_std = std::sqrt(vm / (n - 1));
            out[g].reducible_std = std::sqrt(vr / (n - 1));
        }
    }
    return out;
}

/// True when some interior entry is strictly below both endpoints (lower is
/// better).
inline bool has_interior_optimum(std::span<const double> metric) {
    if (metric.size() < 3) return false;
    const double best_inner = *std::min_element(metric.begin() + 1, metric.end() - 1);
    return best_inner < metric.front() && best_inner < metric.back();
}

struct AlphaOptions {
    bool halve_exponent = false;  ///< metric scales like a noise std, so the slope is alpha / 2
    double knee_fraction = 0.5;   ///< truncate where the local slope falls below this share of the initial one
    std::size_t min_points = 4;
    double flat_slope = 0.05;  ///< |slope| below this is reported as low confidence
};

struct AlphaResult {
    double alpha = 0.0;
    double slope = 0.0;  ///< raw log-log slope
    double log_prefactor = 0.0;
    double r2 = 0.0;
    std::size_t n_used = 0;
    std::size_t n_total = 0;
    bool truncated = false;
    bool low_confidence = false;
};

/// Power-law exponent of a metric against k_e on its pre-knee range.
inline AlphaResult measure_alpha(std::span<const double> k_e, std::span<const double> metric, const AlphaOptions& opt = {}) {
    if (k_e.size() != metric.size()) throw ShapeError("measure_alpha: k_e and metric lengths differ");
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < k_e.size(); ++i)
        if (k_e[i] > 0.0 && metric[i] > 0.0 && std::isfinite(metric[i])) pts.emplace_back(std::log(k_e[i]), std::log(metric[i]));
    std::sort(pts.begin(), pts.end());
    if (pts.size() < opt.min_points)
        throw DomainError("measure_alpha: " + std::to_string(pts.size()) + " usable points, need " +
                          std::to_string(opt.min_points));
    std::vector<double> lx, ly;
    for (auto& [x, y] : pts) {
        lx.push_back(x);
        ly.push_back(y);
    }
    AlphaResult res;
    res.n_total = pts.size();
    std::size_t end = pts.size();
    auto slope_of = [&](std::size_t a, std::size_t b) {
        return fitting::linear_regression({lx.begin() + static_cast<std::ptrdiff_t>(a), lx.begin() + static_cast<std::ptrdiff_t>(b)},
                                          {ly.begin() + static_cast<std::ptrdiff_t>(a), ly.begin() + static_cast<std::ptrdiff_t>(b)})
            .slope;
    };
    const double initial = std::abs(slope_of(0, 3));
    if (initial > opt.flat_slope) {
        // Local slope over three neighbours; the knee is the first centre
        // where it has flattened.
        for (std::size_t c = 2; c + 1 < pts.size(); ++c) {
            if (std::abs(slope_of(c - 1, c + 2)) < opt.knee_fraction * initial) {
                end = c;
                break;
            }
        }
    }
    if (end < opt.min_points)
        throw DomainError("measure_alpha: only " + std::to_string(end) + " points before the knee, need " +
                          std::to_string(opt.min_points));
    res.truncated = end < pts.size();
    res.n_used = end;
    const auto fit = fitting::linear_regression({lx.begin(), lx.begin() + static_cast<std::ptrdiff_t>(end)},
                                                {ly.begin(), ly.begin() + static_cast<std::ptrdiff_t>(end)});
    res.slope = fit.slope;
    res.log_prefactor = fit.intercept;
    res.alpha = std::abs(fit.slope) * (opt.halve_exponent ? 2.0 : 1.0);
    double my = 0.0;
    for (std::size_t i = 0; i < end; ++i) my += ly[i];
    my /= static_cast<double>(end);
    double ss_tot = 0.0, ss_res = 0.0;
    for (std::size_t i = 0; i < end; ++i) {
        const double p = fit.intercept + fit.slope * lx[i];
        ss_res += (ly[i] - p) * (ly[i] - p);
        ss_tot += (ly[i] - my) * (ly[i] - my);
    }
    res.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
    res.low_confidence = std::abs(fit.slope) < opt.flat_slope || res.r2 < 0.8;
    return res;
}

struct BetaResult {
    std::vector<double> beta;
    fitting::SpectrumFit fit;
    std::vector<std::string> warnings;
};

/// Per-condition spectral exponents from a shared-cutoff fit. Recordings
/// tapped after the high-pass filter are fitted but flagged: removing the
/// slow components flattens the spectrum.
inline BetaResult measure_beta(std::span<const Recording> recs, std::span<const TapPoint> taps = {}) {
    if (recs.empty()) throw DomainError("measure_beta: no recordings");
    if (!taps.empty() && taps.size() != recs.size()) throw ShapeError("measure_beta: one tap per recording");
    BetaResult res;
    std::vector<std::vector<double>> eigs;
    for (const auto& r : recs) eigs.push_back(fitting::covariance_spectrum(r));
    res.fit = fitting::fit_spectrum(eigs, true);
    for (const auto& m : res.fit.models) res.beta.push_back(m.beta);
    for (std::size_t c = 0; c < taps.size(); ++c)
        if (taps[c] == TapPoint::activity)
            res.warnings.push_back("condition " + std::to_string(c) +
                                   " was recorded after the high-pass filter; beta is biased low");
    return res;
}

}  // namespace elmnet::sweeps
