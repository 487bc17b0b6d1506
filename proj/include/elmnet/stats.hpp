#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::stats {

struct Histogram {
    double lo = 0.0, hi = 1.0;
    std::vector<std::size_t> counts;

    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

/// Values outside [lo, hi] land in the edge bins, so every input is counted.
inline Histogram histogram(std::span<const double> v, double lo, double hi, int bins) {
    if (bins < 1 || !(hi > lo)) throw DomainError("histogram: need bins >= 1 and hi > lo");
    Histogram h{lo, hi, std::vector<std::size_t>(static_cast<std::size_t>(bins), 0)};
    for (double x : v) {
        if (std::isnan(x)) continue;
        auto b = static_cast<long>(std::floor((x - lo) / (hi - lo) * bins));
        b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    return h;
}

struct Moments {
    double mean = 0.0, var = 0.0, skew = 0.0, excess_kurtosis = 0.0;
};

/// Population moments; skew and kurtosis are 0 for constant input.
inline Moments moments(std::span<const double> v) {
    Moments m;
    if (v.empty()) return m;
    const double n = static_cast<double>(v.size());
    m.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double m2 = 0, m3 = 0, m4 = 0;
    for (double x : v) {
        const double d = x - m.mean, d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    m.var = m2;
    if (m2 > 0.0) {
        m.skew = m3 / std::pow(m2, 1.5);
        m.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    }
    return m;
}

struct LorenzCurve {
    std::vector<double> rank_share;   ///< 0, 1/n, ..., 1
    std::vector<double> value_share;  ///< cumulative share of values sorted descending
    double gini = 0.0;
};

inline LorenzCurve lorenz_curve(std::span<const double> values) {
    if (values.empty()) throw DomainError("lorenz_curve: empty input");
    std::vector<double> v(values.begin(), values.end());
    for (double x : v)
        if (x < 0.0 || std::isnan(x)) throw DomainError("lorenz_curve: inputs must be non-negative");
    std::sort(v.begin(), v.end(), std::greater<>());
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    if (!(total > 0.0)) throw DomainError("lorenz_curve: all-zero input");
    LorenzCurve c;
    const double n = static_cast<double>(v.size());
    c.rank_share.push_back(0.0);
    c.value_share.push_back(0.0);
    double cum = 0.0, area = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double prev = cum / total;
        cum += v[k];
        c.rank_share.push_back(static_cast<double>(k + 1) / n);
        c.value_share.push_back(cum / total);
        area += 0.5 * (prev + cum / total) / n;
    }
    c.value_share.back() = 1.0;
    c.gini = std::clamp(2.0 * area - 1.0, 0.0, 1.0);
    return c;
}

struct StatsOptions {
    double threshold = 0.0;
    int fano_window = 50;
    int max_corr_neurons = 200;
    std::uint64_t corr_seed = 0;
    int hist_bins = 20;
};

struct ActivityStats {
    StatsOptions options;
    std::vector<double> active_fraction;  ///< per (traj, t)
    std::vector<double> firing_fraction;  ///< per neuron
    Histogram firing_hist;
    std::vector<std::vector<int>> isi;    ///< per neuron, pooled over trajectories
    bool isi_present = false;
    double isi_mean = 0.0;
    double cv = 0.0;                      ///< valid only when isi_present
    std::optional<double> fano;           ///< mean per-neuron Fano factor of onset counts
    std::vector<int> corr_neurons;
    std::vector<double> correlations;     ///< pairs (i < j) of sampled neurons with non-zero variance
    Histogram corr_hist;
    std::vector<double> skew, kurtosis;   ///< per neuron (excess kurtosis)
    LorenzCurve lorenz;                   ///< over per-neuron mean |activity|
    bool lorenz_present = false;
};

/// Spike-train style statistics of a recording. Events are onsets: the first
/// step of each maximal run above threshold, within a trajectory.
inline ActivityStats activity_stats(const Recording& rec, const StatsOptions& opt = {}) {
    rec.check();
    if (rec.n_rec == 0 || rec.samples() < 2) throw DomainError("activity_stats: degenerate recording");
    if (opt.fano_window < 1) throw InvalidConfig("must be >= 1", "fano_window");
    const std::size_t N = rec.n_rec, T = rec.steps, K = rec.n_traj;
    ActivityStats s;
    s.options = opt;
    s.active_fraction.reserve(K * T);
    std::vector<std::size_t> active_count(N, 0);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t) {
            const auto row = rec.row(k, t);
            std::size_t c = 0;
            for (std::size_t i = 0; i < N; ++i)
                if (row[i] > opt.threshold) {
                    ++c;
                    ++active_count[i];
                }
            s.active_fraction.push_back(static_cast<double>(c) / static_cast<double>(N));
        }
    const double n_samp = static_cast<double>(K * T);
    for (std::size_t i = 0; i < N; ++i) s.firing_fraction.push_back(static_cast<double>(active_count[i]) / n_samp);
    s.firing_hist = histogram(s.firing_fraction, 0.0, 1.0, opt.hist_bins);

    // ISIs and windowed onset counts
    s.isi.assign(N, {});
    std::vector<double> fanos;
    const std::size_t W = static_cast<std::size_t>(opt.fano_window);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<double> counts;
        for (std::size_t k = 0; k < K; ++k) {
            long last = -1;
            bool prev_on = false;
            std::size_t wcount = 0;
            for (std::size_t t = 0; t < T; ++t) {
                const bool on = rec.at(k, t, i) > opt.threshold;
                if (on && !prev_on) {
                    if (last >= 0) s.isi[i].push_back(static_cast<int>(static_cast<long>(t) - last));
                    last = static_cast<long>(t);
                    ++wcount;
                }
                prev_on = on;
                if ((t + 1) % W == 0) {
                    counts.push_back(static_cast<double>(wcount));
                    wcount = 0;
                }
            }
        }
        const auto m = moments(counts);
        if (counts.size() >= 2 && m.mean > 0.0) fanos.push_back(m.var / m.mean);
    }
    if (!fanos.empty()) s.fano = std::accumulate(fanos.begin(), fanos.end(), 0.0) / static_cast<double>(fanos.size());
    std::vector<double> pooled;
    for (const auto& v : s.isi)
        for (int d : v) pooled.push_back(d);
    if (!pooled.empty()) {
        s.isi_present = true;
        const auto m = moments(pooled);
        s.isi_mean = m.mean;
        s.cv = m.mean > 0 ? std::sqrt(m.var) / m.mean : 0.0;
    }

    // per-neuron traces
    std::vector<std::vector<double>> trace(N, std::vector<double>(K * T));
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t t = 0; t < T; ++t) {
            const auto row = rec.row(k, t);
            for (std::size_t i = 0; i < N; ++i) trace[i][k * T + t] = row[i];
        }
    std::vector<Moments> mom(N);
    std::vector<double> mean_abs(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        mom[i] = moments(trace[i]);
        s.skew.push_back(mom[i].skew);
        s.kurtosis.push_back(mom[i].excess_kurtosis);
        for (double x : trace[i]) mean_abs[i] += std::abs(x);
        mean_abs[i] /= n_samp;
    }
    if (std::any_of(mean_abs.begin(), mean_abs.end(), [](double v) { return v > 0.0; })) {
        s.lorenz = lorenz_curve(mean_abs);
        s.lorenz_present = true;
    }

    // pairwise correlations on a sampled subset
    std::vector<int> idx(N);
    std::iota(idx.begin(), idx.end(), 0);
    if (N > static_cast<std::size_t>(opt.max_corr_neurons)) {
        Rng rng = SeedSplitter(opt.corr_seed).stream("stats.corr");
        rng.shuffle(idx.begin(), idx.end());
        idx.resize(static_cast<std::size_t>(opt.max_corr_neurons));
        std::sort(idx.begin(), idx.end());
    }
    s.corr_neurons = idx;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto i = static_cast<std::size_t>(idx[a]), j = static_cast<std::size_t>(idx[b]);
            if (!(mom[i].var > 0.0 && mom[j].var > 0.0)) continue;
            double c = 0.0;
            for (std::size_t n = 0; n < K * T; ++n) c += (trace[i][n] - mom[i].mean) * (trace[j][n] - mom[j].mean);
            s.correlations.push_back(std::clamp(c / n_samp / std::sqrt(mom[i].var * mom[j].var), -1.0, 1.0));
        }
    s.corr_hist = histogram(s.correlations, -1.0, 1.0, 2 * opt.hist_bins);
    return s;
}

/// Expected CV of onset intervals for independent Bernoulli(p) activity:
/// intervals are an off-run (geometric, mean 1/p) plus an on-run (mean 1/(1-p)).
inline double bernoulli_onset_cv(double p) {
    const double mean = 1.0 / (1.0 - p) + 1.0 / p;
    const double var = p / ((1.0 - p) * (1.0 - p)) + (1.0 - p) / (p * p);
    return std::sqrt(var) / mean;
}

inline std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
    const auto m = moments(x);
    std::vector<double> rho(max_lag + 1, 0.0);
    if (!(m.var > 0.0)) return rho;
    const std::size_t n = x.size();
    for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
        double c = 0.0;
        for (std::size_t t = k; t < n; ++t) c += (x[t] - m.mean) * (x[t - k] - m.mean);
        rho[k] = c / (static_cast<double>(n) * m.var);
    }
    return rho;
}

/// Integrated autocorrelation time with automatic windowing: the smallest
/// window M with M >= c * tau(M).
inline double integrated_autocorr_time(std::span<const double> x, double c = 5.0) {
    const auto m = moments(x);
    if (!(m.var > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = x.size();
    double tau = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t t = k; t < n; ++t) acc += (x[t] - m.mean) * (x[t - k] - m.mean);
        tau += 2.0 * acc / (static_cast<double>(n) * m.var);
        if (static_cast<double>(k) >= c * tau) break;
    }
    return tau;
}

struct AR1Result {
    double phi = 0.0;
    std::vector<double> whitened;
    double tau_before = 0.0;
    double tau_after = 0.0;
    bool degenerate = false;  ///< zero variance: phi undefined
};

inline AR1Result ar1_correct(std::span<const double> r) {
    if (r.size() < 10) throw DomainError("ar1_correct: need at least 10 residuals");
    AR1Result res;
    const auto m = moments(r);
    if (!(m.var > 0.0)) {
        res.degenerate = true;
        res.phi = std::numeric_limits<double>::quiet_NaN();
        res.tau_before = res.tau_after = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    res.phi = autocorrelation(r, 1)[1];
    res.whitened.reserve(r.size() - 1);
    for (std::size_t t = 1; t < r.size(); ++t) res.whitened.push_back(r[t] - res.phi * r[t - 1]);
    res.tau_before = integrated_autocorr_time(r);
    res.tau_after = integrated_autocorr_time(res.whitened);
    return res;
}

}  // namespace elmnet::stats
