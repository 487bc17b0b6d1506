#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"

namespace elmnet::theory {

/// Parameters of the effective-representation-information model.
struct TheoryParams {
    double alpha = 1.0;   ///< expressivity exponent
    double beta = 1.0;    ///< spectral decay exponent
    double gamma = 0.01;  ///< effectivity constant
    double q_inf = 1e-4;  ///< irreducible normalized residual floor
    double P = 1e4;       ///< total parameter budget
    double k_c = 100.0;   ///< connectivity parameters per neuron

    void validate() const {
        if (!(alpha > 0.0)) throw InvalidConfig("must be > 0", "alpha");
        if (!(beta > 0.0)) throw InvalidConfig("must be > 0", "beta");
        if (!(gamma > 0.0)) throw InvalidConfig("must be > 0", "gamma");
        if (!(q_inf > 0.0)) throw InvalidConfig("must be > 0", "q_inf");
        if (!(P > 0.0)) throw InvalidConfig("must be > 0", "P");
        if (!(k_c >= 0.0)) throw InvalidConfig("must be >= 0", "k_c");
    }
};

/// Gaussian channel y = f(x) + n with f-covariance eigenvalues
/// lambda_i = sigma_f2 * i^-beta and isotropic noise sigma_n2.
struct ChannelModel {
    double sigma_f2 = 1.0;
    double beta = 1.0;
    double sigma_n2 = 1.0;

    double lambda(long i) const { return sigma_f2 * std::pow(static_cast<double>(i), -beta); }
    double mode_snr(long i) const { return lambda(i) / sigma_n2; }
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            c_ += (sum_ - t) + x;
        else
            c_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + c_; }

private:
    double sum_ = 0.0, c_ = 0.0;
};

inline double snr(double k_e, const TheoryParams& th) {
    if (!(k_e > 0.0)) throw DomainError("snr: k_e must be > 0");
    return std::min(std::pow(th.gamma * k_e, th.alpha), 1.0 / th.q_inf);
}

/// Per-neuron budget above which the SNR sits on its floor.
inline double ke_floor_knee(const TheoryParams& th) { return std::pow(th.q_inf, -1.0 / th.alpha) / th.gamma; }

inline long neuron_count(double k_e, const TheoryParams& th) {
    return static_cast<long>(std::floor(th.P / (k_e + th.k_c)));
}

/// 1/2 sum_{i=1}^{N} log2(1 + s i^-beta).
inline double i_rep_modes(long N, double s, double beta) {
    if (N < 1) throw DomainError("i_rep: neuron count N = " + std::to_string(N) + " < 1");
    CompensatedSum acc;
    for (long i = 1; i <= N; ++i) acc.add(std::log1p(s * std::pow(static_cast<double>(i), -beta)));
    return 0.5 * acc.value() / std::numbers::ln2;
}

inline double i_rep(double k_e, const TheoryParams& th) {
    return i_rep_modes(neuron_count(k_e, th), snr(k_e, th), th.beta);
}

/// Stable rank sum_{i=1}^{N} i^-beta.
inline double n_eff(long N, double beta) {
    if (N < 1) throw DomainError("n_eff: N must be >= 1");
    CompensatedSum acc;
    for (long i = 1; i <= N; ++i) acc.add(std::pow(static_cast<double>(i), -beta));
    return acc.value();
}

inline std::vector<double> geometric_grid(double lo, double hi, int n) {
    if (!(lo > 0.0 && hi >= lo) || n < 1) throw DomainError("geometric_grid: need 0 < lo <= hi and n >= 1");
    std::vector<double> g(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        g[static_cast<std::size_t>(k)] = n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(k) / (n - 1));
    return g;
}

struct Optimum {
    double k_e = 0.0;
    long N = 0;
    double i_rep = 0.0;
};

/// Grid argmax of i_rep; ties go to the smallest k_e. Points with N < 1 are
/// skipped.
inline Optimum optimal_ke(const TheoryParams& th, std::span<const double> grid) {
    if (grid.empty()) throw DomainError("optimal_ke: empty grid");
    std::vector<double> g(grid.begin(), grid.end());
    std::sort(g.begin(), g.end());
    Optimum best;
    bool found = false;
    for (double k : g) {
        const long N = neuron_count(k, th);
        if (N < 1 || !(k > 0.0)) continue;
        const double v = i_rep_modes(N, snr(k, th), th.beta);
        if (!found || v > best.i_rep) {
            best = {k, N, v};
            found = true;
        }
    }
    if (!found) throw DomainError("optimal_ke: no grid point leaves N >= 1");
    return best;
}

struct Crossing {
    double k_x = 0.0;
    double N_x = 0.0;
};

/// Budget at which (gamma k_e)^alpha = 1, i.e. every alpha gives s = 1.
inline Crossing crossing(const TheoryParams& th) {
    if (!(th.gamma > 0.0)) throw DomainError("crossing: gamma must be > 0");
    return {1.0 / th.gamma, th.P / (1.0 / th.gamma + th.k_c)};
}

struct SlopeResult {
    double eta = 0.0;
    double k_lo = 0.0, k_hi = 0.0;
    long N = 0;
    bool precondition_violated = false;  ///< s > 1 or the SNR floor inside the range
};

/// The decade of k_e whose upper end has s = s_max.
inline std::pair<double, double> low_snr_decade(const TheoryParams& th, double s_max = 0.1) {
    const double k_hi = std::pow(s_max, 1.0 / th.alpha) / th.gamma;
    return {k_hi / 10.0, k_hi};
}

/// Least-squares slope of log i_rep against log k_e on a geometric grid over
/// [k_lo, k_hi] with the mode count held fixed (N = 0 takes N at k_lo).
inline SlopeResult low_snr_slope(const TheoryParams& th, double k_lo, double k_hi, int points = 21, long N = 0) {
    if (!(k_lo > 0.0 && k_hi > k_lo) || points < 2) throw DomainError("low_snr_slope: need 0 < k_lo < k_hi, points >= 2");
    SlopeResult r;
    r.k_lo = k_lo;
    r.k_hi = k_hi;
    r.N = N > 0 ? N : std::max(1L, neuron_count(k_lo, th));
    const auto grid = geometric_grid(k_lo, k_hi, points);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (double k : grid) {
        const double x = std::log(k), y = std::log(i_rep_modes(r.N, snr(k, th), th.beta));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(points);
    r.eta = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    r.precondition_violated = std::pow(th.gamma * k_hi, th.alpha) > 1.0 || k_hi >= ke_floor_knee(th);
    return r;
}

}  // namespace elmnet::theory
