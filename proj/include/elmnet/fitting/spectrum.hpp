#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "elmnet/error.hpp"
#include "elmnet/fitting/least_squares.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::fitting {

struct SpectrumModel {
    double sigma_f2 = 1.0;
    double beta = 1.0;
    double i_c = 100.0;
    double nu = 1.0;

    double eval(double i) const { return sigma_f2 * std::pow(i, -beta) * std::exp(-std::pow(i / i_c, nu)); }
};

/// Eigenvalues (descending, clipped at 0) of a symmetric covariance.
inline std::vector<double> sorted_eigenvalues(const Eigen::MatrixXd& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericFault("eigendecomposition failed");
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end(), std::greater<>());
    for (auto& v : ev) v = std::max(v, 0.0);
    return ev;
}

/// Per-trajectory sufficient statistics (sum vector and Gram matrix), so a
/// covariance over any multiset of trajectories is a cheap sum.
class TrajectoryMoments {
public:
    explicit TrajectoryMoments(const Recording& rec) : n_rec_(rec.n_rec), steps_(rec.steps) {
        rec.check();
        if (rec.n_rec == 0 || rec.steps == 0 || rec.n_traj == 0) throw DomainError("covariance: empty recording");
        for (std::uint32_t k = 0; k < rec.n_traj; ++k) {
            const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> X(
                rec.data.data() + static_cast<std::size_t>(k) * rec.steps * rec.n_rec, rec.steps, rec.n_rec);
            const Eigen::MatrixXd Xd = X.cast<double>();
            sums_.push_back(Xd.colwise().sum().transpose());
            Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_rec_, n_rec_);
            G.selfadjointView<Eigen::Lower>().rankUpdate(Xd.transpose());
            grams_.push_back(G.selfadjointView<Eigen::Lower>());
        }
    }

    std::size_t n_traj() const noexcept { return grams_.size(); }

    /// Covariance over the listed trajectories (repeats allowed), centred on
    /// their pooled mean, normalized by (samples - 1).
    Eigen::MatrixXd covariance(std::span<const std::size_t> which) const {
        const double n = static_cast<double>(which.size()) * steps_;
        if (n < 2) throw DomainError("covariance: need at least two samples");
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n_rec_, n_rec_);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(n_rec_);
        for (auto k : which) {
            G += grams_[k];
            s += sums_[k];
        }
        const Eigen::VectorXd mu = s / n;
        return (G - n * mu * mu.transpose()) / (n - 1.0);
    }

private:
    Eigen::Index n_rec_;
    std::size_t steps_;
    std::vector<Eigen::VectorXd> sums_;
    std::vector<Eigen::MatrixXd> grams_;
};

/// Eigenvalues of the sample covariance over all retained (traj, t) samples.
inline std::vector<double> covariance_spectrum(const Recording& rec) {
    if (rec.samples() < 2) throw DomainError("covariance_spectrum: degenerate recording (fewer than two samples)");
    const TrajectoryMoments mom(rec);
    std::vector<std::size_t> all(mom.n_traj());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    return sorted_eigenvalues(mom.covariance(all));
}

/// Ranks 1..m used for fitting: stops before the first eigenvalue below
/// 1e-12 of the leading one.
inline std::size_t spectrum_fit_range(std::span<const double> eig) {
    if (eig.empty() || !(eig[0] > 0.0)) return 0;
    std::size_t m = 0;
    while (m < eig.size() && eig[m] >= 1e-12 * eig[0]) ++m;
    return m;
}

struct SpectrumFit {
    std::vector<SpectrumModel> models;  ///< one per condition
    double rss = 0.0;                   ///< log-space
    std::vector<std::size_t> fit_ranks;
    bool shared_cutoff = false;
};

/// Truncated power-law fit in log space. With share_cutoff one (i_c, nu) is
/// fitted jointly across conditions; (sigma_f2, beta) are per condition.
inline SpectrumFit fit_spectrum(const std::vector<std::vector<double>>& eig_sets, bool share_cutoff = true,
                                std::size_t min_points = 8) {
    if (eig_sets.empty()) throw DomainError("fit_spectrum: no conditions");
    if (!share_cutoff && eig_sets.size() > 1) {
        SpectrumFit out;
        for (const auto& e : eig_sets) {
            auto one = fit_spectrum({e}, true, min_points);
            out.models.push_back(one.models[0]);
            out.fit_ranks.push_back(one.fit_ranks[0]);
            out.rss += one.rss;
        }
        return out;
    }
    const std::size_t C = eig_sets.size();
    std::vector<std::size_t> m(C);
    std::size_t total = 0, max_m = 0;
    for (std::size_t c = 0; c < C; ++c) {
        m[c] = spectrum_fit_range(eig_sets[c]);
        if (m[c] < min_points)
            throw DomainError("fit_spectrum: condition " + std::to_string(c) + " has " + std::to_string(m[c]) +
                              " usable eigenvalues, need " + std::to_string(min_points));
        total += m[c];
        max_m = std::max(max_m, m[c]);
    }
    // q = [log sigma2_c, beta_c]_c, log i_c, log nu
    auto residual_fn = [&](const Eigen::VectorXd& q) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(total));
        const double ic = std::exp(q[static_cast<Eigen::Index>(2 * C)]), nu = std::exp(q[static_cast<Eigen::Index>(2 * C + 1)]);
        Eigen::Index k = 0;
        for (std::size_t c = 0; c < C; ++c) {
            const double ls = q[static_cast<Eigen::Index>(2 * c)], b = q[static_cast<Eigen::Index>(2 * c + 1)];
            for (std::size_t i = 1; i <= m[c]; ++i) {
                const double di = static_cast<double>(i);
                r[k++] = ls - b * std::log(di) - std::pow(di / ic, nu) - std::log(eig_sets[c][i - 1]);
            }
        }
        return r;
    };
    Eigen::VectorXd base(static_cast<Eigen::Index>(2 * C + 2));
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t head = std::max<std::size_t>(3, m[c] / 10);
        std::vector<double> lx, ly;
        for (std::size_t i = 1; i <= head; ++i) {
            lx.push_back(std::log(static_cast<double>(i)));
            ly.push_back(std::log(eig_sets[c][i - 1]));
        }
        const auto lf = linear_regression(lx, ly);
        base[static_cast<Eigen::Index>(2 * c)] = lf.intercept;
        base[static_cast<Eigen::Index>(2 * c + 1)] = -lf.slope;
    }
    LeastSquaresResult best;
    for (double icf : {0.25, 0.5, 1.0, 2.0})
        for (double nu : {0.5, 1.0, 2.0}) {
            Eigen::VectorXd q = base;
            q[static_cast<Eigen::Index>(2 * C)] = std::log(icf * static_cast<double>(max_m));
            q[static_cast<Eigen::Index>(2 * C + 1)] = std::log(nu);
            auto r = levenberg_marquardt(residual_fn, q);
            if (r.residuals.allFinite() && r.rss < best.rss) best = std::move(r);
        }
    if (!std::isfinite(best.rss)) throw FitFailure("fit_spectrum: no start converged to finite residuals");
    SpectrumFit out;
    out.shared_cutoff = C > 1;
    out.rss = best.rss;
    out.fit_ranks = m;
    const double ic = std::exp(best.x[static_cast<Eigen::Index>(2 * C)]), nu = std::exp(best.x[static_cast<Eigen::Index>(2 * C + 1)]);
    for (std::size_t c = 0; c < C; ++c)
        out.models.push_back({std::exp(best.x[static_cast<Eigen::Index>(2 * c)]), best.x[static_cast<Eigen::Index>(2 * c + 1)], ic, nu});
    return out;
}

struct BootstrapResult {
    std::vector<std::vector<double>> beta;  ///< [condition][resample]
    std::vector<double> median;
    std::vector<double> q05, q95;
};

namespace detail {

inline double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace detail

/// Resamples trajectories with replacement (independently per condition)
/// and refits all conditions jointly with a shared cutoff.
inline BootstrapResult bootstrap_betas(std::span<const Recording> recs, int n_boot, std::uint64_t seed,
                                       bool share_cutoff = true) {
    if (recs.empty()) throw DomainError("bootstrap: no recordings");
    std::vector<TrajectoryMoments> moms;
    for (const auto& r : recs) {
        if (r.n_traj < 2) throw DomainError("bootstrap: need at least two trajectories per recording");
        moms.emplace_back(r);
    }
    Rng rng = SeedSplitter(seed).stream("bootstrap");
    BootstrapResult out;
    out.beta.resize(recs.size());
    for (int b = 0; b < n_boot; ++b) {
        std::vector<std::vector<double>> eigs;
        for (const auto& mom : moms) {
            std::vector<std::size_t> pick(mom.n_traj());
            for (auto& p : pick) p = static_cast<std::size_t>(rng.below(mom.n_traj()));
            eigs.push_back(sorted_eigenvalues(mom.covariance(pick)));
        }
        const auto fit = fit_spectrum(eigs, share_cutoff);
        for (std::size_t c = 0; c < recs.size(); ++c) out.beta[c].push_back(fit.models[c].beta);
    }
    for (const auto& v : out.beta) {
        out.median.push_back(detail::quantile(v, 0.5));
        out.q05.push_back(detail::quantile(v, 0.05));
        out.q95.push_back(detail::quantile(v, 0.95));
    }
    return out;
}

inline BootstrapResult bootstrap_beta(const Recording& rec, int n_boot = 50, std::uint64_t seed = 0) {
    return bootstrap_betas(std::span<const Recording>(&rec, 1), n_boot, seed);
}

}  // namespace elmnet::fitting
