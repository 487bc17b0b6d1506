#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>

namespace elmnet::fitting {

using Residuals = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct LeastSquaresOptions {
    int max_iter = 500;
    double ftol = 1e-15;  ///< relative RSS change for convergence
    double xtol = 1e-12;  ///< relative step size for convergence
    double lambda0 = 1e-3;
};

struct LeastSquaresResult {
    Eigen::VectorXd x;
    Eigen::VectorXd residuals;
    double rss = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
};

inline bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

/// Central-difference Jacobian of `f` at x.
inline Eigen::MatrixXd numeric_jacobian(const Residuals& f, const Eigen::VectorXd& x, const Eigen::VectorXd& r0) {
    Eigen::MatrixXd J(r0.size(), x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[k]));
        xp[k] = x[k] + h;
        const Eigen::VectorXd up = f(xp);
        xp[k] = x[k] - h;
        const Eigen::VectorXd dn = f(xp);
        xp[k] = x[k];
        if (up.allFinite() && dn.allFinite())
            J.col(k) = (up - dn) / (2.0 * h);
        else if (up.allFinite())
            J.col(k) = (up - r0) / h;
        else if (dn.allFinite())
            J.col(k) = (r0 - dn) / h;
        else
            J.col(k).setZero();
    }
    return J;
}

/// Levenberg-Marquardt with Marquardt diagonal scaling.
inline LeastSquaresResult levenberg_marquardt(const Residuals& f, Eigen::VectorXd x, const LeastSquaresOptions& opt = {}) {
    LeastSquaresResult res;
    Eigen::VectorXd r = f(x);
    if (!r.allFinite()) {
        res.x = x;
        res.residuals = r;
        return res;
    }
    double rss = r.squaredNorm();
    double lambda = opt.lambda0;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        const Eigen::MatrixXd J = numeric_jacobian(f, x, r);
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < 1e-300) {
            res.converged = true;
            break;
        }
        bool improved = false;
        for (int tries = 0; tries < 30; ++tries) {
            Eigen::MatrixXd A = JtJ;
            for (Eigen::Index k = 0; k < A.rows(); ++k) A(k, k) += lambda * std::max(JtJ(k, k), 1e-12);
            const Eigen::VectorXd step = A.ldlt().solve(-g);
            if (!step.allFinite()) {
                lambda *= 10.0;
                continue;
            }
            const Eigen::VectorXd xn = x + step;
            const Eigen::VectorXd rn = f(xn);
            const double rss_n = rn.allFinite() ? rn.squaredNorm() : std::numeric_limits<double>::infinity();
            if (rss_n <= rss) {
                const double drop = rss - rss_n;
                const double step_rel = step.norm() / (x.norm() + 1e-12);
                x = xn;
                r = rn;
                rss = rss_n;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (drop <= opt.ftol * std::max(rss, 1e-300) || step_rel <= opt.xtol) res.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!improved) {
            res.converged = true;  // no descent direction left at this precision
            break;
        }
        if (res.converged) break;
    }
    res.x = x;
    res.residuals = r;
    res.rss = rss;
    res.iterations = it;
    return res;
}

/// Ordinary least squares slope/intercept of y on x.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LinearFit linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    return f;
}

}  // namespace elmnet::fitting
