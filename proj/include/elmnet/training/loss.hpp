#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "elmnet/error.hpp"

namespace elmnet::training {

struct LossConfig {
    double label_smoothing = 0.0;
    double mlp_l2 = 0.0;  ///< L2 on the time-averaged |pre-tanh MLP output|
    double act_l1 = 0.0;  ///< L1 on mean hidden activity
    /// Penalties sum over neurons instead of averaging (coefficients are
    /// per-neuron strengths).
    bool per_neuron_scaling = false;

    void validate() const {
        if (!(label_smoothing >= 0.0 && label_smoothing < 1.0)) throw InvalidConfig("must lie in [0, 1)", "label_smoothing");
        if (!(mlp_l2 >= 0.0)) throw InvalidConfig("must be >= 0", "mlp_l2");
        if (!(act_l1 >= 0.0)) throw InvalidConfig("must be >= 0", "act_l1");
    }
};

inline double bpc_from_loss(double nats) { return nats / std::numbers::ln2; }

/// Smoothed cross-entropy of one logit row against class `target`; writes
/// dL/dlogits into `grad` (if non-empty) scaled by `weight`.
inline double xent_row(std::span<const double> logits, int target, double smoothing, std::span<double> grad = {},
                       double weight = 1.0) {
    const int V = static_cast<int>(logits.size());
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    const double off = smoothing / V;
    double loss = 0.0;
    for (int k = 0; k < V; ++k) {
        const double q = (k == target ? 1.0 - smoothing : 0.0) + off;
        const double logp = logits[static_cast<std::size_t>(k)] - lse;
        if (q > 0.0) loss -= q * logp;
        if (!grad.empty()) grad[static_cast<std::size_t>(k)] += weight * (std::exp(logp) - q);
    }
    return loss;
}

/// Mean smoothed cross-entropy over rows with target >= 0. `logits` is
/// rows x n_classes.
inline double loss_xent(std::span<const double> logits, std::span<const int> targets, int n_classes,
                        double label_smoothing = 0.0) {
    if (n_classes < 1 || logits.size() != targets.size() * static_cast<std::size_t>(n_classes))
        throw ShapeError("loss_xent: logits/targets shape mismatch");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        if (targets[t] < 0) continue;
        if (targets[t] >= n_classes) throw ShapeError("loss_xent: target out of range");
        total += xent_row(logits.subspan(t * n_classes, static_cast<std::size_t>(n_classes)), targets[t], label_smoothing);
        ++count;
    }
    if (count == 0) throw DomainError("loss_xent: empty batch");
    return total / static_cast<double>(count);
}

/// Per-neuron time-and-unit mean of |o|, from o recorded as steps x n x d_m.
inline std::vector<double> mean_abs_mlp_output(std::span<const double> mlp_out, int steps, int n, int d_m) {
    std::vector<double> m(static_cast<std::size_t>(n), 0.0);
    if (steps == 0) return m;
    for (int t = 0; t < steps; ++t)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d_m; ++j)
                m[static_cast<std::size_t>(i)] += std::abs(mlp_out[(static_cast<std::size_t>(t) * n + i) * d_m + j]);
    for (auto& v : m) v /= static_cast<double>(steps) * d_m;
    return m;
}

/// mlp_l2 * mean_i (mean_{t,j} |o_{t,i,j}|)^2 + act_l1 * mean_{t,i} |a_{t,i}|.
/// With per_neuron_scaling the neuron means become sums.
inline double regularization(std::span<const double> mlp_out, std::span<const double> activity, int steps, int n,
                             int d_m, const LossConfig& cfg) {
    if (steps == 0 || n == 0) return 0.0;
    const double neuron_factor = cfg.per_neuron_scaling ? static_cast<double>(n) : 1.0;
    double term = 0.0;
    if (cfg.mlp_l2 > 0.0 && !mlp_out.empty()) {
        const auto m = mean_abs_mlp_output(mlp_out, steps, n, d_m);
        double s = 0.0;
        for (double v : m) s += v * v;
        term += cfg.mlp_l2 * neuron_factor * s / n;
    }
    if (cfg.act_l1 > 0.0 && !activity.empty()) {
        double s = 0.0;
        for (double a : activity) s += std::abs(a);
        term += cfg.act_l1 * neuron_factor * s / (static_cast<double>(steps) * n);
    }
    return term;
}

}  // namespace elmnet::training
