#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::training {

enum class Algorithm { adam, adamax };

inline Algorithm parse_algorithm(std::string_view s) {
    if (s == "adam") return Algorithm::adam;
    if (s == "adamax") return Algorithm::adamax;
    throw InvalidConfig("unknown optimizer '" + std::string(s) + "'", "optimizer");
}

inline std::string_view to_string(Algorithm a) { return a == Algorithm::adam ? "adam" : "adamax"; }

struct OptimConfig {
    Algorithm algorithm = Algorithm::adam;
    double lr = 5e-4;
    int warmup_steps = 0;
    int total_steps = 1000;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw InvalidConfig("must be > 0", "lr");
        if (!(clip_norm > 0.0)) throw InvalidConfig("must be > 0", "clip_norm");
        if (warmup_steps < 0) throw InvalidConfig("must be >= 0", "warmup_steps");
        if (total_steps < 0) throw InvalidConfig("must be >= 0", "total_steps");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw InvalidConfig("must lie in [0, 1)", "beta1");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw InvalidConfig("must lie in [0, 1)", "beta2");
    }
};

/// Linear warmup from 0 to 1 over warmup_steps, then cosine decay to 0 at total_steps.
inline double schedule_factor(int step, int warmup_steps, int total_steps) {
    if (warmup_steps > 0 && step < warmup_steps) return static_cast<double>(step) / warmup_steps;
    const int span = std::max(1, total_steps - warmup_steps);
    const double progress = std::clamp(static_cast<double>(step - warmup_steps) / span, 0.0, 1.0);
    return 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

inline double global_norm(std::span<const double> g) {
    double s = 0.0;
    for (double x : g) s += x * x;
    return std::sqrt(s);
}

/// Rescales `g` in place so its global norm is at most max_norm; returns the
/// norm before clipping.
inline double clip_global_norm(std::span<double> g, double max_norm) {
    const double n = global_norm(g);
    if (n > max_norm && n > 0.0) {
        const double scale = max_norm / n;
        for (double& x : g) x *= scale;
    }
    return n;
}

/// Adam / Adamax with global-norm clipping and the warmup+cosine schedule.
class Optimizer {
public:
    Optimizer() = default;
    Optimizer(OptimConfig cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) { cfg_.validate(); }

    const OptimConfig& config() const noexcept { return cfg_; }
    long updates() const noexcept { return t_; }

    double lr_at(int step) const { return cfg_.lr * schedule_factor(step, cfg_.warmup_steps, cfg_.total_steps); }

    /// Clips `grads` in place, updates `params`; returns the pre-clip norm.
    double step(std::span<double> params, std::span<double> grads, int step_index) {
        if (params.size() != m_.size() || grads.size() != m_.size()) throw ShapeError("optimizer: size mismatch");
        const double norm = clip_global_norm(grads, cfg_.clip_norm);
        ++t_;
        const double lr = lr_at(step_index);
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        if (cfg_.algorithm == Algorithm::adam) {
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = grads[i];
                m_[i] = b1 * m_[i] + (1.0 - b1) * g;
                v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
                const double mh = m_[i] / bc1, vh = v_[i] / bc2;
                params[i] -= lr * mh / (std::sqrt(vh) + cfg_.eps);
            }
        } else {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double g = grads[i];
                m_[i] = b1 * m_[i] + (1.0 - b1) * g;
                v_[i] = std::max(b2 * v_[i], std::abs(g));
                params[i] -= (lr / bc1) * m_[i] / (v_[i] + cfg_.eps);
            }
        }
        return norm;
    }

    std::span<const double> first_moment() const noexcept { return m_; }
    std::span<const double> second_moment() const noexcept { return v_; }

private:
    OptimConfig cfg_;
    std::vector<double> m_, v_;
    long t_ = 0;
};

/// Hidden-state carry: reset probability decays from p_start to p_end over
/// decay_steps along a cosine, then stays at p_end.
struct CarrySchedule {
    double p_start = 1.0;
    double p_end = 0.01;
    int decay_steps = 40000;

    void validate() const {
        if (!(p_start >= p_end && p_end >= 0.0 && p_start <= 1.0)) throw InvalidConfig("need 1 >= p_start >= p_end >= 0", "carry.p_start");
        if (decay_steps < 0) throw InvalidConfig("must be >= 0", "carry.decay_steps");
    }

    double reset_probability(int step) const {
        if (decay_steps <= 0 || step >= decay_steps) return p_end;
        const double progress = static_cast<double>(step) / decay_steps;
        return p_end + (p_start - p_end) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
};

inline bool carry_policy(int step, const CarrySchedule& sched, Rng& rng) {
    return rng.uniform() < sched.reset_probability(step);
}

}  // namespace elmnet::training
