#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/network.hpp"
#include "elmnet/rng.hpp"

namespace elmnet::tasks {

/// Synthetic stand-in for the two-spoken-digit adding task: each digit class
/// owns a spatio-temporal firing-rate map made of a few sweeping "formant"
/// bands; a sample concatenates two digits and its label is their sum.
struct SpikeAddingSpec {
    int channels = 32;
    int steps_per_digit = 25;
    int n_digit_classes = 5;
    int jitter = 2;           ///< max uniform time shift per digit, in steps
    int formants = 3;         ///< bands per class profile
    double base_rate = 0.02;  ///< background firing probability per step
    double peak_rate = 0.6;   ///< firing probability at a band centre
    double band_width = 1.5;  ///< Gaussian band width in channels
    std::uint64_t seed = 0;

    int n_classes() const noexcept { return 2 * n_digit_classes - 1; }
    int steps() const noexcept { return 2 * steps_per_digit; }
    double chance() const noexcept { return 1.0 / n_classes(); }

    void validate() const {
        if (channels < 1) throw InvalidConfig("must be >= 1", "task.channels");
        if (steps_per_digit < 1) throw InvalidConfig("must be >= 1", "task.steps_per_digit");
        if (n_digit_classes < 1) throw InvalidConfig("must be >= 1", "task.n_digit_classes");
        if (jitter < 0) throw InvalidConfig("must be >= 0", "task.jitter");
        if (!(base_rate >= 0.0 && peak_rate <= 1.0 && base_rate <= peak_rate)) throw InvalidConfig("need 0 <= base <= peak <= 1", "task.peak_rate");
    }
};

struct SpikeSample {
    InputSequence pattern;  ///< 2*steps_per_digit x channels, entries in {0,1}
    int digit1 = 0;
    int digit2 = 0;
    int label = 0;
};

/// Rate map of one class, steps_per_digit x channels.
inline std::vector<double> class_rate_profile(const SpikeAddingSpec& spec, int digit) {
    Rng rng = SeedSplitter(spec.seed).stream("task.profile", static_cast<std::uint64_t>(digit));
    const int T = spec.steps_per_digit, C = spec.channels;
    std::vector<double> rate(static_cast<std::size_t>(T) * C, spec.base_rate);
    for (int f = 0; f < spec.formants; ++f) {
        const double start = rng.uniform(0.0, C - 1.0);
        const double end = rng.uniform(0.0, C - 1.0);
        const double onset = rng.uniform(0.0, 0.4) * T;
        const double offset = onset + rng.uniform(0.4, 0.6) * T;
        for (int t = 0; t < T; ++t) {
            if (t < onset || t > offset) continue;
            const double frac = (t - onset) / std::max(1.0, offset - onset);
            const double centre = start + (end - start) * frac;
            for (int ch = 0; ch < C; ++ch) {
                const double d = (ch - centre) / spec.band_width;
                const double r = spec.base_rate + (spec.peak_rate - spec.base_rate) * std::exp(-0.5 * d * d);
                auto& cell = rate[static_cast<std::size_t>(t) * C + ch];
                cell = std::max(cell, r);
            }
        }
    }
    return rate;
}

/// Deterministic in (spec, n_samples, split); `split` selects an independent
/// sample stream (e.g. 0 train, 1 valid, 2 test) over the same class profiles.
inline std::vector<SpikeSample> gen_spike_adding(const SpikeAddingSpec& spec, int n_samples, std::uint64_t split = 0) {
    spec.validate();
    std::vector<std::vector<double>> profiles;
    for (int d = 0; d < spec.n_digit_classes; ++d) profiles.push_back(class_rate_profile(spec, d));
    Rng rng = SeedSplitter(spec.seed).stream("task.samples", split);
    const int Td = spec.steps_per_digit, C = spec.channels;
    std::vector<SpikeSample> out(static_cast<std::size_t>(std::max(0, n_samples)));
    for (auto& s : out) {
        s.digit1 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_digit_classes)));
        s.digit2 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.n_digit_classes)));
        s.label = s.digit1 + s.digit2;
        s.pattern.steps = 2 * Td;
        s.pattern.width = C;
        s.pattern.values.assign(static_cast<std::size_t>(2 * Td) * C, 0.0);
        for (int seg = 0; seg < 2; ++seg) {
            const auto& prof = profiles[static_cast<std::size_t>(seg == 0 ? s.digit1 : s.digit2)];
            const int shift = spec.jitter > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(2 * spec.jitter + 1))) - spec.jitter : 0;
            for (int t = 0; t < Td; ++t) {
                const int src = std::clamp(t + shift, 0, Td - 1);
                for (int ch = 0; ch < C; ++ch) {
                    const double p = prof[static_cast<std::size_t>(src) * C + ch];
                    s.pattern.values[static_cast<std::size_t>(seg * Td + t) * C + ch] = rng.uniform() < p ? 1.0 : 0.0;
                }
            }
        }
    }
    return out;
}

}  // namespace elmnet::tasks
