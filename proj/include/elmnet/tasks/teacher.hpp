#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/layer.hpp"
#include "elmnet/neuron.hpp"
#include "elmnet/rng.hpp"
#include "elmnet/training/optim.hpp"

namespace elmnet::tasks {

/// Reference floors for reducible error on the three benchmark shapes.
struct ReferenceFloors {
    double bpc = 0.97;
    double spike_error = 0.116;
    double mae = 0.319;
};

/// A frozen single ELM neuron standing in for a biophysical recording: its
/// linear-no-filter output (memory readout plus bias) is the regression target.
struct TeacherSpec {
    NeuronConfig neuron = [] {
        NeuronConfig n;
        n.d_m = 8;
        n.l_mlp = 1;
        n.d_mlp = 32;
        n.d_tree = 8;
        n.d_branch = 4;
        n.c = 2.0;
        n.tau_min = 1.0;
        n.tau_max = 50.0;
        n.output_mode = OutputMode::linear_no_filter;
        return n;
    }();
    double weight_gain = 1.5;  ///< init scale of the teacher MLP, > 1 for a more nonlinear target
    double input_rate = 0.1;   ///< Bernoulli spike probability per channel and step
    int steps = 200;
    int burn_in = 50;
    std::uint64_t seed = 0;

    int channels() const noexcept { return neuron.d_s(); }

    void validate() const {
        neuron.validate("teacher");
        if (neuron.output_mode != OutputMode::linear_no_filter)
            throw InvalidConfig("teacher must be linear-no-filter", "teacher.output_mode");
        if (!(input_rate >= 0.0 && input_rate <= 1.0)) throw InvalidConfig("must lie in [0, 1]", "teacher.input_rate");
        if (steps < 1) throw InvalidConfig("must be >= 1", "teacher.steps");
        if (burn_in < 0 || burn_in >= steps) throw InvalidConfig("must lie in [0, steps)", "teacher.burn_in");
        if (!(weight_gain > 0.0)) throw InvalidConfig("must be > 0", "teacher.weight_gain");
    }
};

/// Channel j of a neuron with d_s synapses reads input j mod d_inp.
inline LayerWiring identity_wiring(int d_s, int d_inp) {
    LayerWiring w;
    w.n_rec = 1;
    w.d_inp = d_inp;
    w.d_s = d_s;
    w.indices.resize(static_cast<std::size_t>(d_s));
    for (int j = 0; j < d_s; ++j) w.indices[static_cast<std::size_t>(j)] = j % d_inp;
    return w;
}

inline std::vector<double> teacher_params(const TeacherSpec& spec) {
    const NeuronLayout lay(spec.neuron);
    std::vector<double> p(lay.total);
    Rng rng = SeedSplitter(spec.seed).stream("teacher.init");
    init_neuron_block(lay, rng, p);
    for (std::size_t k = lay.maps.front().w; k < lay.wr; ++k) p[k] *= spec.weight_gain;
    return p;
}

/// Runs a single-neuron layer over one input trace and returns its outputs.
inline std::vector<double> run_single_neuron(const Layer& layer, std::span<const double> params,
                                             std::span<const double> inputs, int steps, LayerTape* tape = nullptr) {
    auto state = layer.zero_state();
    const int d = layer.d_inp();
    std::vector<double> out(static_cast<std::size_t>(steps));
    if (tape) tape->resize(steps, 1, layer.layout());
    for (int t = 0; t < steps; ++t) {
        double a = 0.0;
        layer.step(params, state, inputs.subspan(static_cast<std::size_t>(t) * d, static_cast<std::size_t>(d)),
                   std::span<double>(&a, 1), tape, t);
        out[static_cast<std::size_t>(t)] = a;
    }
    return out;
}

struct TeacherData {
    int steps = 0;
    int channels = 0;
    int burn_in = 0;
    std::vector<std::vector<double>> inputs;   ///< per sample, steps x channels of {0,1}
    std::vector<std::vector<double>> targets;  ///< per sample, steps
    std::vector<std::size_t> student_k_e;

    double target_variance() const {
        double s = 0.0, s2 = 0.0;
        std::size_t n = 0;
        for (const auto& y : targets)
            for (std::size_t t = static_cast<std::size_t>(burn_in); t < y.size(); ++t) {
                s += y[t];
                s2 += y[t] * y[t];
                ++n;
            }
        if (n == 0) return 0.0;
        const double m = s / static_cast<double>(n);
        return s2 / static_cast<double>(n) - m * m;
    }
};

/// Shared Bernoulli input traces and teacher targets for a set of student
/// configurations. Sample stream `split` is independent of the others.
inline TeacherData gen_teacher_student(const TeacherSpec& spec, int n_samples, std::span<const NeuronConfig> students,
                                       std::uint64_t split = 0) {
    spec.validate();
    TeacherData data;
    data.steps = spec.steps;
    data.channels = spec.channels();
    data.burn_in = spec.burn_in;
    for (const auto& s : students) {
        s.validate("student");
        data.student_k_e.push_back(count_params(s).k_e);
    }
    const Layer teacher(spec.neuron, 1, identity_wiring(spec.neuron.d_s(), data.channels));
    const auto tp = teacher_params(spec);
    Rng rng = SeedSplitter(spec.seed).stream("teacher.samples", split);
    for (int n = 0; n < n_samples; ++n) {
        std::vector<double> x(static_cast<std::size_t>(spec.steps) * data.channels);
        for (auto& v : x) v = rng.uniform() < spec.input_rate ? 1.0 : 0.0;
        data.targets.push_back(run_single_neuron(teacher, tp, x, spec.steps));
        data.inputs.push_back(std::move(x));
    }
    return data;
}

struct StudentTrainConfig {
    int steps = 300;
    int batch = 8;
    double lr = 3e-3;
    double clip_norm = 1.0;
    bool shuffle_targets = false;  ///< permutation control: pair inputs with another sample's target
    std::uint64_t seed = 0;
};

struct StudentFit {
    std::vector<double> params;
    double mse = 0.0;   ///< held-out, after burn-in
    double mae = 0.0;
    double train_mse = 0.0;
};

/// Mean squared and absolute error of a student on `data` after burn-in.
inline std::pair<double, double> student_error(const NeuronConfig& cfg, std::span<const double> params,
                                               const TeacherData& data) {
    const Layer layer(cfg, 1, identity_wiring(cfg.d_s(), data.channels));
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < data.inputs.size(); ++k) {
        const auto y = run_single_neuron(layer, params, data.inputs[k], data.steps);
        for (int t = data.burn_in; t < data.steps; ++t) {
            const double e = y[static_cast<std::size_t>(t)] - data.targets[k][static_cast<std::size_t>(t)];
            se += e * e;
            ae += std::abs(e);
            ++n;
        }
    }
    if (n == 0) throw DomainError("student_error: no scored steps");
    return {se / static_cast<double>(n), ae / static_cast<double>(n)};
}

/// Trains one student neuron by Adam on MSE (full BPTT per sample).
inline StudentFit fit_student(const NeuronConfig& cfg, const TeacherData& train, const TeacherData& test,
                              const StudentTrainConfig& tc) {
    cfg.validate("student");
    if (cfg.output_mode != OutputMode::linear_no_filter)
        throw InvalidConfig("student must be linear-no-filter", "student.output_mode");
    if (train.inputs.empty()) throw DomainError("fit_student: empty training set");
    const Layer layer(cfg, 1, identity_wiring(cfg.d_s(), train.channels));
    const SeedSplitter seeds(tc.seed);
    Rng init_rng = seeds.stream("init");
    StudentFit fit;
    fit.params.assign(layer.n_params(), 0.0);
    layer.init_params(fit.params, init_rng);

    std::vector<std::size_t> target_of(train.inputs.size());
    for (std::size_t k = 0; k < target_of.size(); ++k) target_of[k] = k;
    Rng data_rng = seeds.stream("data");
    if (tc.shuffle_targets) data_rng.shuffle(target_of.begin(), target_of.end());

    training::OptimConfig oc;
    oc.lr = tc.lr;
    oc.clip_norm = tc.clip_norm;
    oc.total_steps = tc.steps;
    oc.warmup_steps = std::min(20, tc.steps / 10);
    training::Optimizer opt(oc, fit.params.size());
    std::vector<double> grads(fit.params.size()), ga(static_cast<std::size_t>(train.steps));
    const int scored = train.steps - train.burn_in;
    LayerTape tape;
    for (int step = 0; step < tc.steps; ++step) {
        std::fill(grads.begin(), grads.end(), 0.0);
        double loss = 0.0;
        for (int b = 0; b < tc.batch; ++b) {
            const std::size_t k = data_rng.below(train.inputs.size());
            const auto& y_true = train.targets[target_of[k]];
            const auto y = run_single_neuron(layer, fit.params, train.inputs[k], train.steps, &tape);
            std::fill(ga.begin(), ga.end(), 0.0);
            for (int t = train.burn_in; t < train.steps; ++t) {
                const double e = y[static_cast<std::size_t>(t)] - y_true[static_cast<std::size_t>(t)];
                loss += e * e;
                ga[static_cast<std::size_t>(t)] = 2.0 * e / (static_cast<double>(scored) * tc.batch);
            }
            layer.backward(fit.params, tape, ga, {}, grads, {});
        }
        if (!std::isfinite(loss)) throw NumericFault("fit_student: non-finite loss at step " + std::to_string(step));
        opt.step(fit.params, grads, step);
        fit.train_mse = loss / (static_cast<double>(scored) * tc.batch);
    }
    const auto [mse, mae] = student_error(cfg, fit.params, test);
    fit.mse = mse;
    fit.mae = mae;
    return fit;
}

}  // namespace elmnet::tasks
