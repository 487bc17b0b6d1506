#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/network.hpp"
#include "elmnet/training/loss.hpp"

namespace elmnet::training {

/// One sequence with per-step class targets (-1 = no target at that step).
struct Example {
    InputSequence input;
    std::vector<int> targets;
};

struct BatchOptions {
    LossConfig loss;
    DropoutSpec dropout;
    std::uint64_t dropout_seed = 0;
    double surrogate_scale = 100.0;
    int jobs = 1;
    bool want_grads = true;
};

struct BatchResult {
    double loss = 0.0;  ///< xent + reg
    double xent = 0.0;
    double reg = 0.0;
    std::size_t n_targets = 0;
    std::size_t correct = 0;
    double activity_mean = 0.0;
    std::vector<double> grads;
    std::vector<NetworkState> final_states;
};

namespace detail {

struct ElementResult {
    double xent_sum = 0.0;
    double reg = 0.0;
    std::size_t correct = 0;
    double activity_sum = 0.0;
    std::vector<double> grads;
    NetworkState state;
};

inline ElementResult run_element(const Network& net, std::span<const double> params, const Example& ex,
                                 NetworkState state, const BatchOptions& opt, double target_weight, double batch_weight,
                                 std::uint64_t drop_seed) {
    const auto& cfg = net.config();
    const int T = ex.input.steps, N = cfg.n_rec, R = cfg.n_readout, D = cfg.d_out;
    if (ex.targets.size() != static_cast<std::size_t>(T)) throw ShapeError("targets length != sequence length");
    ElementResult res;
    NetworkTape tape;
    Rng drop_rng(drop_seed);
    ForwardOptions fo;
    fo.tape = &tape;
    if (opt.dropout.active()) {
        fo.dropout = &opt.dropout;
        fo.dropout_rng = &drop_rng;
    }
    const auto logits = net.forward(params, ex.input, state, fo);
    res.state = std::move(state);

    std::vector<double> dlogits(static_cast<std::size_t>(T) * D, 0.0);
    for (int t = 0; t < T; ++t) {
        const int tgt = ex.targets[static_cast<std::size_t>(t)];
        if (tgt < 0) continue;
        if (tgt >= D) throw ShapeError("target class out of range");
        const auto row = std::span<const double>(logits).subspan(static_cast<std::size_t>(t) * D, static_cast<std::size_t>(D));
        res.xent_sum += xent_row(row, tgt, opt.loss.label_smoothing,
                                 std::span<double>(dlogits).subspan(static_cast<std::size_t>(t) * D, static_cast<std::size_t>(D)),
                                 target_weight);
        int best = 0;
        for (int d = 1; d < D; ++d)
            if (row[static_cast<std::size_t>(d)] > row[static_cast<std::size_t>(best)]) best = d;
        if (best == tgt) ++res.correct;
    }

    const auto& hl = net.hidden().layout();
    const int d_m = hl.d_m;
    for (double a : tape.hidden.a) res.activity_sum += a;

    // regularizers on the hidden layer
    const LossConfig& lc = opt.loss;
    const double nf = lc.per_neuron_scaling ? static_cast<double>(N) : 1.0;
    std::vector<double> mlp_coef;
    std::vector<double> ga_hidden(static_cast<std::size_t>(T) * N, 0.0);
    if (T > 0 && (lc.mlp_l2 > 0.0 || lc.act_l1 > 0.0)) {
        std::vector<double> o(static_cast<std::size_t>(T) * N * d_m);
        for (std::size_t s = 0; s < static_cast<std::size_t>(T) * N; ++s)
            std::copy_n(tape.hidden.slots.data() + s * hl.tape_size + hl.t_o, d_m, o.data() + s * d_m);
        res.reg = batch_weight * regularization(o, tape.hidden.a, T, N, d_m, lc);
        if (lc.mlp_l2 > 0.0) {
            const auto mean_abs = mean_abs_mlp_output(o, T, N, d_m);
            mlp_coef.resize(static_cast<std::size_t>(N));
            for (int i = 0; i < N; ++i)
                mlp_coef[static_cast<std::size_t>(i)] =
                    batch_weight * lc.mlp_l2 * nf * 2.0 * mean_abs[static_cast<std::size_t>(i)] / (static_cast<double>(N) * T * d_m);
        }
        if (lc.act_l1 > 0.0) {
            const double k = batch_weight * lc.act_l1 * nf / (static_cast<double>(T) * N);
            for (std::size_t s = 0; s < ga_hidden.size(); ++s) {
                const double a = tape.hidden.a[s];
                ga_hidden[s] = a > 0.0 ? k : (a < 0.0 ? -k : 0.0);
            }
        }
    }
    if (!opt.want_grads) return res;

    res.grads.assign(net.n_params(), 0.0);
    std::span<double> g(res.grads);
    const double* W = params.data() + net.out_weight_offset();
    double* gW = g.data() + net.out_weight_offset();
    double* gb = g.data() + net.out_bias_offset();
    std::vector<double> ga_read(static_cast<std::size_t>(T) * R, 0.0);
    for (int t = 0; t < T; ++t) {
        const double* dl = dlogits.data() + static_cast<std::size_t>(t) * D;
        const double* ar = tape.readout.a.data() + static_cast<std::size_t>(t) * R;
        double* gar = ga_read.data() + static_cast<std::size_t>(t) * R;
        for (int d = 0; d < D; ++d) {
            const double gd = dl[d];
            if (gd == 0.0) continue;
            gb[d] += gd;
            const double* row = W + static_cast<std::size_t>(d) * R;
            double* grow = gW + static_cast<std::size_t>(d) * R;
            for (int j = 0; j < R; ++j) {
                grow[j] += gd * ar[j];
                gar[j] += gd * row[j];
            }
        }
    }
    std::vector<double> gu_read(static_cast<std::size_t>(T) * N, 0.0);
    net.readout().backward(params, tape.readout, ga_read, {}, g, gu_read, opt.surrogate_scale);
    for (std::size_t s = 0; s < ga_hidden.size(); ++s) ga_hidden[s] += gu_read[s];
    net.hidden().backward(params, tape.hidden, ga_hidden, mlp_coef, g, {}, opt.surrogate_scale);
    return res;
}

}  // namespace detail

/// Loss and full-BPTT gradients over a batch. `initial` supplies carried
/// states (empty = zero states); gradients stop at the window boundary.
/// Cross-entropy is averaged over all targets of the batch, regularizers over
/// batch elements. Elements may run on `jobs` threads; the reduction runs in
/// element order so results do not depend on the thread count.
inline BatchResult bptt_grads(const Network& net, std::span<const double> params, std::span<const Example> batch,
                              std::span<const NetworkState> initial, const BatchOptions& opt) {
    opt.loss.validate();
    if (batch.empty()) throw DomainError("bptt_grads: empty batch");
    if (!initial.empty() && initial.size() != batch.size()) throw ShapeError("bptt_grads: one initial state per element");
    std::size_t n_targets = 0, n_steps = 0;
    for (const auto& ex : batch) {
        if (ex.input.steps < 1) throw DomainError("bptt_grads: sequence length must be >= 1");
        for (int t : ex.targets) n_targets += t >= 0 ? 1 : 0;
        n_steps += static_cast<std::size_t>(ex.input.steps);
    }
    const double target_weight = n_targets > 0 ? 1.0 / static_cast<double>(n_targets) : 0.0;
    const double batch_weight = 1.0 / static_cast<double>(batch.size());

    std::vector<detail::ElementResult> parts(batch.size());
    auto work = [&](std::size_t e) {
        NetworkState st = initial.empty() ? net.zero_state() : initial[e];
        parts[e] = detail::run_element(net, params, batch[e], std::move(st), opt, target_weight, batch_weight,
                                       splitmix64(opt.dropout_seed + e));
    };
    const int jobs = std::max(1, std::min<int>(opt.jobs, static_cast<int>(batch.size())));
    if (jobs == 1) {
        for (std::size_t e = 0; e < batch.size(); ++e) work(e);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
        for (int j = 0; j < jobs; ++j) {
            pool.emplace_back([&, j] {
                try {
                    for (std::size_t e = static_cast<std::size_t>(j); e < batch.size(); e += static_cast<std::size_t>(jobs)) work(e);
                } catch (...) {
                    errors[static_cast<std::size_t>(j)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& err : errors)
            if (err) std::rethrow_exception(err);
    }

    BatchResult res;
    res.n_targets = n_targets;
    double act = 0.0;
    if (opt.want_grads) res.grads.assign(net.n_params(), 0.0);
    for (auto& p : parts) {
        res.xent += p.xent_sum;
        res.reg += p.reg;
        res.correct += p.correct;
        act += p.activity_sum;
        if (opt.want_grads)
            for (std::size_t k = 0; k < res.grads.size(); ++k) res.grads[k] += p.grads[k];
        res.final_states.push_back(std::move(p.state));
    }
    res.xent *= target_weight;
    res.loss = res.xent + res.reg;
    res.activity_mean = act / (static_cast<double>(n_steps) * net.config().n_rec);
    if (opt.want_grads) {
        for (std::size_t k = 0; k < res.grads.size(); ++k)
            if (!std::isfinite(res.grads[k])) throw NumericFault("non-finite gradient at " + net.param_path(k));
    }
    return res;
}

/// Same objective as bptt_grads without the backward pass.
inline BatchResult evaluate_batch(const Network& net, std::span<const double> params, std::span<const Example> batch,
                                  std::span<const NetworkState> initial, BatchOptions opt) {
    opt.want_grads = false;
    return bptt_grads(net, params, batch, initial, opt);
}

}  // namespace elmnet::training
