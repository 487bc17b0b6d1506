#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/network.hpp"
#include "elmnet/rng.hpp"
#include "elmnet/tasks/byte_corpus.hpp"
#include "elmnet/tasks/spike_adding.hpp"
#include "elmnet/tasks/teacher.hpp"
#include "elmnet/training/bptt.hpp"
#include "elmnet/training/loss.hpp"
#include "elmnet/training/optim.hpp"

namespace elmnet::training {

enum class TaskKind { spike_adding, bytes };

inline TaskKind parse_task_kind(std::string_view s) {
    if (s == "spike_adding") return TaskKind::spike_adding;
    if (s == "bytes") return TaskKind::bytes;
    throw InvalidConfig("unknown task '" + std::string(s) + "' (expected spike_adding or bytes)", "task");
}

inline std::string_view to_string(TaskKind k) { return k == TaskKind::spike_adding ? "spike_adding" : "bytes"; }

struct TrainConfig {
    int steps = 1000;  ///< optimizer updates (turns x steps per turn)
    int batch = 16;
    int eval_every = 100;
    int log_every = 10;
    OptimConfig optim;
    LossConfig loss;
    DropoutSpec dropout;
    CarrySchedule carry;
    double surrogate_scale = 100.0;
    int jobs = 1;
    int n_train = 2000;
    int n_valid = 300;
    int n_test = 500;
    std::size_t valid_tokens = 20000;  ///< 0 evaluates the whole validation split
    std::size_t test_tokens = 0;       ///< 0 evaluates the whole test split
    std::optional<double> floor;       ///< reducible-error floor; task default when unset

    void validate() const {
        if (steps < 0) throw InvalidConfig("must be >= 0", "train.steps");
        if (batch < 1) throw InvalidConfig("must be >= 1", "train.batch");
        if (eval_every < 1) throw InvalidConfig("must be >= 1", "train.eval_every");
        if (log_every < 1) throw InvalidConfig("must be >= 1", "train.log_every");
        if (jobs < 1) throw InvalidConfig("must be >= 1", "jobs");
        if (n_train < 1 || n_valid < 1 || n_test < 1) throw InvalidConfig("sample counts must be >= 1", "train.n_train");
        if (!(surrogate_scale > 0.0)) throw InvalidConfig("must be > 0", "train.surrogate_scale");
        if (!(dropout.p_input >= 0.0 && dropout.p_input < 1.0)) throw InvalidConfig("must lie in [0, 1)", "dropout.input");
        if (!(dropout.p_recurrent >= 0.0 && dropout.p_recurrent < 1.0))
            throw InvalidConfig("must lie in [0, 1)", "dropout.recurrent");
        loss.validate();
        carry.validate();
        OptimConfig o = optim;
        o.total_steps = steps;
        o.validate();
    }
};

/// Data for one run: either spike-adding samples or a byte corpus.
struct TaskData {
    TaskKind kind = TaskKind::spike_adding;
    tasks::SpikeAddingSpec spike;
    std::vector<Example> train, valid, test;
    tasks::ByteCorpus corpus;

    int d_inp() const { return kind == TaskKind::spike_adding ? spike.channels : corpus.vocab_size(); }
    int d_out() const { return kind == TaskKind::spike_adding ? spike.n_classes() : corpus.vocab_size(); }
};

/// Classification from the network output at the final step.
inline std::vector<Example> spike_examples(std::span<const tasks::SpikeSample> samples) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        Example ex;
        ex.input = s.pattern;
        ex.targets.assign(static_cast<std::size_t>(s.pattern.steps), -1);
        if (!ex.targets.empty()) ex.targets.back() = s.label;
        out.push_back(std::move(ex));
    }
    return out;
}

inline TaskData make_spike_task(const tasks::SpikeAddingSpec& spec, const TrainConfig& tc) {
    TaskData d;
    d.kind = TaskKind::spike_adding;
    d.spike = spec;
    d.train = spike_examples(tasks::gen_spike_adding(spec, tc.n_train, 0));
    d.valid = spike_examples(tasks::gen_spike_adding(spec, tc.n_valid, 1));
    d.test = spike_examples(tasks::gen_spike_adding(spec, tc.n_test, 2));
    return d;
}

inline TaskData make_byte_task(tasks::ByteCorpus corpus) {
    TaskData d;
    d.kind = TaskKind::bytes;
    d.corpus = std::move(corpus);
    return d;
}

struct MetricsRow {
    int step = 0;
    std::string split;
    double loss = 0.0;
    double bpc_or_acc = 0.0;
    double grad_norm_min = std::numeric_limits<double>::quiet_NaN();
    double grad_norm_max = std::numeric_limits<double>::quiet_NaN();
    double activity_mean = 0.0;
};

inline void write_metrics_header(std::ostream& os) {
    os << "step,split,loss,bpc_or_acc,grad_norm_min,grad_norm_max,activity_mean\n";
}

inline void write_metrics_row(std::ostream& os, const MetricsRow& r) {
    auto num = [&](double v) {
        if (std::isnan(v)) return std::string();
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    os << r.step << ',' << r.split << ',' << num(r.loss) << ',' << num(r.bpc_or_acc) << ',' << num(r.grad_norm_min) << ','
       << num(r.grad_norm_max) << ',' << num(r.activity_mean) << '\n';
}

struct EvalResult {
    double loss = 0.0;    ///< raw cross-entropy (nats)
    double metric = 0.0;  ///< accuracy (spike) or BPC (bytes)
    double activity_mean = 0.0;
};

struct TrainResult {
    std::vector<MetricsRow> trace;
    std::vector<double> best_params;
    int best_step = 0;
    double best_valid_loss = std::numeric_limits<double>::infinity();
    EvalResult test;
    double floor = 0.0;
    double reducible = 0.0;      ///< (error or BPC) minus floor, clamped at 0
    bool reducible_clamped = false;
};

/// L2 norms of each tensor group (w_s, w_p, w_r, b per layer; W_out, b_out).
inline std::vector<double> group_grad_norms(const Network& net, std::span<const double> g) {
    std::vector<double> norms;
    for (const Layer* L : {&net.hidden(), &net.readout()}) {
        const auto& lay = L->layout();
        double s[4] = {0, 0, 0, 0};
        for (int i = 0; i < L->size(); ++i) {
            const auto blk = L->neuron_block(g, i);
            for (std::size_t k = 0; k < blk.size(); ++k) {
                const int grp = k < lay.maps.front().w ? 0 : k < lay.wr ? 1 : k < lay.b ? 2 : 3;
                s[grp] += blk[k] * blk[k];
            }
        }
        for (double v : s) norms.push_back(std::sqrt(v));
    }
    double sw = 0.0, sb = 0.0;
    for (std::size_t k = net.out_weight_offset(); k < net.out_bias_offset(); ++k) sw += g[k] * g[k];
    for (std::size_t k = net.out_bias_offset(); k < g.size(); ++k) sb += g[k] * g[k];
    norms.push_back(std::sqrt(sw));
    norms.push_back(std::sqrt(sb));
    return norms;
}

namespace detail {

inline Example byte_example(const tasks::Window& w, int vocab, double scale) {
    Example ex;
    ex.input = InputSequence::one_hot(w.inputs, vocab, scale);
    ex.targets = w.targets;
    return ex;
}

inline EvalResult eval_examples(const Network& net, std::span<const double> params, std::span<const Example> set,
                                int jobs, int chunk) {
    BatchOptions bo;
    bo.jobs = jobs;
    bo.want_grads = false;
    double xent = 0.0, act = 0.0;
    std::size_t n_targets = 0, correct = 0, steps = 0;
    for (std::size_t lo = 0; lo < set.size(); lo += static_cast<std::size_t>(chunk)) {
        const auto part = set.subspan(lo, std::min<std::size_t>(static_cast<std::size_t>(chunk), set.size() - lo));
        const auto r = evaluate_batch(net, params, part, {}, bo);
        xent += r.xent * static_cast<double>(r.n_targets);
        n_targets += r.n_targets;
        correct += r.correct;
        std::size_t s = 0;
        for (const auto& ex : part) s += static_cast<std::size_t>(ex.input.steps);
        act += r.activity_mean * static_cast<double>(s);
        steps += s;
    }
    EvalResult e;
    e.loss = n_targets ? xent / static_cast<double>(n_targets) : 0.0;
    e.metric = n_targets ? static_cast<double>(correct) / static_cast<double>(n_targets) : 0.0;
    e.activity_mean = steps ? act / static_cast<double>(steps) : 0.0;
    return e;
}

}  // namespace detail

/// Sequential evaluation with a single unbroken hidden state over
/// tokens[range.begin, range.begin + limit) (limit 0 = whole range).
inline EvalResult eval_bytes_sequential(const Network& net, std::span<const double> params, const tasks::ByteCorpus& c,
                                        tasks::ByteCorpus::Range range, std::size_t limit) {
    if (limit > 0 && limit < range.size()) range.end = range.begin + limit;
    if (range.size() < 2) throw DomainError("evaluation split needs at least two tokens");
    tasks::StreamIterator it(c, range, 1, c.window);
    BatchOptions bo;
    bo.want_grads = false;
    std::vector<NetworkState> state{net.zero_state()};
    double xent = 0.0, act = 0.0;
    std::size_t n_targets = 0, steps = 0;
    const std::size_t n_windows = (range.size() + static_cast<std::size_t>(c.window) - 1) / static_cast<std::size_t>(c.window);
    const double scale = net.config().embed_scale;
    for (std::size_t w = 0; w < n_windows; ++w) {
        const auto win = it.next();
        const Example ex = detail::byte_example(win[0], c.vocab_size(), scale);
        auto r = evaluate_batch(net, params, std::span<const Example>(&ex, 1), state, bo);
        xent += r.xent * static_cast<double>(r.n_targets);
        n_targets += r.n_targets;
        act += r.activity_mean * ex.input.steps;
        steps += static_cast<std::size_t>(ex.input.steps);
        state = std::move(r.final_states);
    }
    EvalResult e;
    e.loss = xent / static_cast<double>(n_targets);
    e.metric = bpc_from_loss(e.loss);
    e.activity_mean = act / static_cast<double>(steps);
    return e;
}

inline EvalResult evaluate_split(const Network& net, std::span<const double> params, const TaskData& data,
                                 const TrainConfig& tc, bool test_split) {
    if (data.kind == TaskKind::spike_adding)
        return detail::eval_examples(net, params, test_split ? data.test : data.valid, tc.jobs, 256);
    return eval_bytes_sequential(net, params, data.corpus, test_split ? data.corpus.test() : data.corpus.valid(),
                                 test_split ? tc.test_tokens : tc.valid_tokens);
}

inline double default_floor(TaskKind k) {
    const tasks::ReferenceFloors f;
    return k == TaskKind::spike_adding ? f.spike_error : f.bpc;
}

/// Trains `net` in place on `data`. Metric rows are streamed to `csv` (if
/// given) as they are produced, so a diverged run leaves its trace behind.
inline TrainResult train_run(Network& net, const TaskData& data, const TrainConfig& tc, std::uint64_t seed,
                             std::ostream* csv = nullptr) {
    tc.validate();
    if (net.config().d_inp != data.d_inp() || net.config().d_out != data.d_out())
        throw InvalidConfig("network d_inp/d_out (" + std::to_string(net.config().d_inp) + "/" +
                                std::to_string(net.config().d_out) + ") do not match the task (" +
                                std::to_string(data.d_inp()) + "/" + std::to_string(data.d_out()) + ")",
                            "d_inp");
    if (data.kind == TaskKind::spike_adding && data.train.empty()) throw InvalidConfig("empty training set", "train.n_train");

    const SeedSplitter seeds(seed);
    Rng data_rng = seeds.stream("data");
    Rng carry_rng = seeds.stream("carry");
    OptimConfig oc = tc.optim;
    oc.total_steps = tc.steps;
    Optimizer opt(oc, net.n_params());
    BatchOptions bo;
    bo.loss = tc.loss;
    bo.dropout = tc.dropout;
    bo.surrogate_scale = tc.surrogate_scale;
    bo.jobs = tc.jobs;

    TrainResult res;
    res.floor = tc.floor.value_or(default_floor(data.kind));
    auto emit = [&](const MetricsRow& r) {
        res.trace.push_back(r);
        if (csv) {
            write_metrics_row(*csv, r);
            csv->flush();
        }
    };
    auto validate_now = [&](int step) {
        const auto ev = evaluate_split(net, net.params(), data, tc, false);
        emit({step, "valid", ev.loss, ev.metric, std::numeric_limits<double>::quiet_NaN(),
              std::numeric_limits<double>::quiet_NaN(), ev.activity_mean});
        if (!std::isfinite(ev.loss)) throw NumericFault("validation loss is not finite at step " + std::to_string(step));
        if (ev.loss < res.best_valid_loss) {
            res.best_valid_loss = ev.loss;
            res.best_step = step;
            res.best_params.assign(net.params().begin(), net.params().end());
        }
    };

    // Spike task: shuffled epochs over the training set.
    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();
    // Byte task: B carried streams.
    std::optional<tasks::StreamIterator> streams;
    std::vector<NetworkState> carried;
    if (data.kind == TaskKind::bytes) {
        streams.emplace(data.corpus, data.corpus.train(), tc.batch, data.corpus.window);
        carried.assign(static_cast<std::size_t>(tc.batch), net.zero_state());
    }

    validate_now(0);
    double loss_acc = 0.0, metric_acc = 0.0, act_acc = 0.0;
    int acc_n = 0;
    std::vector<Example> batch;
    for (int step = 0; step < tc.steps; ++step) {
        batch.clear();
        std::vector<NetworkState> initial;
        if (data.kind == TaskKind::spike_adding) {
            for (int b = 0; b < tc.batch; ++b) {
                if (cursor == order.size()) {
                    data_rng.shuffle(order.begin(), order.end());
                    cursor = 0;
                }
                batch.push_back(data.train[order[cursor++]]);
            }
        } else {
            const auto wins = streams->next();
            for (std::size_t b = 0; b < wins.size(); ++b) {
                const bool reset = carry_policy(step, tc.carry, carry_rng);
                if (wins[b].starts_stream || reset) carried[b] = net.zero_state();
                batch.push_back(detail::byte_example(wins[b], data.corpus.vocab_size(), net.config().embed_scale));
            }
            initial = carried;
        }
        bo.dropout_seed = seeds.derive("dropout", static_cast<std::uint64_t>(step));
        auto r = bptt_grads(net, net.params(), batch, initial, bo);
        if (!std::isfinite(r.loss)) {
            emit({step, "train", r.loss, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN(), r.activity_mean});
            throw NumericFault("training diverged at step " + std::to_string(step) + " (loss not finite)");
        }
        if (data.kind == TaskKind::bytes) carried = std::move(r.final_states);
        const auto norms = group_grad_norms(net, r.grads);
        opt.step(net.params(), r.grads, step);

        loss_acc += r.loss;
        metric_acc += data.kind == TaskKind::spike_adding
                          ? (r.n_targets ? static_cast<double>(r.correct) / static_cast<double>(r.n_targets) : 0.0)
                          : bpc_from_loss(r.xent);
        act_acc += r.activity_mean;
        ++acc_n;
        if ((step + 1) % tc.log_every == 0 || step + 1 == tc.steps) {
            emit({step + 1, "train", loss_acc / acc_n, metric_acc / acc_n, *std::min_element(norms.begin(), norms.end()),
                  *std::max_element(norms.begin(), norms.end()), act_acc / acc_n});
            loss_acc = metric_acc = act_acc = 0.0;
            acc_n = 0;
        }
        if ((step + 1) % tc.eval_every == 0 || step + 1 == tc.steps) validate_now(step + 1);
    }

    res.test = evaluate_split(net, res.best_params, data, tc, true);
    emit({res.best_step, "test", res.test.loss, res.test.metric, std::numeric_limits<double>::quiet_NaN(),
          std::numeric_limits<double>::quiet_NaN(), res.test.activity_mean});
    const double err = data.kind == TaskKind::spike_adding ? 1.0 - res.test.metric : res.test.metric;
    res.reducible = err - res.floor;
    if (res.reducible < 0.0) {
        res.reducible = 0.0;
        res.reducible_clamped = true;
    }
    return res;
}

}  // namespace elmnet::training
