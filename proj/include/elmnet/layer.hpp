#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/neuron.hpp"
#include "elmnet/rng.hpp"

namespace elmnet {

/// Fixed per-neuron input-channel table into the concatenation
/// [u_t, a_{t-1}] of width d_inp + n_rec. Row-major n_rec x d_s.
struct LayerWiring {
    int n_rec = 0;
    int d_inp = 0;
    int d_s = 0;
    double rho_rec = 0.0;
    std::vector<int> indices;

    int at(int neuron, int synapse) const {
        return indices[static_cast<std::size_t>(neuron) * static_cast<std::size_t>(d_s) + static_cast<std::size_t>(synapse)];
    }
    std::span<const int> row(int neuron) const {
        return std::span<const int>(indices).subspan(static_cast<std::size_t>(neuron) * static_cast<std::size_t>(d_s),
                                                     static_cast<std::size_t>(d_s));
    }
    int width() const noexcept { return d_inp + n_rec; }
};

/// Each synapse is tagged recurrent with probability rho_rec, then its channel
/// is drawn uniformly with replacement from the chosen pool. An empty pool
/// that is only chosen by chance redirects to the other pool.
inline LayerWiring init_wiring(int n_rec, int d_inp, int d_s, double rho_rec, Rng& rng) {
    if (!(rho_rec >= 0.0 && rho_rec <= 1.0)) throw InvalidConfig("must lie in [0, 1]", "rho_rec");
    if (n_rec < 0 || d_inp < 0 || d_s < 1) throw InvalidConfig("invalid layer dimensions", "wiring");
    if (rho_rec == 1.0 && n_rec == 0) throw InvalidConfig("recurrent pool is empty but rho_rec = 1", "rho_rec");
    if (rho_rec == 0.0 && d_inp == 0) throw InvalidConfig("feed-forward pool is empty but rho_rec = 0", "rho_rec");
    if (n_rec == 0 && d_inp == 0) throw InvalidConfig("both input pools are empty", "wiring");
    LayerWiring w;
    w.n_rec = n_rec;
    w.d_inp = d_inp;
    w.d_s = d_s;
    w.rho_rec = rho_rec;
    w.indices.resize(static_cast<std::size_t>(n_rec) * static_cast<std::size_t>(d_s));
    for (auto& idx : w.indices) {
        bool recurrent = rng.uniform() < rho_rec;
        if (recurrent && n_rec == 0) recurrent = false;
        if (!recurrent && d_inp == 0) recurrent = true;
        idx = recurrent ? d_inp + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_rec)))
                        : static_cast<int>(rng.below(static_cast<std::uint64_t>(d_inp)));
    }
    return w;
}

/// Per-layer dynamical state: memory (n x d_m), EMA (n), last activity (n).
struct LayerState {
    std::vector<double> m;
    std::vector<double> r;
    std::vector<double> a;

    void reset() {
        std::fill(m.begin(), m.end(), 0.0);
        std::fill(r.begin(), r.end(), 0.0);
        std::fill(a.begin(), a.end(), 0.0);
    }
};

struct DropoutSpec {
    double p_input = 0.0;
    double p_recurrent = 0.0;
    bool active() const noexcept { return p_input > 0.0 || p_recurrent > 0.0; }
};

/// Everything a layer needs to run backward over one sequence.
struct LayerTape {
    int steps = 0;
    std::vector<double> slots;  ///< steps x n x tape_size
    std::vector<double> z;      ///< steps x n x d_s, gathered (and dropout-scaled) inputs
    std::vector<double> m0;     ///< initial memory
    std::vector<double> a;      ///< steps x n outputs
    std::vector<double> drop;   ///< steps x n x d_s dropout factors; empty without dropout

    void resize(int t, int n, const NeuronLayout& lay, bool with_dropout = false) {
        steps = t;
        slots.resize(static_cast<std::size_t>(t) * n * lay.tape_size);
        z.resize(static_cast<std::size_t>(t) * n * lay.d_s);
        a.resize(static_cast<std::size_t>(t) * n);
        if (with_dropout)
            drop.resize(static_cast<std::size_t>(t) * n * lay.d_s);
        else
            drop.clear();
    }
};

/// A layer of independently parameterized ELM neurons sharing one config.
/// Parameters live in an external flat buffer: neuron i owns
/// [offset + i*block, offset + (i+1)*block).
class Layer {
public:
    Layer() = default;

    Layer(NeuronConfig cfg, int n, LayerWiring wiring, std::size_t offset = 0)
        : cfg_(cfg), n_(n), wiring_(std::move(wiring)), layout_(cfg_), offset_(offset) {
        cfg_.validate();
        if (n_ < 1) throw InvalidConfig("layer needs at least one neuron", "N_rec");
        if (wiring_.n_rec != n_ || wiring_.d_s != cfg_.d_s())
            throw ShapeError("wiring shape does not match layer (" + std::to_string(wiring_.n_rec) + "x" +
                             std::to_string(wiring_.d_s) + " vs " + std::to_string(n_) + "x" +
                             std::to_string(cfg_.d_s()) + ")");
        tau_m_ = memory_timescales(cfg_);
        decays_ = make_decays(cfg_, tau_m_);
    }

    const NeuronConfig& config() const noexcept { return cfg_; }
    const LayerWiring& wiring() const noexcept { return wiring_; }
    const NeuronLayout& layout() const noexcept { return layout_; }
    const Decays& decays() const noexcept { return decays_; }
    std::span<const double> tau_m() const noexcept { return tau_m_; }
    int size() const noexcept { return n_; }
    int d_inp() const noexcept { return wiring_.d_inp; }
    std::size_t offset() const noexcept { return offset_; }
    std::size_t block() const noexcept { return layout_.total; }
    std::size_t n_params() const noexcept { return layout_.total * static_cast<std::size_t>(n_); }

    std::span<double> neuron_block(std::span<double> all, int i) const {
        return all.subspan(offset_ + static_cast<std::size_t>(i) * layout_.total, layout_.total);
    }
    std::span<const double> neuron_block(std::span<const double> all, int i) const {
        return all.subspan(offset_ + static_cast<std::size_t>(i) * layout_.total, layout_.total);
    }

    void init_params(std::span<double> all, Rng& rng) const {
        for (int i = 0; i < n_; ++i) init_neuron_block(layout_, rng, neuron_block(all, i));
    }

    LayerState zero_state() const {
        LayerState s;
        s.m.assign(static_cast<std::size_t>(n_) * cfg_.d_m, 0.0);
        s.r.assign(static_cast<std::size_t>(n_), 0.0);
        s.a.assign(static_cast<std::size_t>(n_), 0.0);
        return s;
    }

    /// Advances the layer one step in place. `u` has width d_inp; `out`
    /// receives the new activity (n). If `tape` is given, step `t` is recorded.
    /// `readout` (nullable, n) receives w_r^T m_t per neuron.
    void step(std::span<const double> params, LayerState& state, std::span<const double> u, std::span<double> out,
              LayerTape* tape = nullptr, int t = 0, const DropoutSpec* dropout = nullptr, Rng* drop_rng = nullptr,
              double* readout = nullptr) const {
        if (u.size() != static_cast<std::size_t>(wiring_.d_inp))
            throw ShapeError("layer input width " + std::to_string(u.size()) + " != " + std::to_string(wiring_.d_inp));
        const int d_s = cfg_.d_s(), d_m = cfg_.d_m;
        thread_local std::vector<double> work;
        work.resize(layout_.scratch_size + static_cast<std::size_t>(d_s + d_m) + layout_.tape_size);
        double* scratch = work.data();
        double* zbuf = scratch + layout_.scratch_size;
        double* m_prev = zbuf + d_s;
        double* tmp_slot = m_prev + d_m;
        const bool drop = dropout && dropout->active() && drop_rng;
        const bool record_drop = drop && tape && !tape->drop.empty();
        const double keep_in = drop ? 1.0 - dropout->p_input : 1.0;
        const double keep_rec = drop ? 1.0 - dropout->p_recurrent : 1.0;
        if (tape && t == 0) tape->m0 = state.m;
        for (int i = 0; i < n_; ++i) {
            const int* row = wiring_.indices.data() + static_cast<std::size_t>(i) * d_s;
            double* z = tape ? tape->z.data() + (static_cast<std::size_t>(t) * n_ + i) * d_s : zbuf;
            for (int j = 0; j < d_s; ++j) {
                const int idx = row[j];
                double v = idx < wiring_.d_inp ? u[static_cast<std::size_t>(idx)] : state.a[static_cast<std::size_t>(idx - wiring_.d_inp)];
                if (drop) {
                    const double keep = idx < wiring_.d_inp ? keep_in : keep_rec;
                    const double f = drop_rng->uniform() < keep ? 1.0 / keep : 0.0;
                    v *= f;
                    if (record_drop) tape->drop[(static_cast<std::size_t>(t) * n_ + i) * d_s + j] = f;
                }
                z[j] = v;
            }
            double* slot = tape ? tape->slots.data() + (static_cast<std::size_t>(t) * n_ + i) * layout_.tape_size
                                : tmp_slot;
            double* mi = state.m.data() + static_cast<std::size_t>(i) * d_m;
            std::copy(mi, mi + d_m, m_prev);
            const auto p = neuron_block(params, i);
            const double a = detail::neuron_forward(layout_, decays_, cfg_.c, cfg_.output_mode, p.data(), z, m_prev,
                                                    state.r[static_cast<std::size_t>(i)], slot, scratch);
            if (!std::isfinite(a) || !std::isfinite(slot[layout_.t_r]))
                throw NumericFault("neuron " + std::to_string(i) + ", t " + std::to_string(t) + ": non-finite value at stage " +
                                   detail::fault_stage(layout_, slot));
            std::copy(slot + layout_.t_m, slot + layout_.t_m + d_m, mi);
            state.r[static_cast<std::size_t>(i)] = slot[layout_.t_r];
            out[static_cast<std::size_t>(i)] = a;
            if (readout) readout[i] = slot[layout_.t_y];
        }
        // a_{t-1} must stay intact until every neuron has gathered.
        std::copy(out.begin(), out.end(), state.a.begin());
        if (tape) std::copy(out.begin(), out.end(), tape->a.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * n_));
    }

    /// Reverse pass over a recorded sequence.
    ///  ga_ext: steps x n, gradient on the layer's outputs from downstream.
    ///  mlp_l1_coef: optional per-neuron K_i; adds K_i*sign(o) to the pre-tanh
    ///               MLP-output gradient at every step.
    ///  grads: flat gradient buffer (same indexing as params).
    ///  gu: optional steps x d_inp, receives dL/du_t.
    /// Gradients do not flow into the initial state.
    void backward(std::span<const double> params, const LayerTape& tape, std::span<const double> ga_ext,
                  std::span<const double> mlp_l1_coef, std::span<double> grads, std::span<double> gu,
                  double surrogate_scale = 100.0) const {
        const int T = tape.steps, d_s = cfg_.d_s(), d_m = cfg_.d_m, d_inp = wiring_.d_inp;
        std::vector<double> gm(static_cast<std::size_t>(n_) * d_m, 0.0), gr(static_cast<std::size_t>(n_), 0.0);
        std::vector<double> rec(static_cast<std::size_t>(T) * n_, 0.0);
        std::vector<double> gz(static_cast<std::size_t>(d_s)), go_extra(static_cast<std::size_t>(d_m));
        std::vector<double> scratch(layout_.scratch_size);
        if (!gu.empty()) std::fill(gu.begin(), gu.end(), 0.0);
        for (int t = T - 1; t >= 0; --t) {
            for (int i = 0; i < n_; ++i) {
                const std::size_t ti = static_cast<std::size_t>(t) * n_ + i;
                const double ga = ga_ext[ti] + rec[ti];
                const double* slot = tape.slots.data() + ti * layout_.tape_size;
                const double* z = tape.z.data() + ti * d_s;
                const double* m_prev = t > 0 ? tape.slots.data() + (ti - n_) * layout_.tape_size + layout_.t_m
                                             : tape.m0.data() + static_cast<std::size_t>(i) * d_m;
                const double* extra = nullptr;
                if (!mlp_l1_coef.empty() && mlp_l1_coef[static_cast<std::size_t>(i)] != 0.0) {
                    const double k = mlp_l1_coef[static_cast<std::size_t>(i)];
                    const double* o = slot + layout_.t_o;
                    for (int j = 0; j < d_m; ++j) go_extra[j] = o[j] > 0.0 ? k : (o[j] < 0.0 ? -k : 0.0);
                    extra = go_extra.data();
                }
                const auto p = neuron_block(params, i);
                auto gp = neuron_block(grads, i);
                detail::neuron_backward(layout_, decays_, cfg_.c, cfg_.output_mode, surrogate_scale, p.data(), z, m_prev,
                                        slot, ga, gm.data() + static_cast<std::size_t>(i) * d_m,
                                        gr[static_cast<std::size_t>(i)], extra, gp.data(), gz.data(), scratch.data());
                const int* row = wiring_.indices.data() + static_cast<std::size_t>(i) * d_s;
                for (int j = 0; j < d_s; ++j) {
                    const int idx = row[j];
                    const double g = tape.drop.empty() ? gz[j] : gz[j] * tape.drop[ti * d_s + j];
                    if (idx < d_inp) {
                        if (!gu.empty()) gu[static_cast<std::size_t>(t) * d_inp + idx] += g;
                    } else if (t > 0) {
                        rec[(static_cast<std::size_t>(t) - 1) * n_ + static_cast<std::size_t>(idx - d_inp)] += g;
                    }
                }
            }
        }
    }

private:
    NeuronConfig cfg_;
    int n_ = 0;
    LayerWiring wiring_;
    NeuronLayout layout_;
    std::vector<double> tau_m_;
    Decays decays_;
    std::size_t offset_ = 0;
};

}  // namespace elmnet

namespace elmnet {

struct LayerStepResult {
    LayerState state;
    std::vector<double> activity;
};

/// Pure single-step form: neuron i gathers [u_t, a_{t-1}] at wiring row i.
inline LayerStepResult layer_step(const Layer& layer, std::span<const double> params, const LayerState& state,
                                  std::span<const double> u) {
    LayerStepResult res{state, std::vector<double>(static_cast<std::size_t>(layer.size()))};
    layer.step(params, res.state, u, res.activity);
    return res;
}

}  // namespace elmnet
