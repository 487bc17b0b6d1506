#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/rng.hpp"

namespace elmnet {

enum class OutputMode { relu_highpass, binary_spike, linear_no_filter };

inline std::string_view to_string(OutputMode m) {
    switch (m) {
        case OutputMode::relu_highpass: return "relu-highpass";
        case OutputMode::binary_spike: return "binary-spike";
        case OutputMode::linear_no_filter: return "linear-no-filter";
    }
    return "?";
}

inline OutputMode parse_output_mode(std::string_view s) {
    if (s == "relu-highpass") return OutputMode::relu_highpass;
    if (s == "binary-spike") return OutputMode::binary_spike;
    if (s == "linear-no-filter") return OutputMode::linear_no_filter;
    throw InvalidConfig("unknown output mode '" + std::string(s) + "'", "output_mode");
}

/// Static hyperparameters of one ELM neuron. Timescales are in time steps.
struct NeuronConfig {
    int d_m = 5;
    int l_mlp = 1;
    int d_mlp = 10;
    int d_tree = 30;
    int d_branch = 10;
    double c = 10.0;
    double lambda = 5.0;
    double tau_min = 1.0;
    double tau_max = 500.0;
    double tau_r = 5.0;
    OutputMode output_mode = OutputMode::relu_highpass;

    int d_s() const noexcept { return d_tree * d_branch; }

    /// Throws InvalidConfig naming the field, prefixed with `scope` (e.g. "hidden").
    void validate(std::string_view scope = {}) const {
        auto field = [&](std::string_view f) {
            return scope.empty() ? std::string(f) : std::string(scope) + "." + std::string(f);
        };
        if (d_m < 1) throw InvalidConfig("must be >= 1", field("d_m"));
        if (l_mlp < 0) throw InvalidConfig("must be >= 0", field("l_mlp"));
        if (d_tree < 1) throw InvalidConfig("must be >= 1", field("d_tree"));
        if (d_branch < 1) throw InvalidConfig("must be >= 1", field("d_branch"));
        if (l_mlp >= 1 && d_mlp < d_m) throw InvalidConfig("must be >= d_m when l_mlp >= 1", field("d_mlp"));
        if (!(tau_min > 0.0)) throw InvalidConfig("must be > 0", field("tau_min"));
        if (!(tau_max >= tau_min)) throw InvalidConfig("must be >= tau_min", field("tau_max"));
        if (!(tau_r > 0.0)) throw InvalidConfig("must be > 0", field("tau_r"));
        if (!(lambda > 0.0)) throw InvalidConfig("must be > 0", field("lambda"));
        if (!(c > 0.0)) throw InvalidConfig("must be > 0", field("c"));
    }
};

/// Memory timescales, log-equidistant over [tau_min, tau_max]; a single unit uses tau_max.
inline std::vector<double> memory_timescales(const NeuronConfig& cfg) {
    std::vector<double> tau(static_cast<std::size_t>(cfg.d_m));
    if (cfg.d_m == 1) {
        tau[0] = cfg.tau_max;
        return tau;
    }
    const double lo = std::log(cfg.tau_min), hi = std::log(cfg.tau_max);
    for (int j = 0; j < cfg.d_m; ++j) {
        tau[j] = std::exp(lo + (hi - lo) * j / (cfg.d_m - 1));
    }
    tau.front() = cfg.tau_min;
    tau.back() = cfg.tau_max;
    return tau;
}

struct Decays {
    std::vector<double> kappa_m;
    std::vector<double> kappa_lambda;
    double kappa_r = 0.0;
};

inline Decays make_decays(const NeuronConfig& cfg, std::span<const double> tau_m) {
    if (!(cfg.tau_r > 0.0)) throw InvalidConfig("must be > 0", "tau_r");
    if (!(cfg.lambda > 0.0)) throw InvalidConfig("must be > 0", "lambda");
    Decays d;
    d.kappa_r = std::exp(-1.0 / cfg.tau_r);
    d.kappa_m.reserve(tau_m.size());
    d.kappa_lambda.reserve(tau_m.size());
    for (double tau : tau_m) {
        if (!(tau > 0.0)) throw InvalidConfig("memory timescale must be > 0", "tau_m");
        d.kappa_m.push_back(std::exp(-1.0 / tau));
        d.kappa_lambda.push_back(std::exp(-cfg.lambda / tau));
    }
    return d;
}

inline Decays make_decays(const NeuronConfig& cfg) {
    const auto tau = memory_timescales(cfg);
    return make_decays(cfg, tau);
}

/// Sums contiguous segments of length d_branch.
inline std::vector<double> branch_sum(std::span<const double> weighted, int d_tree, int d_branch) {
    if (d_tree < 1 || d_branch < 1 ||
        weighted.size() != static_cast<std::size_t>(d_tree) * static_cast<std::size_t>(d_branch)) {
        throw ShapeError("branch_sum: expected " + std::to_string(d_tree) + "x" + std::to_string(d_branch) +
                         " inputs, got " + std::to_string(weighted.size()));
    }
    std::vector<double> out(static_cast<std::size_t>(d_tree), 0.0);
    for (int k = 0; k < d_tree; ++k) {
        double s = 0.0;
        for (int j = 0; j < d_branch; ++j) s += weighted[static_cast<std::size_t>(k * d_branch + j)];
        out[k] = s;
    }
    return out;
}

struct ParamCount {
    std::size_t k_e = 0;  ///< MLP weights and biases plus readout weights
    std::size_t k_c = 0;  ///< synapse weights
};

/// Offsets of every learnable tensor inside one neuron's contiguous parameter
/// block, and of every intermediate inside one step's tape slot.
///
/// Parameter block: [w_s | (W_0, c_0) ... (W_l, c_l) | w_r | b], where map k
/// is row-major (out x in) and the first map reads [b_t, kappa_m * m_{t-1}].
/// Tape slot: [b_t | pre_0 ... pre_{l-1} | o | dm | m | y | r | v].
struct NeuronLayout {
    struct Linear {
        int in = 0, out = 0;
        std::size_t w = 0, bias = 0;
    };

    int d_m = 0, l_mlp = 0, d_mlp = 0, d_tree = 0, d_branch = 0, d_s = 0;
    std::size_t ws = 0;
    std::vector<Linear> maps;
    std::size_t wr = 0, b = 0, total = 0;

    std::size_t t_bt = 0, t_pre = 0, t_o = 0, t_dm = 0, t_m = 0, t_y = 0, t_r = 0, t_v = 0, tape_size = 0;
    std::size_t scratch_size = 0;

    NeuronLayout() = default;

    explicit NeuronLayout(const NeuronConfig& cfg)
        : d_m(cfg.d_m), l_mlp(cfg.l_mlp), d_mlp(cfg.d_mlp), d_tree(cfg.d_tree), d_branch(cfg.d_branch),
          d_s(cfg.d_s()) {
        std::size_t off = 0;
        ws = off;
        off += static_cast<std::size_t>(d_s);
        int in = d_tree + d_m;
        for (int k = 0; k <= l_mlp; ++k) {
            const int out = (k == l_mlp) ? d_m : d_mlp;
            Linear lin;
            lin.in = in;
            lin.out = out;
            lin.w = off;
            off += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
            lin.bias = off;
            off += static_cast<std::size_t>(out);
            maps.push_back(lin);
            in = out;
        }
        wr = off;
        off += static_cast<std::size_t>(d_m);
        b = off;
        off += 1;
        total = off;

        std::size_t t = 0;
        t_bt = t;
        t += static_cast<std::size_t>(d_tree);
        t_pre = t;
        t += static_cast<std::size_t>(l_mlp) * static_cast<std::size_t>(d_mlp);
        t_o = t;
        t += static_cast<std::size_t>(d_m);
        t_dm = t;
        t += static_cast<std::size_t>(d_m);
        t_m = t;
        t += static_cast<std::size_t>(d_m);
        t_y = t++;
        t_r = t++;
        t_v = t++;
        tape_size = t;

        const int widest = std::max({d_tree + d_m, d_mlp, d_m});
        scratch_size = 3 * static_cast<std::size_t>(widest);
    }

    std::size_t w_p_size() const noexcept { return wr - maps.front().w; }
};

inline ParamCount count_params(const NeuronConfig& cfg) {
    const NeuronLayout lay(cfg);
    return {lay.w_p_size() + static_cast<std::size_t>(cfg.d_m), static_cast<std::size_t>(cfg.d_s())};
}

/// Writes the default initialization into one neuron block: per-branch
/// uniform(+-1/sqrt(d_branch)) synapses, fan-in uniform for MLP maps and
/// readout, zero output bias.
inline void init_neuron_block(const NeuronLayout& lay, Rng& rng, std::span<double> p) {
    const double ws_bound = 1.0 / std::sqrt(static_cast<double>(lay.d_branch));
    for (int j = 0; j < lay.d_s; ++j) p[lay.ws + j] = rng.uniform(-ws_bound, ws_bound);
    for (const auto& lin : lay.maps) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(lin.in));
        for (int j = 0; j < lin.in * lin.out; ++j) p[lin.w + j] = rng.uniform(-bound, bound);
        for (int j = 0; j < lin.out; ++j) p[lin.bias + j] = rng.uniform(-bound, bound);
    }
    const double wr_bound = 1.0 / std::sqrt(static_cast<double>(lay.d_m));
    for (int j = 0; j < lay.d_m; ++j) p[lay.wr + j] = rng.uniform(-wr_bound, wr_bound);
    p[lay.b] = 0.0;
}

/// SuperSpike pseudo-derivative 1/(1 + scale*|v|)^2.
inline double superspike(double v, double scale = 100.0) {
    const double d = 1.0 + scale * std::abs(v);
    return 1.0 / (d * d);
}

namespace detail {

/// Stage names used in numeric-fault messages.
inline const char* fault_stage(const NeuronLayout& lay, const double* tape) {
    auto bad = [](const double* x, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
            if (!std::isfinite(x[i])) return true;
        return false;
    };
    if (bad(tape + lay.t_bt, static_cast<std::size_t>(lay.d_tree))) return "branch-sum";
    if (bad(tape + lay.t_pre, static_cast<std::size_t>(lay.l_mlp * lay.d_mlp))) return "mlp-hidden";
    if (bad(tape + lay.t_o, static_cast<std::size_t>(lay.d_m))) return "mlp-output";
    if (bad(tape + lay.t_m, static_cast<std::size_t>(lay.d_m))) return "memory-update";
    if (!std::isfinite(tape[lay.t_y])) return "readout";
    if (!std::isfinite(tape[lay.t_r])) return "ema";
    return "output";
}

/// One forward step of the neuron. Reads the parameter block `p`, gathered
/// input `z` (length d_s) and previous state; writes every intermediate into
/// `tape` and returns the activity a_t. The new state is (tape+t_m, tape[t_r]).
inline double neuron_forward(const NeuronLayout& lay, const Decays& dec, double c, OutputMode mode, const double* p,
                             const double* z, const double* m_prev, double r_prev, double* tape, double* scratch) {
    const int d_m = lay.d_m;
    double* bt = tape + lay.t_bt;
    const double* ws = p + lay.ws;
    for (int k = 0; k < lay.d_tree; ++k) {
        double s = 0.0;
        const int base = k * lay.d_branch;
        for (int j = 0; j < lay.d_branch; ++j) s += z[base + j] * ws[base + j];
        bt[k] = c * s;
    }
    double* x = scratch;
    std::copy(bt, bt + lay.d_tree, x);
    for (int j = 0; j < d_m; ++j) x[lay.d_tree + j] = dec.kappa_m[j] * m_prev[j];

    const double* in = x;
    double* hbuf = scratch + lay.scratch_size / 3;
    double* hbuf2 = scratch + 2 * (lay.scratch_size / 3);
    for (int k = 0; k <= lay.l_mlp; ++k) {
        const auto& lin = lay.maps[static_cast<std::size_t>(k)];
        const double* W = p + lin.w;
        const double* bias = p + lin.bias;
        const bool last = (k == lay.l_mlp);
        double* pre = last ? tape + lay.t_o : tape + lay.t_pre + static_cast<std::size_t>(k) * lay.d_mlp;
        for (int o = 0; o < lin.out; ++o) {
            double s = bias[o];
            const double* row = W + static_cast<std::size_t>(o) * lin.in;
            for (int i = 0; i < lin.in; ++i) s += row[i] * in[i];
            pre[o] = s;
        }
        if (!last) {
            double* h = (k % 2 == 0) ? hbuf : hbuf2;
            for (int o = 0; o < lin.out; ++o) {
                const double r = pre[o] > 0.0 ? pre[o] : 0.0;
                h[o] = r * r;
            }
            in = h;
        }
    }
    const double* o = tape + lay.t_o;
    double* dm = tape + lay.t_dm;
    double* m = tape + lay.t_m;
    const double* wr = p + lay.wr;
    double y = 0.0;
    for (int j = 0; j < d_m; ++j) {
        dm[j] = std::tanh(o[j]);
        m[j] = dec.kappa_m[j] * m_prev[j] + (1.0 - dec.kappa_lambda[j]) * dm[j];
        y += wr[j] * m[j];
    }
    tape[lay.t_y] = y;
    const double b = p[lay.b];
    double a;
    if (mode == OutputMode::linear_no_filter) {
        tape[lay.t_r] = 0.0;
        tape[lay.t_v] = b + y;
        a = b + y;
    } else {
        const double r = dec.kappa_r * r_prev + (1.0 - dec.kappa_r) * y;
        const double v = b + y - r;
        tape[lay.t_r] = r;
        tape[lay.t_v] = v;
        if (mode == OutputMode::relu_highpass)
            a = v > 0.0 ? v : 0.0;
        else
            a = v > 0.0 ? 1.0 : 0.0;
    }
    return a;
}

/// Reverse step matching neuron_forward. `ga` is dL/da_t; `gm` holds dL/dm_t
/// on entry and dL/dm_{t-1} on exit; `gr` likewise for the EMA state.
/// `go_extra` (nullable) is an additional gradient on the pre-tanh MLP output.
/// Parameter gradients accumulate into `gp`; dL/dz is written to `gz`.
inline void neuron_backward(const NeuronLayout& lay, const Decays& dec, double c, OutputMode mode,
                            double surrogate_scale, const double* p, const double* z, const double* m_prev,
                            const double* tape, double ga, double* gm, double& gr, const double* go_extra,
                            double* gp, double* gz, double* scratch) {
    const int d_m = lay.d_m;
    const double* m = tape + lay.t_m;
    const double v = tape[lay.t_v];
    double gy;
    if (mode == OutputMode::linear_no_filter) {
        gp[lay.b] += ga;
        gy = ga;
        gr = 0.0;
    } else {
        const double dv = (mode == OutputMode::relu_highpass) ? (v > 0.0 ? 1.0 : 0.0) : superspike(v, surrogate_scale);
        const double gv = ga * dv;
        gp[lay.b] += gv;
        const double gr_tot = gr - gv;
        gy = gv + (1.0 - dec.kappa_r) * gr_tot;
        gr = dec.kappa_r * gr_tot;
    }
    const double* wr = p + lay.wr;
    double* gwr = gp + lay.wr;
    const std::size_t w3 = lay.scratch_size / 3;
    double* gcur = scratch;           // gradient wrt current map output
    double* gnext = scratch + w3;     // gradient wrt current map input
    double* xbuf = scratch + 2 * w3;  // reconstructed map input
    const double* dm = tape + lay.t_dm;
    for (int j = 0; j < d_m; ++j) {
        gwr[j] += gy * m[j];
        gm[j] += gy * wr[j];
        const double g_dm = gm[j] * (1.0 - dec.kappa_lambda[j]);
        double go = g_dm * (1.0 - dm[j] * dm[j]);
        if (go_extra) go += go_extra[j];
        gcur[j] = go;
        gm[j] *= dec.kappa_m[j];
    }
    const double* bt = tape + lay.t_bt;
    for (int k = lay.l_mlp; k >= 0; --k) {
        const auto& lin = lay.maps[static_cast<std::size_t>(k)];
        if (k == 0) {
            std::copy(bt, bt + lay.d_tree, xbuf);
            for (int j = 0; j < d_m; ++j) xbuf[lay.d_tree + j] = dec.kappa_m[j] * m_prev[j];
        } else {
            const double* pre = tape + lay.t_pre + static_cast<std::size_t>(k - 1) * lay.d_mlp;
            for (int i = 0; i < lin.in; ++i) {
                const double r = pre[i] > 0.0 ? pre[i] : 0.0;
                xbuf[i] = r * r;
            }
        }
        const double* W = p + lin.w;
        double* gW = gp + lin.w;
        double* gb = gp + lin.bias;
        std::fill(gnext, gnext + lin.in, 0.0);
        for (int o = 0; o < lin.out; ++o) {
            const double g = gcur[o];
            if (g == 0.0) continue;
            gb[o] += g;
            const double* row = W + static_cast<std::size_t>(o) * lin.in;
            double* grow = gW + static_cast<std::size_t>(o) * lin.in;
            for (int i = 0; i < lin.in; ++i) {
                grow[i] += g * xbuf[i];
                gnext[i] += g * row[i];
            }
        }
        if (k > 0) {
            const double* pre = tape + lay.t_pre + static_cast<std::size_t>(k - 1) * lay.d_mlp;
            for (int i = 0; i < lin.in; ++i) gcur[i] = pre[i] > 0.0 ? gnext[i] * 2.0 * pre[i] : 0.0;
        }
    }
    // gnext now holds dL/d[b_t, kappa_m * m_{t-1}]
    for (int j = 0; j < d_m; ++j) gm[j] += dec.kappa_m[j] * gnext[lay.d_tree + j];
    const double* ws = p + lay.ws;
    double* gws = gp + lay.ws;
    for (int k = 0; k < lay.d_tree; ++k) {
        const double g = c * gnext[k];
        const int base = k * lay.d_branch;
        for (int j = 0; j < lay.d_branch; ++j) {
            gws[base + j] += g * z[base + j];
            gz[base + j] = g * ws[base + j];
        }
    }
}

}  // namespace detail

/// Learnable tensors of one neuron, stored as a single contiguous block
/// (see NeuronLayout), together with the fixed memory timescales.
class NeuronParams {
public:
    NeuronParams() = default;

    explicit NeuronParams(const NeuronConfig& cfg)
        : layout_(cfg), values_(layout_.total, 0.0), tau_m_(memory_timescales(cfg)) {}

    static NeuronParams initialized(const NeuronConfig& cfg, Rng& rng) {
        NeuronParams p(cfg);
        init_neuron_block(p.layout_, rng, p.values_);
        return p;
    }

    const NeuronLayout& layout() const noexcept { return layout_; }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const double> tau_m() const noexcept { return tau_m_; }

    std::span<double> w_s() noexcept { return values().subspan(layout_.ws, static_cast<std::size_t>(layout_.d_s)); }
    std::span<double> w_p() noexcept { return values().subspan(layout_.maps.front().w, layout_.w_p_size()); }
    std::span<double> w_r() noexcept { return values().subspan(layout_.wr, static_cast<std::size_t>(layout_.d_m)); }
    double& b() noexcept { return values_[layout_.b]; }

    /// Weight matrix (row-major out x in) and bias of MLP map k.
    std::span<double> mlp_weight(int k) noexcept {
        const auto& lin = layout_.maps.at(static_cast<std::size_t>(k));
        return values().subspan(lin.w, static_cast<std::size_t>(lin.in) * static_cast<std::size_t>(lin.out));
    }
    std::span<double> mlp_bias(int k) noexcept {
        const auto& lin = layout_.maps.at(static_cast<std::size_t>(k));
        return values().subspan(lin.bias, static_cast<std::size_t>(lin.out));
    }

private:
    NeuronLayout layout_;
    std::vector<double> values_;
    std::vector<double> tau_m_;
};

struct NeuronState {
    std::vector<double> m;
    double r = 0.0;

    static NeuronState zeros(const NeuronConfig& cfg) { return {std::vector<double>(static_cast<std::size_t>(cfg.d_m), 0.0), 0.0}; }
};

struct StepResult {
    NeuronState state;
    double activity = 0.0;
    std::vector<double> delta_m;  ///< bounded update proposal tanh(MLP(...))
};

/// Advances one neuron by one time step (pure).
inline StepResult elm_step(const NeuronState& state, std::span<const double> z, const NeuronParams& params,
                           const NeuronConfig& cfg) {
    const auto& lay = params.layout();
    if (z.size() != static_cast<std::size_t>(lay.d_s))
        throw ShapeError("elm_step: expected " + std::to_string(lay.d_s) + " synaptic inputs, got " +
                         std::to_string(z.size()));
    if (state.m.size() != static_cast<std::size_t>(lay.d_m)) throw ShapeError("elm_step: memory size mismatch");
    const Decays dec = make_decays(cfg, params.tau_m());
    std::vector<double> tape(lay.tape_size), scratch(lay.scratch_size);
    const double a = detail::neuron_forward(lay, dec, cfg.c, cfg.output_mode, params.values().data(), z.data(),
                                            state.m.data(), state.r, tape.data(), scratch.data());
    if (!std::isfinite(a) || !std::isfinite(tape[lay.t_r]))
        throw NumericFault(std::string("elm_step: non-finite value at stage ") + detail::fault_stage(lay, tape.data()));
    StepResult res;
    res.state.m.assign(tape.begin() + static_cast<std::ptrdiff_t>(lay.t_m),
                       tape.begin() + static_cast<std::ptrdiff_t>(lay.t_m + lay.d_m));
    res.state.r = tape[lay.t_r];
    res.activity = a;
    res.delta_m.assign(tape.begin() + static_cast<std::ptrdiff_t>(lay.t_dm),
                       tape.begin() + static_cast<std::ptrdiff_t>(lay.t_dm + lay.d_m));
    return res;
}

/// Neuron skeleton produced by the single-knob scaling recipe.
struct ParetoRecipe {
    NeuronConfig neuron;
    double rho_rec = 0.0;
};

enum class RecipeVariant { floor, ceil };

/// d_m from N_rec: ceil variant d_m = ceil(sqrt(d_inp + N)/2) with
/// rho_rec = N/(N+d_inp); floor variant d_m = floor(sqrt(d_inp/15 + N)/2) with
/// rho_rec = sqrt(N/(N+d_inp)). Then d_mlp = 2 d_m, d_tree = 2 d_mlp,
/// d_branch = d_tree. Integer arithmetic avoids rounding at perfect squares.
inline ParetoRecipe pareto_candidate(int n_rec, int d_inp, RecipeVariant variant, NeuronConfig base = {}) {
    if (n_rec < 1) throw InvalidConfig("must be >= 1", "N_rec");
    if (d_inp < 0) throw InvalidConfig("must be >= 0", "d_inp");
    long long d = 0;
    const long long n = n_rec, di = d_inp;
    if (variant == RecipeVariant::ceil) {
        // smallest d with 4 d^2 >= d_inp + N
        while (4 * d * d < di + n) ++d;
    } else {
        // largest d with 60 d^2 <= d_inp + 15 N
        while (60 * (d + 1) * (d + 1) <= di + 15 * n) ++d;
    }
    d = std::max<long long>(d, 1);
    ParetoRecipe r;
    r.neuron = base;
    r.neuron.d_m = static_cast<int>(d);
    r.neuron.l_mlp = std::max(base.l_mlp, 1);
    r.neuron.d_mlp = 2 * r.neuron.d_m;
    r.neuron.d_tree = 2 * r.neuron.d_mlp;
    r.neuron.d_branch = r.neuron.d_tree;
    const double frac = static_cast<double>(n_rec) / static_cast<double>(n_rec + d_inp);
    r.rho_rec = variant == RecipeVariant::ceil ? frac : std::sqrt(frac);
    return r;
}

}  // namespace elmnet
