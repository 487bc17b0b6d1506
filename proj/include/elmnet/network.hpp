#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/layer.hpp"
#include "elmnet/neuron.hpp"
#include "elmnet/rng.hpp"

namespace elmnet {

/// Readout neurons: no MLP hidden layer, few memory units, no high-pass and
/// no output nonlinearity.
inline NeuronConfig default_readout_neuron() {
    NeuronConfig r;
    r.d_m = 3;
    r.l_mlp = 0;
    r.d_mlp = 0;
    r.d_tree = 10;
    r.d_branch = 10;
    r.output_mode = OutputMode::linear_no_filter;
    return r;
}

struct NetworkConfig {
    NeuronConfig hidden;
    int n_rec = 96;
    double rho_rec = 0.25;
    NeuronConfig readout = default_readout_neuron();
    int n_readout = 19;
    int d_inp = 700;
    int d_out = 19;
    double embed_scale = 3.0;

    void validate() const {
        hidden.validate("hidden");
        readout.validate("readout");
        if (n_rec < 1) throw InvalidConfig("must be >= 1", "N_rec");
        if (n_readout < 1) throw InvalidConfig("must be >= 1", "n_readout");
        if (d_inp < 1) throw InvalidConfig("must be >= 1", "d_inp");
        if (d_out < 1) throw InvalidConfig("must be >= 1", "d_out");
        if (!(rho_rec >= 0.0 && rho_rec <= 1.0)) throw InvalidConfig("must lie in [0, 1]", "rho_rec");
        if (!(embed_scale > 0.0)) throw InvalidConfig("must be > 0", "embed_scale");
        if (readout.output_mode != OutputMode::linear_no_filter)
            throw InvalidConfig("readout neurons must be linear-no-filter", "readout.output_mode");
    }
};

/// Dense input rows, steps x width.
struct InputSequence {
    int steps = 0;
    int width = 0;
    std::vector<double> values;

    std::span<const double> row(int t) const {
        return std::span<const double>(values).subspan(static_cast<std::size_t>(t) * width, static_cast<std::size_t>(width));
    }

    static InputSequence one_hot(std::span<const int> tokens, int vocab, double scale) {
        InputSequence s;
        s.steps = static_cast<int>(tokens.size());
        s.width = vocab;
        s.values.assign(tokens.size() * static_cast<std::size_t>(vocab), 0.0);
        for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (tokens[t] < 0 || tokens[t] >= vocab) throw ShapeError("token id out of range");
            s.values[t * vocab + static_cast<std::size_t>(tokens[t])] = scale;
        }
        return s;
    }
};

struct NetworkState {
    LayerState hidden;
    LayerState readout;
};

struct NetworkTape {
    int steps = 0;
    LayerTape hidden;
    LayerTape readout;
};

/// Optional recording of hidden-layer activity and memory readout w_r^T m_t.
struct NetworkTaps {
    bool record = false;
    std::vector<double> activity;  ///< steps x n_rec
    std::vector<double> readout;   ///< steps x n_rec
};

struct ForwardOptions {
    bool reset = false;
    NetworkTape* tape = nullptr;
    NetworkTaps* taps = nullptr;
    const DropoutSpec* dropout = nullptr;
    Rng* dropout_rng = nullptr;
};

/// Hidden recurrent ELM layer, feed-forward readout ELM layer and a final
/// linear map. All learnable values live in one flat vector:
/// [hidden neurons | readout neurons | W_out (d_out x n_readout) | b_out].
class Network {
public:
    Network() = default;

    Network(NetworkConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
        cfg_.validate();
        const SeedSplitter seeds(seed);
        Rng wire_rng = seeds.stream("wiring");
        auto hw = init_wiring(cfg_.n_rec, cfg_.d_inp, cfg_.hidden.d_s(), cfg_.rho_rec, wire_rng);
        hidden_ = Layer(cfg_.hidden, cfg_.n_rec, std::move(hw), 0);
        Rng rwire_rng = seeds.stream("wiring", 1);
        auto rw = init_wiring(cfg_.n_readout, cfg_.n_rec, cfg_.readout.d_s(), 0.0, rwire_rng);
        readout_ = Layer(cfg_.readout, cfg_.n_readout, std::move(rw), hidden_.n_params());
        out_w_ = readout_.offset() + readout_.n_params();
        out_b_ = out_w_ + static_cast<std::size_t>(cfg_.d_out) * cfg_.n_readout;
        params_.assign(out_b_ + static_cast<std::size_t>(cfg_.d_out), 0.0);

        Rng init_rng = seeds.stream("init");
        hidden_.init_params(params_, init_rng);
        readout_.init_params(params_, init_rng);
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.n_readout));
        for (std::size_t k = out_w_; k < out_b_; ++k) params_[k] = init_rng.uniform(-bound, bound);
    }

    const NetworkConfig& config() const noexcept { return cfg_; }
    const Layer& hidden() const noexcept { return hidden_; }
    const Layer& readout() const noexcept { return readout_; }
    std::span<double> params() noexcept { return params_; }
    std::span<const double> params() const noexcept { return params_; }
    std::size_t n_params() const noexcept { return params_.size(); }
    std::size_t out_weight_offset() const noexcept { return out_w_; }
    std::size_t out_bias_offset() const noexcept { return out_b_; }

    /// Hidden-layer budget P = N (k_e + k_c); output biases excluded.
    std::size_t hidden_budget() const {
        const auto pc = count_params(cfg_.hidden);
        return static_cast<std::size_t>(cfg_.n_rec) * (pc.k_e + pc.k_c);
    }

    NetworkState zero_state() const { return {hidden_.zero_state(), readout_.zero_state()}; }

    /// Human-readable path of a flat parameter index, e.g. "hidden[3].w_s[5]".
    std::string param_path(std::size_t idx) const {
        auto in_layer = [&](const Layer& L, const char* name) {
            const std::size_t local = idx - L.offset();
            const std::size_t neuron = local / L.block();
            const std::size_t k = local % L.block();
            const auto& lay = L.layout();
            std::string tensor;
            if (k < lay.wr && k >= lay.maps.front().w) {
                for (std::size_t m = 0; m < lay.maps.size(); ++m) {
                    const auto& lin = lay.maps[m];
                    if (k >= lin.w && k < lin.bias) tensor = "w_p.W" + std::to_string(m) + "[" + std::to_string(k - lin.w) + "]";
                    if (k >= lin.bias && k < lin.bias + static_cast<std::size_t>(lin.out))
                        tensor = "w_p.c" + std::to_string(m) + "[" + std::to_string(k - lin.bias) + "]";
                }
            } else if (k < lay.maps.front().w) {
                tensor = "w_s[" + std::to_string(k) + "]";
            } else if (k < lay.b) {
                tensor = "w_r[" + std::to_string(k - lay.wr) + "]";
            } else {
                tensor = "b";
            }
            return std::string(name) + "[" + std::to_string(neuron) + "]." + tensor;
        };
        if (idx < readout_.offset()) return in_layer(hidden_, "hidden");
        if (idx < out_w_) return in_layer(readout_, "readout");
        if (idx < out_b_) return "out.W[" + std::to_string(idx - out_w_) + "]";
        return "out.b[" + std::to_string(idx - out_b_) + "]";
    }

    /// Runs the network over `input` from `state` (updated in place) and
    /// returns logits, steps x d_out.
    std::vector<double> forward(std::span<const double> params, const InputSequence& input, NetworkState& state,
                                const ForwardOptions& opt = {}) const {
        if (input.width != cfg_.d_inp)
            throw ShapeError("input width " + std::to_string(input.width) + " != d_inp " + std::to_string(cfg_.d_inp));
        if (params.size() != params_.size()) throw ShapeError("parameter vector size mismatch");
        if (opt.reset) {
            state.hidden.reset();
            state.readout.reset();
        }
        const int T = input.steps, N = cfg_.n_rec, R = cfg_.n_readout, D = cfg_.d_out;
        std::vector<double> logits(static_cast<std::size_t>(T) * D);
        if (opt.tape) {
            const bool drop = opt.dropout && opt.dropout->active() && opt.dropout_rng;
            opt.tape->steps = T;
            opt.tape->hidden.resize(T, N, hidden_.layout(), drop);
            opt.tape->readout.resize(T, R, readout_.layout(), false);
            if (T == 0) {
                opt.tape->hidden.m0 = state.hidden.m;
                opt.tape->readout.m0 = state.readout.m;
            }
        }
        if (opt.taps && opt.taps->record) {
            opt.taps->activity.assign(static_cast<std::size_t>(T) * N, 0.0);
            opt.taps->readout.assign(static_cast<std::size_t>(T) * N, 0.0);
        }
        std::vector<double> ah(static_cast<std::size_t>(N)), ar(static_cast<std::size_t>(R));
        const double* W = params.data() + out_w_;
        const double* bo = params.data() + out_b_;
        for (int t = 0; t < T; ++t) {
            double* tap_y = (opt.taps && opt.taps->record) ? opt.taps->readout.data() + static_cast<std::size_t>(t) * N : nullptr;
            try {
                hidden_.step(params, state.hidden, input.row(t), ah, opt.tape ? &opt.tape->hidden : nullptr, t, opt.dropout,
                             opt.dropout_rng, tap_y);
            } catch (const NumericFault& e) {
                throw NumericFault(std::string("hidden layer, ") + e.what());
            }
            if (tap_y) std::copy(ah.begin(), ah.end(), opt.taps->activity.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * N));
            try {
                readout_.step(params, state.readout, ah, ar, opt.tape ? &opt.tape->readout : nullptr, t);
            } catch (const NumericFault& e) {
                throw NumericFault(std::string("readout layer, ") + e.what());
            }
            double* lt = logits.data() + static_cast<std::size_t>(t) * D;
            for (int d = 0; d < D; ++d) {
                double s = bo[d];
                const double* row = W + static_cast<std::size_t>(d) * R;
                for (int j = 0; j < R; ++j) s += row[j] * ar[static_cast<std::size_t>(j)];
                lt[d] = s;
            }
        }
        return logits;
    }

    std::vector<double> forward(const InputSequence& input, NetworkState& state, const ForwardOptions& opt = {}) const {
        return forward(params_, input, state, opt);
    }

private:
    NetworkConfig cfg_;
    Layer hidden_;
    Layer readout_;
    std::size_t out_w_ = 0, out_b_ = 0;
    std::vector<double> params_;
};

}  // namespace elmnet
