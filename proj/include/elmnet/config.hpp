#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/network.hpp"
#include "elmnet/neuron.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/tasks/byte_corpus.hpp"
#include "elmnet/tasks/spike_adding.hpp"
#include "elmnet/theory.hpp"
#include "elmnet/training/optim.hpp"
#include "elmnet/training/trainer.hpp"

namespace elmnet {

/// Flat `key = value` text with `#` comments. Keys are tracked as they are
/// read so leftovers can be rejected as unknown.
class KeyValues {
public:
    KeyValues() = default;

    static KeyValues parse(std::string_view text, std::string_view origin = "config") {
        KeyValues kv;
        std::size_t line_no = 0, pos = 0;
        while (pos <= text.size()) {
            const std::size_t nl = std::min(text.find('\n', pos), text.size());
            std::string line(text.substr(pos, nl - pos));
            pos = nl + 1;
            ++line_no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) {
                if (nl == text.size()) break;
                continue;
            }
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw InvalidConfig(std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'", "");
            const auto key = trim(trimmed.substr(0, eq));
            const auto val = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw InvalidConfig(std::string(origin) + ":" + std::to_string(line_no) + ": empty key", "");
            if (kv.values_.count(key)) throw InvalidConfig("duplicate key", key);
            kv.values_[key] = val;
            kv.order_.push_back(key);
            if (nl == text.size()) break;
        }
        return kv;
    }

    static KeyValues load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config file '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::optional<std::string> take(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        return it->second;
    }

    void set(const std::string& key, std::string value) {
        if (!values_.count(key)) order_.push_back(key);
        values_[key] = std::move(value);
    }

    /// Throws on the first key nobody consumed.
    void reject_unused() const {
        for (const auto& k : order_)
            if (!used_.count(k)) throw InvalidConfig("unknown key", k);
    }

    static std::string trim(std::string_view s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string_view::npos) return {};
        const auto e = s.find_last_not_of(" \t\r");
        return std::string(s.substr(b, e - b + 1));
    }

private:
    std::map<std::string, std::string> values_;
    std::vector<std::string> order_;
    std::set<std::string> used_;
};

namespace detail {

template <class T>
T parse_number(const std::string& s, const std::string& key) {
    T v{};
    const char* b = s.data();
    const char* e = s.data() + s.size();
    std::from_chars_result r;
    if constexpr (std::is_floating_point_v<T>) {
        // from_chars for double is available in GCC 11.
        r = std::from_chars(b, e, v, std::chars_format::general);
    } else {
        r = std::from_chars(b, e, v);
    }
    if (r.ec != std::errc() || r.ptr != e) throw InvalidConfig("cannot parse '" + s + "' as a number", key);
    return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw InvalidConfig("expected true/false, got '" + s + "'", key);
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Everything needed to reproduce one training run.
struct RunConfig {
    training::TaskKind task = training::TaskKind::spike_adding;
    std::uint64_t seed = 0;
    NetworkConfig net;
    tasks::SpikeAddingSpec spike;
    std::string corpus_path;  ///< empty: generated English-like text
    std::size_t synthetic_bytes = 1 << 20;
    std::uint64_t corpus_seed = 1;
    int window = 100;
    training::TrainConfig train;
    int record_n_traj = 0;  ///< > 0 writes a recording after training
    int record_steps = 512;
    int record_burn_in = 128;
    TapPoint record_tap = TapPoint::memory_readout;
};

inline std::string_view to_string(TapPoint t) { return t == TapPoint::memory_readout ? "memory_readout" : "activity"; }

inline TapPoint parse_tap(std::string_view s) {
    if (s == "memory_readout") return TapPoint::memory_readout;
    if (s == "activity") return TapPoint::activity;
    throw InvalidConfig("expected memory_readout or activity", "record.tap");
}

/// Visits every configurable field as (key, reference). Handlers take the
/// key and a typed reference.
template <class Visitor>
void visit_fields(RunConfig& c, Visitor&& v) {
    v("task", c.task);
    v("seed", c.seed);
    auto neuron = [&](const std::string& p, NeuronConfig& n) {
        v(p + "d_m", n.d_m);
        v(p + "l_mlp", n.l_mlp);
        v(p + "d_mlp", n.d_mlp);
        v(p + "d_tree", n.d_tree);
        v(p + "d_branch", n.d_branch);
        v(p + "c", n.c);
        v(p + "lambda", n.lambda);
        v(p + "tau_min", n.tau_min);
        v(p + "tau_max", n.tau_max);
        v(p + "tau_r", n.tau_r);
        v(p + "output_mode", n.output_mode);
    };
    neuron("", c.net.hidden);
    v("N_rec", c.net.n_rec);
    v("rho_rec", c.net.rho_rec);
    v("embed_scale", c.net.embed_scale);
    v("n_readout", c.net.n_readout);
    neuron("readout.", c.net.readout);
    v("task.channels", c.spike.channels);
    v("task.steps_per_digit", c.spike.steps_per_digit);
    v("task.n_digit_classes", c.spike.n_digit_classes);
    v("task.jitter", c.spike.jitter);
    v("task.formants", c.spike.formants);
    v("task.base_rate", c.spike.base_rate);
    v("task.peak_rate", c.spike.peak_rate);
    v("task.band_width", c.spike.band_width);
    v("task.seed", c.spike.seed);
    v("task.corpus", c.corpus_path);
    v("task.synthetic_bytes", c.synthetic_bytes);
    v("task.corpus_seed", c.corpus_seed);
    v("task.window", c.window);
    v("train.steps", c.train.steps);
    v("train.batch", c.train.batch);
    v("train.eval_every", c.train.eval_every);
    v("train.log_every", c.train.log_every);
    v("train.n_train", c.train.n_train);
    v("train.n_valid", c.train.n_valid);
    v("train.n_test", c.train.n_test);
    v("train.valid_tokens", c.train.valid_tokens);
    v("train.test_tokens", c.train.test_tokens);
    v("train.surrogate_scale", c.train.surrogate_scale);
    v("train.floor", c.train.floor);
    v("optim.algorithm", c.train.optim.algorithm);
    v("optim.lr", c.train.optim.lr);
    v("optim.warmup_steps", c.train.optim.warmup_steps);
    v("optim.clip_norm", c.train.optim.clip_norm);
    v("optim.beta1", c.train.optim.beta1);
    v("optim.beta2", c.train.optim.beta2);
    v("optim.eps", c.train.optim.eps);
    v("loss.label_smoothing", c.train.loss.label_smoothing);
    v("loss.mlp_l2", c.train.loss.mlp_l2);
    v("loss.act_l1", c.train.loss.act_l1);
    v("loss.per_neuron_scaling", c.train.loss.per_neuron_scaling);
    v("dropout.input", c.train.dropout.p_input);
    v("dropout.recurrent", c.train.dropout.p_recurrent);
    v("carry.p_start", c.train.carry.p_start);
    v("carry.p_end", c.train.carry.p_end);
    v("carry.decay_steps", c.train.carry.decay_steps);
    v("record.n_traj", c.record_n_traj);
    v("record.steps", c.record_steps);
    v("record.burn_in", c.record_burn_in);
    v("record.tap", c.record_tap);
}

namespace detail {

struct Reader {
    KeyValues& kv;

    template <class T>
    void operator()(const std::string& key, T& ref) {
        const auto s = kv.take(key);
        if (!s) return;
        if constexpr (std::is_same_v<T, bool>) {
            ref = parse_bool(*s, key);
        } else if constexpr (std::is_same_v<T, std::string>) {
            ref = *s;
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (*s == "auto" || s->empty())
                ref.reset();
            else
                ref = parse_number<double>(*s, key);
        } else if constexpr (std::is_same_v<T, OutputMode>) {
            try {
                ref = parse_output_mode(*s);
            } catch (const InvalidConfig& e) {
                throw InvalidConfig("unknown output mode '" + *s + "'", key);
            }
        } else if constexpr (std::is_same_v<T, training::Algorithm>) {
            try {
                ref = training::parse_algorithm(*s);
            } catch (const InvalidConfig&) {
                throw InvalidConfig("unknown optimizer '" + *s + "'", key);
            }
        } else if constexpr (std::is_same_v<T, training::TaskKind>) {
            ref = training::parse_task_kind(*s);
        } else if constexpr (std::is_same_v<T, TapPoint>) {
            ref = parse_tap(*s);
        } else {
            ref = parse_number<T>(*s, key);
        }
    }
};

struct Writer {
    std::ostringstream& os;

    template <class T>
    void operator()(const std::string& key, const T& ref) {
        os << key << " = ";
        if constexpr (std::is_same_v<T, bool>) {
            os << (ref ? "true" : "false");
        } else if constexpr (std::is_same_v<T, std::string>) {
            os << ref;
        } else if constexpr (std::is_same_v<T, std::optional<double>>) {
            if (ref)
                os << fmt_double(*ref);
            else
                os << "auto";
        } else if constexpr (std::is_same_v<T, OutputMode> || std::is_same_v<T, training::Algorithm> ||
                             std::is_same_v<T, training::TaskKind> || std::is_same_v<T, TapPoint>) {
            os << to_string(ref);
        } else if constexpr (std::is_floating_point_v<T>) {
            os << fmt_double(ref);
        } else {
            os << ref;
        }
        os << '\n';
    }
};

}  // namespace detail

namespace detail {

/// Runs `fn`, renaming the InvalidConfig field to the key used in the file.
template <class Fn>
void with_key_prefix(const std::string& strip, const std::string& add, Fn&& fn) {
    try {
        fn();
    } catch (const InvalidConfig& e) {
        std::string f = e.field();
        if (f.empty()) throw;
        if (!strip.empty() && f.rfind(strip, 0) == 0) f = f.substr(strip.size());
        if (!add.empty() && f.rfind(add, 0) != 0 && f.find('.') == std::string::npos) f = add + f;
        if (f == e.field()) throw;
        const std::string msg = std::string(e.what()).substr(e.field().size() + 2);
        throw InvalidConfig(msg, f);
    }
}

}  // namespace detail

inline void validate_run_config(const RunConfig& c) {
    detail::with_key_prefix("hidden.", "", [&] { c.net.validate(); });
    c.spike.validate();
    detail::with_key_prefix("", "optim.", [&] {
        training::OptimConfig o = c.train.optim;
        o.total_steps = c.train.steps;
        o.validate();
    });
    detail::with_key_prefix("", "loss.", [&] { c.train.loss.validate(); });
    c.train.validate();
    if (c.window < 1) throw InvalidConfig("must be >= 1", "task.window");
    if (c.record_n_traj < 0) throw InvalidConfig("must be >= 0", "record.n_traj");
    if (c.record_n_traj > 0 && (c.record_steps < 1 || c.record_burn_in < 0))
        throw InvalidConfig("need steps >= 1 and burn_in >= 0", "record.steps");
}

/// Applies every known key from `kv` onto `c` (unknown keys stay unconsumed).
inline void apply_keys(RunConfig& c, KeyValues& kv) { visit_fields(c, detail::Reader{kv}); }

inline RunConfig run_config_from(KeyValues& kv, bool reject_unknown = true) {
    RunConfig c;
    apply_keys(c, kv);
    if (reject_unknown) kv.reject_unused();
    validate_run_config(c);
    return c;
}

/// Canonical text form; parsing it back yields an identical config.
inline std::string to_text(const RunConfig& c) {
    std::ostringstream os;
    visit_fields(const_cast<RunConfig&>(c), detail::Writer{os});
    return os.str();
}

/// Builds the run's dataset and sets the network's input/output widths.
inline training::TaskData make_task_data(RunConfig& c) {
    training::TaskData d;
    if (c.task == training::TaskKind::spike_adding) {
        d = training::make_spike_task(c.spike, c.train);
    } else {
        auto corpus = c.corpus_path.empty()
                          ? tasks::make_byte_corpus(tasks::synthetic_text(c.synthetic_bytes, c.corpus_seed), c.window)
                          : tasks::load_byte_corpus(c.corpus_path, c.window);
        d = training::make_byte_task(std::move(corpus));
    }
    c.net.d_inp = d.d_inp();
    c.net.d_out = d.d_out();
    return d;
}

/// Trajectories for recording a trained network: consecutive test patterns
/// (spike task) or contiguous test text (bytes), `steps` long each.
inline std::vector<InputSequence> probe_inputs(const training::TaskData& d, double embed_scale, int n_traj, int steps) {
    if (n_traj < 1 || steps < 1) throw DomainError("probe_inputs: need n_traj >= 1 and steps >= 1");
    std::vector<InputSequence> out;
    if (d.kind == training::TaskKind::spike_adding) {
        if (d.test.empty()) throw DomainError("probe_inputs: empty test split");
        std::size_t next = 0;
        for (int k = 0; k < n_traj; ++k) {
            InputSequence s;
            s.width = d.d_inp();
            s.steps = steps;
            while (s.values.size() < static_cast<std::size_t>(steps) * s.width) {
                const auto& v = d.test[next++ % d.test.size()].input.values;
                s.values.insert(s.values.end(), v.begin(), v.end());
            }
            s.values.resize(static_cast<std::size_t>(steps) * s.width);
            out.push_back(std::move(s));
        }
        return out;
    }
    const auto r = d.corpus.test();
    if (r.size() < static_cast<std::size_t>(steps)) throw DomainError("probe_inputs: test text shorter than one trajectory");
    const std::size_t stride = std::max<std::size_t>(1, (r.size() - steps) / std::max(1, n_traj - 1));
    for (int k = 0; k < n_traj; ++k) {
        const std::size_t b = r.begin + std::min(r.size() - steps, k * stride);
        out.push_back(InputSequence::one_hot(std::span<const int>(d.corpus.tokens).subspan(b, static_cast<std::size_t>(steps)),
                                             d.d_inp(), embed_scale));
    }
    return out;
}

/// Theory parameters from keys alpha, beta, gamma, q_inf, P, k_c.
inline theory::TheoryParams theory_params_from(KeyValues& kv, bool reject_unknown = true) {
    theory::TheoryParams th;
    auto num = [&](const char* key, double& ref) {
        if (auto v = kv.take(key)) ref = detail::parse_number<double>(*v, key);
    };
    num("alpha", th.alpha);
    num("beta", th.beta);
    num("gamma", th.gamma);
    num("q_inf", th.q_inf);
    num("P", th.P);
    num("k_c", th.k_c);
    if (reject_unknown) kv.reject_unused();
    th.validate();
    return th;
}

inline std::string to_text(const theory::TheoryParams& th) {
    std::ostringstream os;
    os << "alpha = " << detail::fmt_double(th.alpha) << "\nbeta = " << detail::fmt_double(th.beta)
       << "\ngamma = " << detail::fmt_double(th.gamma) << "\nq_inf = " << detail::fmt_double(th.q_inf)
       << "\nP = " << detail::fmt_double(th.P) << "\nk_c = " << detail::fmt_double(th.k_c) << '\n';
    return os.str();
}

}  // namespace elmnet
