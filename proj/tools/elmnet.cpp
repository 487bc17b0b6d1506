// Command-line entry point: train, sweep, theory, fit, spectrum, stats, recipe.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "elmnet/config.hpp"
#include "elmnet/error.hpp"
#include "elmnet/fitting/decay.hpp"
#include "elmnet/fitting/joint.hpp"
#include "elmnet/fitting/spectrum.hpp"
#include "elmnet/network.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/rng.hpp"
#include "elmnet/stats.hpp"
#include "elmnet/sweeps.hpp"
#include "elmnet/theory.hpp"
#include "elmnet/training/checkpoint.hpp"
#include "elmnet/training/trainer.hpp"

#ifndef ELMNET_VERSION
#define ELMNET_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace elmnet;

namespace {

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

/// Output directory plus the manifest describing it. Every written file is
/// registered; the manifest goes last.
class OutputDir {
public:
    OutputDir(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)), started_(utc_now()) {
        fs::create_directories(dir_);
    }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void add(const std::string& name) {
        for (const auto& f : files_)
            if (f == name) return;
        files_.push_back(name);
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream os(path(name), std::ios::binary);
        if (!os) throw IoError("cannot write '" + path(name).string() + "'");
        os << text;
        os.close();
        add(name);
    }

    void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

    void finish(const std::string& config_echo, std::uint64_t seed) const {
        json m;
        m["command"] = command_;
        m["config"] = config_echo;
        m["seed"] = seed;
        m["version"] = ELMNET_VERSION;
        m["started"] = started_;
        m["finished"] = utc_now();
        json files = json::array();
        for (const auto& f : files_) {
            const auto bytes = read_file(path(f));
            files.push_back({{"name", f}, {"bytes", bytes.size()}, {"fnv1a64", hex64(fnv1a64(bytes))}});
        }
        m["files"] = files;
        std::ofstream os(path("manifest.json"), std::ios::binary);
        os << m.dump(2) << "\n";
    }

private:
    fs::path dir_;
    std::string command_;
    std::string started_;
    std::vector<std::string> files_;
};

/// Where a single-file output lands: the file's directory gets the manifest.
struct FileTarget {
    fs::path dir;
    std::string name;
};

FileTarget split_target(const std::string& out, const std::string& default_name) {
    const fs::path p(out);
    if (p.has_extension()) return {p.has_parent_path() ? p.parent_path() : fs::path("."), p.filename().string()};
    return {p, default_name};
}

/// Simple CSV table: header names plus string cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }

    int require(const std::string& name) const {
        const int c = column(name);
        if (c < 0) throw InvalidConfig("missing CSV column '" + name + "'", "in");
        return c;
    }
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        cells.push_back(KeyValues::trim(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos)));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return cells;
}

Table read_csv(const fs::path& p) {
    std::istringstream in(read_file(p));
    Table t;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        if (KeyValues::trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (t.header.empty())
            t.header = std::move(cells);
        else
            t.rows.push_back(std::move(cells));
    }
    if (t.header.empty()) throw InvalidConfig("empty CSV file '" + p.string() + "'", "in");
    return t;
}

double cell_number(const std::string& s, const std::string& what) { return elmnet::detail::parse_number<double>(s, what); }

std::string num(double v) {
    if (!std::isfinite(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int resolve_jobs(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("ELMNET_JOBS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    return 1;
}

std::string join_args(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

/// Loads a run config, applying the optional --seed override.
RunConfig load_run_config(const std::string& path, std::optional<std::uint64_t> seed, KeyValues* keep = nullptr) {
    KeyValues kv = path.empty() ? KeyValues{} : KeyValues::load(path);
    RunConfig c;
    apply_keys(c, kv);
    if (keep) *keep = kv;
    if (!keep) kv.reject_unused();
    if (seed) c.seed = *seed;
    validate_run_config(c);
    return c;
}

json fit_json(const fitting::FitResult& f) {
    json params = json::object();
    for (std::size_t i = 0; i < f.names.size(); ++i) params[f.names[i]] = f.params[i];
    return {{"model", f.model}, {"params", params},  {"rss", f.rss},           {"n", f.n},
            {"k", f.k},         {"aicc", f.aicc},    {"residuals", f.residuals}, {"warnings", f.warnings}};
}

json histogram_json(const stats::Histogram& h) { return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

// --------------------------------------------------------------------------

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 0;
};

void add_common(CLI::App* app, Common& c, bool need_out = true) {
    app->add_option("--config", c.config, "config file (key = value)");
    app->add_option("--seed", c.seed, "master seed");
    auto* o = app->add_option("--out", c.out, "output directory or file");
    if (need_out) o->required();
    app->add_option("--jobs", c.jobs, "worker threads (default: ELMNET_JOBS or 1)");
}

int cmd_train(const Common& o, const std::string& cmdline) {
    RunConfig c = load_run_config(o.config, o.seed);
    c.train.jobs = resolve_jobs(o.jobs);
    auto data = make_task_data(c);
    const std::string echo = to_text(c);
    OutputDir out(o.out, cmdline);
    out.write_text("config.cfg", echo);
    if (data.kind == training::TaskKind::bytes)
        out.write_json("corpus.json", tasks::corpus_manifest(data.corpus, c.corpus_path.empty() ? "synthetic" : c.corpus_path));

    Network net(c.net, c.seed);
    std::ofstream csv(out.path("metrics.csv"), std::ios::binary);
    training::write_metrics_header(csv);
    out.add("metrics.csv");
    int rc = 0;
    json result;
    try {
        const auto tr = training::train_run(net, data, c.train, c.seed, &csv);
        csv.close();
        training::write_checkpoint(out.path("checkpoint.bin"), {echo, tr.best_params});
        out.add("checkpoint.bin");
        const auto pc = count_params(c.net.hidden);
        result = {{"task", std::string(to_string(c.task))},
                  {"best_step", tr.best_step},
                  {"best_valid_loss", tr.best_valid_loss},
                  {"test_loss", tr.test.loss},
                  {"test_metric", tr.test.metric},
                  {"test_metric_name", data.kind == training::TaskKind::spike_adding ? "accuracy" : "bpc"},
                  {"floor", tr.floor},
                  {"reducible", tr.reducible},
                  {"reducible_clamped", tr.reducible_clamped},
                  {"k_e", pc.k_e},
                  {"k_c", pc.k_c},
                  {"N_rec", c.net.n_rec},
                  {"P_total", net.hidden_budget()},
                  {"P_network", net.n_params()}};
        if (c.record_n_traj > 0) {
            Network best(c.net, c.seed);
            const auto inputs = probe_inputs(data, c.net.embed_scale, c.record_n_traj, c.record_steps + c.record_burn_in);
            write_recording(out.path("recording.elmr"),
                            record_network(best, tr.best_params, inputs, c.record_burn_in, c.record_tap));
            out.add("recording.elmr");
        }
    } catch (const NumericFault& e) {
        csv.close();
        result = {{"error", e.what()}};
        rc = 2;
    }
    out.write_json("result.json", result);
    out.finish(echo, c.seed);
    if (rc) std::cerr << "error: " << result["error"].get<std::string>() << "\n";
    return rc;
}

int cmd_sweep(const Common& o, const std::string& cmdline) {
    KeyValues rest;
    RunConfig c = load_run_config(o.config, o.seed, &rest);
    const auto spec = sweeps::sweep_spec_from(rest);
    rest.reject_unused();
    spec.validate();
    const int jobs = resolve_jobs(o.jobs);
    auto data = make_task_data(c);
    const std::string echo = to_text(c) + sweeps::to_text(spec);
    OutputDir out(o.out, cmdline);
    out.write_text("config.cfg", echo);
    const auto res = sweeps::run_sweep(c, data, spec, jobs, [](const sweeps::SweepRow& r) {
        std::cerr << "  value " << r.axis_value << " seed " << r.seed << ": metric " << r.metric << "\n";
    });
    std::ostringstream rows;
    sweeps::write_sweep_csv(rows, res, spec.axis);
    out.write_text("results.csv", rows.str());
    std::ostringstream sum;
    sum << "axis_value,k_e,k_c,N,n,metric_mean,metric_std,reducible_mean,reducible_std\n";
    for (const auto& s : sweeps::summarize(res))
        sum << num(s.axis_value) << ',' << s.k_e << ',' << s.k_c << ',' << s.N << ',' << s.n << ',' << num(s.metric_mean)
            << ',' << num(s.metric_std) << ',' << num(s.reducible_mean) << ',' << num(s.reducible_std) << '\n';
    out.write_text("summary.csv", sum.str());
    json skipped = json::array();
    for (const auto& s : res.skipped) skipped.push_back({{"axis_value", s.axis_value}, {"reason", s.reason}});
    out.write_json("result.json", {{"axis", std::string(to_string(spec.axis))}, {"rows", res.rows.size()}, {"skipped", skipped}});
    out.finish(echo, c.seed);
    return 0;
}

std::vector<double> parse_ke_grid(const std::string& s) {
    // lo:hi:n is a geometric grid; anything else is a comma list.
    if (s.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::size_t pos = 0;
        while (true) {
            const auto c = s.find(':', pos);
            parts.push_back(s.substr(pos, c == std::string::npos ? std::string::npos : c - pos));
            if (c == std::string::npos) break;
            pos = c + 1;
        }
        if (parts.size() != 3) throw InvalidConfig("expected lo:hi:n", "ke-grid");
        const double lo = cell_number(parts[0], "ke-grid"), hi = cell_number(parts[1], "ke-grid");
        const int n = elmnet::detail::parse_number<int>(parts[2], "ke-grid");
        if (!(lo > 0 && hi >= lo && n >= 1)) throw InvalidConfig("need 0 < lo <= hi and n >= 1", "ke-grid");
        return theory::geometric_grid(lo, hi, n);
    }
    auto g = sweeps::parse_grid(s, "ke-grid");
    if (g.empty()) throw InvalidConfig("empty grid", "ke-grid");
    return g;
}

int cmd_theory_sweep(const std::string& params, const std::string& grid_spec, const std::string& out_arg,
                     const std::string& cmdline) {
    KeyValues kv = KeyValues::load(params);
    const auto th = theory_params_from(kv);
    const auto grid = parse_ke_grid(grid_spec);
    std::ostringstream csv;
    csv << "k_e,N,s,I_rep\n";
    for (double k : grid) {
        const long N = theory::neuron_count(k, th);
        const double s = theory::snr(k, th);
        csv << num(k) << ',' << N << ',' << num(s) << ',' << (N >= 1 ? num(theory::i_rep_modes(N, s, th.beta)) : "") << '\n';
    }
    const auto t = split_target(out_arg, "theory.csv");
    OutputDir out(t.dir, cmdline);
    out.write_text(t.name, csv.str());
    out.finish(to_text(th) + "ke_grid = " + grid_spec + "\n", 0);
    return 0;
}

int cmd_fit_decay(const std::string& in, const std::string& model, const std::string& out_arg, std::uint64_t seed,
                  const std::string& cmdline) {
    const auto t = read_csv(in);
    const int cx = t.column("x") >= 0 ? t.column("x") : 0;
    const int cy = t.column("y") >= 0 ? t.column("y") : 1;
    std::vector<double> x, y;
    for (const auto& r : t.rows) {
        if (static_cast<int>(r.size()) <= std::max(cx, cy)) throw ShapeError("short CSV row in '" + in + "'");
        x.push_back(cell_number(r[static_cast<std::size_t>(cx)], "x"));
        y.push_back(cell_number(r[static_cast<std::size_t>(cy)], "y"));
    }
    fitting::DecayFitOptions opt;
    opt.seed = seed;
    json j;
    if (model == "auto") {
        const auto fits = fitting::select_decay_model(x, y, fitting::kDecayModels, opt);
        if (fits.empty()) throw FitFailure("no decay model could be fitted");
        j = fit_json(fits.front());
        json cands = json::array();
        for (const auto& f : fits) cands.push_back({{"model", f.model}, {"aicc", f.aicc}, {"rss", f.rss}});
        j["candidates"] = cands;
    } else {
        j = fit_json(fitting::fit_decay(x, y, model, opt));
    }
    const auto tgt = split_target(out_arg, "fit.json");
    OutputDir out(tgt.dir, cmdline);
    out.write_json(tgt.name, j);
    out.finish("kind = decay\nmodel = " + model + "\nin = " + in + "\n", seed);
    return 0;
}

int cmd_fit_spectrum(const std::string& in, const std::string& out_arg, bool shared, const std::string& cmdline) {
    const auto t = read_csv(in);
    std::vector<std::vector<double>> eigs(t.header.size());
    for (const auto& r : t.rows)
        for (std::size_t c = 0; c < r.size() && c < eigs.size(); ++c)
            if (!r[c].empty()) eigs[c].push_back(cell_number(r[c], t.header[c]));
    for (auto& e : eigs) std::sort(e.begin(), e.end(), std::greater<>());
    const auto fit = fitting::fit_spectrum(eigs, shared);
    json params = json::object();
    std::vector<double> residuals;
    std::size_t n = 0;
    for (std::size_t c = 0; c < eigs.size(); ++c) {
        const auto& m = fit.models[c];
        params["sigma_f2_" + t.header[c]] = m.sigma_f2;
        params["beta_" + t.header[c]] = m.beta;
        if (!shared) {
            params["i_c_" + t.header[c]] = m.i_c;
            params["nu_" + t.header[c]] = m.nu;
        }
        for (std::size_t i = 1; i <= fit.fit_ranks[c]; ++i)
            residuals.push_back(std::log(m.eval(static_cast<double>(i))) - std::log(eigs[c][i - 1]));
        n += fit.fit_ranks[c];
    }
    if (shared) {
        params["i_c"] = fit.models[0].i_c;
        params["nu"] = fit.models[0].nu;
    }
    const std::size_t k = shared ? 2 * eigs.size() + 2 : 4 * eigs.size();
    json warnings = json::array();
    for (std::size_t c = 0; c < eigs.size(); ++c)
        if (fit.fit_ranks[c] < eigs[c].size())
            warnings.push_back(t.header[c] + ": " + std::to_string(eigs[c].size() - fit.fit_ranks[c]) +
                               " tail eigenvalues below 1e-12 of the leading one excluded");
    json j = {{"model", "truncated_power_law"}, {"params", params}, {"rss", fit.rss}, {"n", n}, {"k", k},
              {"aicc", n > k + 1 ? fitting::aicc(fit.rss, n, k) : std::numeric_limits<double>::quiet_NaN()},
              {"residuals", residuals}, {"warnings", warnings}};
    const auto tgt = split_target(out_arg, "fit.json");
    OutputDir out(tgt.dir, cmdline);
    out.write_json(tgt.name, j);
    out.finish(std::string("kind = spectrum\nshared_cutoff = ") + (shared ? "true" : "false") + "\nin = " + in + "\n", 0);
    return 0;
}

int cmd_fit_joint(const std::string& in, const std::string& out_arg, std::uint64_t seed, int jobs, const std::string& cmdline) {
    const auto t = read_csv(in);
    const int c_tag = t.require("tag"), c_var = t.column("variant"), c_P = t.require("P"), c_kc = t.require("k_c"),
              c_ke = t.require("k_e"), c_m = t.require("metric");
    std::vector<fitting::Experiment> ex;
    for (const auto& r : t.rows) {
        const std::string& tag = r.at(static_cast<std::size_t>(c_tag));
        if (ex.empty() || ex.back().tag != tag) {
            fitting::Experiment e;
            e.tag = tag;
            e.variant = c_var >= 0 ? fitting::parse_variant(r.at(static_cast<std::size_t>(c_var))) : fitting::Variant::none;
            e.P = cell_number(r.at(static_cast<std::size_t>(c_P)), "P");
            e.k_c = cell_number(r.at(static_cast<std::size_t>(c_kc)), "k_c");
            ex.push_back(e);
        }
        ex.back().k_e.push_back(cell_number(r.at(static_cast<std::size_t>(c_ke)), "k_e"));
        ex.back().metric.push_back(cell_number(r.at(static_cast<std::size_t>(c_m)), "metric"));
    }
    fitting::JointFitSpec spec;
    spec.de.seed = SeedSplitter(seed).derive("de");
    spec.de.jobs = jobs;
    const auto res = fitting::joint_theory_fit(ex, spec);
    json params = {{"alpha", res.shared.alpha}, {"beta", res.shared.beta}, {"gamma", res.shared.gamma},
                   {"q_inf", res.shared.q_inf}, {"a", res.a},               {"b", res.b}};
    for (std::size_t e = 0; e < ex.size(); ++e)
        if (ex[e].variant != fitting::Variant::none)
            params[std::string(to_string(ex[e].variant)) + "_" + ex[e].tag] = res.variant_values[e];
    std::vector<double> residuals;
    for (const auto& r : res.residuals) residuals.insert(residuals.end(), r.begin(), r.end());
    json warnings = json::array();
    if (res.nm_max_iter) warnings.push_back("Nelder-Mead stopped at its iteration limit");
    json j = {{"model", "joint_theory"},
              {"params", params},
              {"rss", res.rss},
              {"n", res.n_points},
              {"k", res.n_free},
              {"aicc", res.n_points > res.n_free + 1 ? fitting::aicc(res.rss, res.n_points, res.n_free)
                                                     : std::numeric_limits<double>::quiet_NaN()},
              {"residuals", residuals},
              {"warnings", warnings},
              {"rms", res.rms},
              {"pearson_r", res.pearson_r}};
    const auto tgt = split_target(out_arg, "fit.json");
    OutputDir out(tgt.dir, cmdline);
    out.write_json(tgt.name, j);
    out.finish("kind = joint\nin = " + in + "\n", seed);
    return 0;
}

int cmd_spectrum(const std::vector<std::string>& recs, const std::vector<std::string>& taps, int n_boot,
                 const std::string& out_arg, std::uint64_t seed, const std::string& cmdline) {
    std::vector<Recording> rs;
    for (const auto& p : recs) rs.push_back(read_recording(p));
    std::vector<TapPoint> tp;
    for (const auto& t : taps) tp.push_back(parse_tap(t));
    if (!tp.empty() && tp.size() != rs.size()) throw InvalidConfig("give one --tap per --rec", "tap");
    const auto beta = sweeps::measure_beta(rs, tp);
    json conds = json::array();
    for (std::size_t c = 0; c < rs.size(); ++c) {
        const auto& m = beta.fit.models[c];
        conds.push_back({{"rec", recs[c]},
                         {"eigenvalues", fitting::covariance_spectrum(rs[c])},
                         {"fit_ranks", beta.fit.fit_ranks[c]},
                         {"sigma_f2", m.sigma_f2},
                         {"beta", m.beta}});
    }
    json j = {{"conditions", conds},
              {"i_c", beta.fit.models[0].i_c},
              {"nu", beta.fit.models[0].nu},
              {"rss", beta.fit.rss},
              {"shared_cutoff", beta.fit.shared_cutoff},
              {"warnings", beta.warnings}};
    if (n_boot > 0) {
        const auto b = fitting::bootstrap_betas(rs, n_boot, seed);
        j["bootstrap"] = {{"n", n_boot}, {"beta", b.beta}, {"median", b.median}, {"q05", b.q05}, {"q95", b.q95}};
    }
    const auto tgt = split_target(out_arg, "spectrum.json");
    OutputDir out(tgt.dir, cmdline);
    out.write_json(tgt.name, j);
    std::string echo = "bootstrap = " + std::to_string(n_boot) + "\n";
    for (const auto& r : recs) echo += "rec = " + r + "\n";
    out.finish(echo, seed);
    return 0;
}

int cmd_stats(const std::string& rec_path, const stats::StatsOptions& opt, const std::string& out_arg,
              const std::string& cmdline) {
    const auto rec = read_recording(rec_path);
    const auto s = stats::activity_stats(rec, opt);
    json cfg = {{"rec", rec_path},
                {"threshold", opt.threshold},
                {"fano_window", opt.fano_window},
                {"max_corr_neurons", opt.max_corr_neurons},
                {"corr_seed", opt.corr_seed},
                {"hist_bins", opt.hist_bins},
                {"n_rec", rec.n_rec},
                {"steps", rec.steps},
                {"n_traj", rec.n_traj},
                {"burn_in", rec.burn_in}};
    json j = {{"config", cfg},
              {"active_fraction", s.active_fraction},
              {"firing_fraction", s.firing_fraction},
              {"firing_hist", histogram_json(s.firing_hist)},
              {"isi", s.isi},
              {"isi_present", s.isi_present},
              {"isi_mean", s.isi_present ? json(s.isi_mean) : json(nullptr)},
              {"cv", s.isi_present ? json(s.cv) : json(nullptr)},
              {"fano", s.fano ? json(*s.fano) : json(nullptr)},
              {"corr_neurons", s.corr_neurons},
              {"correlations", s.correlations},
              {"corr_hist", histogram_json(s.corr_hist)},
              {"skew", s.skew},
              {"kurtosis", s.kurtosis},
              {"lorenz_present", s.lorenz_present}};
    if (s.lorenz_present) j["lorenz"] = {{"rank_share", s.lorenz.rank_share}, {"value_share", s.lorenz.value_share}, {"gini", s.lorenz.gini}};
    const auto tgt = split_target(out_arg, "stats.json");
    OutputDir out(tgt.dir, cmdline);
    out.write_json(tgt.name, j);
    out.finish(cfg.dump() + "\n", opt.corr_seed);
    return 0;
}

int cmd_recipe(int n_rec, int d_inp, const std::string& variant, const std::string& out_arg, const std::string& cmdline) {
    RecipeVariant v;
    if (variant == "ceil")
        v = RecipeVariant::ceil;
    else if (variant == "floor")
        v = RecipeVariant::floor;
    else
        throw InvalidConfig("expected ceil or floor", "variant");
    const auto r = pareto_candidate(n_rec, d_inp, v);
    const auto pc = count_params(r.neuron);
    std::ostringstream os;
    os << "# " << variant << " recipe for N_rec = " << n_rec << ", d_inp = " << d_inp << "\n"
       << "# k_e = " << pc.k_e << ", k_c = " << pc.k_c << ", P = " << static_cast<std::size_t>(n_rec) * (pc.k_e + pc.k_c)
       << "\n"
       << "N_rec = " << n_rec << "\n"
       << "d_m = " << r.neuron.d_m << "\n"
       << "l_mlp = " << r.neuron.l_mlp << "\n"
       << "d_mlp = " << r.neuron.d_mlp << "\n"
       << "d_tree = " << r.neuron.d_tree << "\n"
       << "d_branch = " << r.neuron.d_branch << "\n"
       << "rho_rec = " << elmnet::detail::fmt_double(r.rho_rec) << "\n";
    std::cout << os.str();
    if (!out_arg.empty()) {
        const auto tgt = split_target(out_arg, "recipe.cfg");
        OutputDir out(tgt.dir, cmdline);
        out.write_text(tgt.name, os.str());
        out.finish(os.str(), 0);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"elmnet: expressive leaky memory networks, budget theory and fitting"};
    app.require_subcommand(1);
    const std::string cmdline = join_args(argc, argv);
    int rc = 0;

    Common train_o;
    auto* train = app.add_subcommand("train", "train one network");
    add_common(train, train_o);

    Common sweep_o;
    auto* sweep = app.add_subcommand("sweep", "grid sweep with repeats");
    add_common(sweep, sweep_o);

    auto* theory = app.add_subcommand("theory", "closed-form budget model");
    theory->require_subcommand(1);
    auto* tsweep = theory->add_subcommand("sweep", "I_rep over a k_e grid");
    std::string t_params, t_grid = "1:10000:41", t_out;
    tsweep->add_option("--params", t_params, "theory parameter file")->required();
    tsweep->add_option("--ke-grid", t_grid, "lo:hi:n (geometric) or comma list");
    tsweep->add_option("--out", t_out, "output CSV")->required();

    auto* fit = app.add_subcommand("fit", "curve fitting");
    fit->require_subcommand(1);
    std::string f_in, f_out, f_model = "auto";
    std::uint64_t f_seed = 0;
    int f_jobs = 0;
    bool f_independent = false;
    auto* fdecay = fit->add_subcommand("decay", "decay-model fit with AICc selection");
    auto* fspec = fit->add_subcommand("spectrum", "truncated power-law spectrum fit");
    auto* fjoint = fit->add_subcommand("joint", "joint theory fit");
    for (auto* s : {fdecay, fspec, fjoint}) {
        s->add_option("--in", f_in, "input CSV")->required();
        s->add_option("--out", f_out, "output JSON")->required();
        s->add_option("--seed", f_seed, "seed");
    }
    fdecay->add_option("--model", f_model, "model id or auto");
    fspec->add_flag("--independent", f_independent, "fit each column with its own cutoff");
    fjoint->add_option("--jobs", f_jobs, "worker threads");

    auto* spectrum = app.add_subcommand("spectrum", "covariance spectrum and beta of recordings");
    std::vector<std::string> s_recs, s_taps;
    std::string s_out;
    int s_boot = 0;
    std::uint64_t s_seed = 0;
    spectrum->add_option("--rec", s_recs, "recording file(s), one per condition")->required();
    spectrum->add_option("--tap", s_taps, "tap of each recording: memory_readout or activity");
    spectrum->add_option("--bootstrap", s_boot, "bootstrap resamples");
    spectrum->add_option("--seed", s_seed, "bootstrap seed");
    spectrum->add_option("--out", s_out, "output JSON")->required();

    auto* stat = app.add_subcommand("stats", "activity statistics of a recording");
    std::string st_rec, st_out;
    stats::StatsOptions st_opt;
    stat->add_option("--rec", st_rec, "recording file")->required();
    stat->add_option("--out", st_out, "output JSON")->required();
    stat->add_option("--threshold", st_opt.threshold, "activity threshold");
    stat->add_option("--fano-window", st_opt.fano_window, "Fano window (steps)");
    stat->add_option("--max-corr", st_opt.max_corr_neurons, "neurons sampled for correlations");
    stat->add_option("--seed", st_opt.corr_seed, "correlation subset seed");

    auto* recipe = app.add_subcommand("recipe", "single-knob neuron recipe");
    int r_n = 0, r_d = 0;
    std::string r_var = "ceil", r_out;
    recipe->add_option("--n-rec", r_n, "recurrent neurons")->required();
    recipe->add_option("--d-inp", r_d, "input width")->required();
    recipe->add_option("--variant", r_var, "ceil or floor");
    recipe->add_option("--out", r_out, "optional output file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train)
            rc = cmd_train(train_o, cmdline);
        else if (*sweep)
            rc = cmd_sweep(sweep_o, cmdline);
        else if (*tsweep)
            rc = cmd_theory_sweep(t_params, t_grid, t_out, cmdline);
        else if (*fdecay)
            rc = cmd_fit_decay(f_in, f_model, f_out, f_seed, cmdline);
        else if (*fspec)
            rc = cmd_fit_spectrum(f_in, f_out, !f_independent, cmdline);
        else if (*fjoint)
            rc = cmd_fit_joint(f_in, f_out, f_seed, resolve_jobs(f_jobs), cmdline);
        else if (*spectrum)
            rc = cmd_spectrum(s_recs, s_taps, s_boot, s_out, s_seed, cmdline);
        else if (*stat)
            rc = cmd_stats(st_rec, st_opt, st_out, cmdline);
        else if (*recipe)
            rc = cmd_recipe(r_n, r_d, r_var, r_out, cmdline);
    } catch (const NumericFault& e) {
        std::cerr << "numeric fault: " << e.what() << "\n";
        return 2;
    } catch (const FitFailure& e) {
        std::cerr << "fit failed: " << e.what() << "\n";
        return 2;
    } catch (const InvalidConfig& e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return rc;
}
