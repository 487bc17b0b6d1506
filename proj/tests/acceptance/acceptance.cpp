// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/float128.hpp>

#include "elmnet/fitting/decay.hpp"
#include "elmnet/fitting/joint.hpp"
#include "elmnet/fitting/spectrum.hpp"
#include "elmnet/network.hpp"
#include "elmnet/stats.hpp"
#include "elmnet/sweeps.hpp"
#include "elmnet/theory.hpp"
#include "elmnet/training/bptt.hpp"
#include "elmnet/training/trainer.hpp"
#include "support/cli_runner.hpp"

using namespace elmnet;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;  ///< wall-clock limit, 0 for none
    std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds_since(std::clock_t c0) { return static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC; }

// 1 ------------------------------------------------------------------------

Outcome gradient_oracle() {
    NetworkConfig cfg;
    cfg.hidden.d_m = 3;
    cfg.hidden.d_mlp = 6;
    cfg.hidden.d_tree = 3;
    cfg.hidden.d_branch = 2;
    cfg.hidden.tau_max = 20.0;
    cfg.n_rec = 4;
    cfg.rho_rec = 0.5;
    cfg.n_readout = 3;
    cfg.readout.d_tree = 2;
    cfg.readout.d_branch = 2;
    cfg.d_inp = 5;
    cfg.d_out = 4;
    const int T = 10;
    Network net(cfg, 7);

    Rng rng(99);
    std::vector<training::Example> batch(2);
    for (auto& ex : batch) {
        ex.input.steps = T;
        ex.input.width = cfg.d_inp;
        for (int k = 0; k < T * cfg.d_inp; ++k) ex.input.values.push_back(rng.normal());
        for (int t = 0; t < T; ++t) ex.targets.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.d_out))));
    }
    training::BatchOptions opt;
    opt.loss.label_smoothing = 0.1;
    opt.loss.mlp_l2 = 0.05;
    opt.loss.act_l1 = 0.1;

    std::vector<double> p(net.params().begin(), net.params().end());
    const auto analytic = training::bptt_grads(net, p, batch, {}, opt).grads;
    const double h = 1e-4;
    double worst = 0.0;
    std::size_t worst_k = 0, bad = 0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double keep = p[k];
        p[k] = keep + h;
        const double up = training::evaluate_batch(net, p, batch, {}, opt).loss;
        p[k] = keep - h;
        const double dn = training::evaluate_batch(net, p, batch, {}, opt).loss;
        p[k] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double err = std::abs(analytic[k] - fd);
        const double scale = std::max(std::abs(analytic[k]), std::abs(fd));
        if (err > std::max(1e-4 * scale, 1e-8)) ++bad;
        const double rel = scale > 1e-8 ? err / scale : 0.0;
        if (rel > worst) {
            worst = rel;
            worst_k = k;
        }
    }
    return {bad == 0, fmt("%zu params, %zu outside tolerance, worst relative error %.2e at %s", p.size(), bad, worst,
                          net.param_path(worst_k).c_str())};
}

// 2 ------------------------------------------------------------------------

Outcome i_rep_oracle() {
    using boost::multiprecision::float128;
    Rng rng(2024);
    double worst = 0.0, t_lib = 0.0;
    int draws = 0;
    long terms = 0;
    while (draws < 1000) {
        theory::TheoryParams th;
        th.alpha = rng.uniform(0.3, 3.0);
        th.beta = rng.uniform(0.3, 3.0);
        th.gamma = std::exp(rng.uniform(std::log(1e-4), std::log(0.1)));
        th.q_inf = std::exp(rng.uniform(std::log(1e-6), std::log(0.5)));
        th.P = std::exp(rng.uniform(std::log(1e3), std::log(1e6)));
        th.k_c = rng.uniform(0.0, 300.0);
        const double k_e = std::exp(rng.uniform(0.0, std::log(1e5)));
        const double n_modes = std::floor(th.P / (k_e + th.k_c));
        if (n_modes < 1.0 || n_modes > 1000.0) continue;
        ++draws;

        const auto t0 = std::chrono::steady_clock::now();
        const double lib = theory::i_rep(k_e, th);
        t_lib += seconds_since(t0);

        float128 s = boost::multiprecision::pow(float128(th.gamma) * float128(k_e), float128(th.alpha));
        s = std::min(s, 1 / float128(th.q_inf));
        float128 acc = 0;
        const long N = static_cast<long>(n_modes);
        for (long i = 1; i <= N; ++i) acc += boost::multiprecision::log1p(s * boost::multiprecision::pow(float128(i), -float128(th.beta)));
        terms += N;
        const float128 ref = acc / (2 * boost::multiprecision::log(float128(2)));
        worst = std::max(worst, static_cast<double>(boost::multiprecision::abs((float128(lib) - ref) / ref)));
    }
    return {worst <= 1e-10, fmt("1000 draws (%ld modes), worst relative error %.2e, i_rep time %.3f s", terms, worst, t_lib)};
}

// 3 ------------------------------------------------------------------------

Outcome crossing_identity() {
    double worst = 0.0;
    for (double g : {0.003, 0.01, 0.03}) {
        theory::TheoryParams th;
        th.gamma = g;
        th.P = 1e4;
        th.k_c = 100.0;
        const double k_x = theory::crossing(th).k_x;
        std::vector<double> v;
        for (double a : {0.5, 1.0, 2.0}) {
            th.alpha = a;
            v.push_back(theory::i_rep(k_x, th));
        }
        for (double x : v) worst = std::max(worst, std::abs(x - v[0]) / std::abs(v[0]));
    }
    return {worst <= 1e-12, fmt("max relative spread across alpha %.2e", worst)};
}

// 4 ------------------------------------------------------------------------

Outcome low_snr_slope() {
    double worst = 0.0;
    std::string at;
    bool flagged = false;
    for (double a : {0.5, 1.0, 2.0})
        for (double b : {0.5, 1.0, 2.0}) {
            theory::TheoryParams th;
            th.alpha = a;
            th.beta = b;
            const auto [lo, hi] = theory::low_snr_decade(th);
            const auto r = theory::low_snr_slope(th, lo, hi);
            flagged |= r.precondition_violated;
            const double dev = std::abs(r.eta - a) / a;
            if (dev > worst) {
                worst = dev;
                at = fmt("alpha=%g beta=%g eta=%.4f", a, b, r.eta);
            }
        }
    return {worst <= 0.05 && !flagged, fmt("s <= 0.1 decade, worst relative deviation %.4f (%s)", worst, at.c_str())};
}

// 5 ------------------------------------------------------------------------

Outcome budget_shift() {
    theory::TheoryParams th;
    th.alpha = 1.0;
    th.beta = 1.0;
    th.gamma = 0.01;
    th.q_inf = 1e-4;
    th.k_c = 100.0;
    const auto grid = theory::geometric_grid(1.0, 1e5, 100);
    std::vector<double> opt;
    std::string trail;
    for (double P : {1e3, 1e4, 1e5, 1e6}) {
        th.P = P;
        opt.push_back(theory::optimal_ke(th, grid).k_e);
        trail += fmt("%s%.4g", trail.empty() ? "" : " <= ", opt.back());
    }
    return {std::is_sorted(opt.begin(), opt.end()), "k_e* = " + trail};
}

// 6 ------------------------------------------------------------------------

Outcome decay_recovery() {
    using fitting::DecayModel;
    Rng rng(123);
    const DecayModel models[] = {DecayModel::power, DecayModel::power_max_floor, DecayModel::exponential};
    int selected = 0, recovered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const double alpha = rng.uniform(0.5, 1.5), c = rng.uniform(1.0, 10.0);
        const double knee = std::pow(10.0, rng.uniform(1.5, 2.5));
        const double floor = c * std::pow(knee, -alpha);
        std::vector<double> x, y;
        for (int i = 0; i < 25; ++i) {
            const double xi = std::pow(10.0, 4.0 * i / 24.0);
            x.push_back(xi);
            y.push_back(std::max(c * std::pow(xi, -alpha), floor) * std::exp(0.01 * rng.normal()));
        }
        const auto ranked = fitting::select_decay_model(x, y, models);
        if (!ranked.empty() && ranked.front().model == "power_max_floor") ++selected;
        const auto mf = fitting::fit_decay(x, y, DecayModel::power_max_floor);
        if (std::abs(mf.param("a") - alpha) <= 0.1 * alpha) ++recovered;
    }
    return {selected >= 95 && recovered >= 90,
            fmt("power_max_floor selected %d/100, exponent within 10%% in %d/100", selected, recovered)};
}

// 7 ------------------------------------------------------------------------

Recording truncated_power_law_data(double beta, std::uint64_t seed) {
    const int n = 512, steps = 512, n_traj = 50;
    Rng rng(seed);
    Eigen::MatrixXd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
    Eigen::VectorXd sd(n);
    for (int i = 0; i < n; ++i) {
        const double r = i + 1.0;
        sd[i] = std::sqrt(std::pow(r, -beta) * std::exp(-std::pow(r / 200.0, 1.5)));
    }
    const Eigen::MatrixXd M = Q * sd.asDiagonal();
    Eigen::MatrixXd Z(n, steps * n_traj);
    for (Eigen::Index c = 0; c < Z.cols(); ++c)
        for (int i = 0; i < n; ++i) Z(i, c) = rng.normal();
    const Eigen::MatrixXd X = M * Z;
    Recording rec;
    rec.n_rec = n;
    rec.steps = steps;
    rec.n_traj = n_traj;
    rec.data.resize(static_cast<std::size_t>(X.size()));
    for (Eigen::Index c = 0; c < X.cols(); ++c)
        for (int i = 0; i < n; ++i) rec.data[static_cast<std::size_t>(c) * n + i] = static_cast<float>(X(i, c));
    return rec;
}

Outcome spectrum_recovery() {
    const std::vector<Recording> recs{truncated_power_law_data(1.0, 1), truncated_power_law_data(1.4, 2)};
    std::vector<std::vector<double>> eigs;
    for (const auto& r : recs) eigs.push_back(fitting::covariance_spectrum(r));
    const auto single0 = fitting::fit_spectrum({eigs[0]}), single1 = fitting::fit_spectrum({eigs[1]});
    const auto joint = fitting::fit_spectrum(eigs, true);
    const double b0 = single0.models[0].beta, b1 = single1.models[0].beta;
    const bool close = std::abs(b0 - 1.0) <= 0.1 && std::abs(b1 - 1.4) <= 0.1 && std::abs(joint.models[0].beta - 1.0) <= 0.1 &&
                       std::abs(joint.models[1].beta - 1.4) <= 0.1;
    const auto boot = fitting::bootstrap_betas(recs, 50, 7);
    int ordered = 0;
    for (std::size_t k = 0; k < boot.beta[0].size(); ++k) ordered += boot.beta[0][k] < boot.beta[1][k];
    return {close && ordered == 50, fmt("beta-hat %.3f / %.3f (joint %.3f / %.3f), ordering correct in %d/50 resamples", b0, b1,
                                        joint.models[0].beta, joint.models[1].beta, ordered)};
}

// 8 ------------------------------------------------------------------------

Outcome ar1_diagnostic() {
    Rng rng(31);
    const double phi = 0.968;
    std::vector<double> r(20000);
    double x = rng.normal() / std::sqrt(1.0 - phi * phi);
    for (auto& v : r) {
        x = phi * x + rng.normal();
        v = x;
    }
    const auto res = stats::ar1_correct(r);
    const bool ok = std::abs(res.phi - phi) <= 0.01 && res.tau_after < 2.0 && res.tau_before > 20.0;
    return {ok, fmt("phi-hat %.4f, tau raw %.1f, tau whitened %.2f", res.phi, res.tau_before, res.tau_after)};
}

// 9 ------------------------------------------------------------------------

Outcome joint_fit_closed_loop() {
    theory::TheoryParams truth;
    truth.alpha = 1.0;
    truth.beta = 1.2;
    truth.gamma = 0.01;
    truth.q_inf = 0.05;
    truth.k_c = 50.0;
    const double a = 1.0, b = 1.6;
    std::vector<fitting::Experiment> ex(3);
    ex[0] = {"budget", fitting::Variant::budget, 8e4, 50.0, {}, {}};
    ex[1] = {"alpha", fitting::Variant::alpha, 2e4, 50.0, {}, {}};
    ex[2] = {"beta", fitting::Variant::beta, 2e4, 50.0, {}, {}};
    Rng rng(123);
    double lo = 1e300, hi = -1e300;
    for (std::size_t e = 0; e < ex.size(); ++e) {
        auto th = truth;
        th.P = ex[e].P;
        if (e == 1) th.alpha = 0.6;
        if (e == 2) th.beta = 0.7;
        for (double k : theory::geometric_grid(5.0, 5000.0, 14)) {
            const double m = (a * -theory::i_rep(k, th) + b) * (1.0 + 0.005 * rng.normal());
            ex[e].k_e.push_back(k);
            ex[e].metric.push_back(m);
            lo = std::min(lo, m);
            hi = std::max(hi, m);
        }
    }
    fitting::JointFitSpec spec;
    spec.de.seed = 1;
    const auto r = fitting::joint_theory_fit(ex, spec);
    auto rel = [](double got, double want) { return std::abs(got - want) / std::abs(want); };
    const bool affine = rel(r.a, a) <= 0.05 && rel(r.b, b) <= 0.05;
    const bool shared = rel(r.shared.alpha, truth.alpha) <= 0.15 && rel(r.shared.beta, truth.beta) <= 0.15;
    const double rms_frac = r.rms / (hi - lo);
    return {affine && shared && rms_frac < 0.01,
            fmt("%zu points: a %.4f b %.4f alpha %.4f beta %.4f (variants alpha %.3f beta %.3f), rms %.4f%% of range",
                r.n_points, r.a, r.b, r.shared.alpha, r.shared.beta, r.variant_values[1], r.variant_values[2], 100.0 * rms_frac)};
}

// 10 -----------------------------------------------------------------------

NetworkConfig spike_network(const tasks::SpikeAddingSpec& spec, int n_rec) {
    NetworkConfig nc;
    nc.hidden.d_m = 4;
    nc.hidden.d_mlp = 16;
    nc.hidden.d_tree = 8;
    nc.hidden.d_branch = 4;
    nc.hidden.tau_max = 50.0;
    nc.n_rec = n_rec;
    nc.rho_rec = 0.3;
    nc.n_readout = 9;
    nc.readout.d_tree = 4;
    nc.readout.d_branch = 4;
    nc.d_inp = spec.channels;
    nc.d_out = spec.n_classes();
    return nc;
}

training::TrainConfig spike_training() {
    training::TrainConfig tc;
    tc.steps = 600;
    tc.batch = 16;
    tc.eval_every = 100;
    tc.n_train = 2000;
    tc.n_valid = 300;
    tc.n_test = 500;
    tc.optim.lr = 3e-3;
    tc.optim.warmup_steps = 50;
    return tc;
}

Outcome end_to_end_learning() {
    tasks::SpikeAddingSpec spec;
    spec.seed = 11;
    const auto tc = spike_training();
    const auto data = training::make_spike_task(spec, tc);
    std::string detail = fmt("spike (%d classes) N_rec=32 d_m=4:", spec.n_classes());
    int good = 0;
    double worst_cpu = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto c0 = std::clock();
        Network net(spike_network(spec, 32), seed);
        const auto r = training::train_run(net, data, tc, seed);
        const double cpu = cpu_seconds_since(c0);
        worst_cpu = std::max(worst_cpu, cpu);
        good += r.test.metric >= 0.30 && cpu < 300.0;
        detail += fmt(" %.3f", r.test.metric);
    }
    detail += fmt(" (max %.0f CPU-s);", worst_cpu);

    const auto c0 = std::clock();
    auto corpus = tasks::make_byte_corpus(tasks::synthetic_text(1 << 20, 5), 50);
    const double baseline = std::log2(static_cast<double>(corpus.vocab_size())) - 0.5;
    const auto bytes = training::make_byte_task(std::move(corpus));
    training::TrainConfig lm;
    lm.steps = 300;
    lm.batch = 16;
    lm.eval_every = 100;
    lm.valid_tokens = 5000;
    lm.test_tokens = 20000;
    lm.optim.lr = 3e-3;
    lm.optim.warmup_steps = 50;
    lm.carry.decay_steps = 150;
    NetworkConfig nc;
    nc.hidden.d_m = 6;
    nc.hidden.d_mlp = 16;
    nc.hidden.d_tree = 8;
    nc.hidden.d_branch = 4;
    nc.hidden.tau_max = 100.0;
    nc.n_rec = 64;
    nc.rho_rec = 0.5;
    nc.n_readout = 32;
    nc.readout.d_tree = 4;
    nc.readout.d_branch = 4;
    nc.d_inp = bytes.d_inp();
    nc.d_out = bytes.d_out();
    Network net(nc, 1);
    const auto r = training::train_run(net, bytes, lm, 1);
    const double cpu = cpu_seconds_since(c0);
    detail += fmt(" bytes (1 MiB, |V|=%d) N_rec=64: test BPC %.3f vs threshold %.3f (%.0f CPU-s)", bytes.d_out(), r.test.metric,
                  baseline, cpu);
    return {good == 3 && r.test.metric < baseline && cpu < 600.0, detail};
}

// 11 -----------------------------------------------------------------------

Outcome tradeoff_interiority() {
    RunConfig c;
    c.spike.seed = 11;
    c.train = spike_training();
    c.net = spike_network(c.spike, 1);
    c.seed = 1;
    const auto data = make_task_data(c);
    sweeps::SweepSpec s;
    s.axis = sweeps::SweepAxis::n_vs_ke;
    s.budget = 3000.0;
    s.grid = {1, 2, 4, 8, 16};
    s.repeats = 3;
    const auto res = sweeps::run_sweep(c, data, s);
    std::map<std::uint64_t, std::map<double, double>> by_seed;
    for (const auto& row : res.rows) by_seed[row.seed][row.axis_value] = row.metric;
    int interior = 0;
    std::string detail;
    for (const auto& [seed, curve] : by_seed) {
        std::vector<double> m;
        for (const auto& [v, err] : curve) m.push_back(err);
        const bool ok = m.size() == s.grid.size() && sweeps::has_interior_optimum(m);
        interior += ok;
        detail += fmt("%sseed %llu:", detail.empty() ? "" : "; ", static_cast<unsigned long long>(seed));
        for (double x : m) detail += fmt(" %.3f", x);
    }
    return {interior >= 2 && res.skipped.empty(), fmt("interior best in %d/%zu seeds (error per point: ", interior, by_seed.size()) + detail + ")"};
}

// 12 -----------------------------------------------------------------------

Outcome init_stability() {
    std::string detail;
    bool ok = true;
    for (int n : {64, 256}) {
        NetworkConfig c;
        c.n_rec = n;
        c.d_inp = 32;
        c.d_out = 9;
        c.n_readout = 9;
        Network net(c, 5);
        Rng rng(17);
        double active = 0.0, peak = 0.0;
        for (int T : {200, 10000}) {
            InputSequence in;
            in.steps = T;
            in.width = c.d_inp;
            for (int k = 0; k < T * c.d_inp; ++k) in.values.push_back(rng.normal());
            NetworkTaps taps;
            taps.record = true;
            ForwardOptions fo;
            fo.taps = &taps;
            auto st = net.zero_state();
            net.forward(in, st, fo);
            if (T == 200) {
                for (double a : taps.activity) active += a > 0.0;
                active /= static_cast<double>(taps.activity.size());
            } else {
                for (double a : taps.activity) peak = std::max(peak, std::abs(a));
                for (double a : taps.readout) peak = std::max(peak, std::abs(a));
            }
        }
        ok &= active >= 0.35 && active <= 0.65 && peak < 1e3;
        detail += fmt("%sN_rec=%d active %.3f, max |activation| %.3g", detail.empty() ? "" : "; ", n, active, peak);
    }
    return {ok, detail};
}

// 13 -----------------------------------------------------------------------

Outcome cli_determinism() {
    namespace fs = std::filesystem;
    const std::string cli = ELMNET_CLI_PATH;
    const auto root = testing::scratch_dir("acceptance_cli");
    auto q = [](const fs::path& p) { return testing::shell_quote(p.string()); };

    testing::spit(root / "train.cfg", testing::kTinyTrainConfig);
    testing::spit(root / "bytes.cfg", R"(task = bytes
task.synthetic_bytes = 20000
task.window = 20
d_m = 2
d_mlp = 4
d_tree = 3
d_branch = 3
N_rec = 8
n_readout = 4
readout.d_tree = 2
readout.d_branch = 2
train.steps = 10
train.batch = 4
train.eval_every = 5
train.valid_tokens = 400
train.test_tokens = 400
record.n_traj = 3
record.steps = 30
record.burn_in = 5
)");
    testing::spit(root / "sweep.cfg",
                  std::string(testing::kTinyTrainConfig) + "sweep.axis = N_rec\nsweep.grid = 6,10\nsweep.repeats = 2\n");
    testing::spit(root / "theory.cfg", "alpha = 1\nbeta = 1.2\ngamma = 0.01\nq_inf = 1e-3\nP = 20000\nk_c = 50\n");

    std::ostringstream decay, eig, joint;
    Rng rng(5);
    decay << "x,y\n";
    for (int i = 0; i < 16; ++i) {
        const double x = std::pow(10.0, i / 5.0);
        decay << x << ',' << std::max(3.0 * std::pow(x, -0.8), 0.02) * std::exp(0.01 * rng.normal()) << '\n';
    }
    eig << "low,high\n";
    for (int i = 1; i <= 40; ++i)
        eig << std::pow(i, -1.0) * std::exp(-i / 30.0) << ',' << std::pow(i, -1.5) * std::exp(-i / 30.0) << '\n';
    joint << "tag,variant,P,k_c,k_e,metric\n";
    for (const auto& [tag, P] : {std::pair{"small", 1e4}, std::pair{"large", 4e4}}) {
        theory::TheoryParams th;
        th.beta = 1.2;
        th.q_inf = 0.01;
        th.k_c = 50.0;
        th.P = P;
        for (double k : theory::geometric_grid(5.0, 2000.0, 8))
            joint << tag << ",none," << P << ",50," << k << ',' << 2.0 - theory::i_rep(k, th) << '\n';
    }
    testing::spit(root / "decay.csv", decay.str());
    testing::spit(root / "eig.csv", eig.str());
    testing::spit(root / "joint.csv", joint.str());

    // Recording used by spectrum and stats, produced once up front.
    const auto rec_run = testing::run_cli(cli, "train --config " + q(root / "train.cfg") + " --seed 3 --out " + q(root / "rec_src"));
    if (rec_run.code != 0) return {false, "could not produce recording: " + rec_run.output};
    const auto rec = root / "rec_src" / "recording.elmr";

    const std::vector<std::pair<std::string, std::string>> commands{
        {"train", "train --config " + q(root / "train.cfg") + " --seed 4 --out @"},
        {"train(bytes)", "train --config " + q(root / "bytes.cfg") + " --seed 4 --out @"},
        {"sweep", "sweep --config " + q(root / "sweep.cfg") + " --seed 2 --jobs 2 --out @"},
        {"theory sweep", "theory sweep --params " + q(root / "theory.cfg") + " --ke-grid 1:10000:25 --out @/theory.csv"},
        {"fit decay", "fit decay --in " + q(root / "decay.csv") + " --model auto --out @/fit.json"},
        {"fit spectrum", "fit spectrum --in " + q(root / "eig.csv") + " --out @/fit.json"},
        {"fit joint", "fit joint --in " + q(root / "joint.csv") + " --seed 3 --out @/fit.json"},
        {"spectrum", "spectrum --rec " + q(rec) + " --bootstrap 5 --seed 1 --out @"},
        {"stats", "stats --rec " + q(rec) + " --out @"},
        {"recipe", "recipe --n-rec 256 --d-inp 40 --out @/recipe.json"},
    };
    std::string detail;
    bool ok = true;
    int idx = 0;
    for (const auto& [name, pattern] : commands) {
        std::map<std::string, std::string> outputs[2];
        bool ran = true;
        for (int run = 0; run < 2; ++run) {
            const auto dir = root / fmt("cmd%d_run%d", idx, run);
            fs::create_directories(dir);
            std::string args = pattern;
            for (std::size_t at; (at = args.find('@')) != std::string::npos;) args.replace(at, 1, q(dir));
            const auto r = testing::run_cli(cli, args);
            if (r.code != 0) {
                ran = false;
                detail += fmt("%s%s exited %d", detail.empty() ? "" : "; ", name.c_str(), r.code);
                break;
            }
            outputs[run] = testing::output_files(dir);
        }
        ++idx;
        if (!ran) {
            ok = false;
            continue;
        }
        const bool same = outputs[0] == outputs[1] && !outputs[0].empty();
        ok &= same;
        if (!same) detail += fmt("%s%s differs", detail.empty() ? "" : "; ", name.c_str());
    }
    return {ok, fmt("%zu subcommands run twice", commands.size()) + (detail.empty() ? ", all outputs byte-identical" : ": " + detail)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "gradient oracle", 30.0, gradient_oracle},
        {2, "i_rep oracle", 5.0, i_rep_oracle},
        {3, "crossing identity", 1.0, crossing_identity},
        {4, "low-SNR slope", 5.0, low_snr_slope},
        {5, "budget shift", 1.0, budget_shift},
        {6, "decay-model recovery", 120.0, decay_recovery},
        {7, "spectrum recovery", 120.0, spectrum_recovery},
        {8, "AR(1) diagnostic", 10.0, ar1_diagnostic},
        {9, "joint-fit closed loop", 300.0, joint_fit_closed_loop},
        {10, "end-to-end learning", 0.0, end_to_end_learning},
        {11, "tradeoff interiority", 2700.0, tradeoff_interiority},
        {12, "initialization stability", 60.0, init_stability},
        {13, "CLI determinism", 0.0, cli_determinism},
    };
    std::set<int> pick;
    for (int i = 1; i < argc; ++i) pick.insert(std::atoi(argv[i]));

    int failed = 0;
    for (const auto& c : all) {
        if (!pick.empty() && !pick.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double dt = seconds_since(t0);
        const bool in_time = c.limit_s <= 0.0 || dt < c.limit_s;
        const bool pass = o.pass && in_time;
        failed += !pass;
        std::cout << (pass ? "PASS" : "FAIL") << fmt(" %2d %-25s ", c.id, c.name.c_str()) << o.detail
                  << fmt(" [%.2f s%s]", dt, in_time ? "" : fmt(", limit %.0f s", c.limit_s).c_str()) << std::endl;
    }
    std::cout << (failed ? fmt("%d criteria failed", failed) : std::string("all criteria passed")) << std::endl;
    return failed ? 1 : 0;
}
