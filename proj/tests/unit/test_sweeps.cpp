#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "elmnet/config.hpp"
#include "elmnet/fitting/spectrum.hpp"
#include "elmnet/network.hpp"
#include "elmnet/recording.hpp"
#include "elmnet/sweeps.hpp"
#include "elmnet/theory.hpp"

using namespace elmnet;
using namespace elmnet::sweeps;

namespace {

NetworkConfig base_net() {
    NetworkConfig c;
    c.hidden.d_m = 4;
    c.hidden.d_mlp = 16;
    c.hidden.d_tree = 8;
    c.hidden.d_branch = 4;
    c.n_rec = 10;
    c.rho_rec = 0.3;
    c.n_readout = 6;
    c.readout.d_tree = 3;
    c.readout.d_branch = 3;
    c.d_inp = 16;
    c.d_out = 5;
    return c;
}

RunConfig tiny_run() {
    RunConfig rc;
    rc.seed = 5;
    rc.spike.channels = 16;
    rc.spike.steps_per_digit = 6;
    rc.spike.n_digit_classes = 3;
    rc.net = base_net();
    rc.train.steps = 12;
    rc.train.batch = 4;
    rc.train.eval_every = 6;
    rc.train.n_train = 40;
    rc.train.n_valid = 12;
    rc.train.n_test = 12;
    return rc;
}

Recording gaussian_recording(const std::vector<double>& lambda, int n_traj, int steps, std::uint64_t seed) {
    Rng rng(seed);
    Recording rec;
    rec.n_rec = static_cast<std::uint32_t>(lambda.size());
    rec.steps = static_cast<std::uint32_t>(steps);
    rec.n_traj = static_cast<std::uint32_t>(n_traj);
    for (int k = 0; k < n_traj * steps; ++k)
        for (double l : lambda) rec.data.push_back(static_cast<float>(std::sqrt(l) * rng.normal()));
    return rec;
}

std::vector<double> truncated_power(double beta, int n) {
    std::vector<double> l;
    for (int i = 1; i <= n; ++i) l.push_back(std::pow(i, -beta) * std::exp(-std::pow(i / 200.0, 1.5)));
    return l;
}

}  // namespace

TEST(BuildPoint, FixedBudgetRoundingContract) {
    for (auto axis : {SweepAxis::n_vs_ke, SweepAxis::ke_vs_kc}) {
        SweepSpec spec;
        spec.axis = axis;
        spec.budget = 20000.0;
        for (double v : {1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0}) {
            const auto gp = build_point(base_net(), spec, v);
            if (!gp.net) continue;
            const auto pc = count_params(gp.net->hidden);
            const double per = static_cast<double>(pc.k_e + pc.k_c);
            const double used = gp.net->n_rec * per;
            EXPECT_LE(used, *spec.budget) << to_string(axis) << " " << v;
            EXPECT_LE(std::abs(used - *spec.budget), per) << to_string(axis) << " " << v;
            EXPECT_EQ(gp.net->hidden.d_m, static_cast<int>(v));
        }
    }
}

TEST(BuildPoint, KeVsKcTradesSynapsesForMemory) {
    SweepSpec spec;
    spec.axis = SweepAxis::ke_vs_kc;
    spec.budget = 20000.0;
    const auto small = build_point(base_net(), spec, 2.0), big = build_point(base_net(), spec, 6.0);
    ASSERT_TRUE(small.net && big.net);
    EXPECT_GT(small.net->hidden.d_branch, big.net->hidden.d_branch);
    EXPECT_GT(count_params(big.net->hidden).k_e, count_params(small.net->hidden).k_e);
}

TEST(BuildPoint, InfeasiblePointsCarryReason) {
    SweepSpec spec;
    spec.axis = SweepAxis::n_vs_ke;
    spec.budget = 500.0;
    const auto gp = build_point(base_net(), spec, 12.0);
    EXPECT_FALSE(gp.net.has_value());
    EXPECT_FALSE(gp.skip_reason.empty());
    spec.axis = SweepAxis::rho_rec;
    EXPECT_FALSE(build_point(base_net(), spec, 1.5).net.has_value());
    spec.axis = SweepAxis::d_s;
    EXPECT_FALSE(build_point(base_net(), spec, 3.0).net.has_value());
    EXPECT_EQ(build_point(base_net(), spec, 40.0).net->hidden.d_branch, 5);
}

TEST(SweepSpec, ParseValidateAndEcho) {
    auto kv = KeyValues::parse("sweep.axis = n_vs_ke\nsweep.grid = 1, 2,4\nsweep.budget = 3000\nsweep.repeats = 2\n");
    const auto s = sweep_spec_from(kv);
    kv.reject_unused();
    EXPECT_EQ(s.axis, SweepAxis::n_vs_ke);
    EXPECT_EQ(s.grid, (std::vector<double>{1.0, 2.0, 4.0}));
    EXPECT_EQ(*s.budget, 3000.0);
    EXPECT_EQ(s.repeats, 2);
    auto kv2 = KeyValues::parse(to_text(s));
    const auto back = sweep_spec_from(kv2);
    EXPECT_EQ(back.grid, s.grid);
    EXPECT_EQ(back.budget, s.budget);

    SweepSpec no_budget;
    no_budget.axis = SweepAxis::ke_vs_kc;
    no_budget.grid = {1.0};
    EXPECT_THROW(no_budget.validate(), InvalidConfig);
    EXPECT_THROW(parse_axis("width"), InvalidConfig);
    EXPECT_THROW(parse_grid("1,,2"), InvalidConfig);
}

TEST(RunSweep, SinglePointEqualsOneTrainingRun) {
    auto rc = tiny_run();
    const auto data = make_task_data(rc);
    SweepSpec spec;
    spec.axis = SweepAxis::n_rec;
    spec.grid = {static_cast<double>(rc.net.n_rec)};
    spec.repeats = 1;
    const auto res = run_sweep(rc, data, spec);
    ASSERT_EQ(res.rows.size(), 1u);
    Network net(rc.net, rc.seed);
    const auto tr = training::train_run(net, data, rc.train, rc.seed);
    EXPECT_EQ(res.rows[0].metric, 1.0 - tr.test.metric);
    EXPECT_EQ(res.rows[0].reducible, tr.reducible);
    EXPECT_EQ(res.rows[0].P_network, net.n_params());
    EXPECT_EQ(res.rows[0].runtime_s, 0.0);
}

TEST(RunSweep, DeterministicAcrossWorkerCountsWithSkips) {
    auto rc = tiny_run();
    const auto data = make_task_data(rc);
    SweepSpec spec;
    spec.axis = SweepAxis::n_vs_ke;
    spec.budget = 3000.0;
    spec.grid = {1.0, 2.0, 40.0};
    spec.repeats = 2;
    const auto a = run_sweep(rc, data, spec, 1);
    const auto b = run_sweep(rc, data, spec, 3);
    ASSERT_EQ(a.skipped.size(), 1u);
    EXPECT_EQ(a.skipped[0].axis_value, 40.0);
    std::ostringstream ca, cb;
    write_sweep_csv(ca, a, spec.axis);
    write_sweep_csv(cb, b, spec.axis);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(ca.str().substr(0, ca.str().find('\n')),
              "axis,axis_value,d_m,d_mlp,d_branch,rho_rec,k_e,k_c,N,P_total,P_network,seed,metric,reducible,"
              "reducible_clamped,runtime_s");
    ASSERT_EQ(a.rows.size(), 4u);
    EXPECT_EQ(a.rows[0].seed, 5u);
    EXPECT_EQ(a.rows[1].seed, 6u);
    for (const auto& r : a.rows) {
        EXPECT_GE(r.reducible, 0.0);
        EXPECT_LE(std::abs(static_cast<double>(r.P_total) - 3000.0), static_cast<double>(r.k_e + r.k_c));
    }
    const auto sum = summarize(a);
    ASSERT_EQ(sum.size(), 2u);
    EXPECT_EQ(sum[0].n, 2);
    EXPECT_NEAR(sum[0].metric_mean, 0.5 * (a.rows[0].metric + a.rows[1].metric), 1e-15);
    EXPECT_NEAR(sum[0].metric_std, std::abs(a.rows[0].metric - a.rows[1].metric) / std::sqrt(2.0), 1e-12);
}

TEST(InteriorOptimum, Cases) {
    EXPECT_TRUE(has_interior_optimum(std::vector<double>{0.5, 0.3, 0.6}));
    EXPECT_FALSE(has_interior_optimum(std::vector<double>{0.5, 0.5, 0.6}));
    EXPECT_FALSE(has_interior_optimum(std::vector<double>{0.9, 0.7, 0.5}));
    EXPECT_FALSE(has_interior_optimum(std::vector<double>{0.1, 0.2}));
}

TEST(MeasureAlpha, RecoversTheoryExponentAndTruncatesAtKnee) {
    theory::TheoryParams th;
    th.alpha = 1.0;
    th.gamma = 0.01;
    th.q_inf = 1e-4;
    const long N = 10;
    // s runs from 1e-3 to 1e3; the slope bends once s i^-beta passes 1 for every mode
    const auto grid = theory::geometric_grid(0.1, 1e5, 19);
    std::vector<double> info;
    for (double k : grid) info.push_back(theory::i_rep_modes(N, theory::snr(k, th), th.beta));
    const auto r = measure_alpha(grid, info);
    EXPECT_GE(r.alpha, 0.9);
    EXPECT_LE(r.alpha, 1.1);
    EXPECT_TRUE(r.truncated);
    EXPECT_LT(r.n_used, r.n_total);
    EXPECT_FALSE(r.low_confidence);
}

TEST(MeasureAlpha, HalvingForAbsoluteErrorMetrics) {
    const double alpha = 1.4;
    const auto grid = theory::geometric_grid(10.0, 1e4, 10);
    std::vector<double> mae;
    for (double k : grid) mae.push_back(3.0 * std::pow(k, -alpha / 2.0));
    AlphaOptions opt;
    opt.halve_exponent = true;
    const auto r = measure_alpha(grid, mae, opt);
    EXPECT_NEAR(r.alpha, alpha, 1e-9);
    EXPECT_NEAR(r.slope, -alpha / 2.0, 1e-9);
    EXPECT_FALSE(r.truncated);
}

TEST(MeasureAlpha, FlatDataIsLowConfidenceAndShortDataThrows) {
    const auto grid = theory::geometric_grid(10.0, 1e4, 8);
    const auto r = measure_alpha(grid, std::vector<double>(8, 0.4));
    EXPECT_NEAR(r.alpha, 0.0, 1e-12);
    EXPECT_TRUE(r.low_confidence);
    EXPECT_THROW(measure_alpha(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), DomainError);
    // non-positive metrics are unusable
    EXPECT_THROW(measure_alpha(std::vector<double>{1, 2, 3, 4}, std::vector<double>{3, 2, 0, 1}), DomainError);
}

TEST(MeasureBeta, OrderingAndSingleConditionReduction) {
    const std::vector<Recording> recs{gaussian_recording(truncated_power(1.0, 64), 20, 400, 1),
                                      gaussian_recording(truncated_power(1.5, 64), 20, 400, 2)};
    const auto both = measure_beta(recs);
    ASSERT_EQ(both.beta.size(), 2u);
    EXPECT_LT(both.beta[0], both.beta[1]);
    EXPECT_TRUE(both.warnings.empty());

    const auto single = measure_beta(std::span<const Recording>(recs.data(), 1));
    const auto direct = fitting::fit_spectrum({fitting::covariance_spectrum(recs[0])});
    EXPECT_EQ(single.beta[0], direct.models[0].beta);
}

TEST(MeasureBeta, HighPassTapIsBiasedLowAndFlagged) {
    NetworkConfig c;
    c.hidden.d_m = 6;
    c.hidden.d_mlp = 12;
    c.hidden.d_tree = 6;
    c.hidden.d_branch = 4;
    c.hidden.tau_max = 100.0;
    c.n_rec = 48;
    c.rho_rec = 0.5;
    c.n_readout = 4;
    c.readout.d_tree = 2;
    c.readout.d_branch = 2;
    c.d_inp = 12;
    c.d_out = 3;
    Network net(c, 3);
    // slowly varying inputs give the memory readout low-frequency structure
    Rng rng(4);
    std::vector<InputSequence> ins;
    for (int k = 0; k < 12; ++k) {
        InputSequence in;
        in.steps = 400;
        in.width = c.d_inp;
        std::vector<double> drift(static_cast<std::size_t>(c.d_inp), 0.0);
        for (int t = 0; t < in.steps; ++t)
            for (int i = 0; i < c.d_inp; ++i) {
                auto& d = drift[static_cast<std::size_t>(i)];
                d = 0.98 * d + 0.2 * rng.normal();
                in.values.push_back(d + 0.3 * rng.normal());
            }
        ins.push_back(std::move(in));
    }
    const std::vector<Recording> recs{record_network(net, net.params(), ins, 100, TapPoint::memory_readout),
                                      record_network(net, net.params(), ins, 100, TapPoint::activity)};
    const std::vector<TapPoint> taps{TapPoint::memory_readout, TapPoint::activity};
    const auto r = measure_beta(recs, taps);
    EXPECT_LT(r.beta[1], r.beta[0]);
    ASSERT_EQ(r.warnings.size(), 1u);
    EXPECT_NE(r.warnings[0].find("condition 1"), std::string::npos);
}

TEST(RunConfig, TextRoundTripAndUnknownKey) {
    auto rc = tiny_run();
    rc.train.optim.lr = 0.00123;
    rc.net.hidden.lambda = 3.5;
    auto kv = KeyValues::parse(to_text(rc));
    const auto back = run_config_from(kv);
    EXPECT_EQ(to_text(back), to_text(rc));
    EXPECT_EQ(back.train.optim.lr, 0.00123);

    auto bad = KeyValues::parse("d_m = 3\nd_mm = 4\n");
    try {
        run_config_from(bad);
        FAIL();
    } catch (const InvalidConfig& e) {
        EXPECT_EQ(e.field(), "d_mm");
    }
    auto invalid = KeyValues::parse("d_m = 0\n");
    try {
        run_config_from(invalid);
        FAIL();
    } catch (const InvalidConfig& e) {
        EXPECT_EQ(e.field(), "d_m");
    }
    EXPECT_THROW(KeyValues::parse("a = 1\na = 2\n"), InvalidConfig);
}
