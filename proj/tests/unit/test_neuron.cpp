#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "elmnet/neuron.hpp"

using namespace elmnet;

namespace {

NeuronConfig scalar_config(OutputMode mode) {
    NeuronConfig c;
    c.d_m = 1;
    c.l_mlp = 0;
    c.d_mlp = 1;
    c.d_tree = 1;
    c.d_branch = 2;
    c.c = 1.5;
    c.lambda = 2.0;
    c.tau_min = 4.0;
    c.tau_max = 4.0;
    c.tau_r = 5.0;
    c.output_mode = mode;
    return c;
}

}  // namespace

TEST(ParamCount, DefaultNeuron) {
    // d_m=5, l_mlp=1, d_mlp=10, d_tree=30, d_branch=10
    // map0: (30+5)*10 + 10 = 360, map1: 10*5 + 5 = 55, w_r: 5
    const auto pc = count_params(NeuronConfig{});
    EXPECT_EQ(pc.k_e, 360u + 55u + 5u);
    EXPECT_EQ(pc.k_c, 300u);
}

TEST(ParamCount, NoHiddenLayer) {
    NeuronConfig c;
    c.d_m = 2;
    c.l_mlp = 0;
    c.d_tree = 3;
    c.d_branch = 4;
    // single map (3+2) -> 2 with bias, plus w_r
    EXPECT_EQ(count_params(c).k_e, 5u * 2u + 2u + 2u);
    EXPECT_EQ(count_params(c).k_c, 12u);
    EXPECT_EQ(NeuronLayout(c).total, 5u * 2u + 2u + 2u + 12u + 1u);
}

TEST(MemoryTimescales, LogSpacedWithExactEnds) {
    NeuronConfig c;
    c.d_m = 3;
    c.tau_min = 1.0;
    c.tau_max = 100.0;
    const auto tau = memory_timescales(c);
    ASSERT_EQ(tau.size(), 3u);
    EXPECT_EQ(tau[0], 1.0);
    EXPECT_NEAR(tau[1], 10.0, 1e-12);
    EXPECT_EQ(tau[2], 100.0);
    c.d_m = 1;
    EXPECT_EQ(memory_timescales(c).front(), 100.0);
}

TEST(Superspike, Formula) {
    EXPECT_DOUBLE_EQ(superspike(0.0), 1.0);
    EXPECT_DOUBLE_EQ(superspike(0.01, 100.0), 0.25);
    EXPECT_DOUBLE_EQ(superspike(-0.01, 100.0), 0.25);
}

TEST(ElmStep, MatchesHandComputation) {
    const auto cfg = scalar_config(OutputMode::relu_highpass);
    NeuronParams p(cfg);
    auto v = p.values();
    const auto& lay = p.layout();
    v[lay.ws] = 0.4;
    v[lay.ws + 1] = -0.2;
    p.mlp_weight(0)[0] = 0.7;   // from b_t
    p.mlp_weight(0)[1] = -0.3;  // from kappa_m * m
    p.mlp_bias(0)[0] = 0.05;
    p.w_r()[0] = 1.2;
    p.b() = 0.1;

    NeuronState s{{0.5}, 0.2};
    const std::vector<double> z{1.0, 2.0};
    const auto res = elm_step(s, z, p, cfg);

    const double km = std::exp(-1.0 / 4.0), kl = std::exp(-2.0 / 4.0), kr = std::exp(-1.0 / 5.0);
    const double bt = 1.5 * (0.4 * 1.0 - 0.2 * 2.0);
    const double dm = std::tanh(0.7 * bt - 0.3 * km * 0.5 + 0.05);
    const double m = km * 0.5 + (1.0 - kl) * dm;
    const double y = 1.2 * m;
    const double r = kr * 0.2 + (1.0 - kr) * y;
    const double a = std::max(0.1 + y - r, 0.0);
    EXPECT_NEAR(res.delta_m[0], dm, 1e-15);
    EXPECT_NEAR(res.state.m[0], m, 1e-15);
    EXPECT_NEAR(res.state.r, r, 1e-15);
    EXPECT_NEAR(res.activity, a, 1e-15);
}

TEST(ElmStep, OutputModes) {
    auto cfg = scalar_config(OutputMode::linear_no_filter);
    NeuronParams p(cfg);
    p.w_r()[0] = 2.0;
    p.b() = -0.5;
    NeuronState s{{1.0}, 3.0};
    const std::vector<double> z{0.0, 0.0};
    const double km = std::exp(-0.25), kl = std::exp(-0.5);
    const double m = km * 1.0 + (1.0 - kl) * std::tanh(0.0);
    auto lin = elm_step(s, z, p, cfg);
    EXPECT_NEAR(lin.activity, -0.5 + 2.0 * m, 1e-15);
    EXPECT_EQ(lin.state.r, 0.0);

    cfg.output_mode = OutputMode::binary_spike;
    auto spk = elm_step(s, z, p, cfg);
    EXPECT_TRUE(spk.activity == 0.0 || spk.activity == 1.0);
    const double kr = std::exp(-0.2);
    const double v = -0.5 + 2.0 * m - (kr * 3.0 + (1.0 - kr) * 2.0 * m);
    EXPECT_EQ(spk.activity, v > 0.0 ? 1.0 : 0.0);
}

TEST(ElmStep, MemoryStaysBounded) {
    // |m| <= max(|m_0|, (1 - kappa_lambda) / (1 - kappa_m)) since |dm| <= 1.
    NeuronConfig cfg;
    cfg.d_m = 4;
    cfg.d_tree = 3;
    cfg.d_branch = 2;
    Rng rng(3);
    const auto p = NeuronParams::initialized(cfg, rng);
    auto s = NeuronState::zeros(cfg);
    const auto dec = make_decays(cfg);
    for (int t = 0; t < 2000; ++t) {
        std::vector<double> z(6);
        for (auto& x : z) x = 50.0 * rng.normal();
        s = elm_step(s, z, p, cfg).state;
        for (int j = 0; j < cfg.d_m; ++j) {
            const double bound = (1.0 - dec.kappa_lambda[j]) / (1.0 - dec.kappa_m[j]);
            ASSERT_LE(std::abs(s.m[j]), bound + 1e-12);
        }
    }
}

TEST(ElmStep, ShapeMismatchThrows) {
    const auto cfg = scalar_config(OutputMode::relu_highpass);
    NeuronParams p(cfg);
    const std::vector<double> z{1.0};
    EXPECT_THROW(elm_step(NeuronState::zeros(cfg), z, p, cfg), ShapeError);
}

TEST(NeuronConfig, ValidateNamesField) {
    NeuronConfig c;
    c.d_m = 0;
    try {
        c.validate("hidden");
        FAIL();
    } catch (const InvalidConfig& e) {
        EXPECT_EQ(e.field(), "hidden.d_m");
    }
    c = {};
    c.d_mlp = 2;
    EXPECT_THROW(c.validate(), InvalidConfig);
    c = {};
    c.tau_max = 0.5;
    EXPECT_THROW(c.validate(), InvalidConfig);
}

TEST(ParetoCandidate, CeilRecipe) {
    const auto r = pareto_candidate(1024, 204, RecipeVariant::ceil);
    // ceil(sqrt(1228) / 2) = ceil(17.52) = 18
    EXPECT_EQ(r.neuron.d_m, 18);
    EXPECT_EQ(r.neuron.d_mlp, 36);
    EXPECT_EQ(r.neuron.d_tree, 72);
    EXPECT_EQ(r.neuron.d_branch, 72);
    EXPECT_NEAR(r.rho_rec, 1024.0 / 1228.0, 1e-15);
}

TEST(ParetoCandidate, FloorRecipeAndPerfectSquares) {
    const auto r = pareto_candidate(1024, 204, RecipeVariant::floor);
    // floor(sqrt(204/15 + 1024) / 2) = floor(16.21) = 16
    EXPECT_EQ(r.neuron.d_m, 16);
    EXPECT_NEAR(r.rho_rec, std::sqrt(1024.0 / 1228.0), 1e-15);
    // d_inp + N = 64 is a perfect square: ceil(8 / 2) = 4 exactly
    EXPECT_EQ(pareto_candidate(60, 4, RecipeVariant::ceil).neuron.d_m, 4);
    EXPECT_THROW(pareto_candidate(0, 4, RecipeVariant::ceil), InvalidConfig);
}
