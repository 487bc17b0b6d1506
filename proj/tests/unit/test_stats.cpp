#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "elmnet/stats.hpp"

using namespace elmnet;
using namespace elmnet::stats;

namespace {

Recording make_rec(std::uint32_t n, std::uint32_t steps, std::uint32_t traj) {
    Recording r;
    r.n_rec = n;
    r.steps = steps;
    r.n_traj = traj;
    r.data.assign(static_cast<std::size_t>(n) * steps * traj, 0.f);
    return r;
}

float& cell(Recording& r, std::size_t k, std::size_t t, std::size_t i) { return r.data[(k * r.steps + t) * r.n_rec + i]; }

}  // namespace

TEST(ActivityStats, PeriodicSpikingHasZeroCv) {
    auto rec = make_rec(3, 200, 2);
    for (std::size_t k = 0; k < 2; ++k)
        for (std::size_t t = 0; t < 200; ++t)
            for (std::size_t i = 0; i < 3; ++i) cell(rec, k, t, i) = (t + i) % 10 == 0 ? 1.f : 0.f;
    const auto s = activity_stats(rec);
    ASSERT_TRUE(s.isi_present);
    EXPECT_DOUBLE_EQ(s.isi_mean, 10.0);
    EXPECT_DOUBLE_EQ(s.cv, 0.0);
    for (double f : s.firing_fraction) EXPECT_DOUBLE_EQ(f, 0.1);
    for (double a : s.active_fraction) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }
}

TEST(ActivityStats, BernoulliOnsetIntervalsMatchGeometricCv) {
    const double p = 0.05;
    auto rec = make_rec(20, 2000, 3);
    Rng rng(11);
    for (auto& v : rec.data) v = rng.bernoulli(p) ? 1.f : 0.f;
    const auto s = activity_stats(rec);
    ASSERT_TRUE(s.isi_present);
    EXPECT_NEAR(s.cv, bernoulli_onset_cv(p), 0.03);
    EXPECT_NEAR(bernoulli_onset_cv(p), 1.0, 0.1);
    ASSERT_TRUE(s.fano.has_value());
    // renewal process: long-window Fano tends to CV^2
    EXPECT_NEAR(*s.fano, std::pow(bernoulli_onset_cv(p), 2), 0.05);
    for (double c : s.correlations) EXPECT_LT(std::abs(c), 0.1);
}

TEST(ActivityStats, IdenticalNeuronsCorrelatePerfectly) {
    auto rec = make_rec(5, 300, 1);
    Rng rng(2);
    for (std::size_t t = 0; t < 300; ++t) {
        const float v = static_cast<float>(std::max(0.0, rng.normal()));
        for (std::size_t i = 0; i < 5; ++i) cell(rec, 0, t, i) = v;
    }
    const auto s = activity_stats(rec);
    ASSERT_EQ(s.correlations.size(), 10u);
    for (double c : s.correlations) EXPECT_NEAR(c, 1.0, 1e-12);
    EXPECT_NEAR(s.lorenz.gini, 0.0, 1e-12);
}

TEST(ActivityStats, SilentRecordingFlagsAbsentIsi) {
    const auto s = activity_stats(make_rec(4, 50, 2));
    EXPECT_FALSE(s.isi_present);
    EXPECT_FALSE(s.fano.has_value());
    EXPECT_FALSE(s.lorenz_present);
    EXPECT_TRUE(s.correlations.empty());
    EXPECT_THROW(activity_stats(make_rec(4, 1, 1)), DomainError);
}

TEST(ActivityStats, HistogramTotalsAndSubsetSampling) {
    auto rec = make_rec(30, 100, 2);
    Rng rng(3);
    for (auto& v : rec.data) v = static_cast<float>(rng.normal());
    StatsOptions opt;
    opt.max_corr_neurons = 8;
    opt.corr_seed = 5;
    const auto s = activity_stats(rec, opt);
    EXPECT_EQ(s.firing_hist.total(), 30u);
    EXPECT_EQ(s.corr_neurons.size(), 8u);
    EXPECT_EQ(s.correlations.size(), 28u);
    EXPECT_EQ(s.corr_hist.total(), 28u);
    EXPECT_TRUE(std::is_sorted(s.corr_neurons.begin(), s.corr_neurons.end()));
    EXPECT_EQ(activity_stats(rec, opt).corr_neurons, s.corr_neurons);
}

TEST(ActivityStats, InvariantToTrajectoryOrder) {
    auto rec = make_rec(6, 80, 3);
    Rng rng(4);
    for (auto& v : rec.data) v = static_cast<float>(rng.normal());
    auto swapped = rec;
    const std::size_t block = 6 * 80;
    std::swap_ranges(swapped.data.begin(), swapped.data.begin() + block, swapped.data.begin() + 2 * block);
    const auto a = activity_stats(rec), b = activity_stats(swapped);
    EXPECT_NEAR(a.cv, b.cv, 1e-12);
    EXPECT_EQ(a.firing_fraction, b.firing_fraction);
    for (std::size_t k = 0; k < a.correlations.size(); ++k) EXPECT_NEAR(a.correlations[k], b.correlations[k], 1e-12);
    for (std::size_t k = 0; k < a.skew.size(); ++k) EXPECT_NEAR(a.skew[k], b.skew[k], 1e-12);
    EXPECT_NEAR(a.lorenz.gini, b.lorenz.gini, 1e-12);
}

TEST(Histogram, EdgesClampAndTotalsMatch) {
    const std::vector<double> v{-5.0, 0.0, 0.49, 0.5, 1.0, 7.0};
    const auto h = histogram(v, 0.0, 1.0, 2);
    EXPECT_EQ(h.counts[0], 3u);
    EXPECT_EQ(h.counts[1], 3u);
    EXPECT_EQ(h.total(), v.size());
    EXPECT_THROW(histogram(v, 1.0, 1.0, 2), DomainError);
}

TEST(Moments, KnownValues) {
    const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    const auto m = moments(v);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.var, 1.25);
    EXPECT_NEAR(m.skew, 0.0, 1e-15);
    EXPECT_NEAR(m.excess_kurtosis, (1.5 * 1.5 * 1.5 * 1.5 * 2 + 0.5 * 0.5 * 0.5 * 0.5 * 2) / 4.0 / (1.25 * 1.25) - 3.0, 1e-12);
}

TEST(Lorenz, EqualityAndMaximalInequality) {
    const auto eq = lorenz_curve(std::vector<double>(10, 2.0));
    EXPECT_NEAR(eq.gini, 0.0, 1e-12);
    for (std::size_t k = 0; k < eq.rank_share.size(); ++k) EXPECT_NEAR(eq.value_share[k], eq.rank_share[k], 1e-12);
    std::vector<double> one(1000, 0.0);
    one[17] = 3.0;
    const auto c = lorenz_curve(one);
    EXPECT_DOUBLE_EQ(c.value_share[1], 1.0);
    EXPECT_GT(c.gini, 0.99);
    EXPECT_THROW(lorenz_curve(std::vector<double>(3, 0.0)), DomainError);
    EXPECT_THROW(lorenz_curve(std::vector<double>{1.0, -1.0}), DomainError);
}

TEST(Lorenz, HarmonicSpectrumMatchesCumulativeSums) {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(1.0 / i);  // ascending on purpose
    const auto c = lorenz_curve(v);
    double total = 0.0;
    for (int i = 1; i <= 100; ++i) total += 1.0 / i;
    double cum = 0.0;
    ASSERT_EQ(c.value_share.size(), 101u);
    EXPECT_EQ(c.value_share.front(), 0.0);
    for (int i = 1; i <= 100; ++i) {
        cum += 1.0 / i;
        EXPECT_NEAR(c.value_share[static_cast<std::size_t>(i)], cum / total, 1e-12);
        EXPECT_NEAR(c.rank_share[static_cast<std::size_t>(i)], i / 100.0, 1e-15);
        EXPECT_GE(c.value_share[static_cast<std::size_t>(i)], c.value_share[static_cast<std::size_t>(i - 1)]);
    }
    EXPECT_GT(c.gini, 0.0);
    EXPECT_LT(c.gini, 1.0);
}

TEST(Ar1, WhiteNoise) {
    Rng rng(7);
    std::vector<double> x(5000);
    for (auto& v : x) v = rng.normal();
    const auto r = ar1_correct(x);
    EXPECT_NEAR(r.phi, 0.0, 0.05);
    EXPECT_NEAR(r.tau_before, 1.0, 0.2);
    EXPECT_EQ(r.whitened.size(), x.size() - 1);
}

TEST(Ar1, RecoversStrongAutocorrelation) {
    Rng rng(8);
    const double phi = 0.968;
    std::vector<double> x(20000);
    x[0] = rng.normal();
    for (std::size_t t = 1; t < x.size(); ++t) x[t] = phi * x[t - 1] + rng.normal();
    const auto r = ar1_correct(x);
    EXPECT_NEAR(r.phi, phi, 0.01);
    EXPECT_GT(r.tau_before, 30.0);
    EXPECT_LT(r.tau_after, 2.0);
    EXPECT_LE(std::abs(autocorrelation(r.whitened, 1)[1]), std::abs(r.phi));
}

TEST(Ar1, ConstantSeriesIsDegenerate) {
    const auto r = ar1_correct(std::vector<double>(20, 1.5));
    EXPECT_TRUE(r.degenerate);
    EXPECT_TRUE(std::isnan(r.phi));
    EXPECT_THROW(ar1_correct(std::vector<double>(5, 1.0)), DomainError);
}
