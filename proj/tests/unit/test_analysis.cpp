#include <gtest/gtest.h>

#include <cmath>

#include "kelpsim/analysis.hpp"
#include "kelpsim/config.hpp"

using namespace kelpsim;

namespace {

PathRecord synthetic_path(const std::vector<double>& totals, double T) {
    PathRecord p;
    p.grid = {T, totals.size() - 1};
    for (double v : totals) p.states.push_back({0.5 * v, 0.5 * v, 0.5, 1.0});
    return p;
}

Ensemble synthetic_ensemble(const std::vector<std::vector<double>>& rows, double T) {
    Ensemble e;
    e.grid = {T, rows.front().size() - 1};
    for (const auto& r : rows) e.paths.push_back(synthetic_path(r, T));
    return e;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST(Histogram, CountsAndDensity) {
    const std::vector<double> v{0.05, 0.15, 0.15, 0.95, -3.0, 7.0};
    const auto h = histogram(v, {0.0, 1.0, 10});
    EXPECT_EQ(h.total, 6u);
    EXPECT_EQ(h.counts[0], 2u);
    EXPECT_EQ(h.counts[1], 2u);
    EXPECT_EQ(h.counts[9], 2u);
    double mass = 0.0;
    for (double d : h.density) mass += d * 0.1;
    EXPECT_NEAR(mass, 1.0, 1e-12);
    EXPECT_TRUE(histogram(std::vector<double>{}, {0.0, 1.0, 4}).empty());
    EXPECT_THROW(histogram(v, {1.0, 1.0, 4}), ParameterError);
    EXPECT_THROW(histogram(v, {0.0, 1.0, 0}), ParameterError);
}

TEST(Histogram, AutoBinsDegenerateSample) {
    const std::vector<double> same(5, 3.0);
    const auto b = auto_bins(same, 4);
    EXPECT_EQ(b.lo, 2.5);
    EXPECT_EQ(b.hi, 3.5);
    EXPECT_EQ(histogram(same, b).total, 5u);
}

TEST(Histogram, TotalVariation) {
    const std::vector<std::pair<double, double>> a{{0.1, 0.1}, {0.9, 0.9}}, b{{0.1, 0.1}, {0.1, 0.9}};
    const BinSpec s{0.0, 1.0, 2};
    EXPECT_DOUBLE_EQ(total_variation(joint_histogram(a, s, s), joint_histogram(a, s, s)), 0.0);
    EXPECT_DOUBLE_EQ(total_variation(joint_histogram(a, s, s), joint_histogram(b, s, s)), 0.5);
}

TEST(Statistics, QuantileAndMean) {
    EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.25), 1.75);
    EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
    EXPECT_TRUE(std::isnan(quantile({}, 0.5)));
    const auto m = mean_se(std::vector<double>{1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.variance, 5.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.se, std::sqrt(5.0 / 12.0));
}

TEST(Wilson, KnownIntervals) {
    const auto half = wilson_interval(5, 10);
    EXPECT_NEAR(half.lo, 0.236593, 1e-6);
    EXPECT_NEAR(half.hi, 0.763407, 1e-6);
    const auto none = wilson_interval(0, 10);
    EXPECT_EQ(none.lo, 0.0);
    EXPECT_NEAR(none.hi, 0.277533, 1e-6);
    const auto empty = wilson_interval(0, 0);
    EXPECT_EQ(empty.lo, 0.0);
    EXPECT_EQ(empty.hi, 1.0);
}

TEST(Extinction, CountsBelowThreshold) {
    const auto ens = synthetic_ensemble({{1, 0.5, 0.0}, {1, 1, 1}, {1, 0.1, 0.2}, {1, 2, 3}}, 2.0);
    const auto e = extinction_probability(ens, 0.25, 2.0);
    EXPECT_EQ(e.count, 2u);
    EXPECT_DOUBLE_EQ(e.probability, 0.5);
    EXPECT_TRUE(e.warning.empty());
    const auto mid = extinction_probability(ens, 0.25, 0.9);
    EXPECT_EQ(mid.time, 1.0);
    EXPECT_FALSE(mid.warning.empty());
    EXPECT_EQ(mid.count, 1u);
    EXPECT_THROW(extinction_probability(Ensemble{}, 0.1, 1.0), ParameterError);
    EXPECT_THROW(extinction_probability(ens, -1.0, 1.0), ParameterError);
}

TEST(Extinction, MatchesLognormalLaw) {
    // adults only: A_N = A0 (1 - m dt)^N exp(-sigma^2 T / 2 + sigma W_T)
    ModelParams p;
    p.eco.K = 1e6;
    p.eco.m_A = 0.3;
    p.eco.sigma_A = 0.8;
    const double T = 4.0, A0 = 100.0;
    const std::size_t N = 200;
    EnsembleOptions eo;
    eo.paths = 40000;
    eo.master_seed = 12;
    eo.sim.record_every = N;
    eo.sim.validate = false;
    const auto ens = run_ensemble(p, {0.0, A0, 0.5, 0.0}, {T, N}, eo);
    const double dt = T / N;
    const double drift = std::log(A0) + N * std::log(1.0 - p.eco.m_A * dt) - 0.5 * 0.64 * T;
    for (double c : {5.0, 20.0, 40.0}) {
        const double prob = normal_cdf((std::log(c) - drift) / (0.8 * std::sqrt(T)));
        const auto est = extinction_probability(ens, c, T);
        EXPECT_LT(std::abs(est.probability - prob), 3.0 * std::sqrt(prob * (1.0 - prob) / eo.paths)) << c;
    }
}

TEST(Lyapunov, ExactExponentialDecay) {
    std::vector<double> totals;
    for (int i = 0; i <= 100; ++i) totals.push_back(5.0 * std::exp(-2.0 * i * 0.1));
    const auto p = synthetic_path(totals, 10.0);
    ASSERT_TRUE(lyapunov_estimate(p).has_value());
    EXPECT_NEAR(*lyapunov_estimate(p), -2.0, 1e-12);
    EXPECT_NEAR(*lyapunov_estimate(p, {0.0, 3.0}), -2.0, 1e-12);
}

TEST(Lyapunov, ZeroTotalIsExcluded) {
    const auto ens = synthetic_ensemble({{1, 1, 0}, {1, std::exp(-1.0), std::exp(-2.0)}, {1, 1, 1}}, 2.0);
    const auto s = lyapunov_estimate(ens, {0.0, 2.0});
    EXPECT_EQ(s.excluded, 1u);
    ASSERT_EQ(s.slopes.size(), 2u);
    EXPECT_NEAR(s.slopes[0], -1.0, 1e-12);
    EXPECT_NEAR(s.slopes[1], 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(s.fraction_below(-0.5), 0.5);
    EXPECT_FALSE(lyapunov_estimate(synthetic_path({1, 2}, 1.0), {0.2, 0.8}).has_value());
}

TEST(Criterion, ExtinctionPresetRate) {
    const auto c = extinction_criterion(preset("extinction").model);
    EXPECT_TRUE(c.cond1);
    EXPECT_TRUE(c.cond2);
    ASSERT_TRUE(c.eta.has_value());
    EXPECT_NEAR(*c.eta, 0.8, 1e-12);
    EXPECT_NEAR(c.margin1, 0.7, 1e-12);
    EXPECT_EQ(c.jump_term, 0.0);
}

TEST(Criterion, RecruitmentTooStrong) {
    auto p = preset("extinction").model;
    p.eco.r_J = RateFamily::constant(2.0);
    const auto c = extinction_criterion(p);
    EXPECT_FALSE(c.cond1);
    EXPECT_FALSE(c.eta.has_value());
    EXPECT_FALSE(c.passes());
}

TEST(Criterion, JumpTermAndMissingEps) {
    auto p = preset("extinction").model;
    p.jumps.lambda = 0.1;
    p.jumps.marks = JumpParams::enso(0.5, -0.2, 0.2);
    p.jumps.eps1 = 1.0;
    p.jumps.eps2 = 0.5;
    p.jumps.cap = 10.0;
    const auto c = extinction_criterion(p);
    // first moment 0.4 * 9, second 0.08 * 81
    EXPECT_NEAR(c.M_bound, 6.48, 1e-12);
    EXPECT_NEAR(c.jump_term, 0.648, 1e-12);
    EXPECT_GT(c.jump_term, 0.0);
    EXPECT_NEAR(c.margin2, 0.8 - c.jump_term, 1e-12);
    p.jumps.eps1 = 0.0;
    const auto d = extinction_criterion(p);
    EXPECT_FALSE(d.moment_ok);
    EXPECT_FALSE(d.passes());
}

TEST(Criterion, UsesInfimumOfExtraction) {
    auto p = preset("extinction").model;
    p.eco.F_A = {0.1, 0.5, false, 0.0, 0.0};
    const auto c = extinction_criterion(p);
    EXPECT_NEAR(c.m_check_A, 0.7, 1e-12);
    EXPECT_NEAR(*c.eta, 0.9, 1e-12);
}

TEST(Moments, CurveAndArgmax) {
    const auto ens = synthetic_ensemble({{1, 3, 2}, {3, 5, 2}}, 2.0);
    const auto m = moment_curve(ens, 1.0);
    EXPECT_EQ(m.mean, (std::vector<double>{2.0, 4.0, 2.0}));
    EXPECT_EQ(m.max_value, 4.0);
    EXPECT_EQ(m.argmax_time, 1.0);
    const auto m2 = moment_curve(ens, 2.0);
    EXPECT_DOUBLE_EQ(m2.mean[0], 5.0);
    EXPECT_THROW(moment_curve(ens, 0.5), ParameterError);
}

TEST(Occupation, CountsRecordedPointsUpToT) {
    const auto p = synthetic_path({0.2, 0.2, 1.8, 1.8, 1.8}, 4.0);
    const BinSpec b{0.0, 1.0, 2};
    const auto h = occupation_measure(p, 2.0, b, b);
    EXPECT_EQ(h.total, 3u);
    EXPECT_EQ(h.at(0, 0), 2u);
    EXPECT_EQ(h.at(1, 1), 1u);
}

TEST(Ensemble, IndependentOfThreadCount) {
    const auto params = default_model();
    EnsembleOptions eo;
    eo.paths = 64;
    eo.master_seed = 77;
    eo.sim.record_every = 10;
    eo.threads = 1;
    const auto a = run_ensemble(params, {2000, 3000, 0.5, 300}, {5.0, 100}, eo);
    eo.threads = 5;
    const auto b = run_ensemble(params, {2000, 3000, 0.5, 300}, {5.0, 100}, eo);
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a.paths[i], b.paths[i]);
    EXPECT_EQ(a.paths[3].seed.trajectory_index, 3u);
}

TEST(Ensemble, GbmPriceMean) {
    auto params = default_model();
    EnsembleOptions eo;
    eo.paths = 20000;
    eo.master_seed = 3;
    eo.sim.record_every = 50;
    const double T = 5.0;
    const auto ens = run_ensemble(params, {2000, 3000, 0.5, 300}, {T, 50}, eo);
    std::vector<double> P;
    for (const auto& p : ens.paths) P.push_back(p.states.back().P);
    const auto m = mean_se(P);
    EXPECT_LT(std::abs(m.mean - 300.0 * std::exp(params.price.mu * T)), 3.0 * m.se);
}

TEST(Ensemble, RejectsZeroPaths) {
    EnsembleOptions eo;
    eo.paths = 0;
    EXPECT_THROW(run_ensemble(default_model(), {1, 1, 0.5, 300}, {1.0, 10}, eo), ParameterError);
}
