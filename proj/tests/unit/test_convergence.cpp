#include <gtest/gtest.h>

#include <cmath>

#include "kelpsim/config.hpp"
#include "kelpsim/convergence.hpp"

using namespace kelpsim;

TEST(CoupledNoise, LevelsTelescopeToBase) {
    auto p = default_model();
    p.jumps.lambda = 3.0;
    const std::size_t N0 = 20, L = 4;
    const auto noise = coupled_noise(p, 2.0, N0, L, {5, 9});
    ASSERT_EQ(noise.levels.size(), L + 1);
    EXPECT_EQ(noise.mismatches, 0u);
    const double dt0 = 2.0 / N0;
    for (std::size_t l = 1; l <= L; ++l) {
        const std::size_t r = std::size_t{1} << l;
        ASSERT_EQ(noise.levels[l].size(), N0 * r);
        for (std::size_t b = 0; b < N0; ++b) {
            std::array<double, 4> sum{};
            int jumps = 0;
            for (std::size_t s = 0; s < r; ++s) {
                const auto& c = noise.levels[l][b * r + s];
                sum[0] += c.dWJ;
                sum[1] += c.dWA;
                sum[2] += c.dWE;
                sum[3] += c.dWP;
                if (c.jump) {
                    ++jumps;
                    const auto& base = *noise.levels[0][b].jump;
                    EXPECT_EQ(c.jump->mark, base.mark);
                    EXPECT_NEAR(s * dt0 / r + c.jump->time, base.time, 1e-12);
                    EXPECT_LE(c.jump->time, dt0 / r * (1 + 1e-12));
                }
            }
            const auto& c0 = noise.levels[0][b];
            EXPECT_NEAR(sum[0], c0.dWJ, 1e-13);
            EXPECT_NEAR(sum[1], c0.dWA, 1e-13);
            EXPECT_NEAR(sum[2], c0.dWE, 1e-13);
            EXPECT_NEAR(sum[3], c0.dWP, 1e-13);
            EXPECT_EQ(jumps, noise.levels[0][b].jump ? 1 : 0);
        }
    }
}

TEST(CoupledNoise, BaseLevelMatchesPathStreams) {
    const auto p = default_model();
    const auto noise = coupled_noise(p, 1.0, 10, 1, {4, 2});
    const GridSpec g{1.0, 10};
    SimulateOptions opt;
    const auto a = simulate_with_noise(p, {2000, 3000, 0.5, 300}, g, noise.levels[0], opt);
    const auto b = simulate_path(p, {2000, 3000, 0.5, 300}, g, {4, 2}, opt);
    EXPECT_EQ(a.states, b.states);
}

TEST(StrongError, NoiseFreeSystemIsFirstOrder) {
    auto p = default_model();
    p.eco.sigma_J = p.eco.sigma_A = 0.0;
    p.comp.sigma_E = 0.0;
    p.jumps.lambda = 0.0;
    p.price.sigma_P = 0.0;
    StrongErrorOptions opt;
    opt.T = 5.0;
    opt.base_N = 50;
    opt.levels = 4;
    opt.paths = 2;
    const auto t = strong_error_curve(p, {2000, 3000, 0.5, 300}, opt);
    ASSERT_EQ(t.rows.size(), 4u);
    for (std::size_t l = 1; l < t.rows.size(); ++l) EXPECT_LT(t.rows[l].sup_total, t.rows[l - 1].sup_total);
    // first-order error against the finest level: err_l ~ C (dt_l - dt_L)
    std::vector<double> x, y;
    for (std::size_t l = 0; l < 4; ++l) {
        x.push_back(std::log2(t.rows[l].dt));
        y.push_back(std::log2(t.rows[l].dt - t.rows[0].dt / 16.0));
    }
    EXPECT_NEAR(t.order_total, fit_slope(x, y), 0.05);
}

TEST(StrongError, IndependentOfThreads) {
    const auto p = default_model();
    StrongErrorOptions opt;
    opt.T = 1.0;
    opt.base_N = 20;
    opt.levels = 2;
    opt.paths = 130;
    opt.threads = 1;
    const auto a = strong_error_curve(p, {2000, 3000, 0.5, 300}, opt);
    opt.threads = 4;
    const auto b = strong_error_curve(p, {2000, 3000, 0.5, 300}, opt);
    for (std::size_t l = 0; l < a.rows.size(); ++l) EXPECT_EQ(a.rows[l].sup_total, b.rows[l].sup_total);
}

TEST(StrongError, Refusals) {
    const auto p = default_model();
    StrongErrorOptions opt;
    opt.levels = 0;
    EXPECT_THROW(strong_error_curve(p, {1, 1, 0.5, 300}, opt), ParameterError);
    opt.levels = 2;
    opt.paths = 0;
    EXPECT_THROW(strong_error_curve(p, {1, 1, 0.5, 300}, opt), ParameterError);
    opt.paths = 2;
    opt.base_N = 1;
    EXPECT_THROW(strong_error_curve(p, {1, 1, 0.5, 300}, opt), ParameterError);
}

TEST(MomentBands, SyntheticPaths) {
    std::vector<PathRecord> paths(2);
    paths[0].grid = paths[1].grid = {1.0, 1};
    paths[0].states = {{1, 2, 0.2, 0}, {1, 2, 0.4, 0}};
    paths[1].states = {{3, 2, 0.2, 0}, {1, 2, 0.8, 0}};
    const auto b = moment_bands(paths);
    ASSERT_EQ(b.times.size(), 2u);
    EXPECT_DOUBLE_EQ(b.mean[0][0], 2.0);
    EXPECT_DOUBLE_EQ(b.var[0][0], 2.0);
    EXPECT_DOUBLE_EQ(b.var[0][1], 0.0);
    EXPECT_DOUBLE_EQ(b.mean[1][2], 0.6);
}

TEST(Meanfield, FrozenComplianceHasNoComplianceGap) {
    IbmConfig cfg;
    cfg.model = default_model();
    cfg.model.eco.K = 2.0;
    cfg.gamma = 0.0;
    cfg.price = 300.0;
    MeanfieldOptions opt;
    opt.n_values = {20, 80};
    opt.replicas = 50;
    opt.limit_paths = 50;
    opt.T = 0.5;
    opt.report_N = 10;
    opt.limit_refine = 4;
    const auto t = meanfield_error(cfg, {0.5, 0.5, 0.5, 0.0}, opt);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0].n, 20u);
    EXPECT_EQ(t.rows[1].n, 80u);
    for (const auto& r : t.rows) {
        EXPECT_EQ(r.mean_gap[2], 0.0);
        EXPECT_GT(r.events, 0u);
        EXPECT_FALSE(r.aborted);
        EXPECT_GE(r.distance, r.mean_gap[0]);
        EXPECT_EQ(r.ibm.times.size(), 11u);
    }
    EXPECT_EQ(t.limit.times.size(), 11u);
    for (const auto& m : t.limit.mean) EXPECT_NEAR(m[2], 0.5, 1e-12);
}

TEST(Meanfield, BadPopulationLists) {
    IbmConfig cfg;
    cfg.model.eco.K = 1.0;
    MeanfieldOptions opt;
    opt.n_values = {};
    EXPECT_THROW(meanfield_error(cfg, {0.5, 0.5, 0.5, 0.0}, opt), ParameterError);
    opt.n_values = {10, 5};
    EXPECT_THROW(meanfield_error(cfg, {0.5, 0.5, 0.5, 0.0}, opt), ParameterError);
    opt.n_values = {1};
    EXPECT_THROW(meanfield_error(cfg, {0.5, 0.5, 0.5, 0.0}, opt), ParameterError);
}

TEST(Meanfield, ReplicaSeedsDifferAcrossN) {
    EXPECT_NE(meanfield_replica_seed(1, 50, 0).master_seed, meanfield_replica_seed(1, 200, 0).master_seed);
    EXPECT_EQ(meanfield_replica_seed(1, 50, 7).trajectory_index, 7u);
}
