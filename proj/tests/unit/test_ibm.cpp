#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "kelpsim/config.hpp"
#include "kelpsim/ibm.hpp"

using namespace kelpsim;

namespace {

IbmConfig base_config(std::uint64_t n) {
    IbmConfig cfg;
    cfg.n = n;
    cfg.gamma = 1.3;
    cfg.model = default_model();
    cfg.model.eco.K = 2.0;
    cfg.price = 700.0;
    return cfg;
}

struct KernelAtom {
    std::array<double, 3> y;  // jump of (j, a, e)
    double mass;
};

/// The rescaled kernel written out atom by atom from the transition list,
/// independent of event_rates.
std::vector<KernelAtom> kernel(const IbmState& s, const IbmConfig& cfg) {
    const double n = static_cast<double>(s.n);
    const double j = s.j(), a = s.a(), e = s.e();
    const auto& eco = cfg.model.eco;
    const StateVec z{j, a, e, cfg.price};
    const double rho_J = recruitment(j, a, e, eco, cfg.price);
    const double kappa_A = eco.m_A + eco.F_A(e, cfg.price);
    const double kappa_J_own = eco.m_J + eco.F_J(e, cfg.price);  // juvenile loss besides maturation
    const auto b = compliance_rates(z, cfg.model.comp, eco);
    const double g = cfg.gamma;
    const double up = n * n * g * (1.0 - e) *
                      (n * e / (n - 1.0) * (1.0 - b.beta0 / n) + (n * (1.0 - e) - 1.0) / (n - 1.0) * b.beta1 / n);
    const double down =
        g * n * n * e * (n * (1.0 - e) / (n - 1.0) * (1.0 - b.beta1 / n) + (n * e - 1.0) / (n - 1.0) * b.beta0 / n);
    return {{{-1.0 / n, 1.0 / n, 0.0}, n * j * eco.rho_A},
            {{1.0 / n, 0.0, 0.0}, n * a * rho_J},
            {{0.0, -1.0 / n, 0.0}, n * a * kappa_A},
            {{-1.0 / n, 0.0, 0.0}, n * j * kappa_J_own},
            {{0.0, 0.0, 1.0 / n}, e < 1.0 ? up : 0.0},
            {{0.0, 0.0, -1.0 / n}, e > 0.0 ? down : 0.0}};
}

IbmState random_state(std::mt19937_64& rng, std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> bio(0, 3 * n), comp(0, n);
    return {n, bio(rng), bio(rng), comp(rng)};
}

}  // namespace

TEST(IbmRates, EmptySystemIsFrozen) {
    auto cfg = base_config(10);
    cfg.gamma = 0.0;
    const auto r = event_rates({10, 0, 0, 0}, cfg);
    EXPECT_EQ(r.total(), 0.0);
}

TEST(IbmRates, FullComplianceCannotIncrease) {
    auto cfg = base_config(10);
    const auto r = event_rates({10, 4, 7, 10}, cfg);
    EXPECT_EQ(r[IbmEvent::ComplianceUp], 0.0);
    EXPECT_GT(r[IbmEvent::ComplianceDown], 0.0);
    const auto r0 = event_rates({10, 4, 7, 0}, cfg);
    EXPECT_EQ(r0[IbmEvent::ComplianceDown], 0.0);
}

TEST(IbmRates, EmptySourcePopulationsHaveZeroRates) {
    const auto cfg = base_config(10);
    const auto r = event_rates({10, 0, 5, 5}, cfg);
    EXPECT_EQ(r[IbmEvent::Maturation], 0.0);
    EXPECT_EQ(r[IbmEvent::JuvenileDeath], 0.0);
    EXPECT_GT(r[IbmEvent::Birth], 0.0);
    for (double v : r.rate) EXPECT_GE(v, 0.0);
}

TEST(IbmRates, TotalEqualsKernelMass) {
    std::mt19937_64 rng(5);
    for (std::uint64_t n : {2u, 3u, 10u, 57u, 400u}) {
        const auto cfg = base_config(n);
        for (int i = 0; i < 500; ++i) {
            const auto s = random_state(rng, n);
            double mass = 0.0;
            for (const auto& atom : kernel(s, cfg)) mass += atom.mass;
            const auto r = event_rates(s, cfg);
            if (r.clamped) continue;
            EXPECT_NEAR(r.total(), mass, 1e-10 * std::max(1.0, mass));
        }
    }
}

TEST(IbmRates, RawClockIsRescaledClockOverN) {
    auto cfg = base_config(30);
    const IbmState s{30, 12, 20, 9};
    const auto fast = event_rates(s, cfg);
    cfg.time_rescale = false;
    const auto slow = event_rates(s, cfg);
    for (std::size_t i = 0; i < kIbmChannels; ++i) EXPECT_NEAR(fast.rate[i], 30.0 * slow.rate[i], 1e-12 * fast.rate[i]);
}

TEST(IbmRates, TinyPopulationClampsMutationProbability) {
    auto cfg = base_config(2);
    cfg.model.comp.beta0_bar = 5.0;
    const auto r = event_rates({2, 1, 1, 1}, cfg);
    EXPECT_TRUE(r.clamped);
    for (double v : r.rate) EXPECT_GE(v, 0.0);
}

TEST(IbmRates, ComplianceDriftIsExactMeanFieldDrift) {
    std::mt19937_64 rng(9);
    for (std::uint64_t n : {5u, 50u, 500u}) {
        const auto cfg = base_config(n);
        for (int i = 0; i < 200; ++i) {
            const auto s = random_state(rng, n);
            const auto r = event_rates(s, cfg);
            if (r.clamped) continue;
            const double drift = (r[IbmEvent::ComplianceUp] - r[IbmEvent::ComplianceDown]) / static_cast<double>(n);
            const auto b = compliance_rates({s.j(), s.a(), s.e(), cfg.price}, cfg.model.comp, cfg.model.eco);
            const double target = cfg.gamma * (b.beta1 * (1.0 - s.e()) - b.beta0 * s.e());
            EXPECT_NEAR(drift, target, 1e-9 * std::max(1.0, std::abs(target)));
        }
    }
}

TEST(IbmRates, ComplianceVarianceApproachesWrightFisher) {
    const double e = 0.3;
    double prev = 1e300;
    for (std::uint64_t n : {100u, 1000u, 10000u}) {
        const auto cfg = base_config(n);
        const IbmState s{n, n / 2, n / 2, static_cast<std::uint64_t>(std::llround(e * n))};
        const auto r = event_rates(s, cfg);
        const double dn = static_cast<double>(n);
        const double q = (r[IbmEvent::ComplianceUp] + r[IbmEvent::ComplianceDown]) / (dn * dn);
        const double gap = std::abs(q - 2.0 * cfg.gamma * e * (1.0 - e));
        EXPECT_LT(gap * dn, 10.0);
        EXPECT_LT(gap, prev);
        prev = gap;
    }
}

TEST(Gillespie, MaturationMove) {
    const IbmState s{10, 4, 2, 3};
    const auto t = apply_event(s, IbmEvent::Maturation);
    EXPECT_EQ(t.juveniles, 3u);
    EXPECT_EQ(t.adults, 3u);
    EXPECT_EQ(t.compliers, 3u);
    EXPECT_DOUBLE_EQ(t.j(), s.j() - 0.1);
    EXPECT_DOUBLE_EQ(t.a(), s.a() + 0.1);
}

TEST(Gillespie, AbsorbedWhenNothingCanHappen) {
    auto cfg = base_config(4);
    cfg.gamma = 0.0;
    Stream st({1, 0}, ComponentTag::Ibm);
    const auto step = gillespie_step({4, 0, 0, 2}, cfg, st);
    EXPECT_TRUE(step.absorbed);
    EXPECT_EQ(step.holding_time, 0.0);
    EXPECT_EQ(st.position(), 0u);
}

TEST(Gillespie, SingleChannelAlwaysFires) {
    IbmConfig cfg;
    cfg.n = 10;
    cfg.gamma = 0.0;
    cfg.model.eco.K = 1.0;
    cfg.model.eco.rho_A = 0.7;
    Stream st({2, 0}, ComponentTag::Ibm);
    IbmState s{10, 1000, 0, 0};
    for (int i = 0; i < 500; ++i) {
        const auto step = gillespie_step(s, cfg, st);
        ASSERT_EQ(step.event, IbmEvent::Maturation);
        s = step.next;
    }
}

TEST(Gillespie, TwoEqualChannelsSplitEvenly) {
    IbmConfig cfg;
    cfg.n = 10;
    cfg.gamma = 0.0;
    cfg.model.eco.K = 1e9;
    cfg.model.eco.rho_A = 0.5;
    cfg.model.eco.m_A = 0.5;
    const IbmState s{10, 20, 20, 0};
    const auto r = event_rates(s, cfg);
    ASSERT_DOUBLE_EQ(r[IbmEvent::Maturation], r[IbmEvent::AdultDeath]);
    Stream st({3, 0}, ComponentTag::Ibm);
    const int N = 100000;
    int mat = 0;
    for (int i = 0; i < N; ++i) mat += gillespie_step(s, cfg, st).event == IbmEvent::Maturation;
    EXPECT_LT(std::abs(mat / double(N) - 0.5), 3.0 * std::sqrt(0.25 / N));
}

TEST(Gillespie, TwoAgentEnumeration) {
    const auto cfg = base_config(2);
    const IbmState s{2, 1, 2, 1};
    const auto atoms = kernel(s, cfg);
    double total = 0.0;
    for (const auto& a : atoms) total += a.mass;
    std::map<std::array<std::uint64_t, 3>, double> expected;
    for (const auto& a : atoms) {
        if (a.mass == 0.0) continue;
        const std::array<std::uint64_t, 3> key{static_cast<std::uint64_t>(std::llround((s.j() + a.y[0]) * 2)),
                                               static_cast<std::uint64_t>(std::llround((s.a() + a.y[1]) * 2)),
                                               static_cast<std::uint64_t>(std::llround((s.e() + a.y[2]) * 2))};
        expected[key] += a.mass / total;
    }
    Stream st({4, 0}, ComponentTag::Ibm);
    const int N = 200000;
    std::map<std::array<std::uint64_t, 3>, int> seen;
    double hold = 0.0;
    for (int i = 0; i < N; ++i) {
        const auto step = gillespie_step(s, cfg, st);
        ++seen[{step.next.juveniles, step.next.adults, step.next.compliers}];
        hold += step.holding_time;
    }
    for (const auto& [key, count] : seen) EXPECT_TRUE(expected.count(key)) << "unexpected outcome";
    for (const auto& [key, p] : expected) {
        const double phat = seen[key] / double(N);
        EXPECT_LT(std::abs(phat - p), 3.0 * std::sqrt(p * (1.0 - p) / N) + 1e-12);
    }
    EXPECT_LT(std::abs(hold / N - 1.0 / total), 3.0 * (1.0 / total) / std::sqrt(N));
}

TEST(SimulateIbm, AllRatesZeroGivesConstantPath) {
    IbmConfig cfg;
    cfg.n = 20;
    cfg.gamma = 0.0;
    cfg.model.eco.K = 1.0;
    const IbmState s0{20, 5, 6, 7};
    const auto run = simulate_ibm(cfg, s0, {2.0, 10}, {1, 0});
    ASSERT_EQ(run.path.states.size(), 11u);
    for (const auto& x : run.path.states) EXPECT_EQ(x, (StateVec{0.25, 0.3, 0.35, 0.0}));
    EXPECT_EQ(run.events, 0u);
    EXPECT_EQ(run.path.tag, SchemeTag::Ibm);
}

TEST(SimulateIbm, StatesStayOnTheLattice) {
    const auto cfg = base_config(25);
    const auto run = simulate_ibm(cfg, IbmState::from_scaled(25, 0.5, 0.5, 0.5), {1.0, 40}, {2, 0});
    for (const auto& x : run.path.states) {
        EXPECT_GE(x.J, 0.0);
        EXPECT_GE(x.A, 0.0);
        EXPECT_NEAR(x.E * 25.0, std::round(x.E * 25.0), 1e-9);
        EXPECT_GE(x.E, 0.0);
        EXPECT_LE(x.E, 1.0);
    }
    for (std::size_t i = 1; i < run.path.event_counts.size(); ++i)
        EXPECT_LE(run.path.event_counts[i - 1], run.path.event_counts[i]);
    EXPECT_EQ(run.path.event_counts.back(), run.events);
}

TEST(SimulateIbm, EventGuardAbortsWithPartialOutput) {
    auto cfg = base_config(50);
    cfg.max_events = 100;
    const auto run = simulate_ibm(cfg, IbmState::from_scaled(50, 0.5, 0.5, 0.5), {1.0, 20}, {3, 0});
    EXPECT_TRUE(run.aborted);
    EXPECT_EQ(run.events, 100u);
    EXPECT_LT(run.path.states.size(), 21u);
}

TEST(SimulateIbm, Reproducible) {
    const auto cfg = base_config(40);
    const auto s0 = IbmState::from_scaled(40, 0.5, 0.5, 0.5);
    const auto a = simulate_ibm(cfg, s0, {1.0, 20}, {9, 3});
    const auto b = simulate_ibm(cfg, s0, {1.0, 20}, {9, 3});
    EXPECT_EQ(a.path, b.path);
    EXPECT_EQ(a.per_channel, b.per_channel);
}

TEST(SimulateIbm, PureMaturationMean) {
    IbmConfig cfg;
    cfg.n = 50;
    cfg.gamma = 0.0;
    cfg.model.eco.K = 1.0;
    cfg.model.eco.rho_A = 0.8;
    const auto s0 = IbmState::from_scaled(50, 0.6, 0.0, 0.5);
    const GridSpec g{2.0, 4};
    const int M = 10000;
    std::vector<double> sum(5, 0.0), ss(5, 0.0);
    for (int i = 0; i < M; ++i) {
        const auto run = simulate_ibm(cfg, s0, g, {31, static_cast<std::uint64_t>(i)});
        for (std::size_t k = 0; k <= 4; ++k) {
            sum[k] += run.path.states[k].J;
            ss[k] += run.path.states[k].J * run.path.states[k].J;
        }
    }
    for (std::size_t k = 1; k <= 4; ++k) {
        const double mean = sum[k] / M;
        const double se = std::sqrt((ss[k] / M - mean * mean) / M);
        EXPECT_LT(std::abs(mean - 0.6 * std::exp(-0.8 * g.time(k))), 3.0 * se) << "t=" << g.time(k);
    }
}

TEST(SimulateIbm, EmpiricalGeneratorMatchesRates) {
    const auto cfg = base_config(20);
    const IbmState s0{20, 10, 12, 8};
    const auto r = event_rates(s0, cfg);
    const double dn = 20.0;
    // analytic generator on the monomials j, a, e, e^2
    const double Lj = (r[IbmEvent::Birth] - r[IbmEvent::Maturation] - r[IbmEvent::JuvenileDeath]) / dn;
    const double La = (r[IbmEvent::Maturation] - r[IbmEvent::AdultDeath]) / dn;
    const double Le = (r[IbmEvent::ComplianceUp] - r[IbmEvent::ComplianceDown]) / dn;
    const double e = s0.e();
    const double Le2 = r[IbmEvent::ComplianceUp] * ((e + 1 / dn) * (e + 1 / dn) - e * e) +
                       r[IbmEvent::ComplianceDown] * ((e - 1 / dn) * (e - 1 / dn) - e * e);

    const double h = 2e-4;
    const int M = 400000;
    std::array<double, 4> sum{}, ss{};
    for (int i = 0; i < M; ++i) {
        const auto run = simulate_ibm(cfg, s0, {h, 1}, {41, static_cast<std::uint64_t>(i)});
        const auto& x = run.path.states[1];
        const std::array<double, 4> d{x.J - s0.j(), x.A - s0.a(), x.E - e, x.E * x.E - e * e};
        for (std::size_t c = 0; c < 4; ++c) {
            sum[c] += d[c];
            ss[c] += d[c] * d[c];
        }
    }
    const std::array<double, 4> target{Lj, La, Le, Le2};
    for (std::size_t c = 0; c < 4; ++c) {
        const double mean = sum[c] / M / h;
        const double se = std::sqrt((ss[c] / M - (sum[c] / M) * (sum[c] / M)) / M) / h;
        EXPECT_LT(std::abs(mean - target[c]), 3.0 * se + 0.02 * std::abs(target[c])) << "monomial " << c;
    }
}

TEST(MeanfieldLimit, CoefficientMapping) {
    auto cfg = base_config(100);
    cfg.gamma = 2.0;
    const auto p = meanfield_limit_params(cfg);
    EXPECT_DOUBLE_EQ(p.comp.beta0_bar, 2.0 * cfg.model.comp.beta0_bar);
    EXPECT_DOUBLE_EQ(p.comp.tau_U, 2.0 * cfg.model.comp.tau_U);
    EXPECT_DOUBLE_EQ(p.comp.sigma_E, 2.0);
    EXPECT_EQ(p.eco.sigma_J, 0.0);
    EXPECT_EQ(p.jumps.lambda, 0.0);
    EXPECT_EQ(p.price.kind, PriceKind::Constant);
    EXPECT_EQ(p.price.P0, cfg.price);
    // limit drift equals gamma times the agent-level drift
    const StateVec z{0.4, 0.6, 0.3, cfg.price};
    const auto b = compliance_rates(z, cfg.model.comp, cfg.model.eco);
    const auto bl = compliance_rates(z, p.comp, p.eco);
    EXPECT_NEAR(bl.beta1 * 0.7 - bl.beta0 * 0.3, 2.0 * (b.beta1 * 0.7 - b.beta0 * 0.3), 1e-12);
}

TEST(IbmState, FromScaledSnapsToLattice) {
    const auto s = IbmState::from_scaled(40, 0.5, 0.26, 0.51);
    EXPECT_EQ(s.juveniles, 20u);
    EXPECT_EQ(s.adults, 10u);
    EXPECT_EQ(s.compliers, 20u);
    EXPECT_THROW(IbmState::from_scaled(1, 0.5, 0.5, 0.5), ParameterError);
    EXPECT_THROW(IbmState::from_scaled(10, 0.5, 0.5, 1.5), DomainError);
}
