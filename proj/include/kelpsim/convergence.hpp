#pragma once
// Convergence harnesses.
//
// strong_error_curve: coupled self-refinement study. Each trajectory draws its
// Brownian increments on a base grid and refines them by Brownian bridges L
// times; the first jump of every base cell is reused at every level. Level l
// is compared against level L on the level-l grid points.
//
// meanfield_error: the individual-based chain against Monte Carlo of its
// mean-field limit, for a list of population sizes n.

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "kelpsim/analysis.hpp"
#include "kelpsim/ibm.hpp"
#include "kelpsim/noise.hpp"
#include "kelpsim/parallel.hpp"
#include "kelpsim/scheme.hpp"

namespace kelpsim {

/// Cell noise for every level 0..L of one coupled trajectory.
struct CoupledNoise {
    std::vector<std::vector<CellNoise>> levels;
    std::size_t mismatches = 0;  // jumps that could not be placed in a fine cell
};

inline CoupledNoise coupled_noise(const ModelParams& params, double T, std::size_t N0, std::size_t L,
                                  const SeedSpec& seed) {
    const double dt0 = T / static_cast<double>(N0);
    const auto& jp = params.jumps;
    std::array<Stream, 4> brownian{Stream(seed, ComponentTag::J), Stream(seed, ComponentTag::A),
                                   Stream(seed, ComponentTag::E), Stream(seed, ComponentTag::P)};
    Stream jumps(seed, ComponentTag::Jumps);

    std::array<std::vector<double>, 4> inc;
    std::vector<std::optional<JumpEvent>> base_jumps(N0);
    for (auto& v : inc) v.resize(N0);
    for (std::size_t k = 0; k < N0; ++k) {
        for (std::size_t c = 0; c < 4; ++c) inc[c][k] = gaussian_increment(brownian[c], dt0);
        base_jumps[k] = first_jump_in_cell(jumps, jp.lambda, dt0, jp.marks);
    }

    CoupledNoise out;
    out.levels.resize(L + 1);
    double dt = dt0;
    for (std::size_t l = 0; l <= L; ++l) {
        if (l > 0) {
            for (std::size_t c = 0; c < 4; ++c) {
                Stream bridge(seed, ComponentTag::Bridge, static_cast<std::uint32_t>(4 * l + c));
                inc[c] = refine_increments(inc[c], dt, bridge);
            }
            dt *= 0.5;
        }
        const std::size_t cells = N0 << l;
        const std::size_t per_base = std::size_t{1} << l;
        auto& cn = out.levels[l];
        cn.resize(cells);
        for (std::size_t k = 0; k < cells; ++k) cn[k] = {inc[0][k], inc[1][k], inc[2][k], inc[3][k], std::nullopt};
        for (std::size_t b = 0; b < N0; ++b) {
            if (!base_jumps[b]) continue;
            const double tau = base_jumps[b]->time;
            auto sub = static_cast<std::size_t>(std::floor(tau / dt));
            if (sub >= per_base) {
                if (tau > dt0 * (1.0 + 1e-12)) ++out.mismatches;
                sub = per_base - 1;
            }
            cn[b * per_base + sub].jump = JumpEvent{tau - static_cast<double>(sub) * dt, base_jumps[b]->mark};
        }
    }
    return out;
}

struct ErrorRow {
    std::size_t level = 0;
    double dt = 0.0;
    std::array<double, 3> sup_mse{};  // J, A, E: sup over grid of the mean squared error
    std::array<double, 3> sup_se{};
    std::array<double, 3> terminal_mse{};
    std::array<double, 3> terminal_se{};
    double sup_total = 0.0;  // sup over grid of E[(dJ)^2 + (dA)^2 + (dE)^2]
    double sup_total_se = 0.0;
};

struct StrongErrorTable {
    std::vector<ErrorRow> rows;
    std::array<double, 3> order_sup{};  // log2 slope of RMS error per component
    std::array<double, 3> order_terminal{};
    double order_total = 0.0;
    std::size_t paths = 0;
    std::size_t mismatches = 0;
};

struct StrongErrorOptions {
    double T = 1.0;
    std::size_t base_N = 50;
    std::size_t levels = 3;  // rows 0..levels-1, reference is level `levels`
    std::size_t paths = 100;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;
};

/// Slope of y against x by least squares.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) { return ls_slope(x, y); }

inline StrongErrorTable strong_error_curve(const ModelParams& params, const StateVec& x0, const StrongErrorOptions& opt) {
    if (opt.levels < 1) throw ParameterError("strong_error_curve: need at least one level");
    if (opt.paths == 0 || opt.base_N == 0) throw ParameterError("strong_error_curve: need paths >= 1 and base_N >= 1");
    const std::size_t L = opt.levels;
    std::vector<GridSpec> grids;
    for (std::size_t l = 0; l <= L; ++l) grids.push_back(make_grid(params, opt.T, opt.base_N << l));
    {
        auto report = validate_params(params);
        if (!report.ok()) throw ValidationFailure(std::move(report));
    }

    const std::size_t chunk = 64;
    const std::size_t nchunks = (opt.paths + chunk - 1) / chunk;
    // [level][grid point] -> sums for J, A, E, total; reduced chunk by chunk in index order
    using Table = std::vector<std::vector<std::array<double, 4>>>;
    auto blank = [&] {
        Table t(L);
        for (std::size_t l = 0; l < L; ++l) t[l].assign(grids[l].N + 1, {0.0, 0.0, 0.0, 0.0});
        return t;
    };
    std::vector<Table> c1(nchunks), c2(nchunks);
    std::vector<std::size_t> cmis(nchunks, 0);

    SimulateOptions sim;
    sim.validate = false;
    parallel_for(nchunks, opt.threads, [&](std::size_t ci) {
        Table s1 = blank(), s2 = blank();
        for (std::size_t i = ci * chunk; i < std::min(opt.paths, (ci + 1) * chunk); ++i) {
            const auto noise = coupled_noise(params, opt.T, opt.base_N, L, SeedSpec{opt.master_seed, i});
            cmis[ci] += noise.mismatches;
            const auto ref = simulate_with_noise(params, x0, grids[L], noise.levels[L], sim);
            for (std::size_t l = 0; l < L; ++l) {
                const auto path = simulate_with_noise(params, x0, grids[l], noise.levels[l], sim);
                const std::size_t ratio = std::size_t{1} << (L - l);
                for (std::size_t k = 0; k <= grids[l].N; ++k) {
                    const auto& a = path.states[k];
                    const auto& b = ref.states[k * ratio];
                    const double dj = (a.J - b.J) * (a.J - b.J);
                    const double da = (a.A - b.A) * (a.A - b.A);
                    const double de = (a.E - b.E) * (a.E - b.E);
                    const std::array<double, 4> v{dj, da, de, dj + da + de};
                    for (std::size_t c = 0; c < 4; ++c) {
                        s1[l][k][c] += v[c];
                        s2[l][k][c] += v[c] * v[c];
                    }
                }
            }
        }
        c1[ci] = std::move(s1);
        c2[ci] = std::move(s2);
    });

    Table s1 = blank(), s2 = blank();
    StrongErrorTable out;
    out.paths = opt.paths;
    for (std::size_t ci = 0; ci < nchunks; ++ci) {
        out.mismatches += cmis[ci];
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t k = 0; k <= grids[l].N; ++k)
                for (std::size_t c = 0; c < 4; ++c) {
                    s1[l][k][c] += c1[ci][l][k][c];
                    s2[l][k][c] += c2[ci][l][k][c];
                }
    }

    const double M = static_cast<double>(opt.paths);
    auto stat = [&](const std::array<double, 4>& a, const std::array<double, 4>& b, std::size_t c) {
        const double mean = a[c] / M;
        const double var = opt.paths > 1 ? std::max(b[c] / M - mean * mean, 0.0) * M / (M - 1.0) : 0.0;
        return std::pair{mean, std::sqrt(var / M)};
    };
    for (std::size_t l = 0; l < L; ++l) {
        ErrorRow row;
        row.level = l;
        row.dt = grids[l].dt();
        const std::size_t last = grids[l].N;
        for (std::size_t c = 0; c < 4; ++c) {
            double best = -1.0, best_se = 0.0;
            for (std::size_t k = 0; k <= last; ++k) {
                const auto [m, se] = stat(s1[l][k], s2[l][k], c);
                if (m > best) {
                    best = m;
                    best_se = se;
                }
            }
            if (c < 3) {
                row.sup_mse[c] = best;
                row.sup_se[c] = best_se;
                const auto [m, se] = stat(s1[l][last], s2[l][last], c);
                row.terminal_mse[c] = m;
                row.terminal_se[c] = se;
            } else {
                row.sup_total = best;
                row.sup_total_se = best_se;
            }
        }
        out.rows.push_back(row);
    }

    if (L >= 2) {
        std::vector<double> x;
        for (const auto& r : out.rows) x.push_back(std::log2(r.dt));
        auto order = [&](auto get) {
            std::vector<double> y;
            for (const auto& r : out.rows) y.push_back(0.5 * std::log2(std::max(get(r), 1e-300)));
            return fit_slope(x, y);
        };
        for (std::size_t c = 0; c < 3; ++c) {
            out.order_sup[c] = order([c](const ErrorRow& r) { return r.sup_mse[c]; });
            out.order_terminal[c] = order([c](const ErrorRow& r) { return r.terminal_mse[c]; });
        }
        out.order_total = order([](const ErrorRow& r) { return r.sup_total; });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mean-field comparison

struct MeanfieldOptions {
    std::vector<std::uint64_t> n_values{50, 200, 800};
    std::size_t replicas = 200;
    double T = 1.0;
    std::size_t report_N = 50;  // reporting grid of both sides
    std::size_t limit_paths = 4000;
    std::size_t limit_refine = 20;  // limit solver steps per reporting interval
    std::uint64_t master_seed = 0;
    unsigned threads = 0;
};

/// Per-time mean and variance curves of (j, a, e) with standard errors.
struct MomentBands {
    std::vector<double> times;
    std::vector<std::array<double, 3>> mean, mean_se, var, var_se;
};

inline MomentBands moment_bands(const std::vector<PathRecord>& paths) {
    MomentBands b;
    if (paths.empty()) return b;
    const std::size_t pts = paths.front().states.size();
    const double M = static_cast<double>(paths.size());
    std::vector<double> col(paths.size());
    for (std::size_t k = 0; k < pts; ++k) {
        b.times.push_back(paths.front().time_at(k));
        std::array<double, 3> m{}, mse{}, v{}, vse{};
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t i = 0; i < paths.size(); ++i) {
                const auto& x = paths[i].states[k];
                col[i] = c == 0 ? x.J : c == 1 ? x.A : x.E;
            }
            const auto s = mean_se(col);
            m[c] = s.mean;
            mse[c] = s.se;
            v[c] = s.variance;
            double m4 = 0.0;
            for (double y : col) m4 += std::pow(y - s.mean, 4);
            m4 /= M;
            vse[c] = std::sqrt(std::max(m4 - s.variance * s.variance, 0.0) / M);
        }
        b.mean.push_back(m);
        b.mean_se.push_back(mse);
        b.var.push_back(v);
        b.var_se.push_back(vse);
    }
    return b;
}

struct MeanfieldRow {
    std::uint64_t n = 0;
    std::array<double, 3> mean_gap{};  // sup over time |mean_ibm - mean_limit| per component
    std::array<double, 3> mean_gap_se{};
    std::array<double, 3> var_gap{};
    std::array<double, 3> var_gap_se{};
    double distance = 0.0;  // sup over time of the summed absolute mean gaps
    double distance_se = 0.0;
    std::uint64_t events = 0;
    bool clamped = false;
    bool aborted = false;
    MomentBands ibm;
};

struct MeanfieldTable {
    std::vector<MeanfieldRow> rows;
    MomentBands limit;
};

namespace detail {

inline void fill_gaps(MeanfieldRow& row, const MomentBands& ibm, const MomentBands& lim) {
    row.distance = -1.0;
    for (std::size_t c = 0; c < 3; ++c) row.mean_gap[c] = row.var_gap[c] = -1.0;
    for (std::size_t k = 0; k < ibm.times.size(); ++k) {
        double total = 0.0, total_var = 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
            const double g = std::abs(ibm.mean[k][c] - lim.mean[k][c]);
            const double gse2 = ibm.mean_se[k][c] * ibm.mean_se[k][c] + lim.mean_se[k][c] * lim.mean_se[k][c];
            total += g;
            total_var += gse2;
            if (g > row.mean_gap[c]) {
                row.mean_gap[c] = g;
                row.mean_gap_se[c] = std::sqrt(gse2);
            }
            const double vg = std::abs(ibm.var[k][c] - lim.var[k][c]);
            if (vg > row.var_gap[c]) {
                row.var_gap[c] = vg;
                row.var_gap_se[c] =
                    std::sqrt(ibm.var_se[k][c] * ibm.var_se[k][c] + lim.var_se[k][c] * lim.var_se[k][c]);
            }
        }
        if (total > row.distance) {
            row.distance = total;
            row.distance_se = std::sqrt(total_var);
        }
    }
}

}  // namespace detail

/// Seed of replica i of the population-size-n ensemble.
inline SeedSpec meanfield_replica_seed(std::uint64_t master_seed, std::uint64_t n, std::size_t i) {
    return {splitmix64(master_seed ^ n), i};
}

/// x0 is given in scaled coordinates; it is snapped to the lattice of each n.
inline MeanfieldTable meanfield_error(const IbmConfig& base, const StateVec& x0, const MeanfieldOptions& opt) {
    if (opt.n_values.empty()) throw ParameterError("meanfield_error: empty n list");
    for (std::size_t i = 0; i < opt.n_values.size(); ++i) {
        if (opt.n_values[i] < 2) throw ParameterError("meanfield_error: every n must be >= 2");
        if (i > 0 && opt.n_values[i] <= opt.n_values[i - 1]) throw ParameterError("meanfield_error: n list must increase");
    }
    if (opt.replicas == 0 || opt.limit_paths == 0 || opt.report_N == 0 || opt.limit_refine == 0)
        throw ParameterError("meanfield_error: counts must be positive");
    validate_ibm_config(base);

    MeanfieldTable out;
    const GridSpec report{opt.T, opt.report_N};

    const ModelParams lim = meanfield_limit_params(base);
    const GridSpec fine{opt.T, opt.report_N * opt.limit_refine};
    EnsembleOptions eo;
    eo.paths = opt.limit_paths;
    eo.master_seed = splitmix64(opt.master_seed ^ 0x6c696d6974ull);
    eo.threads = opt.threads;
    eo.sim.record_every = opt.limit_refine;
    eo.sim.validate = false;
    StateVec lx0 = x0;
    lx0.P = base.price;
    const auto lim_ens = run_ensemble(lim, lx0, fine, eo);
    out.limit = moment_bands(lim_ens.paths);

    for (std::uint64_t n : opt.n_values) {
        IbmConfig cfg = base;
        cfg.n = n;
        const auto s0 = IbmState::from_scaled(n, x0.J, x0.A, x0.E);
        std::vector<IbmRun> runs(opt.replicas);
        parallel_for(opt.replicas, opt.threads, [&](std::size_t i) {
            runs[i] = simulate_ibm(cfg, s0, report, meanfield_replica_seed(opt.master_seed, n, i));
        });
        MeanfieldRow row;
        row.n = n;
        std::vector<PathRecord> paths;
        paths.reserve(runs.size());
        for (auto& r : runs) {
            row.events += r.events;
            row.clamped = row.clamped || r.clamped;
            row.aborted = row.aborted || r.aborted;
            paths.push_back(std::move(r.path));
        }
        if (row.aborted) {
            // partial paths: pad with their last state so the bands stay rectangular
            for (auto& p : paths)
                while (p.states.size() < report.N + 1) p.states.push_back(p.states.back());
        }
        row.ibm = moment_bands(paths);
        detail::fill_gaps(row, row.ibm, out.limit);
        out.rows.push_back(std::move(row));
    }
    return out;
}

}  // namespace kelpsim
