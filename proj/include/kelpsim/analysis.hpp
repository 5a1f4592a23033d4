#pragma once
// Ensembles and long-run diagnostics: histograms, extinction frequencies,
// Lyapunov slopes, the closed-form extinction criterion, moment curves and
// occupation measures.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kelpsim/model.hpp"
#include "kelpsim/noise.hpp"
#include "kelpsim/parallel.hpp"
#include "kelpsim/scheme.hpp"

namespace kelpsim {

// ---------------------------------------------------------------------------
// Ensembles

struct EnsembleOptions {
    std::size_t paths = 1;
    std::uint64_t master_seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency
    SimulateOptions sim;
    double extinction_threshold = -1.0;  // negative means 1e-6 * K
};

inline double default_extinction_threshold(const ModelParams& p) { return 1e-6 * p.eco.K; }

struct Ensemble {
    GridSpec grid;
    std::size_t stride = 1;
    std::uint64_t master_seed = 0;
    std::uint64_t param_hash = 0;
    double extinction_threshold = 0.0;
    std::vector<PathRecord> paths;

    std::size_t size() const { return paths.size(); }
    std::size_t points() const { return paths.empty() ? 0 : paths.front().states.size(); }
    double time_at(std::size_t i) const { return static_cast<double>(i * stride) * grid.dt(); }
    bool extinct(std::size_t path) const {
        const auto& x = paths[path].states.back();
        return x.J + x.A < extinction_threshold;
    }
};

struct EnsembleError : std::runtime_error {
    std::size_t index;
    EnsembleError(std::size_t i, const std::string& what)
        : std::runtime_error("path " + std::to_string(i) + ": " + what), index(i) {}
};

/// M independent paths; path i uses SeedSpec{master_seed, i}, so the result
/// does not depend on the number of threads.
inline Ensemble run_ensemble(const ModelParams& params, const StateVec& x0, const GridSpec& grid,
                             const EnsembleOptions& opt) {
    if (opt.paths == 0) throw ParameterError("run_ensemble: need at least one path");
    detail::require_valid(params, grid, opt.sim);
    SimulateOptions sim = opt.sim;
    sim.validate = false;

    Ensemble ens;
    ens.grid = grid;
    ens.stride = sim.record_every;
    ens.master_seed = opt.master_seed;
    ens.param_hash = param_hash(params);
    ens.extinction_threshold =
        opt.extinction_threshold < 0.0 ? default_extinction_threshold(params) : opt.extinction_threshold;
    ens.paths.resize(opt.paths);
    parallel_for(opt.paths, opt.threads, [&](std::size_t i) {
        try {
            ens.paths[i] = simulate_path(params, x0, grid, SeedSpec{opt.master_seed, i}, sim);
        } catch (const std::exception& e) {
            throw EnsembleError(i, e.what());
        }
    });
    return ens;
}

// ---------------------------------------------------------------------------
// Histograms

struct BinSpec {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t bins = 10;

    double width() const { return (hi - lo) / static_cast<double>(bins); }
    double edge(std::size_t i) const { return lo + static_cast<double>(i) * width(); }
    /// Bin of v; values outside [lo, hi] are folded into the edge bins.
    std::size_t index(double v) const {
        if (!(v > lo)) return 0;
        const auto i = static_cast<std::size_t>((v - lo) / width());
        return std::min(i, bins - 1);
    }
    void check() const {
        if (bins == 0 || !(hi > lo)) throw ParameterError("histogram: need bins >= 1 and hi > lo");
    }
};

/// Bins spanning the sample range (widened by 1/2 on each side for a degenerate sample).
inline BinSpec auto_bins(std::span<const double> values, std::size_t bins) {
    if (values.empty()) return {0.0, 1.0, bins};
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    if (*mx > *mn) return {*mn, *mx, bins};
    return {*mn - 0.5, *mn + 0.5, bins};
}

struct Histogram {
    BinSpec spec;
    std::vector<std::size_t> counts;
    std::vector<double> density;
    std::size_t total = 0;

    bool empty() const { return total == 0; }
};

inline Histogram histogram(std::span<const double> values, const BinSpec& spec) {
    spec.check();
    Histogram h;
    h.spec = spec;
    if (values.empty()) return h;
    h.counts.assign(spec.bins, 0);
    for (double v : values) ++h.counts[spec.index(v)];
    h.total = values.size();
    h.density.resize(spec.bins);
    const double norm = 1.0 / (static_cast<double>(h.total) * spec.width());
    for (std::size_t i = 0; i < spec.bins; ++i) h.density[i] = static_cast<double>(h.counts[i]) * norm;
    return h;
}

struct Histogram2D {
    BinSpec x;
    BinSpec y;
    std::vector<std::size_t> counts;  // row-major, x outer
    std::vector<double> density;
    std::size_t total = 0;

    bool empty() const { return total == 0; }
    std::size_t at(std::size_t ix, std::size_t iy) const { return counts[ix * y.bins + iy]; }
};

inline Histogram2D joint_histogram(std::span<const std::pair<double, double>> values, const BinSpec& bx,
                                   const BinSpec& by) {
    bx.check();
    by.check();
    Histogram2D h;
    h.x = bx;
    h.y = by;
    if (values.empty()) return h;
    h.counts.assign(bx.bins * by.bins, 0);
    for (const auto& [u, v] : values) ++h.counts[bx.index(u) * by.bins + by.index(v)];
    h.total = values.size();
    h.density.resize(h.counts.size());
    const double norm = 1.0 / (static_cast<double>(h.total) * bx.width() * by.width());
    for (std::size_t i = 0; i < h.counts.size(); ++i) h.density[i] = static_cast<double>(h.counts[i]) * norm;
    return h;
}

/// Total-variation distance between two normalized 2-D tables on the same bins.
inline double total_variation(const Histogram2D& p, const Histogram2D& q) {
    if (p.counts.size() != q.counts.size()) throw ParameterError("total_variation: bin layouts differ");
    if (p.empty() || q.empty()) throw ParameterError("total_variation: empty table");
    double s = 0.0;
    for (std::size_t i = 0; i < p.counts.size(); ++i)
        s += std::abs(static_cast<double>(p.counts[i]) / static_cast<double>(p.total) -
                      static_cast<double>(q.counts[i]) / static_cast<double>(q.total));
    return 0.5 * s;
}

// ---------------------------------------------------------------------------
// Sample statistics

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    double variance = 0.0;  // unbiased
};

inline MeanSe mean_se(std::span<const double> v) {
    MeanSe r;
    const auto n = static_cast<double>(v.size());
    if (v.empty()) return r;
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return r;
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.variance = ss / (n - 1.0);
    r.se = std::sqrt(r.variance / n);
    return r;
}

/// Type-7 (linear interpolation) quantile of an unsorted sample.
inline double quantile(std::vector<double> v, double q) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const double h = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

inline Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054) {
    if (trials == 0) return {0.0, 1.0};
    const double n = static_cast<double>(trials);
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double centre = (p + z2 / (2.0 * n)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

// ---------------------------------------------------------------------------
// Extinction frequency

/// Recorded index closest to time t.
inline std::size_t nearest_point(const Ensemble& ens, double t) {
    const double step = static_cast<double>(ens.stride) * ens.grid.dt();
    const double k = std::round(t / step);
    if (k <= 0.0) return 0;
    return std::min(static_cast<std::size_t>(k), ens.points() - 1);
}

struct ExtinctionEstimate {
    double probability = 0.0;
    Interval ci;
    std::size_t count = 0;
    std::size_t paths = 0;
    double time = 0.0;  // recorded time actually used
    std::string warning;
};

/// Fraction of paths with J_t + A_t < threshold, with a Wilson 95% interval.
inline ExtinctionEstimate extinction_probability(const Ensemble& ens, double threshold, double t) {
    if (ens.size() == 0) throw ParameterError("extinction_probability: empty ensemble");
    if (!(threshold >= 0.0)) throw ParameterError("extinction_probability: threshold must be >= 0");
    ExtinctionEstimate out;
    const std::size_t k = nearest_point(ens, t);
    out.time = ens.time_at(k);
    if (std::abs(out.time - t) > 1e-9 * std::max(1.0, std::abs(t)))
        out.warning = "t = " + format_double(t) + " is not a recorded time; using t = " + format_double(out.time);
    for (const auto& p : ens.paths) {
        const auto& x = p.states[k];
        if (x.J + x.A < threshold) ++out.count;
    }
    out.paths = ens.size();
    out.probability = static_cast<double>(out.count) / static_cast<double>(out.paths);
    out.ci = wilson_interval(out.count, out.paths);
    return out;
}

// ---------------------------------------------------------------------------
// Lyapunov slopes

struct FitWindow {
    double t0 = -1.0;  // negative: half the horizon
    double t1 = -1.0;  // negative: the horizon
};

/// Least-squares slope of y against t.
inline double ls_slope(std::span<const double> t, std::span<const double> y) {
    const auto n = static_cast<double>(t.size());
    const double mt = std::accumulate(t.begin(), t.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sty = 0.0, stt = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sty += (t[i] - mt) * (y[i] - my);
        stt += (t[i] - mt) * (t[i] - mt);
    }
    return sty / stt;
}

/// Slope of log(J + A) over the window, or nothing when the total is not
/// strictly positive somewhere in the window or fewer than two points fall in it.
inline std::optional<double> lyapunov_estimate(const PathRecord& path, FitWindow w = {}) {
    const double T = path.time_at(path.states.size() - 1);
    const double t0 = w.t0 < 0.0 ? 0.5 * T : w.t0;
    const double t1 = w.t1 < 0.0 ? T : w.t1;
    std::vector<double> ts, ys;
    for (std::size_t i = 0; i < path.states.size(); ++i) {
        const double t = path.time_at(i);
        if (t < t0 - 1e-12 || t > t1 + 1e-12) continue;
        const double total = path.states[i].J + path.states[i].A;
        const double y = std::log(total);
        if (!(total > 0.0) || !std::isfinite(y)) return std::nullopt;
        ts.push_back(t);
        ys.push_back(y);
    }
    if (ts.size() < 2) return std::nullopt;
    return ls_slope(ts, ys);
}

struct LyapunovSummary {
    std::vector<double> slopes;  // in path order, excluded paths skipped
    std::size_t excluded = 0;
    double mean = 0.0;
    double median = 0.0;
    double q05 = 0.0;
    double q95 = 0.0;

    bool defined() const { return !slopes.empty(); }
    double fraction_below(double v) const {
        if (slopes.empty()) return std::numeric_limits<double>::quiet_NaN();
        const auto c = std::count_if(slopes.begin(), slopes.end(), [v](double s) { return s < v; });
        return static_cast<double>(c) / static_cast<double>(slopes.size());
    }
};

inline LyapunovSummary lyapunov_estimate(const Ensemble& ens, FitWindow w = {}) {
    LyapunovSummary s;
    for (const auto& p : ens.paths) {
        if (auto v = lyapunov_estimate(p, w))
            s.slopes.push_back(*v);
        else
            ++s.excluded;
    }
    if (s.slopes.empty()) return s;
    s.mean = mean_se(s.slopes).mean;
    s.median = quantile(s.slopes, 0.5);
    s.q05 = quantile(s.slopes, 0.05);
    s.q95 = quantile(s.slopes, 0.95);
    return s;
}

// ---------------------------------------------------------------------------
// Extinction criterion

struct ExtinctionCriterion {
    double r_hat = 0.0;      // sup_E r^(J)(E)
    double m_check_A = 0.0;  // min_E m_A + F_A(E)
    double m_check_J = 0.0;  // min_E m_J + F_J(E)
    double M_bound = 0.0;
    double eps1 = 0.0;
    double lambda = 0.0;
    double jump_term = 0.0;  // M lambda / eps1
    double margin1 = 0.0;    // (sigma_A^2/2 ^ m_J) + m_A - r_hat
    double margin2 = 0.0;    // min{...} - M lambda / eps1
    bool moment_ok = true;
    bool cond1 = false;
    bool cond2 = false;
    std::optional<double> eta;

    bool passes() const { return moment_ok && cond1 && cond2; }
};

namespace detail {

/// Dense scan of a rate family over E in [0,1]. Gated families take gate 1
/// for the supremum and gate 0 for the infimum.
inline std::pair<double, double> scan_family(const RateFamily& f, std::size_t points = 1001) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points; ++i) {
        const double e = static_cast<double>(i) / static_cast<double>(points - 1);
        hi = std::max(hi, f.with_gate(e, 1.0));
        lo = std::min(lo, f.with_gate(e, f.price_gated ? 0.0 : 1.0));
    }
    return {lo, hi};
}

}  // namespace detail

inline ExtinctionCriterion extinction_criterion(const ModelParams& params) {
    const auto& eco = params.eco;
    const auto& jp = params.jumps;
    ExtinctionCriterion c;
    c.r_hat = detail::scan_family(eco.r_J).second;
    c.m_check_A = eco.m_A + detail::scan_family(eco.F_A).first;
    c.m_check_J = eco.m_J + detail::scan_family(eco.F_J).first;
    const auto mb = jump_moment_bounds(jp);
    c.M_bound = std::max(mb.first, mb.second);
    c.eps1 = jp.eps1;
    c.lambda = jp.lambda;
    const bool jumps_on = jp.lambda > 0.0 && !jp.marks.empty();
    if (jumps_on) {
        c.moment_ok = std::isfinite(c.M_bound) && jp.eps1 > 0.0;
        c.jump_term = jp.eps1 > 0.0 ? c.M_bound * jp.lambda / jp.eps1 : std::numeric_limits<double>::infinity();
    }
    const double sa = 0.5 * eco.sigma_A * eco.sigma_A;
    const double sj = 0.5 * eco.sigma_J * eco.sigma_J;
    c.margin1 = std::min(sa, c.m_check_J) + c.m_check_A - c.r_hat;
    c.cond1 = c.margin1 > 0.0;
    const double a_rate = sa + c.m_check_A - c.r_hat;
    const double j_rate = c.m_check_J + sj;
    c.margin2 = std::min(j_rate, a_rate) - c.jump_term;
    c.cond2 = c.margin2 > 0.0;
    if (c.passes()) c.eta = std::min(a_rate - c.jump_term, j_rate - c.jump_term);
    return c;
}

// ---------------------------------------------------------------------------
// Moments and occupation measures

struct MomentCurve {
    double order = 1.0;
    std::vector<double> times;
    std::vector<double> mean;
    std::vector<double> se;
    double max_value = 0.0;
    double argmax_time = 0.0;
};

/// Per-time sample moment of (J + A)^p with standard errors.
inline MomentCurve moment_curve(const Ensemble& ens, double p = 1.0) {
    if (!(p >= 1.0)) throw ParameterError("moment_curve: order must be >= 1");
    MomentCurve c;
    c.order = p;
    const std::size_t pts = ens.points();
    std::vector<double> col(ens.size());
    for (std::size_t k = 0; k < pts; ++k) {
        for (std::size_t i = 0; i < ens.size(); ++i) {
            const auto& x = ens.paths[i].states[k];
            col[i] = std::pow(std::abs(x.J) + std::abs(x.A), p);
        }
        const auto m = mean_se(col);
        c.times.push_back(ens.time_at(k));
        c.mean.push_back(m.mean);
        c.se.push_back(m.se);
        if (k == 0 || m.mean > c.max_value) {
            c.max_value = m.mean;
            c.argmax_time = ens.time_at(k);
        }
    }
    return c;
}

/// Time-averaged empirical distribution of (J, A) over recorded points with
/// time in [0, t].
inline Histogram2D occupation_measure(const PathRecord& path, double t, const BinSpec& bj, const BinSpec& ba) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < path.states.size() && path.time_at(i) <= t + 1e-12; ++i)
        pts.emplace_back(path.states[i].J, path.states[i].A);
    return joint_histogram(pts, bj, ba);
}

}  // namespace kelpsim
