#pragma once
// Statistics tables written for every simulated scenario point. All of them
// are computed from the recorded ensemble states only, so re-reading
// ensemble.tsv reproduces them byte for byte.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kelpsim/analysis.hpp"
#include "kelpsim/config.hpp"
#include "kelpsim/params_io.hpp"
#include "kelpsim/path_io.hpp"

namespace kelpsim {

struct ReportSettings {
    double K = 1.0;
    double low_fraction = 0.1;
    std::size_t hist_bins = 50;

    double low_threshold() const { return low_fraction * K; }
};

inline ReportSettings report_settings(const ModelParams& p, const RunSection& run) {
    return {p.eco.K, run.low_fraction, run.hist_bins};
}

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

inline std::vector<double> totals_at(const Ensemble& ens, std::size_t k) {
    std::vector<double> v(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) v[i] = ens.paths[i].states[k].J + ens.paths[i].states[k].A;
    return v;
}

inline std::string header(const Ensemble& ens, const std::string& what) {
    std::ostringstream o;
    o << "# table=" << what << "\n# master_seed=" << ens.master_seed << "\n# paths=" << ens.size()
      << "\n# param_hash=" << hex64(ens.param_hash) << "\n";
    return o.str();
}

}  // namespace detail

inline std::string summary_table(const Ensemble& ens, const ReportSettings& rs) {
    using detail::fmt;
    const std::size_t last = ens.points() - 1;
    const auto totals = detail::totals_at(ens, last);
    const auto ms = mean_se(totals);
    std::vector<double> finalE(ens.size());
    for (std::size_t i = 0; i < ens.size(); ++i) finalE[i] = ens.paths[i].states[last].E;
    const double T = ens.time_at(last);
    const auto ext = extinction_probability(ens, ens.extinction_threshold, T);
    const auto low = extinction_probability(ens, rs.low_threshold(), T);
    const auto lyap = lyapunov_estimate(ens);
    const auto m1 = moment_curve(ens, 1.0);
    std::size_t negatives = 0;
    for (const auto& p : ens.paths)
        for (const auto& x : p.states) negatives += (x.J < 0.0) + (x.A < 0.0);

    std::ostringstream o;
    o << detail::header(ens, "summary") << "key\tvalue\n";
    o << "T\t" << fmt(T) << "\n";
    o << "total_mean\t" << fmt(ms.mean) << "\n";
    o << "total_se\t" << fmt(ms.se) << "\n";
    o << "total_sd\t" << fmt(std::sqrt(ms.variance)) << "\n";
    o << "total_cv\t" << fmt(ms.mean > 0.0 ? std::sqrt(ms.variance) / ms.mean : 0.0) << "\n";
    o << "total_q05\t" << fmt(quantile(totals, 0.05)) << "\n";
    o << "total_q50\t" << fmt(quantile(totals, 0.5)) << "\n";
    o << "total_q95\t" << fmt(quantile(totals, 0.95)) << "\n";
    o << "E_mean\t" << fmt(mean_se(finalE).mean) << "\n";
    o << "extinction_threshold\t" << fmt(ens.extinction_threshold) << "\n";
    o << "extinction_probability\t" << fmt(ext.probability) << "\n";
    o << "low_threshold\t" << fmt(rs.low_threshold()) << "\n";
    o << "low_fraction\t" << fmt(low.probability) << "\n";
    o << "low_fraction_ci_lo\t" << fmt(low.ci.lo) << "\n";
    o << "low_fraction_ci_hi\t" << fmt(low.ci.hi) << "\n";
    o << "lyapunov_median\t" << (lyap.defined() ? fmt(lyap.median) : "nan") << "\n";
    o << "lyapunov_mean\t" << (lyap.defined() ? fmt(lyap.mean) : "nan") << "\n";
    o << "lyapunov_excluded\t" << lyap.excluded << "\n";
    o << "moment1_max\t" << fmt(m1.max_value) << "\n";
    o << "moment1_argmax_t\t" << fmt(m1.argmax_time) << "\n";
    o << "negative_biomass_values\t" << negatives << "\n";
    return o.str();
}

inline std::string extinction_table(const Ensemble& ens, const ReportSettings& rs) {
    using detail::fmt;
    std::ostringstream o;
    o << detail::header(ens, "extinction") << "# extinction_threshold=" << fmt(ens.extinction_threshold)
      << "\n# low_threshold=" << fmt(rs.low_threshold()) << "\n";
    o << "t\textinct\tp_extinct\tci_lo\tci_hi\tlow\tp_low\tlow_ci_lo\tlow_ci_hi\n";
    for (std::size_t k = 0; k < ens.points(); ++k) {
        const double t = ens.time_at(k);
        const auto e = extinction_probability(ens, ens.extinction_threshold, t);
        const auto l = extinction_probability(ens, rs.low_threshold(), t);
        o << fmt(t) << '\t' << e.count << '\t' << fmt(e.probability) << '\t' << fmt(e.ci.lo) << '\t' << fmt(e.ci.hi)
          << '\t' << l.count << '\t' << fmt(l.probability) << '\t' << fmt(l.ci.lo) << '\t' << fmt(l.ci.hi) << '\n';
    }
    return o.str();
}

inline std::string moments_table(const Ensemble& ens) {
    using detail::fmt;
    const auto m1 = moment_curve(ens, 1.0);
    const auto m2 = moment_curve(ens, 2.0);
    std::ostringstream o;
    o << detail::header(ens, "moments") << "# max_moment1=" << fmt(m1.max_value) << "\n# max_moment2=" << fmt(m2.max_value)
      << "\n";
    o << "t\tmoment1\tmoment1_se\tmoment2\tmoment2_se\n";
    for (std::size_t k = 0; k < m1.times.size(); ++k)
        o << fmt(m1.times[k]) << '\t' << fmt(m1.mean[k]) << '\t' << fmt(m1.se[k]) << '\t' << fmt(m2.mean[k]) << '\t'
          << fmt(m2.se[k]) << '\n';
    return o.str();
}

/// Histogram of J + A at every recorded time on one common set of bins.
inline std::string density_table(const Ensemble& ens, const ReportSettings& rs) {
    using detail::fmt;
    double hi = 0.0;
    for (const auto& p : ens.paths)
        for (const auto& x : p.states) hi = std::max(hi, x.J + x.A);
    const BinSpec bins{0.0, hi > 0.0 ? hi : 1.0, std::max<std::size_t>(rs.hist_bins, 1)};
    std::ostringstream o;
    o << detail::header(ens, "density") << "# variable=J+A\n# bins=" << bins.bins << "\n";
    o << "t\tbin_lo\tbin_hi\tcount\tdensity\n";
    for (std::size_t k = 0; k < ens.points(); ++k) {
        const auto totals = detail::totals_at(ens, k);
        const auto h = histogram(totals, bins);
        for (std::size_t b = 0; b < bins.bins; ++b)
            o << fmt(ens.time_at(k)) << '\t' << fmt(bins.edge(b)) << '\t' << fmt(bins.edge(b + 1)) << '\t'
              << h.counts[b] << '\t' << fmt(h.density[b]) << '\n';
    }
    return o.str();
}

/// Joint histogram of (J, A) at the final recorded time.
inline std::string joint_density_table(const Ensemble& ens, const ReportSettings& rs) {
    using detail::fmt;
    const std::size_t last = ens.points() - 1;
    std::vector<std::pair<double, double>> pts;
    double hj = 0.0, ha = 0.0;
    for (const auto& p : ens.paths) {
        const auto& x = p.states[last];
        pts.emplace_back(x.J, x.A);
        hj = std::max(hj, x.J);
        ha = std::max(ha, x.A);
    }
    const std::size_t nb = std::max<std::size_t>(rs.hist_bins / 2, 1);
    const BinSpec bj{0.0, hj > 0.0 ? hj : 1.0, nb}, ba{0.0, ha > 0.0 ? ha : 1.0, nb};
    const auto h = joint_histogram(pts, bj, ba);
    std::ostringstream o;
    o << detail::header(ens, "joint_density") << "# t=" << fmt(ens.time_at(last)) << "\n";
    o << "J_lo\tJ_hi\tA_lo\tA_hi\tcount\tdensity\n";
    for (std::size_t i = 0; i < nb; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            o << fmt(bj.edge(i)) << '\t' << fmt(bj.edge(i + 1)) << '\t' << fmt(ba.edge(j)) << '\t' << fmt(ba.edge(j + 1))
              << '\t' << h.at(i, j) << '\t' << fmt(h.density[i * nb + j]) << '\n';
    return o.str();
}

inline void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + file.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + file.string() + "'");
}

/// The statistics files of one scenario point.
inline void write_statistics(const std::filesystem::path& dir, const Ensemble& ens, const ReportSettings& rs) {
    std::filesystem::create_directories(dir);
    write_text(dir / "summary.tsv", summary_table(ens, rs));
    write_text(dir / "extinction.tsv", extinction_table(ens, rs));
    write_text(dir / "moments.tsv", moments_table(ens));
    write_text(dir / "density.tsv", density_table(ens, rs));
    write_text(dir / "joint_density.tsv", joint_density_table(ens, rs));
}

inline std::vector<std::string> statistics_files() {
    return {"summary.tsv", "extinction.tsv", "moments.tsv", "density.tsv", "joint_density.tsv"};
}

}  // namespace kelpsim
