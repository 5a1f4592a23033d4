#pragma once
// Coefficients of the coupled kelp / harvester-compliance / price system.
//
// Every function here is a pure function of immutable parameter objects.
// State:  X = (J, A, E, P)  with J, A >= 0 biomass densities, E in [0,1]
// the compliant fraction of harvesters and P >= 0 the exogenous price.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace kelpsim {

struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Clamp z into [eps, 1-eps]. 1-Lipschitz in z.
inline double cutoff(double eps, double z) {
    if (!(eps >= 0.0 && eps < 0.5))
        throw ParameterError("cutoff: eps must lie in [0, 1/2)");
    return std::min(std::max(eps, z), 1.0 - eps);
}

/// Smooth indicator of [p0, +inf): 1 / (1 + exp(-eta (p - p0))).
inline double activation(double eta, double p0, double p) {
    const double x = eta * (p - p0);
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double ex = std::exp(x);
    return ex / (1.0 + ex);
}

/// A rate that interpolates linearly in E between its value under full
/// compliance (E = 1) and full non-compliance (E = 0). When price_gated is
/// set, the rate is further multiplied by activation(gate_eta, gate_price, P)
/// so that extraction goes dormant at low prices.
struct RateFamily {
    double compliant = 0.0;
    double noncompliant = 0.0;
    bool price_gated = false;
    double gate_eta = 0.0;
    double gate_price = 0.0;

    static RateFamily constant(double v) { return {v, v, false, 0.0, 0.0}; }

    double gate(double p) const { return price_gated ? activation(gate_eta, gate_price, p) : 1.0; }

    double operator()(double e, double p = 0.0) const {
        return (e * compliant + (1.0 - e) * noncompliant) * gate(p);
    }
    /// Value at compliance e with an explicit gate factor in [0,1].
    double with_gate(double e, double gate_factor) const {
        return (e * compliant + (1.0 - e) * noncompliant) * gate_factor;
    }

    double sup() const { return std::max(compliant, noncompliant); }
    double inf() const { return price_gated ? 0.0 : std::min(compliant, noncompliant); }
    double lipschitz() const { return std::abs(compliant - noncompliant); }
};

struct EcologicalParams {
    RateFamily r_J = RateFamily::constant(0.0);  // recruitment rate r^(J)(E)
    double K = 1.0;                               // carrying capacity
    double rho_A = 0.0;                           // maturation rate
    double m_J = 0.0;
    double m_A = 0.0;
    RateFamily F_J = RateFamily::constant(0.0);  // juvenile extraction
    RateFamily F_A = RateFamily::constant(0.0);  // adult extraction
    double sigma_J = 0.0;                         // environmental noise
    double sigma_A = 0.0;
};

struct ComplianceParams {
    double beta0_bar = 0.0;  // compliance -> non-compliance baseline
    double beta1_bar = 0.0;  // non-compliance -> compliance baseline
    double tau_U = 0.0;      // syndicate fraction
    double sigma_E = 0.0;
    double eta_sig = 0.0;    // sigmoid steepness, per price unit
    double P_min = 0.0;
    double P_max = 0.0;
    double s = 0.0;          // subsidy on top of the price
};

/// One atom of the discrete mark law: mark value, probability and the gains
/// applied to adults / juveniles when this mark is drawn.
struct MarkAtom {
    double z = 0.0;
    double prob = 0.0;
    double gain_A = 0.0;
    double gain_J = 0.0;
};

enum class Population { Juvenile, Adult };

struct JumpParams {
    double lambda = 0.0;
    std::vector<MarkAtom> marks;
    double eps1 = 0.0;  // jumps are switched off below this biomass
    double eps2 = 0.0;  // margin: |gain| <= 1 - eps2
    double cap = 1.0;   // biomass cap inside the jump amplitude

    /// Two-point ENSO law: a warm phase (mark -1) with damaging gain and a
    /// cold phase (mark +1) with favourable gain.
    static std::vector<MarkAtom> enso(double p_warm, double warm_gain, double cold_gain) {
        return {{-1.0, p_warm, warm_gain, warm_gain}, {1.0, 1.0 - p_warm, cold_gain, cold_gain}};
    }

    const MarkAtom& atom(double z) const {
        for (const auto& m : marks)
            if (m.z == z) return m;
        throw DomainError("mark " + std::to_string(z) + " is not in the support of the mark law");
    }
    double gain(Population which, double z) const {
        const auto& m = atom(z);
        return which == Population::Adult ? m.gain_A : m.gain_J;
    }
};

enum class PriceKind { GeometricBrownian, ExpOrnsteinUhlenbeck, Constant };

struct PriceParams {
    PriceKind kind = PriceKind::Constant;
    double mu = 0.0;        // GBM drift, per year
    double sigma_P = 0.0;   // volatility, per sqrt(year)
    double theta = 1.0;     // long-run price level (exp-OU)
    double kappa_P = 0.0;   // reversion speed of log P (exp-OU)
    double P0 = 0.0;
};

struct ModelParams {
    EcologicalParams eco;
    ComplianceParams comp;
    JumpParams jumps;
    PriceParams price;

    /// Same system with both extraction families switched off (burn-in phase).
    ModelParams without_extraction() const {
        ModelParams p = *this;
        p.eco.F_J = RateFamily::constant(0.0);
        p.eco.F_A = RateFamily::constant(0.0);
        return p;
    }
};

struct StateVec {
    double J = 0.0;
    double A = 0.0;
    double E = 0.0;
    double P = 0.0;

    bool in_state_space() const {
        return J >= 0.0 && A >= 0.0 && E >= 0.0 && E <= 1.0 && P >= 0.0 && std::isfinite(J) &&
               std::isfinite(A) && std::isfinite(P);
    }
    friend bool operator==(const StateVec&, const StateVec&) = default;
};

// ---------------------------------------------------------------------------
// Ecological rates

/// rho_J(K, E) = r^(J)(E) * Psi(1 - (A+J)/K).
inline double recruitment(double J, double A, double E, const EcologicalParams& eco, double P = 0.0) {
    if (J < 0.0 || A < 0.0) throw DomainError("recruitment: negative biomass");
    return eco.r_J(E, P) * cutoff(0.0, 1.0 - (A + J) / eco.K);
}

struct LossRates {
    double kappa_J = 0.0;
    double kappa_A = 0.0;
};

inline LossRates loss_rates(double E, const EcologicalParams& eco, double P = 0.0) {
    return {eco.rho_A + eco.F_J(E, P) + eco.m_J, eco.m_A + eco.F_A(E, P)};
}

/// Suprema of kappa_J, kappa_A over E in [0,1] (and P when gated).
inline LossRates loss_rate_sup(const EcologicalParams& eco) {
    return {eco.rho_A + eco.F_J.sup() + eco.m_J, eco.m_A + eco.F_A.sup()};
}

// ---------------------------------------------------------------------------
// Compliance switching rates

struct ComplianceRates {
    double beta0 = 0.0;  // compliance -> non-compliance
    double beta1 = 0.0;  // non-compliance -> compliance
};

inline ComplianceRates compliance_rates(const StateVec& x, const ComplianceParams& cp,
                                        const EcologicalParams& eco) {
    const double crowd = cutoff(0.0, (x.J + x.A) / eco.K);
    const double i_min = activation(cp.eta_sig, cp.P_min, x.P);
    const double i_max = activation(cp.eta_sig, cp.P_max, x.P);
    const double i_sub = activation(cp.eta_sig, cp.P_min, x.P + cp.s);
    ComplianceRates r;
    r.beta0 = (crowd + (1.0 - i_min + i_max) + 1.0) * cp.tau_U * (1.0 - x.E) + cp.beta0_bar;
    r.beta1 = (1.0 - crowd + i_sub + 1.0) * cp.tau_U * x.E + cp.beta1_bar;
    return r;
}

/// State-dependent part of the compliance drift:
///   beta1 (1-E) - beta0 E = delta_beta * E (1-E) + beta1_bar - (beta0_bar + beta1_bar) E.
inline double delta_beta(double J, double A, double P, const ComplianceParams& cp,
                         const EcologicalParams& eco) {
    const double crowd = cutoff(0.0, (J + A) / eco.K);
    return cp.tau_U * (activation(cp.eta_sig, cp.P_min, P + cp.s) + activation(cp.eta_sig, cp.P_min, P) -
                       activation(cp.eta_sig, cp.P_max, P) - 2.0 * crowd);
}

// ---------------------------------------------------------------------------
// Jumps

/// phi(x, z) = g(z) * (min(x, cap) - eps1) * 1{x >= eps1}.
inline double jump_phi(Population which, double x, double z, const JumpParams& jp) {
    if (x < jp.eps1) return 0.0;
    return jp.gain(which, z) * (std::min(x, jp.cap) - jp.eps1);
}

/// Integrated jump amplitudes, uniform in x:
///   first  >= sup_x  int (|phi_A| + |phi_J|) dnu
///   second >= sup_x  int (phi_A^2 + phi_J^2) dnu
struct JumpMomentBounds {
    double first = 0.0;
    double second = 0.0;
    double l2_gain_A = 0.0;  // ||g_A||_{L2(nu)}^2
    double l2_gain_J = 0.0;
};

inline JumpMomentBounds jump_moment_bounds(const JumpParams& jp) {
    JumpMomentBounds b;
    const double span = std::max(jp.cap - jp.eps1, 0.0);
    for (const auto& m : jp.marks) {
        b.first += m.prob * (std::abs(m.gain_A) + std::abs(m.gain_J)) * span;
        b.second += m.prob * (m.gain_A * m.gain_A + m.gain_J * m.gain_J) * span * span;
        b.l2_gain_A += m.prob * m.gain_A * m.gain_A;
        b.l2_gain_J += m.prob * m.gain_J * m.gain_J;
    }
    return b;
}

// ---------------------------------------------------------------------------
// Price

/// Ito drift mu(P) of the price process.
inline double price_drift(double P, const PriceParams& pp) {
    switch (pp.kind) {
        case PriceKind::GeometricBrownian:
            return pp.mu * P;
        case PriceKind::ExpOrnsteinUhlenbeck:
            if (P <= 0.0) return 0.0;
            return P * (pp.kappa_P * (std::log(pp.theta) - std::log(P)) + 0.5 * pp.sigma_P * pp.sigma_P);
        case PriceKind::Constant:
            return 0.0;
    }
    return 0.0;
}

inline double price_diffusion(double P, const PriceParams& pp) {
    return pp.kind == PriceKind::Constant ? 0.0 : pp.sigma_P * P;
}

// ---------------------------------------------------------------------------
// Drift of the full system

inline std::array<double, 4> drift_vector(const StateVec& x, const ModelParams& params) {
    if (!x.in_state_space()) throw DomainError("drift_vector: state outside the state space");
    const auto& eco = params.eco;
    const auto k = loss_rates(x.E, eco, x.P);
    const auto b = compliance_rates(x, params.comp, eco);
    return {recruitment(x.J, x.A, x.E, eco, x.P) * x.A - k.kappa_J * x.J,
            eco.rho_A * x.J - k.kappa_A * x.A,
            b.beta1 * (1.0 - x.E) - b.beta0 * x.E,
            price_drift(x.P, params.price)};
}

// ---------------------------------------------------------------------------
// Assumption checks

struct Check {
    std::string id;
    std::string description;
    bool pass = true;
    std::vector<std::pair<std::string, double>> witness;

    double value(const std::string& key) const {
        for (const auto& [k, v] : witness)
            if (k == key) return v;
        return std::numeric_limits<double>::quiet_NaN();
    }
};

struct ValidationReport {
    std::vector<Check> checks;

    bool ok() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
    }
    const Check* find(const std::string& id) const {
        for (const auto& c : checks)
            if (c.id == id) return &c;
        return nullptr;
    }
    std::vector<std::string> failures() const {
        std::vector<std::string> out;
        for (const auto& c : checks)
            if (!c.pass) out.push_back(c.id);
        return out;
    }
};

namespace detail {

/// Sampled sup and Lipschitz constant of e -> f(e) over a uniform grid of [0,1].
template <class F>
std::pair<double, double> scan_sup_lipschitz(F&& f, int points = 1001) {
    double sup = 0.0, lip = 0.0;
    double prev = f(0.0);
    sup = std::abs(prev);
    const double h = 1.0 / (points - 1);
    for (int i = 1; i < points; ++i) {
        const double v = f(i * h);
        sup = std::max(sup, std::abs(v));
        lip = std::max(lip, std::abs(v - prev) / h);
        prev = v;
    }
    return {sup, lip};
}

inline bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace detail

inline ValidationReport validate_params(const ModelParams& params) {
    const auto& eco = params.eco;
    const auto& cp = params.comp;
    const auto& jp = params.jumps;
    const auto& pp = params.price;
    ValidationReport rep;

    {
        Check c{"params", "parameters are well formed (K>0, rates>=0, thresholds ordered, mark law is a probability)", true, {}};
        const auto fam_ok = [](const RateFamily& f) {
            return detail::finite_nonneg(f.compliant) && detail::finite_nonneg(f.noncompliant) &&
                   (!f.price_gated || detail::finite_nonneg(f.gate_eta));
        };
        double mass = 0.0;
        bool atoms_ok = true;
        for (std::size_t i = 0; i < jp.marks.size(); ++i) {
            mass += jp.marks[i].prob;
            atoms_ok = atoms_ok && jp.marks[i].prob >= 0.0;
            for (std::size_t k = 0; k < i; ++k) atoms_ok = atoms_ok && jp.marks[k].z != jp.marks[i].z;
        }
        const bool law_ok = jp.marks.empty() ? jp.lambda == 0.0 : std::abs(mass - 1.0) <= 1e-12;
        c.pass = eco.K > 0.0 && std::isfinite(eco.K) && fam_ok(eco.r_J) && fam_ok(eco.F_J) && fam_ok(eco.F_A) &&
                 detail::finite_nonneg(eco.rho_A) && detail::finite_nonneg(eco.m_J) &&
                 detail::finite_nonneg(eco.m_A) && detail::finite_nonneg(eco.sigma_J) &&
                 detail::finite_nonneg(eco.sigma_A) && cp.tau_U >= 0.0 && cp.tau_U <= 1.0 &&
                 detail::finite_nonneg(cp.sigma_E) && detail::finite_nonneg(cp.eta_sig) && cp.P_min <= cp.P_max &&
                 detail::finite_nonneg(cp.s) && detail::finite_nonneg(jp.lambda) && law_ok && atoms_ok &&
                 (jp.lambda == 0.0 || (jp.eps1 > 0.0 && jp.eps2 > 0.0 && jp.eps2 < 1.0 && jp.cap > jp.eps1));
        c.witness = {{"mark_mass", mass}, {"K", eco.K}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"H1", "r_J, F_max_A, F_max_J bounded and globally Lipschitz on [0,1]", true, {}};
        bool ok = true;
        const std::pair<const char*, const RateFamily*> fams[] = {{"r_J", &eco.r_J}, {"F_J", &eco.F_J}, {"F_A", &eco.F_A}};
        for (const auto& [name, fam] : fams) {
            const auto [sup, lip] = detail::scan_sup_lipschitz([f = fam](double e) { return f->with_gate(e, 1.0); });
            ok = ok && std::isfinite(sup) && std::isfinite(lip) && fam->inf() >= 0.0;
            c.witness.emplace_back(std::string(name) + ".sup", sup);
            c.witness.emplace_back(std::string(name) + ".lipschitz", lip);
        }
        c.pass = ok;
        rep.checks.push_back(std::move(c));
    }
    const auto mb = jump_moment_bounds(jp);
    double min_gain = 0.0, max_abs_gain = 0.0;
    for (const auto& m : jp.marks) {
        min_gain = std::min({min_gain, m.gain_A, m.gain_J});
        max_abs_gain = std::max({max_abs_gain, std::abs(m.gain_A), std::abs(m.gain_J)});
    }
    {
        Check c{"H2.i", "linear growth |phi(x,z)| <= x |g(z)| with g in L2(nu)", true, {}};
        c.pass = std::isfinite(mb.l2_gain_A) && std::isfinite(mb.l2_gain_J);
        c.witness = {{"l2_gain_A", mb.l2_gain_A}, {"l2_gain_J", mb.l2_gain_J}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"H2.ii", "L2(nu)-Lipschitz jump coefficients", true, {}};
        c.pass = std::isfinite(mb.l2_gain_A) && std::isfinite(mb.l2_gain_J);
        c.witness = {{"L_phi_A", mb.l2_gain_A}, {"L_phi_J", mb.l2_gain_J}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"H2.iii", "lower control of jumps: x + phi(x,z) >= 0", true, {}};
        c.pass = jp.lambda == 0.0 || min_gain >= -1.0;
        c.witness = {{"min_gain", min_gain}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"H3", "min(beta0_bar, beta1_bar) > sigma_E^2 / 2", true, {}};
        const double lhs = std::min(cp.beta0_bar, cp.beta1_bar);
        const double rhs = 0.5 * cp.sigma_E * cp.sigma_E;
        c.pass = cp.beta0_bar >= 0.0 && cp.beta1_bar >= 0.0 && lhs > rhs;
        c.witness = {{"min_beta_bar", lhs}, {"half_sigma_E_sq", rhs}, {"margin", lhs - rhs}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"H4", "price coefficients Lipschitz and price stays non-negative", true, {}};
        bool ok = std::isfinite(pp.mu) && detail::finite_nonneg(pp.sigma_P) && detail::finite_nonneg(pp.P0);
        if (pp.kind == PriceKind::ExpOrnsteinUhlenbeck)
            ok = ok && pp.P0 > 0.0 && pp.theta > 0.0 && detail::finite_nonneg(pp.kappa_P);
        c.pass = ok;
        c.witness = {{"P0", pp.P0}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"origin.support", "jump coefficients vanish below eps1", true, {}};
        c.pass = jp.lambda == 0.0 || jp.eps1 > 0.0;
        c.witness = {{"eps1", jp.eps1}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"origin.nokilling", "x + phi(x,z) > eps for x >= eps1 (|g| <= 1 - eps2)", true, {}};
        c.pass = jp.lambda == 0.0 || (max_abs_gain <= 1.0 - jp.eps2 && jp.eps2 > 0.0);
        c.witness = {{"max_abs_gain", max_abs_gain}, {"eps", jp.eps1 * jp.eps2}};
        rep.checks.push_back(std::move(c));
    }
    {
        Check c{"origin.no_excess", "int (|phi_A| + |phi_J|) dnu < M uniformly in x", true, {}};
        c.pass = std::isfinite(mb.first) && std::isfinite(mb.second);
        c.witness = {{"M_first", mb.first}, {"M_second", mb.second}};
        rep.checks.push_back(std::move(c));
    }
    return rep;
}

}  // namespace kelpsim
