#pragma once

// Extraction of cavity and Fano parameters from reflectivity data.
//
// Bare cavity:  R_c(theta) = A (-e^{i phi} + 2 k_R / (k + i Dc(theta)))
// Fano profile: |R|^2 = a P |eps + q|^2 / (eps^2 + 1) + b,  eps = 2 (x + shift) / W
//
// Two ambiguities are inherent to intensity data and are resolved explicitly:
//  * |R_c|^2 is invariant under a discrete map exchanging an overcritical and an
//    undercritical (k_R, phi) pair. The branch comes from a hint (e.g. the phase
//    winding of a complex scan); without one both are fitted and the result is
//    flagged ambiguous.
//  * |eps + q|^2 only fixes |Im q|. The sign is taken from the cavity context
//    (the branch closer to i + Pi r_E e^{i phi_E}); without context Im q >= 0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fanocav/core_model.hpp"
#include "fanocav/errors.hpp"
#include "fanocav/least_squares.hpp"

namespace fanocav {

enum class InitialGuess { auto_detect, context };

struct OptimizerConfig {
    LsqConfig lsq{};
    InitialGuess strategy = InitialGuess::context;
    std::optional<Regime> branch;       ///< bare fit: restrict to one coupling branch
    bool fit_background = false;        ///< Fano fit: free b (degenerate with a and q, see fit_fano)
    bool poisson_weights = false;       ///< weight residuals by 1/sqrt(y)
    std::map<std::string, std::pair<double, double>> bounds; ///< per-parameter overrides by name
};

// ---------------------------------------------------------------------------
// Bare cavity

struct BareCavityFit {
    double A = 0.0;
    double phi = 0.0;
    double theta_mode = 0.0; ///< mrad
    double kappa = 0.0;      ///< 1e-2 omega0
    double kappa_r = 0.0;    ///< 1e-2 omega0
    double residual_rms = 0.0;
    bool converged = false;
    bool regime_ambiguous = false;
    Regime regime = Regime::critical;
    Termination termination = Termination::iteration_cap;
    int iterations = 0;
    std::vector<double> uncertainties; ///< same order as the parameters above
    std::string diagnostic;

    CavityParams cavity(double omega0_kev = kFe57LineKeV) const {
        return {theta_mode * 1e-3, kappa * 1e-2, kappa_r * 1e-2, omega0_kev};
    }
};

/// Complex fit-model amplitude A(-e^{i phi} + 2 kappa_R / (kappa + i Dc)) at grazing angle theta [rad].
inline cplx bare_cavity_fit_amplitude(double theta, const CavityPreset& p) {
    const double dc = cavity_detuning(theta, p.cavity);
    return p.amplitude * (-std::polar(1.0, p.dispersion) + 2.0 * p.cavity.kappa_r / cplx(p.cavity.kappa, dc));
}

inline std::vector<double> bare_cavity_curve(std::span<const double> theta, const CavityPreset& p) {
    std::vector<double> out;
    out.reserve(theta.size());
    for (double t : theta) out.push_back(std::norm(bare_cavity_fit_amplitude(t, p)));
    return out;
}

/// Start vector (A, phi, theta_mode [mrad], kappa, kappa_r [1e-2 omega0]).
struct BareStart {
    double A, phi, theta_mode, kappa, kappa_r;
};

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
    return m;
}

inline void check_grid(std::span<const double> x, std::span<const double> y, std::size_t min_points,
                       const char* who) {
    if (x.size() != y.size()) throw InputError(std::string(who) + ": grid and data lengths differ");
    if (x.size() < min_points)
        throw InputError(std::string(who) + ": need at least " + std::to_string(min_points) + " points");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError(std::string(who) + ": non-finite input");
        if (i > 0 && !(x[i] > x[i - 1])) throw InputError(std::string(who) + ": grid must be strictly increasing");
    }
}

inline void apply_bound_overrides(const OptimizerConfig& cfg, const std::vector<std::string>& names, Bounds& b) {
    for (const auto& [name, lim] : cfg.bounds) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw InputError("bounds: unknown parameter '" + name + "'");
        const auto j = it - names.begin();
        b.lower[j] = lim.first;
        b.upper[j] = lim.second;
    }
}

} // namespace detail

/// Start values from the dip: minimum position, half-depth width mapped through the
/// detuning relation (the dip is Lorentzian in Dc with HWHM kappa), and kappa_R from the
/// depth, R_min / R_off = (2 k_R - k)^2 / k^2, on the requested branch.
inline BareStart initial_guess_bare(std::span<const double> theta, std::span<const double> data,
                                    Regime branch = Regime::overcritical) {
    detail::check_grid(theta, data, 3, "initial_guess_bare");
    const auto n = data.size();
    const std::size_t imin = static_cast<std::size_t>(std::min_element(data.begin(), data.end()) - data.begin());
    const double off = *std::max_element(data.begin(), data.end());
    const double low = data[imin];
    if (!(off > 0.0) || (off - low) < 1e-3 * off)
        throw FitError("initial_guess_bare: no identifiable mode dip; widen the angular scan");
    const double half = 0.5 * (off + low);
    std::size_t left = imin, right = imin;
    while (left > 0 && data[left] < half) --left;
    while (right + 1 < n && data[right] < half) ++right;
    if (data[left] < half || data[right] < half || imin == 0 || imin + 1 == n)
        throw FitError("initial_guess_bare: dip is not bracketed by the scan; widen the angular scan");

    auto cross = [&](std::size_t i, std::size_t j) {
        const double f = (half - data[i]) / (data[j] - data[i]);
        return theta[i] + f * (theta[j] - theta[i]);
    };
    const double t_left = cross(left, left + 1);
    const double t_right = cross(right, right - 1);
    const double t0 = theta[imin];
    const double fwhm = std::sin(t0) / std::sin(t_left) - std::sin(t0) / std::sin(t_right);
    const double kappa = 0.5 * std::abs(fwhm);
    const double imbalance = kappa * std::sqrt(std::max(low, 0.0) / off);
    const double kappa_r = branch == Regime::undercritical ? 0.5 * (kappa - imbalance) : 0.5 * (kappa + imbalance);
    return {std::min(std::sqrt(off), 1.2), 0.0, t0 * 1e3, kappa * 1e2, std::max(kappa_r * 1e2, 1e-6)};
}

namespace detail {

inline Vec bare_residuals(const Vec& p, std::span<const double> theta, std::span<const double> data,
                          std::span<const double> weights) {
    Vec r(static_cast<Eigen::Index>(theta.size()));
    const CavityPreset preset{{p[2] * 1e-3, p[3] * 1e-2, p[4] * 1e-2, kFe57LineKeV}, p[0], p[1]};
    const double s_mode = std::sin(preset.cavity.theta_mode);
    const cplx e = std::polar(1.0, p[1]);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double dc = s_mode / std::sin(theta[i]) - 1.0;
        const cplx amp = p[0] * (-e + 2.0 * preset.cavity.kappa_r / cplx(preset.cavity.kappa, dc));
        r[static_cast<Eigen::Index>(i)] = weights[i] * (std::norm(amp) - data[i]);
    }
    return r;
}

inline std::vector<double> make_weights(std::span<const double> y, bool poisson) {
    std::vector<double> w(y.size(), 1.0);
    if (poisson) {
        const double floor = 1e-6 * std::max(*std::max_element(y.begin(), y.end()), 1e-300);
        for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / std::sqrt(std::max(y[i], floor));
    }
    return w;
}

} // namespace detail

/// Least-squares fit of the bare-cavity curve over (A, phi, theta_mode, kappa, kappa_R).
/// Never throws for bad data shape past validation: failures come back with converged = false.
inline BareCavityFit fit_bare_cavity(std::span<const double> theta, std::span<const double> data,
                                     const OptimizerConfig& cfg = {}) {
    detail::check_grid(theta, data, 50, "fit_bare_cavity");
    for (double v : data)
        if (v < 0.0) throw InputError("fit_bare_cavity: reflectivity data must be non-negative");

    BareCavityFit out;
    const std::vector<double> w = detail::make_weights(data, cfg.poisson_weights);
    const std::vector<std::string> names{"A", "phi", "theta_mode", "kappa", "kappa_r"};
    Bounds b{Vec(5), Vec(5)};
    b.lower << 1e-6, -kPi, theta.front() * 1e3, 1e-6, 1e-6;
    b.upper << 1.2, kPi, theta.back() * 1e3, 1e3, 1e3;
    detail::apply_bound_overrides(cfg, names, b);

    std::vector<Regime> branches;
    if (cfg.branch && *cfg.branch != Regime::critical) branches = {*cfg.branch};
    else branches = {Regime::overcritical, Regime::undercritical};

    LsqConfig lsq = cfg.lsq;
    lsq.absolute_objective = std::max(lsq.absolute_objective, 1e-30 * static_cast<double>(data.size()));

    struct Candidate {
        LsqResult r;
        Regime branch;
    };
    std::vector<Candidate> cands;
    std::string last_error;
    for (Regime br : branches) {
        BareStart s{};
        try {
            s = initial_guess_bare(theta, data, br);
        } catch (const FitError& e) {
            last_error = e.what();
            continue;
        }
        Vec x0(5);
        x0 << s.A, s.phi, s.theta_mode, s.kappa, s.kappa_r;
        auto f = [&](const Vec& p) { return detail::bare_residuals(p, theta, data, w); };
        cands.push_back({least_squares_minimize(f, x0, b, lsq), br});
    }
    if (cands.empty()) {
        out.converged = false;
        out.diagnostic = last_error;
        return out;
    }

    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& c) { return a.r.objective < c.r.objective; });
    std::size_t pick = 0;
    if (cands.size() == 2) {
        const double f0 = cands[0].r.objective, f1 = cands[1].r.objective;
        const double scale = std::max(1e-20 * static_cast<double>(data.size()), 1e-6 * f1);
        if (f1 - f0 <= scale) {
            out.regime_ambiguous = true;
            if (std::abs(cands[1].r.x[1]) < std::abs(cands[0].r.x[1])) pick = 1;
        }
    }
    const LsqResult& r = cands[pick].r;
    out.A = r.x[0];
    out.phi = r.x[1];
    out.theta_mode = r.x[2];
    out.kappa = r.x[3];
    out.kappa_r = r.x[4];
    out.termination = r.reason;
    out.iterations = r.iterations;
    out.residual_rms = std::sqrt(r.objective / static_cast<double>(data.size()));
    out.uncertainties.assign(r.uncertainties.data(), r.uncertainties.data() + r.uncertainties.size());
    out.regime = classify_regime(out.cavity());

    const bool on_bound = out.theta_mode <= b.lower[2] || out.theta_mode >= b.upper[2];
    out.converged = r.converged() && std::isfinite(out.residual_rms) && !on_bound;
    if (!r.converged()) out.diagnostic = "optimizer stopped: " + to_string(r.reason);
    else if (on_bound) out.diagnostic = "mode angle pinned at the scan edge";
    if (out.regime_ambiguous && out.diagnostic.empty())
        out.diagnostic = "coupling branch ambiguous in |R|^2; picked smaller |phi|";
    return out;
}

// ---------------------------------------------------------------------------
// Fano profile

struct FanoFitContext {
    double gamma = 1.0;                ///< natural linewidth in grid units
    double prefactor = 1.0;            ///< model off-resonant level P
    std::optional<cplx> environment;   ///< r_E e^{i phi_E}, resolves the sign of Im q
    std::optional<double> model_lamb_shift; ///< predicted delta_LS in grid units
};

/// Context for spectra whose grid is measured in `grid_unit` (omega0 units per grid unit).
inline FanoFitContext make_fano_context(double theta, const CavityParams& cavity, const NuclearEnsemble& ensemble,
                                        double grid_unit = 1.0) {
    const FanoProfile p = fano_profile(theta, cavity, ensemble);
    FanoFitContext c;
    c.gamma = ensemble.gamma / grid_unit;
    c.prefactor = p.prefactor;
    c.environment = std::polar(p.r_e, p.phi_e);
    c.model_lamb_shift = p.lamb_shift / grid_unit;
    return c;
}

struct FanoFit {
    cplx q;
    double pi_strength = 0.0; ///< 1 - gamma / width
    double width = 0.0;       ///< grid units
    double shift = 0.0;       ///< combined shift delta + delta_LS, grid units
    double a = 0.0;
    double b = 0.0;
    double residual_rms = 0.0; ///< relative to the fitted off-resonant level
    bool converged = false;
    bool im_sign_from_context = false;
    std::optional<double> model_lamb_shift;
    Termination termination = Termination::iteration_cap;
    int iterations = 0;
    std::vector<double> uncertainties; ///< Re q, Im q, width, shift, a[, b]
    std::string diagnostic;
};

namespace detail {

struct FanoProblem {
    std::vector<double> u; ///< normalized grid
    std::vector<double> y; ///< normalized data
    std::vector<double> w;
    bool background = false;

    // p = [qr, qi, width, shift, level, (b)]
    Vec residuals(const Vec& p) const {
        Vec r(static_cast<Eigen::Index>(u.size()));
        for (std::size_t i = 0; i < u.size(); ++i) {
            const double eps = 2.0 * (u[i] + p[3]) / p[2];
            const double num = (eps + p[0]) * (eps + p[0]) + p[1] * p[1];
            double model = p[4] * num / (eps * eps + 1.0);
            if (background) model += p[5];
            r[static_cast<Eigen::Index>(i)] = w[i] * (model - y[i]);
        }
        return r;
    }

    Mat jacobian(const Vec& p) const {
        Mat J(static_cast<Eigen::Index>(u.size()), p.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            const auto row = static_cast<Eigen::Index>(i);
            const double eps = 2.0 * (u[i] + p[3]) / p[2];
            const double den = eps * eps + 1.0;
            const double t = eps + p[0];
            const double num = t * t + p[1] * p[1];
            const double d_eps = p[4] * (2.0 * t * den - num * 2.0 * eps) / (den * den);
            J(row, 0) = w[i] * p[4] * 2.0 * t / den;
            J(row, 1) = w[i] * p[4] * 2.0 * p[1] / den;
            J(row, 2) = w[i] * d_eps * (-eps / p[2]);
            J(row, 3) = w[i] * d_eps * (2.0 / p[2]);
            J(row, 4) = w[i] * num / den;
            if (background) J(row, 5) = w[i];
        }
        return J;
    }
};

} // namespace detail

/// Least-squares fit of a Fano profile over (Re q, |Im q|, width, shift, a[, b]).
///
/// With a free background b the intensity only constrains a P + b, a P (|q|^2 - 1) and
/// a P Re q, so (a, b, q) form a one-parameter family; b is therefore fixed at zero
/// unless `fit_background` is set, in which case q is not unique.
inline FanoFit fit_fano(std::span<const double> grid, std::span<const double> data, const FanoFitContext& ctx,
                        const OptimizerConfig& cfg = {}) {
    detail::check_grid(grid, data, 20, "fit_fano");
    if (!(ctx.gamma > 0.0) || !(ctx.prefactor > 0.0)) throw InputError("fit_fano: context gamma and prefactor must be positive");

    const std::size_t n = grid.size();
    const double x_center = 0.5 * (grid.front() + grid.back());
    const double unit = ctx.gamma;
    double min_step = grid.back() - grid.front();
    for (std::size_t i = 1; i < n; ++i) min_step = std::min(min_step, grid[i] - grid[i - 1]);

    const std::size_t edge = std::max<std::size_t>(3, n / 50);
    std::vector<double> edges(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(edge));
    edges.insert(edges.end(), data.end() - static_cast<std::ptrdiff_t>(edge), data.end());
    const double baseline = detail::median(edges);
    if (!(baseline > 0.0)) throw FitError("fit_fano: off-resonant level must be positive");
    const double y_scale = baseline;

    detail::FanoProblem prob;
    prob.background = cfg.fit_background;
    prob.u.resize(n);
    prob.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        prob.u[i] = (grid[i] - x_center) / unit;
        prob.y[i] = data[i] / y_scale;
    }
    prob.w = detail::make_weights(prob.y, cfg.poisson_weights);

    // Extremum of the deviation from baseline and its half-width.
    std::size_t iext = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (std::abs(prob.y[i] - 1.0) > std::abs(prob.y[iext] - 1.0)) iext = i;
    const double peak = std::abs(prob.y[iext] - 1.0);
    if (peak < 1e-9) throw FitError("fit_fano: no resonance found in the data");
    std::size_t lo = iext, hi = iext;
    while (lo > 0 && std::abs(prob.y[lo] - 1.0) > 0.5 * peak) --lo;
    while (hi + 1 < n && std::abs(prob.y[hi] - 1.0) > 0.5 * peak) ++hi;
    const double span_u = prob.u.back() - prob.u.front();
    const double w0 = std::clamp(prob.u[hi] - prob.u[lo], 2.0 * min_step / unit, span_u);
    const double s0 = -prob.u[iext];

    const Eigen::Index np = cfg.fit_background ? 6 : 5;
    const std::vector<std::string> names{"re_q", "im_q", "width", "shift", "a", "b"};
    Bounds b{Vec(np), Vec(np)};
    b.lower.head(5) << -1e3, 0.0, 1.0, -span_u, 1e-12;
    b.upper.head(5) << 1e3, 1e3, 1e6, span_u, 1e12;
    if (cfg.fit_background) {
        b.lower[5] = 0.0;
        b.upper[5] = 1e12;
    }
    // Overrides are given in physical units; re_q and im_q pass through, the rest are rescaled.
    detail::apply_bound_overrides(cfg, std::vector<std::string>(names.begin(), names.begin() + np), b);
    for (const auto& [name, lim] : cfg.bounds) {
        double scale = 1.0, offset = 0.0;
        Eigen::Index j = -1;
        if (name == "width") j = 2, scale = 1.0 / unit;
        if (name == "shift") j = 3, scale = 1.0 / unit, offset = x_center / unit;
        if (name == "a") j = 4, scale = ctx.prefactor / y_scale;
        if (name == "b") j = 5, scale = 1.0 / y_scale;
        if (j < 0) continue;
        b.lower[j] = lim.first * scale + offset;
        b.upper[j] = lim.second * scale + offset;
    }

    std::vector<Vec> starts;
    auto add_start = [&](double qr, double qi, double width, double shift) {
        Vec x(np);
        x.head(5) << qr, std::abs(qi), width, shift, 1.0;
        if (np == 6) x[5] = 0.0;
        starts.push_back(x);
    };
    if (cfg.strategy == InitialGuess::context && ctx.environment) {
        const double pi0 = std::clamp(1.0 - 1.0 / w0, 0.0, 1.0);
        const cplx q0 = cplx(0.0, 1.0) + pi0 * *ctx.environment;
        add_start(q0.real(), q0.imag(), w0, s0);
    }
    for (double qr : {-2.0, -0.5, 0.0, 0.5, 2.0})
        for (double qi : {0.3, 1.5})
            for (double ds : {0.0, -0.5, 0.5}) add_start(qr, qi, w0, s0 + ds * w0);

    LsqConfig lsq = cfg.lsq;
    lsq.absolute_objective = std::max(lsq.absolute_objective, 1e-30 * static_cast<double>(n));
    auto f = [&prob](const Vec& p) { return prob.residuals(p); };
    auto jac = [&prob](const Vec& p) { return prob.jacobian(p); };

    std::optional<LsqResult> best;
    for (const Vec& s : starts) {
        LsqResult r = least_squares_minimize(f, s, b, lsq, jac);
        if (!best || r.objective < best->objective) best = std::move(r);
    }
    const LsqResult& r = *best;

    FanoFit out;
    out.width = r.x[2] * unit;
    out.shift = r.x[3] * unit - x_center;
    out.a = r.x[4] * y_scale / ctx.prefactor;
    out.b = np == 6 ? r.x[5] * y_scale : 0.0;
    out.pi_strength = std::clamp(1.0 - ctx.gamma / out.width, 0.0, 1.0);
    out.termination = r.reason;
    out.iterations = r.iterations;
    out.model_lamb_shift = ctx.model_lamb_shift;

    cplx q(r.x[0], r.x[1]);
    if (ctx.environment) {
        const cplx predicted = cplx(0.0, 1.0) + out.pi_strength * *ctx.environment;
        if (std::abs(std::conj(q) - predicted) < std::abs(q - predicted)) q = std::conj(q);
        out.im_sign_from_context = true;
    }
    out.q = q;

    const double level = out.a * ctx.prefactor + out.b;
    out.residual_rms = std::sqrt(r.objective / static_cast<double>(n)) * y_scale / level;
    if (r.uncertainties.size() == np) {
        out.uncertainties = {r.uncertainties[0], r.uncertainties[1], r.uncertainties[2] * unit,
                             r.uncertainties[3] * unit, r.uncertainties[4] * y_scale / ctx.prefactor};
        if (np == 6) out.uncertainties.push_back(r.uncertainties[5] * y_scale);
    }

    if (out.width < 2.0 * min_step)
        throw FitError("fit_fano: fitted width collapsed below the grid resolution");
    out.converged = r.converged();
    if (!out.converged) out.diagnostic = "optimizer stopped: " + to_string(r.reason);
    return out;
}

} // namespace fanocav
