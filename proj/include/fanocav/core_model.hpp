#pragma once

// Phenomenological single-mode model of a thin-film X-ray cavity with an
// embedded ensemble of Moessbauer nuclei.
//
// Units: every rate and energy (kappa, kappa_r, gamma, g, detunings) is
// expressed in units of the nuclear transition energy omega0. Angles are in
// radians. The probe energy enters only through its offset from omega0.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fanocav/errors.hpp"

namespace fanocav {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kFe57LineKeV = 14.4125;
inline constexpr double kFe57NaturalWidthNeV = 4.7;
inline constexpr double kDefaultRegimeTolerance = 1e-9;

/// Natural linewidth of the 57Fe line in units of omega0.
inline double fe57_natural_width() { return kFe57NaturalWidthNeV * 1e-9 / (kFe57LineKeV * 1e3); }

enum class Regime { overcritical, critical, undercritical };

inline std::string to_string(Regime r) {
    switch (r) {
    case Regime::overcritical: return "overcritical";
    case Regime::critical: return "critical";
    case Regime::undercritical: return "undercritical";
    }
    return "unknown";
}

struct CavityParams {
    double theta_mode = 0.0; ///< mode angle [rad]
    double kappa = 0.0;      ///< cavity decay rate [omega0]
    double kappa_r = 0.0;    ///< in-coupling rate [omega0]
    double omega0_kev = kFe57LineKeV;

    /// 2 kappa_R - kappa; positive overcritical, negative undercritical.
    double coupling_imbalance() const { return 2.0 * kappa_r - kappa; }
};

inline void validate(const CavityParams& c) {
    if (!(c.kappa > 0.0) || !std::isfinite(c.kappa))
        throw DomainError("cavity: kappa must be positive and finite");
    if (!(c.kappa_r > 0.0) || !std::isfinite(c.kappa_r))
        throw DomainError("cavity: kappa_r must be positive and finite");
    if (!(c.theta_mode > 0.0 && c.theta_mode < kPi / 2))
        throw DomainError("cavity: theta_mode must lie in (0, pi/2)");
    if (!(c.omega0_kev > 0.0)) throw DomainError("cavity: omega0 must be positive");
}

struct NuclearEnsemble {
    double gamma = fe57_natural_width(); ///< natural linewidth [omega0]
    double g = 0.0;                      ///< cavity-nucleus coupling [omega0]
    double n_ref = 1.0;                  ///< effective nuclear number at 100% abundance
    double abundance = 1.0;              ///< resonant isotope fraction in [0, 1]

    double effective_number() const { return n_ref * abundance; }
};

inline void validate(const NuclearEnsemble& e) {
    if (!(e.gamma > 0.0) || !std::isfinite(e.gamma)) throw DomainError("ensemble: gamma must be positive");
    if (!(e.g >= 0.0) || !std::isfinite(e.g)) throw DomainError("ensemble: g must be non-negative");
    if (!(e.n_ref > 0.0) || !std::isfinite(e.n_ref)) throw DomainError("ensemble: n_ref must be positive");
    if (!(e.abundance >= 0.0 && e.abundance <= 1.0)) throw DomainError("ensemble: abundance must lie in [0, 1]");
}

/// Ensemble whose collective width on the cavity mode is `collective_ratio` times gamma
/// at 100% abundance. Only n_ref * g^2 is observable; g is fixed so that Gamma_s(0) = gamma.
inline NuclearEnsemble make_ensemble(const CavityParams& cavity, double collective_ratio = 100.0,
                                     double abundance = 1.0) {
    NuclearEnsemble e;
    e.g = std::sqrt(e.gamma * cavity.kappa / 2.0);
    e.n_ref = collective_ratio;
    e.abundance = abundance;
    return e;
}

struct FanoProfile {
    cplx q;                   ///< complex asymmetry parameter
    double pi_strength = 0.0; ///< collective resonant strength
    double width = 0.0;       ///< N Gamma_s + gamma
    double lamb_shift = 0.0;
    double r_e = 0.0;
    double phi_e = 0.0;
    double prefactor = 0.0; ///< |2 kappa_R / (kappa r_E)|^2, the off-resonant level
};

struct DetuningState {
    double theta = 0.0;
    double delta_c = 0.0;
    double epsilon = 0.0;
    double omega = 0.0; ///< probe offset omega - omega0 [omega0]
};

/// Wraps an angle to (-pi, pi].
inline double wrap_phase(double phi) {
    double w = std::remainder(phi, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

/// Detuning of the driven mode from the grazing-angle offset, in units of omega0.
inline double cavity_detuning(double theta, const CavityParams& cavity) {
    if (!std::isfinite(theta) || !(theta > 0.0) || !(theta < kPi / 2))
        throw DomainError("cavity_detuning: theta must be finite and in (0, pi/2)");
    if (theta == cavity.theta_mode) return 0.0;
    return std::sin(cavity.theta_mode) / std::sin(theta) - 1.0;
}

inline Regime classify_regime(const CavityParams& cavity, double tol = kDefaultRegimeTolerance) {
    const double imbalance = cavity.coupling_imbalance();
    if (imbalance > tol * cavity.kappa) return Regime::overcritical;
    if (-imbalance > tol * cavity.kappa) return Regime::undercritical;
    return Regime::critical;
}

/// Gamma_s = 2 g^2 / (kappa + Delta_c^2 / kappa).
inline double single_atom_width(double delta_c, const CavityParams& cavity, const NuclearEnsemble& ensemble) {
    if (!(cavity.kappa > 0.0)) throw SingularityError("single_atom_width: kappa must be positive");
    return 2.0 * ensemble.g * ensemble.g / (cavity.kappa + delta_c * delta_c / cavity.kappa);
}

/// Pi = N Gamma_s / (N Gamma_s + gamma).
inline double collective_strength(const NuclearEnsemble& ensemble, double gamma_s) {
    const double collective = ensemble.effective_number() * gamma_s;
    return collective / (collective + ensemble.gamma);
}

namespace detail {
inline void check_pole(double delta_c, const CavityParams& cavity, const char* who) {
    const double a = cavity.coupling_imbalance();
    if (a == 0.0 && delta_c == 0.0)
        throw SingularityError(std::string(who) + ": pole at critical coupling and zero detuning");
}
} // namespace detail

inline double relative_amplitude(double delta_c, const CavityParams& cavity) {
    detail::check_pole(delta_c, cavity, "relative_amplitude");
    const double a = cavity.coupling_imbalance();
    const double k = cavity.kappa;
    const double d2 = delta_c * delta_c;
    return (2.0 * cavity.kappa_r / k) * std::sqrt((k * k + d2) / (a * a + d2));
}

inline double relative_phase(double delta_c, const CavityParams& cavity) {
    detail::check_pole(delta_c, cavity, "relative_phase");
    const double a = cavity.coupling_imbalance();
    return wrap_phase(std::arg(cplx(cavity.kappa, -delta_c)) + std::arg(cplx(a, delta_c)) - kPi / 2);
}

/// r_E exp(i phi_E) as one complex number: (2 kappa_R / kappa) (-i) (kappa - i Dc) / (a - i Dc).
inline cplx environment_factor(double delta_c, const CavityParams& cavity) {
    detail::check_pole(delta_c, cavity, "environment_factor");
    const double a = cavity.coupling_imbalance();
    const cplx num = cplx(0.0, -1.0) * cplx(cavity.kappa, -delta_c);
    return (2.0 * cavity.kappa_r / cavity.kappa) * num / cplx(a, -delta_c);
}

/// Collective Lamb shift, dispersive partner of Gamma_s: -(N Gamma_s / 2)(Delta_c / kappa).
inline double lamb_shift(double delta_c, double gamma_s, double n_eff, const CavityParams& cavity) {
    if (!(cavity.kappa > 0.0)) throw SingularityError("lamb_shift: kappa must be positive");
    return -(n_eff * gamma_s / 2.0) * (delta_c / cavity.kappa);
}

inline cplx complex_q(double pi_strength, double r_e, double phi_e) {
    return cplx(0.0, 1.0) + pi_strength * std::polar(r_e, phi_e);
}

inline double fano_lineshape(double epsilon, cplx q, double prefactor) {
    return prefactor * std::norm(epsilon + q) / (epsilon * epsilon + 1.0);
}

/// Bare-cavity reflection amplitude -1 + 2 kappa_R / (kappa + i Delta_c).
inline cplx bare_cavity_amplitude(double delta_c, const CavityParams& cavity) {
    return -1.0 + 2.0 * cavity.kappa_r / cplx(cavity.kappa, delta_c);
}

/// All derived lineshape quantities at grazing angle theta. Throws at the critical pole.
inline FanoProfile fano_profile(double theta, const CavityParams& cavity, const NuclearEnsemble& ensemble) {
    validate(cavity);
    validate(ensemble);
    const double dc = cavity_detuning(theta, cavity);
    const double gs = single_atom_width(dc, cavity, ensemble);
    const double n = ensemble.effective_number();

    FanoProfile p;
    p.pi_strength = collective_strength(ensemble, gs);
    p.width = n * gs + ensemble.gamma;
    p.lamb_shift = lamb_shift(dc, gs, n, cavity);
    p.r_e = relative_amplitude(dc, cavity);
    p.phi_e = relative_phase(dc, cavity);
    const double ratio = 2.0 * cavity.kappa_r / (cavity.kappa * p.r_e);
    p.prefactor = ratio * ratio;
    p.q = complex_q(p.pi_strength, p.r_e, p.phi_e);
    return p;
}

inline double scaled_energy(double omega_offset, const FanoProfile& p) {
    return 2.0 * (omega_offset + p.lamb_shift) / p.width;
}

inline DetuningState detuning_state(double theta, double omega_offset, const CavityParams& cavity,
                                    const NuclearEnsemble& ensemble) {
    validate(cavity);
    validate(ensemble);
    DetuningState s;
    s.theta = theta;
    s.delta_c = cavity_detuning(theta, cavity);
    const double gs = single_atom_width(s.delta_c, cavity, ensemble);
    const double n = ensemble.effective_number();
    s.omega = omega_offset;
    s.epsilon = 2.0 * (omega_offset + lamb_shift(s.delta_c, gs, n, cavity)) / (n * gs + ensemble.gamma);
    return s;
}

/// One point of the reflectivity in the "two-pathway" form
///   |1/r_E * 2k_R/k|^2 |1 + r_E e^{i phi_E} (N Gs/2) / (w - w0 + d_LS + i/2 (N Gs + g))|^2.
/// Throws at the critical pole, where r_E alone diverges.
inline double reflectivity_point(double omega_offset, double theta, const CavityParams& cavity,
                                 const NuclearEnsemble& ensemble) {
    validate(cavity);
    validate(ensemble);
    const double dc = cavity_detuning(theta, cavity);
    const double gs = single_atom_width(dc, cavity, ensemble);
    const double n = ensemble.effective_number();
    const double r_e = relative_amplitude(dc, cavity);
    const double phi_e = relative_phase(dc, cavity);
    const double scale = 2.0 * cavity.kappa_r / (cavity.kappa * r_e);
    const cplx denom(omega_offset + lamb_shift(dc, gs, n, cavity), 0.5 * (n * gs + ensemble.gamma));
    const cplx path = 1.0 + std::polar(r_e, phi_e) * (n * gs / 2.0) / denom;
    return scale * scale * std::norm(path);
}

/// |R|^2 over a grid of probe offsets omega - omega0 (units of omega0).
///
/// Evaluated as |c (eps + i) - i Pi (2 k_R / k)|^2 / (eps^2 + 1) with
/// c = (a - i Dc) / (k - i Dc), which equals the Fano form prefactor |eps + q|^2 / (eps^2 + 1)
/// and stays finite at critical coupling.
inline std::vector<double> reflectivity_spectrum(std::span<const double> omega_grid, double theta,
                                                 const CavityParams& cavity, const NuclearEnsemble& ensemble) {
    validate(cavity);
    validate(ensemble);
    for (std::size_t i = 0; i < omega_grid.size(); ++i) {
        if (!std::isfinite(omega_grid[i])) throw DomainError("reflectivity_spectrum: non-finite grid value");
        if (i > 0 && !(omega_grid[i] > omega_grid[i - 1]))
            throw DomainError("reflectivity_spectrum: grid must be strictly increasing");
    }
    const double dc = cavity_detuning(theta, cavity);
    const double gs = single_atom_width(dc, cavity, ensemble);
    const double n = ensemble.effective_number();
    const double width = n * gs + ensemble.gamma;
    const double shift = lamb_shift(dc, gs, n, cavity);
    const double pi_strength = collective_strength(ensemble, gs);
    const cplx c = cplx(cavity.coupling_imbalance(), -dc) / cplx(cavity.kappa, -dc);
    const cplx drive = cplx(0.0, -1.0) * pi_strength * (2.0 * cavity.kappa_r / cavity.kappa);

    std::vector<double> out;
    out.reserve(omega_grid.size());
    for (double w : omega_grid) {
        const double eps = 2.0 * (w + shift) / width;
        out.push_back(std::norm(c * cplx(eps, 1.0) + drive) / (eps * eps + 1.0));
    }
    return out;
}

/// Bare-cavity description as used by the rocking-curve fit: cavity plus the heuristic absorption
/// amplitude A and top-layer dispersion phi.
struct CavityPreset {
    CavityParams cavity;
    double amplitude = 1.0;
    double dispersion = 0.0;
};

/// Pt-clad cavity fitted values (A = 0.77, phi = -0.02, 2.338 mrad, kappa = 1.938e-2, kappa_R = 1.667e-2).
inline CavityPreset overcritical_preset() { return {{2.338e-3, 1.938e-2, 1.667e-2, kFe57LineKeV}, 0.77, -0.02}; }

/// Pd-clad cavity fitted values (A = 0.94, phi = 0.038, 2.320 mrad, kappa = 0.7391e-2, kappa_R = 0.2711e-2).
inline CavityPreset undercritical_preset() {
    return {{2.320e-3, 0.7391e-2, 0.2711e-2, kFe57LineKeV}, 0.94, 0.038};
}

} // namespace fanocav
