#pragma once

// Dynamical (Parratt) reflectivity of a stratified medium at grazing incidence,
// with an optional single-line nuclear resonance in one layer. Used as an
// independent numerical reference for the phenomenological cavity model.
//
// Conventions: n = 1 - delta + i beta, fields ~ exp(i kz z), Im(kz) >= 0 is the
// wave decaying into the medium. The nuclear susceptibility is added to n^2:
//   chi_N(x) = -strength * abundance * (1/2) / (x + i/2),  x = (omega - omega0) / gamma.

#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fanocav/core_model.hpp"
#include "fanocav/errors.hpp"

namespace fanocav {

/// hc in keV nm.
inline constexpr double kHcKevNm = 1.239841984;

struct Material {
    std::string name;
    double delta = 0.0;
    double beta = 0.0;

    /// n^2 - 1 without cancellation.
    cplx permittivity_offset() const {
        const cplx m(-delta, beta);
        return m * (2.0 + m);
    }
};

struct NuclearSusceptibility {
    double omega0_kev = kFe57LineKeV;
    double gamma_nev = kFe57NaturalWidthNeV;
    double strength = 0.0; ///< peak |chi_N| at 100% abundance
    double abundance = 1.0;

    cplx at(double detuning_gamma) const {
        const double s = strength * abundance;
        if (s == 0.0) return {0.0, 0.0};
        return -s * 0.5 / cplx(detuning_gamma, 0.5);
    }
};

struct Layer {
    Material material;
    double thickness_nm = 0.0;
    std::optional<NuclearSusceptibility> nuclear;
};

struct LayerStack {
    std::vector<Layer> layers; ///< top to bottom
    Material substrate{"vacuum", 0.0, 0.0};
    double energy_kev = kFe57LineKeV;

    double k0() const { return 2.0 * kPi * energy_kev / kHcKevNm; } ///< [1/nm]

    const Layer* resonant_layer() const {
        for (const auto& l : layers)
            if (l.nuclear) return &l;
        return nullptr;
    }
    Layer* resonant_layer() {
        for (auto& l : layers)
            if (l.nuclear) return &l;
        return nullptr;
    }
};

namespace detail {
inline void check_material(const Material& m) {
    if (!std::isfinite(m.delta) || !std::isfinite(m.beta))
        throw InputError("material '" + m.name + "': non-finite optical constants");
}
} // namespace detail

inline void validate(const LayerStack& stack) {
    int resonant = 0;
    for (const auto& l : stack.layers) {
        detail::check_material(l.material);
        if (!(l.thickness_nm > 0.0) || !std::isfinite(l.thickness_nm))
            throw InputError("layer '" + l.material.name + "': thickness must be positive");
        if (l.material.delta < 0.0 || l.material.beta < 0.0 || l.material.delta >= 1e-4 || l.material.beta >= 1e-4)
            throw InputError("material '" + l.material.name + "': delta, beta must lie in [0, 1e-4)");
        if (l.nuclear) {
            ++resonant;
            if (!(l.nuclear->abundance >= 0.0 && l.nuclear->abundance <= 1.0))
                throw InputError("resonant layer: abundance must lie in [0, 1]");
            if (!(l.nuclear->strength >= 0.0) || !std::isfinite(l.nuclear->strength))
                throw InputError("resonant layer: strength must be non-negative");
        }
    }
    if (resonant > 1) throw InputError("stack: at most one nuclear-resonant layer is supported");
    detail::check_material(stack.substrate);
    if (!(stack.energy_kev > 0.0)) throw InputError("stack: photon energy must be positive");
}

/// Normal wavevector component for a medium with n^2 - 1 = eps_offset.
inline cplx kz_from_offset(double theta, cplx eps_offset, double k0) {
    const double s = std::sin(theta);
    cplx k = k0 * std::sqrt(s * s + eps_offset);
    if (k.imag() < 0.0 || (k.imag() == 0.0 && k.real() < 0.0)) k = -k;
    return k;
}

/// k0 sqrt(n^2 - cos^2 theta), branch with Im >= 0.
inline cplx kz(double theta, cplx n, double k0) { return kz_from_offset(theta, (n - 1.0) * (n + 1.0), k0); }

/// Complex reflection amplitude. `detuning_gamma` is the probe offset from the nuclear
/// line in units of its natural width; pass std::nullopt for the electronic response only.
inline cplx parratt_reflectivity(const LayerStack& stack, double theta, std::optional<double> detuning_gamma) {
    if (!std::isfinite(theta) || !(theta > 0.0) || !(theta < kPi / 2))
        throw DomainError("parratt_reflectivity: theta must be in (0, pi/2)");
    const double k0 = stack.k0();
    const std::size_t n = stack.layers.size();

    // Media 0 = vacuum, 1..n = layers, n+1 = substrate.
    std::vector<cplx> k(n + 2);
    k[0] = kz_from_offset(theta, 0.0, k0);
    for (std::size_t j = 0; j < n; ++j) {
        const Layer& l = stack.layers[j];
        detail::check_material(l.material);
        cplx off = l.material.permittivity_offset();
        if (l.nuclear && detuning_gamma) off += l.nuclear->at(*detuning_gamma);
        k[j + 1] = kz_from_offset(theta, off, k0);
    }
    detail::check_material(stack.substrate);
    k[n + 1] = kz_from_offset(theta, stack.substrate.permittivity_offset(), k0);

    cplx r_below(0.0, 0.0);
    for (std::size_t j = n + 1; j-- > 0;) {
        const cplx r = (k[j] - k[j + 1]) / (k[j] + k[j + 1]);
        const double d = (j + 1 <= n) ? stack.layers[j].thickness_nm : 0.0;
        const cplx t = r_below * std::exp(cplx(0.0, 2.0) * k[j + 1] * d);
        r_below = (r + t) / (1.0 + r * t);
    }
    return r_below;
}

inline std::vector<cplx> rocking_amplitudes(const LayerStack& stack, std::span<const double> theta_grid) {
    validate(stack);
    std::vector<cplx> out;
    out.reserve(theta_grid.size());
    for (double th : theta_grid) out.push_back(parratt_reflectivity(stack, th, std::nullopt));
    return out;
}

/// |R|^2 versus grazing angle, off the nuclear resonance.
inline std::vector<double> rocking_scan(const LayerStack& stack, std::span<const double> theta_grid) {
    std::vector<double> out;
    out.reserve(theta_grid.size());
    for (const cplx& r : rocking_amplitudes(stack, theta_grid)) out.push_back(std::norm(r));
    return out;
}

/// |R|^2 versus probe offset (units of the natural linewidth) at fixed angle and abundance.
inline std::vector<double> energy_scan(LayerStack stack, double theta, std::span<const double> detuning_gamma,
                                       double abundance) {
    Layer* res = stack.resonant_layer();
    if (!res) throw InputError("energy_scan: stack has no nuclear-resonant layer");
    res->nuclear->abundance = abundance;
    validate(stack);
    std::vector<double> out;
    out.reserve(detuning_gamma.size());
    for (double x : detuning_gamma) out.push_back(std::norm(parratt_reflectivity(stack, theta, x)));
    return out;
}

/// Net number of turns the amplitude makes around the origin along the scan.
inline double phase_winding(std::span<const cplx> amplitudes) {
    double total = 0.0;
    for (std::size_t i = 1; i < amplitudes.size(); ++i)
        total += wrap_phase(std::arg(amplitudes[i]) - std::arg(amplitudes[i - 1]));
    return total / (2.0 * kPi);
}

/// The bare-mode circle -1 + 2k_R/(k + i Dc) encloses the origin only when 2k_R > k.
inline Regime regime_from_winding(double turns) {
    return std::abs(turns) > 0.5 ? Regime::overcritical : Regime::undercritical;
}

// Optical constants at 14.4125 keV.
using MaterialTable = std::map<std::string, Material>;

inline MaterialTable default_material_table() {
    MaterialTable t;
    auto add = [&t](const std::string& name, double delta, double beta) { t[name] = Material{name, delta, beta}; };
    add("Pt", 1.65e-5, 1.9e-6);
    add("Pd", 1.03e-5, 3.0e-7);
    add("C", 2.25e-6, 1.0e-9);
    add("Fe57", 7.3e-6, 3.4e-7);
    add("Si", 2.32e-6, 1.9e-8);
    add("vacuum", 0.0, 0.0);
    return t;
}

/// Peak nuclear |chi_N| of fully enriched, unsplit 57Fe.
inline constexpr double kFe57ResonantStrength = 2.4e-4;

/// top/C(20.8)/57Fe(0.3)/C(19.6)/bottom on Si.
inline LayerStack cavity_stack(const Material& top, double top_nm, const Material& bottom, double bottom_nm,
                               const MaterialTable& table = default_material_table()) {
    LayerStack s;
    s.substrate = table.at("Si");
    s.layers.push_back({top, top_nm, std::nullopt});
    s.layers.push_back({table.at("C"), 20.8, std::nullopt});
    s.layers.push_back({table.at("Fe57"), 0.3,
                        NuclearSusceptibility{kFe57LineKeV, kFe57NaturalWidthNeV, kFe57ResonantStrength, 1.0}});
    s.layers.push_back({table.at("C"), 19.6, std::nullopt});
    s.layers.push_back({bottom, bottom_nm, std::nullopt});
    return s;
}

/// Pt(0.5)/C/57Fe/C/Pt(2.5): overcritical design.
inline LayerStack pt_cavity_stack(const MaterialTable& table = default_material_table()) {
    return cavity_stack(table.at("Pt"), 0.5, table.at("Pt"), 2.5, table);
}

/// Pd(3.5)/C/57Fe/C/Pd(2.5): undercritical design.
inline LayerStack pd_cavity_stack(const MaterialTable& table = default_material_table()) {
    return cavity_stack(table.at("Pd"), 3.5, table.at("Pd"), 2.5, table);
}

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    if (n == 1) {
        v[0] = lo;
        return v;
    }
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

/// 2.0 to 2.7 mrad, 2001 points.
inline std::vector<double> default_rocking_grid() { return linspace(2.0e-3, 2.7e-3, 2001); }

/// +-200 gamma, 4001 points.
inline std::vector<double> default_energy_grid() { return linspace(-200.0, 200.0, 4001); }

} // namespace fanocav
