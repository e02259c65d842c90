#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fanocav/fitting.hpp"
#include "fanocav/trajectory.hpp"

using namespace fanocav;

namespace {

void expect_rel(double got, double want, double tol) { EXPECT_LE(std::abs(got - want), tol * std::abs(want)) << got << " vs " << want; }

void expect_recovers(const CavityPreset& p, const BareCavityFit& f) {
    expect_rel(f.A, p.amplitude, 1e-3);
    expect_rel(f.phi, p.dispersion, 1e-3);
    expect_rel(f.theta_mode, p.cavity.theta_mode * 1e3, 1e-3);
    expect_rel(f.kappa, p.cavity.kappa * 1e2, 1e-3);
    expect_rel(f.kappa_r, p.cavity.kappa_r * 1e2, 1e-3);
}

struct Spectrum {
    std::vector<double> x; ///< gamma units
    std::vector<double> y;
};

Spectrum fano_data(cplx q, double width, double shift, double prefactor, double lo = -60, double hi = 60,
                   std::size_t n = 1201) {
    Spectrum s;
    s.x = linspace(lo, hi, n);
    for (double x : s.x) s.y.push_back(fano_lineshape(2 * (x + shift) / width, q, prefactor));
    return s;
}

} // namespace

TEST(BareCavityFit, OvercriticalPresetRoundTrip) {
    const CavityPreset p = overcritical_preset();
    const auto theta = default_rocking_grid();
    OptimizerConfig cfg;
    cfg.branch = Regime::overcritical;
    const BareCavityFit f = fit_bare_cavity(theta, bare_cavity_curve(theta, p), cfg);
    EXPECT_TRUE(f.converged);
    EXPECT_EQ(f.regime, Regime::overcritical);
    expect_recovers(p, f);
}

TEST(BareCavityFit, UndercriticalPresetRoundTrip) {
    const CavityPreset p = undercritical_preset();
    const auto theta = default_rocking_grid();
    OptimizerConfig cfg;
    cfg.branch = Regime::undercritical;
    const BareCavityFit f = fit_bare_cavity(theta, bare_cavity_curve(theta, p), cfg);
    EXPECT_TRUE(f.converged);
    EXPECT_EQ(f.regime, Regime::undercritical);
    expect_recovers(p, f);
}

TEST(BareCavityFit, AutoModeFlagsTwinBranches) {
    // |R|^2 alone does not separate the coupling branches; both twins reproduce the curve.
    const auto theta = default_rocking_grid();
    for (const CavityPreset& p : {overcritical_preset(), undercritical_preset()}) {
        const auto data = bare_cavity_curve(theta, p);
        const BareCavityFit f = fit_bare_cavity(theta, data);
        EXPECT_TRUE(f.regime_ambiguous);
        EXPECT_LT(f.residual_rms, 1e-10);
    }
}

TEST(BareCavityFit, FlatInputDoesNotConverge) {
    const auto theta = default_rocking_grid();
    const std::vector<double> flat(theta.size(), 0.8);
    const BareCavityFit f = fit_bare_cavity(theta, flat);
    EXPECT_FALSE(f.converged);
    EXPECT_FALSE(f.diagnostic.empty());
}

TEST(BareCavityFit, RejectsShortOrNegativeData) {
    const auto theta = linspace(2e-3, 2.7e-3, 20);
    EXPECT_THROW(fit_bare_cavity(theta, std::vector<double>(20, 0.5)), InputError);
    const auto t2 = default_rocking_grid();
    std::vector<double> y(t2.size(), 0.5);
    y[3] = -0.1;
    EXPECT_THROW(fit_bare_cavity(t2, y), InputError);
}

TEST(BareCavityFit, Deterministic) {
    const auto theta = default_rocking_grid();
    const auto data = bare_cavity_curve(theta, undercritical_preset());
    const BareCavityFit a = fit_bare_cavity(theta, data), b = fit_bare_cavity(theta, data);
    EXPECT_EQ(a.A, b.A);
    EXPECT_EQ(a.kappa, b.kappa);
    EXPECT_EQ(a.iterations, b.iterations);
}

TEST(FanoFit, ForwardModelRoundTrip) {
    const double pi = 0.8, r_e = 2.0, phi = -kPi / 2;
    const cplx q = complex_q(pi, r_e, phi);
    const double width = 1.0 / (1.0 - pi);
    const Spectrum s = fano_data(q, width, 0.7, 0.4);
    FanoFitContext ctx;
    ctx.prefactor = 0.4;
    ctx.environment = std::polar(r_e, phi);
    const FanoFit f = fit_fano(s.x, s.y, ctx);
    EXPECT_TRUE(f.converged);
    EXPECT_LT(std::abs(f.q - q), 1e-6);
    EXPECT_NEAR(f.pi_strength, pi, 1e-8);
    EXPECT_NEAR(f.shift, 0.7, 1e-8);
    EXPECT_NEAR(f.a, 1.0, 1e-8);
}

TEST(FanoFit, SymmetricDipHasRealPartZero) {
    const Spectrum s = fano_data({0.0, 0.35}, 6.0, 0.0, 0.5);
    FanoFitContext ctx;
    ctx.prefactor = 0.5;
    const FanoFit f = fit_fano(s.x, s.y, ctx);
    EXPECT_LT(std::abs(f.q.real()), 1e-6);
    EXPECT_NEAR(std::abs(f.q.imag()), 0.35, 1e-6);
}

TEST(FanoFit, ScaleEquivariance) {
    const Spectrum s = fano_data({-0.8, -0.4}, 9.0, -2.0, 0.3);
    FanoFitContext ctx;
    ctx.prefactor = 0.3;
    ctx.environment = cplx(-1.0, -1.5);
    const FanoFit f1 = fit_fano(s.x, s.y, ctx);
    std::vector<double> scaled = s.y;
    for (double& v : scaled) v *= 3.7;
    const FanoFit f2 = fit_fano(s.x, scaled, ctx);
    EXPECT_LT(std::abs(f1.q - f2.q), 1e-8);
    EXPECT_NEAR(f2.a / f1.a, 3.7, 1e-8);
}

TEST(FanoFit, ImaginarySignFromContext) {
    const cplx q(0.6, -0.9);
    const Spectrum s = fano_data(q, 4.0, 0.0, 1.0);
    FanoFitContext ctx;
    ctx.environment = cplx(0.8, -2.5);
    EXPECT_LT(std::abs(fit_fano(s.x, s.y, ctx).q - q), 1e-6);
    ctx.environment.reset();
    const FanoFit f = fit_fano(s.x, s.y, ctx);
    EXPECT_FALSE(f.im_sign_from_context);
    EXPECT_LT(std::abs(f.q - std::conj(q)), 1e-6);
}

TEST(FanoFit, ModelSpectrumRoundTripRandomDraws) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const CavityPreset& p : {overcritical_preset(), undercritical_preset()}) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const NuclearEnsemble e = make_ensemble(p.cavity, 100.0, 0.1 + 0.9 * u(rng));
            const double theta = p.cavity.theta_mode + (u(rng) - 0.5) * 100e-6;
            const auto x = linspace(-200, 200, 601);
            std::vector<double> w;
            for (double v : x) w.push_back(v * e.gamma);
            const auto y = reflectivity_spectrum(w, theta, p.cavity, e);
            const FanoFit f = fit_fano(x, y, make_fano_context(theta, p.cavity, e, e.gamma));
            worst = std::max(worst, std::abs(f.q - fano_profile(theta, p.cavity, e).q));
        }
        EXPECT_LT(worst, 1e-6) << to_string(classify_regime(p.cavity));
    }
}

TEST(FanoFit, FlatSpectrumThrows) {
    const std::vector<double> x = linspace(-10, 10, 101);
    const std::vector<double> y(101, 0.6);
    EXPECT_THROW(fit_fano(x, y, FanoFitContext{}), FitError);
}

TEST(FanoFit, OracleOvercriticalBranch) {
    const OracleSource o = prepare_oracle(pt_cavity_stack());
    const FanoFit f = oracle_fit_point(o, 2.38e-3, 1.0);
    EXPECT_TRUE(f.converged);
    EXPECT_LT(f.q.imag(), 0.0);
    EXPECT_LT(f.q.real(), 0.0);
}
