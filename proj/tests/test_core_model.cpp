#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fanocav/core_model.hpp"

using namespace fanocav;

namespace {

const CavityParams kOver = overcritical_preset().cavity;
const CavityParams kUnder = undercritical_preset().cavity;

CavityParams cavity(double kappa, double kappa_r, double theta = 2.338e-3) {
    return {theta, kappa, kappa_r, kFe57LineKeV};
}

} // namespace

TEST(CavityDetuning, ZeroAtModeAngle) { EXPECT_EQ(cavity_detuning(kOver.theta_mode, kOver), 0.0); }

TEST(CavityDetuning, ValueAboveMode) {
    // mpmath, 30 digits
    EXPECT_NEAR(cavity_detuning(2.380e-3, kOver), -0.017647026380328604, 1e-15);
}

TEST(CavityDetuning, PositiveBelowMode) { EXPECT_GT(cavity_detuning(2.280e-3, kUnder), 0.0); }

TEST(CavityDetuning, RejectsBadAngles) {
    EXPECT_THROW(cavity_detuning(0.0, kOver), DomainError);
    EXPECT_THROW(cavity_detuning(-1e-3, kOver), DomainError);
    EXPECT_THROW(cavity_detuning(NAN, kOver), DomainError);
    EXPECT_THROW(cavity_detuning(kPi, kOver), DomainError);
}

TEST(ClassifyRegime, PresetValues) {
    EXPECT_EQ(classify_regime(kOver), Regime::overcritical);
    EXPECT_EQ(classify_regime(kUnder), Regime::undercritical);
    EXPECT_EQ(classify_regime(cavity(2.0e-2, 1.0e-2)), Regime::critical);
}

TEST(SingleAtomWidth, Identities) {
    NuclearEnsemble e = make_ensemble(kOver);
    const double k = kOver.kappa;
    EXPECT_DOUBLE_EQ(single_atom_width(0.0, kOver, e), 2 * e.g * e.g / k);
    EXPECT_DOUBLE_EQ(single_atom_width(k, kOver, e), e.g * e.g / k);
    e.g = 0.0;
    EXPECT_EQ(single_atom_width(0.01, kOver, e), 0.0);
}

TEST(CollectiveStrength, Identities) {
    NuclearEnsemble e;
    e.abundance = 0.0;
    EXPECT_EQ(collective_strength(e, 1e-9), 0.0);
    e.abundance = 1.0;
    e.n_ref = 1.0;
    EXPECT_DOUBLE_EQ(collective_strength(e, e.gamma), 0.5);
    e.n_ref = 99.0;
    EXPECT_NEAR(collective_strength(e, e.gamma), 0.99, 1e-15);
}

TEST(RelativeAmplitude, OnModeOvercritical) {
    EXPECT_NEAR(relative_amplitude(0.0, kOver), 2.3882521489971347, 1e-13);
}

TEST(RelativeAmplitude, Limits) {
    EXPECT_NEAR(relative_amplitude(1e8, kOver), 2 * kOver.kappa_r / kOver.kappa, 1e-12);
    EXPECT_NEAR(relative_amplitude(-1e8, kOver), 2 * kOver.kappa_r / kOver.kappa, 1e-12);
    EXPECT_DOUBLE_EQ(relative_amplitude(0.0, cavity(1e-2, 1e-2)), 2.0);
}

TEST(RelativeAmplitude, PoleAtCritical) {
    const CavityParams crit = cavity(2e-2, 1e-2);
    EXPECT_THROW(relative_amplitude(0.0, crit), SingularityError);
    EXPECT_THROW(relative_phase(0.0, crit), SingularityError);
    EXPECT_NO_THROW(relative_amplitude(1e-4, crit));
}

TEST(RelativePhase, OnModeValues) {
    EXPECT_NEAR(relative_phase(0.0, kOver), -kPi / 2, 1e-15);
    EXPECT_NEAR(relative_phase(0.0, kUnder), kPi / 2, 1e-15);
}

TEST(RelativePhase, DetunedByKappa) {
    const CavityParams c = cavity(1e-2, 1e-2); // 2 kR - k = k
    EXPECT_NEAR(relative_phase(c.kappa, c), -kPi / 2, 1e-15);
}

TEST(RelativePhase, MatchesEnvironmentFactor) {
    for (double dc : {-0.05, -0.01, 0.0, 0.003, 0.02}) {
        for (const auto& c : {kOver, kUnder}) {
            const cplx f = environment_factor(dc, c);
            EXPECT_NEAR(std::abs(f), relative_amplitude(dc, c), 1e-13);
            EXPECT_NEAR(std::arg(f), relative_phase(dc, c), 1e-13);
        }
    }
}

TEST(LambShift, ValuesAndParity) {
    const double gs = 1e-10;
    EXPECT_EQ(lamb_shift(0.0, gs, 100, kOver), 0.0);
    EXPECT_DOUBLE_EQ(lamb_shift(kOver.kappa, gs, 100, kOver), -100 * gs / 2);
    EXPECT_DOUBLE_EQ(lamb_shift(-0.004, gs, 100, kOver), -lamb_shift(0.004, gs, 100, kOver));
}

TEST(ComplexQ, Values) {
    EXPECT_EQ(complex_q(0.0, 2.3, 0.7), cplx(0.0, 1.0));
    const cplx q = complex_q(1.0, 2.388, -kPi / 2);
    EXPECT_NEAR(q.real(), 0.0, 1e-15);
    EXPECT_NEAR(q.imag(), -1.388, 1e-15);
    EXPECT_EQ(complex_q(1.0, 1.0, 0.0), cplx(1.0, 1.0));
}

TEST(FanoLineshape, Values) {
    EXPECT_EQ(fano_lineshape(-1.0, cplx(1.0, 0.0), 0.7), 0.0);
    for (double e : {-30.0, -1.0, 0.0, 0.5, 12.0}) EXPECT_NEAR(fano_lineshape(e, {0.0, 1.0}, 0.3), 0.3, 1e-15);
    EXPECT_DOUBLE_EQ(fano_lineshape(0.0, {1.0, 1.0}, 0.25), 0.5);
}

TEST(Reflectivity, MatchesHighPrecisionEvaluation) {
    // Two-pathway form evaluated in 30-digit arithmetic; 100x collective width, theta = 2.38 mrad.
    const NuclearEnsemble e = make_ensemble(kOver);
    const std::vector<std::pair<double, double>> ref = {
        {-5, 0.50909718496784905}, {0, 0.49873515180935722}, {3, 0.49773095003545417}, {40, 0.56528624491932629}};
    for (const auto& [x, r2] : ref) {
        EXPECT_NEAR(reflectivity_point(x * e.gamma, 2.38e-3, kOver, e), r2, 1e-12 * r2);
        const std::vector<double> w{x * e.gamma};
        EXPECT_NEAR(reflectivity_spectrum(w, 2.38e-3, kOver, e)[0], r2, 1e-12 * r2);
    }
}

TEST(Reflectivity, BareCavityLimit) {
    NuclearEnsemble e = make_ensemble(kOver);
    e.abundance = 0.0;
    const auto w = std::vector<double>{-1e-6, 0.0, 3e-7};
    const double flat = std::pow(kOver.coupling_imbalance() / kOver.kappa, 2);
    for (double r : reflectivity_spectrum(w, kOver.theta_mode, kOver, e)) EXPECT_NEAR(r, flat, 1e-15);
}

TEST(Reflectivity, FarDetunedLimit) {
    const NuclearEnsemble e = make_ensemble(kUnder);
    const FanoProfile p = fano_profile(2.30e-3, kUnder, e);
    const std::vector<double> w{-1e3 * p.width * 1e3, 1e3 * p.width * 1e3};
    for (double r : reflectivity_spectrum(w, 2.30e-3, kUnder, e)) EXPECT_NEAR(r, p.prefactor, 1e-5 * p.prefactor);
}

TEST(Reflectivity, FiniteAtCriticalPole) {
    const CavityParams crit = cavity(2e-2, 1e-2);
    const NuclearEnsemble e = make_ensemble(crit);
    const auto w = std::vector<double>{-3 * e.gamma, 0.0, 5 * e.gamma};
    EXPECT_THROW(reflectivity_point(0.0, crit.theta_mode, crit, e), SingularityError);
    for (double r : reflectivity_spectrum(w, crit.theta_mode, crit, e)) {
        EXPECT_TRUE(std::isfinite(r));
        EXPECT_GE(r, 0.0);
        EXPECT_LE(r, 1.0);
    }
}

TEST(Reflectivity, RejectsBadGrid) {
    const NuclearEnsemble e = make_ensemble(kOver);
    EXPECT_THROW(reflectivity_spectrum(std::vector<double>{0.0, 0.0}, 2.38e-3, kOver, e), DomainError);
    EXPECT_THROW(reflectivity_spectrum(std::vector<double>{0.0, NAN}, 2.38e-3, kOver, e), DomainError);
}

TEST(Reflectivity, PassiveAndSubdivisionInvariant) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double k = 0.2e-2 + 3e-2 * u(rng);
        const CavityParams c = cavity(k, k * (0.05 + 0.9 * u(rng)), 2.3e-3);
        NuclearEnsemble e = make_ensemble(c, 1 + 300 * u(rng), u(rng));
        const double theta = c.theta_mode * (0.97 + 0.06 * u(rng));
        std::vector<double> coarse, fine;
        for (int i = -40; i <= 40; ++i) coarse.push_back(i * 5 * e.gamma);
        for (int i = -200; i <= 200; ++i) fine.push_back(i * e.gamma);
        const auto rc = reflectivity_spectrum(coarse, theta, c, e);
        const auto rf = reflectivity_spectrum(fine, theta, c, e);
        for (std::size_t i = 0; i < rc.size(); ++i) {
            EXPECT_LE(rc[i], 1.0 + 1e-12);
            EXPECT_NEAR(rc[i], rf[5 * i], 1e-12);
        }
    }
}

TEST(FanoProfile, DipSideFollowsDetuningSign) {
    // Re q flips sign with the angle offset, Im q does not (up to the slight asymmetry of Dc in theta).
    const NuclearEnsemble e = make_ensemble(kOver);
    const FanoProfile above = fano_profile(kOver.theta_mode + 20e-6, kOver, e);
    const FanoProfile below = fano_profile(kOver.theta_mode - 20e-6, kOver, e);
    EXPECT_LT(above.q.real(), 0.0);
    EXPECT_GT(below.q.real(), 0.0);
    EXPECT_NEAR(above.q.imag(), below.q.imag(), 1e-2);
}

TEST(FanoProfile, FormIdentity) {
    const NuclearEnsemble e = make_ensemble(kUnder, 40.0, 0.6);
    const double theta = 2.33e-3;
    const FanoProfile p = fano_profile(theta, kUnder, e);
    for (double x : {-20.0, -2.0, 0.0, 1.5, 9.0}) {
        const double w = x * e.gamma;
        const double eps = scaled_energy(w, p);
        EXPECT_NEAR(fano_lineshape(eps, p.q, p.prefactor), reflectivity_point(w, theta, kUnder, e), 1e-13);
        EXPECT_DOUBLE_EQ(detuning_state(theta, w, kUnder, e).epsilon, eps);
    }
}

TEST(Validation, RejectsBadParameters) {
    EXPECT_THROW(validate(cavity(0.0, 1e-2)), DomainError);
    EXPECT_THROW(validate(cavity(1e-2, -1e-2)), DomainError);
    NuclearEnsemble e;
    e.abundance = 1.5;
    EXPECT_THROW(validate(e), DomainError);
}
