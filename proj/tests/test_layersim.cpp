#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "fanocav/layersim.hpp"

using namespace fanocav;

namespace {

// Reference values below come from an independent 30-digit Parratt evaluation.

double dip_angle(const LayerStack& s) {
    const auto grid = default_rocking_grid();
    const auto r = rocking_scan(s, grid);
    return grid[static_cast<std::size_t>(std::min_element(r.begin(), r.end()) - r.begin())];
}

double dip_depth(const LayerStack& s) {
    const auto r = rocking_scan(s, default_rocking_grid());
    return *std::min_element(r.begin(), r.end());
}

} // namespace

TEST(Kz, Vacuum) {
    const double k0 = 73.0;
    const cplx k = kz(2.3e-3, cplx(1.0, 0.0), k0);
    EXPECT_NEAR(k.real(), k0 * std::sin(2.3e-3), 1e-14);
    EXPECT_EQ(k.imag(), 0.0);
}

TEST(Kz, TotalReflectionBranch) {
    const double theta = 2e-3;
    const cplx k = kz(theta, cplx(std::cos(theta) - 1e-5, 0.0), 73.0);
    EXPECT_NEAR(k.real(), 0.0, 1e-12);
    EXPECT_GT(k.imag(), 0.0);
}

TEST(Kz, Platinum) {
    const LayerStack s;
    const Material pt = default_material_table().at("Pt");
    const cplx k = kz_from_offset(2.3e-3, pt.permittivity_offset(), s.k0());
    EXPECT_NEAR(k.real(), 0.026300819561589449, 1e-13);
    EXPECT_NEAR(k.imag(), 0.38537439289063953, 1e-13);
}

TEST(Parratt, VacuumStackHasNoReflection) {
    LayerStack s;
    s.layers.push_back({default_material_table().at("vacuum"), 10.0, std::nullopt});
    EXPECT_EQ(std::abs(parratt_reflectivity(s, 3e-3, std::nullopt)), 0.0);
}

TEST(Parratt, ThickMirrorBelowCriticalAngle) {
    LayerStack s;
    s.substrate = default_material_table().at("Pt");
    EXPECT_NEAR(std::norm(parratt_reflectivity(s, 1e-3, std::nullopt)), 1.0, 0.05);
}

TEST(Parratt, RockingReference) {
    const LayerStack pt = pt_cavity_stack();
    const LayerStack pd = pd_cavity_stack();
    const struct {
        double theta, pt, pd;
    } ref[] = {{2.30e-3, 0.56084772224442912, 0.52207607028012245},
               {2.338e-3, 0.43675279849317055, 0.57138337361484669},
               {2.45e-3, 0.73679865103839074, 0.89811118212924085}};
    for (const auto& r : ref) {
        EXPECT_NEAR(std::norm(parratt_reflectivity(pt, r.theta, std::nullopt)), r.pt, 1e-10);
        EXPECT_NEAR(std::norm(parratt_reflectivity(pd, r.theta, std::nullopt)), r.pd, 1e-10);
    }
}

TEST(Parratt, NuclearReference) {
    const LayerStack pt = pt_cavity_stack();
    EXPECT_NEAR(std::norm(parratt_reflectivity(pt, 2.38e-3, -3.0)), 0.7000369753154815, 1e-10);
    EXPECT_NEAR(std::norm(parratt_reflectivity(pt, 2.38e-3, 0.0)), 0.59825741081816184, 1e-10);
    EXPECT_NEAR(std::norm(parratt_reflectivity(pt, 2.38e-3, 2.5)), 0.39769450855983964, 1e-10);
    const std::vector<double> x{1.0};
    EXPECT_NEAR(energy_scan(pt, 2.38e-3, x, 0.3)[0], 0.091514672364472774, 1e-10);
}

TEST(RockingScan, FirstModeNearPresetAngles) {
    EXPECT_NEAR(dip_angle(pt_cavity_stack()), 2.338e-3, 0.05e-3);
    EXPECT_NEAR(dip_angle(pd_cavity_stack()), 2.320e-3, 0.05e-3);
}

TEST(RockingScan, OvercriticalDipIsDeep) { EXPECT_LT(dip_depth(pt_cavity_stack()), 0.5); }

TEST(RockingScan, DipDepthOrdering) {
    // With the shipped optical constants the Pd stack dips deeper than the Pt stack.
    EXPECT_LT(dip_depth(pd_cavity_stack()), dip_depth(pt_cavity_stack()));
}

TEST(RockingScan, NoModeWithoutGuidingLayers) {
    const auto t = default_material_table();
    LayerStack s;
    s.substrate = t.at("Si");
    s.layers.push_back({t.at("Pt"), 2.5, std::nullopt});
    const auto grid = linspace(2.6e-3, 4.0e-3, 400);
    const auto r = rocking_scan(s, grid);
    for (std::size_t i = 1; i < r.size(); ++i) EXPECT_LE(r[i], r[i - 1] + 1e-12);
}

TEST(RockingScan, WindingGivesRegime) {
    const auto grid = default_rocking_grid();
    EXPECT_EQ(regime_from_winding(phase_winding(rocking_amplitudes(pt_cavity_stack(), grid))), Regime::overcritical);
    EXPECT_EQ(regime_from_winding(phase_winding(rocking_amplitudes(pd_cavity_stack(), grid))), Regime::undercritical);
}

TEST(EnergyScan, ZeroAbundanceIsFlat) {
    const LayerStack pt = pt_cavity_stack();
    const auto grid = linspace(-50, 50, 101);
    const auto r = energy_scan(pt, 2.38e-3, grid, 0.0);
    const double bare = std::norm(parratt_reflectivity(pt, 2.38e-3, std::nullopt));
    for (double v : r) EXPECT_EQ(v, bare);
}

TEST(EnergyScan, ResonanceNarrowsWithAbundance) {
    const LayerStack pt = pt_cavity_stack();
    const auto grid = linspace(-200, 200, 4001);
    auto fwhm = [&](double ab) {
        const auto r = energy_scan(pt, 2.338e-3, grid, ab);
        const double base = r.front();
        std::size_t imax = 0;
        for (std::size_t i = 0; i < r.size(); ++i)
            if (std::abs(r[i] - base) > std::abs(r[imax] - base)) imax = i;
        const double half = 0.5 * std::abs(r[imax] - base);
        std::size_t lo = imax, hi = imax;
        while (lo > 0 && std::abs(r[lo] - base) > half) --lo;
        while (hi + 1 < r.size() && std::abs(r[hi] - base) > half) ++hi;
        return grid[hi] - grid[lo];
    };
    double prev = 1e300;
    for (double ab : {1.0, 0.7, 0.5, 0.3, 0.1}) {
        const double w = fwhm(ab);
        EXPECT_LT(w, prev);
        prev = w;
    }
}

TEST(EnergyScan, NeedsResonantLayer) {
    LayerStack s;
    s.layers.push_back({default_material_table().at("C"), 10.0, std::nullopt});
    const std::vector<double> x{0.0};
    EXPECT_THROW(energy_scan(s, 2.3e-3, x, 1.0), InputError);
}

TEST(Validate, RejectsBadStacks) {
    LayerStack s = pt_cavity_stack();
    s.layers[1].thickness_nm = 0.0;
    EXPECT_THROW(validate(s), InputError);
    s = pt_cavity_stack();
    s.layers[0].nuclear = s.layers[2].nuclear;
    EXPECT_THROW(validate(s), InputError);
    s = pt_cavity_stack();
    s.layers[0].material.delta = -1e-6;
    EXPECT_THROW(validate(s), InputError);
}

TEST(PhaseWinding, FullCircle) {
    std::vector<cplx> z;
    for (int i = 0; i <= 100; ++i) z.push_back(std::polar(1.0, 2 * kPi * i / 100.0));
    EXPECT_NEAR(phase_winding(z), 1.0, 1e-12);
}
