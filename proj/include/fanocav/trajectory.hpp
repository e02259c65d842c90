#pragma once

// q trajectories in the complex plane: sweeps over nuclear abundance (straight
// lines through q = i) and over the angle offset (arcs), their geometric fits,
// and the (theta, abundance) surface.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "fanocav/core_model.hpp"
#include "fanocav/errors.hpp"
#include "fanocav/fitting.hpp"
#include "fanocav/layersim.hpp"
#include "fanocav/parallel.hpp"

namespace fanocav {

enum class Source { model, oracle };
enum class SweepMode { abundance, angle, grid };

inline std::string to_string(Source s) { return s == Source::model ? "model" : "oracle"; }

/// Perpendicular RMS below this fraction of the trajectory extent counts as a line.
inline constexpr double kCollinearityThreshold = 1e-3;

/// Abundances of the Fano spectra series: 100, 70, 50, 30, 10 %.
inline std::vector<double> default_abundance_grid() { return {1.0, 0.7, 0.5, 0.3, 0.1}; }

/// Angle offsets -50 ... +46 urad in 25 steps of 4 urad [rad].
inline std::vector<double> default_offset_grid() { return linspace(-50e-6, 46e-6, 25); }

struct SweepSpec {
    SweepMode mode = SweepMode::abundance;
    double theta = 0.0;     ///< fixed angle for abundance sweeps [rad]
    double abundance = 1.0; ///< fixed abundance for angle sweeps
    std::vector<double> grid;
    Source source = Source::model;
};

struct QPoint {
    double control = 0.0;
    cplx q;
    double pi_strength = 0.0;
    bool ok = false;
    std::string error;
};

struct QTrajectory {
    std::vector<QPoint> points;
    Source source = Source::model;

    std::vector<cplx> good_points() const {
        std::vector<cplx> v;
        for (const auto& p : points)
            if (p.ok) v.push_back(p.q);
        return v;
    }
    double ok_fraction() const {
        if (points.empty()) return 0.0;
        const auto n = std::count_if(points.begin(), points.end(), [](const QPoint& p) { return p.ok; });
        return static_cast<double>(n) / static_cast<double>(points.size());
    }
};

struct LineFit {
    cplx anchor;           ///< centroid of the points
    double direction = 0;  ///< in [-pi/2, pi/2)
    double rms = 0;        ///< perpendicular RMS
    double extent = 0;     ///< largest pairwise distance

    double distance_to(cplx p) const {
        const cplx d = std::polar(1.0, direction);
        const cplx v = p - anchor;
        return std::abs(v.real() * d.imag() - v.imag() * d.real());
    }
    bool collinear() const { return rms < kCollinearityThreshold * extent; }
};

struct ArcFit {
    cplx center;
    double radius = 0;
    double rms = 0;        ///< radial RMS
    double distortion = 0; ///< max radial deviation / radius
};

// ---------------------------------------------------------------------------
// Sources

struct ModelSource {
    CavityParams cavity;
    NuclearEnsemble ensemble;
};

/// Oracle pipeline: Parratt spectra of a physical stack, fitted with the Fano
/// model in the context of the cavity extracted from the stack's rocking curve.
struct OracleSource {
    LayerStack stack;
    BareCavityFit cavity_fit;
    CavityParams cavity;
    NuclearEnsemble ensemble; ///< gamma and calibrated n_ref; used for the fit context
    std::vector<double> energy_grid = default_energy_grid(); ///< units of gamma
    OptimizerConfig fit_config{};
    double winding = 0.0; ///< phase turns of the rocking amplitude
};

using SweepSource = std::variant<ModelSource, OracleSource>;

/// Fits the stack's rocking curve around its deepest dip (+- half_window rad), taking the
/// coupling branch from the phase winding of the complex amplitude over the full scan.
inline OracleSource prepare_oracle(const LayerStack& stack, const std::vector<double>& rocking_grid = default_rocking_grid(),
                                   double half_window = 0.15e-3) {
    validate(stack);
    if (!stack.resonant_layer()) throw InputError("prepare_oracle: stack has no nuclear-resonant layer");
    OracleSource o;
    o.stack = stack;
    const auto amps = rocking_amplitudes(stack, rocking_grid);
    o.winding = phase_winding(amps);
    std::vector<double> r2(amps.size());
    std::transform(amps.begin(), amps.end(), r2.begin(), [](cplx a) { return std::norm(a); });
    const auto imin = static_cast<std::size_t>(std::min_element(r2.begin(), r2.end()) - r2.begin());
    std::vector<double> th, y;
    for (std::size_t i = 0; i < r2.size(); ++i)
        if (std::abs(rocking_grid[i] - rocking_grid[imin]) <= half_window) {
            th.push_back(rocking_grid[i]);
            y.push_back(r2[i]);
        }
    OptimizerConfig cfg;
    cfg.branch = regime_from_winding(o.winding);
    o.cavity_fit = fit_bare_cavity(th, y, cfg);
    if (!o.cavity_fit.converged) throw FitError("prepare_oracle: bare-cavity fit failed: " + o.cavity_fit.diagnostic);
    o.cavity = o.cavity_fit.cavity(stack.energy_kev);
    const auto* res = stack.resonant_layer();
    o.ensemble = make_ensemble(o.cavity, 1.0);
    o.ensemble.gamma = res->nuclear->gamma_nev * 1e-9 / (stack.energy_kev * 1e3);
    o.ensemble.g = std::sqrt(o.ensemble.gamma * o.cavity.kappa / 2.0);
    return o;
}

inline FanoFit oracle_fit_point(const OracleSource& o, double theta, double abundance) {
    const auto y = energy_scan(o.stack, theta, o.energy_grid, abundance);
    NuclearEnsemble e = o.ensemble;
    e.abundance = abundance;
    const FanoFitContext ctx = make_fano_context(theta, o.cavity, e, e.gamma);
    return fit_fano(o.energy_grid, y, ctx, o.fit_config);
}

/// Sets n_ref so the model's collective width matches the oracle's at (theta, abundance).
inline double calibrate_n_ref(OracleSource& o, double theta, double abundance = 1.0) {
    const FanoFit f = oracle_fit_point(o, theta, abundance);
    const double dc = cavity_detuning(theta, o.cavity);
    const double gs_over_gamma = single_atom_width(dc, o.cavity, o.ensemble) / o.ensemble.gamma;
    o.ensemble.n_ref = (f.width - 1.0) / (abundance * gs_over_gamma);
    return o.ensemble.n_ref;
}

namespace detail {

inline QPoint evaluate_point(const SweepSource& src, double theta, double abundance, double control) {
    QPoint p;
    p.control = control;
    try {
        if (const auto* m = std::get_if<ModelSource>(&src)) {
            NuclearEnsemble e = m->ensemble;
            e.abundance = abundance;
            const FanoProfile prof = fano_profile(theta, m->cavity, e);
            p.q = prof.q;
            p.pi_strength = prof.pi_strength;
            p.ok = std::isfinite(p.q.real()) && std::isfinite(p.q.imag());
        } else {
            const auto& o = std::get<OracleSource>(src);
            const FanoFit f = oracle_fit_point(o, theta, abundance);
            p.q = f.q;
            p.pi_strength = f.pi_strength;
            p.ok = f.converged;
            if (!f.converged) p.error = f.diagnostic;
        }
    } catch (const std::exception& e) {
        p.ok = false;
        p.error = e.what();
    }
    return p;
}

inline Source source_of(const SweepSource& s) {
    return std::holds_alternative<ModelSource>(s) ? Source::model : Source::oracle;
}

inline double mode_angle(const SweepSource& s) {
    return std::holds_alternative<ModelSource>(s) ? std::get<ModelSource>(s).cavity.theta_mode
                                                  : std::get<OracleSource>(s).cavity.theta_mode;
}

} // namespace detail

/// q versus abundance at fixed theta. Failed points are kept and flagged.
inline QTrajectory sweep_abundance(const SweepSource& src, double theta, const std::vector<double>& abundances) {
    if (abundances.empty()) throw InputError("sweep_abundance: empty abundance grid");
    QTrajectory t;
    t.source = detail::source_of(src);
    t.points.resize(abundances.size());
    parallel_for(abundances.size(),
                 [&](std::size_t i) { t.points[i] = detail::evaluate_point(src, theta, abundances[i], abundances[i]); });
    return t;
}

/// q versus angle offset from the mode angle (offsets in rad, control = offset).
inline QTrajectory sweep_angle(const SweepSource& src, double abundance, const std::vector<double>& offsets) {
    if (offsets.empty()) throw InputError("sweep_angle: empty angle grid");
    const double mode = detail::mode_angle(src);
    QTrajectory t;
    t.source = detail::source_of(src);
    t.points.resize(offsets.size());
    parallel_for(offsets.size(), [&](std::size_t i) {
        t.points[i] = detail::evaluate_point(src, mode + offsets[i], abundance, offsets[i]);
    });
    return t;
}

inline QTrajectory run_sweep(const SweepSource& src, const SweepSpec& spec) {
    if (spec.mode == SweepMode::abundance) return sweep_abundance(src, spec.theta, spec.grid);
    if (spec.mode == SweepMode::angle) return sweep_angle(src, spec.abundance, spec.grid);
    throw InputError("run_sweep: grid mode is handled by q_surface");
}

namespace detail {
inline double max_pairwise_distance(const std::vector<cplx>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) d = std::max(d, std::abs(pts[i] - pts[j]));
    return d;
}
} // namespace detail

/// Total-least-squares line through the points.
inline LineFit fit_line(const std::vector<cplx>& pts) {
    if (pts.size() < 3) throw DegenerateError("fit_line: need at least 3 points");
    LineFit lf;
    lf.extent = detail::max_pairwise_distance(pts);
    if (!(lf.extent > 0.0)) throw DegenerateError("fit_line: all points coincide");
    cplx c(0.0, 0.0);
    for (const cplx& p : pts) c += p;
    c /= static_cast<double>(pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const cplx& p : pts) {
        const Eigen::Vector2d v(p.real() - c.real(), p.imag() - c.imag());
        cov += v * v.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Eigen::Vector2d dir = es.eigenvectors().col(1);
    double angle = std::atan2(dir.y(), dir.x());
    if (angle >= kPi / 2) angle -= kPi;
    if (angle < -kPi / 2) angle += kPi;
    lf.anchor = c;
    lf.direction = angle;
    // Residuals taken directly; the small eigenvalue only carries ~sqrt(eps) relative accuracy.
    double sum = 0.0;
    for (const cplx& p : pts) sum += lf.distance_to(p) * lf.distance_to(p);
    lf.rms = std::sqrt(sum / static_cast<double>(pts.size()));
    return lf;
}

/// Algebraic (Kasa) circle fit: minimizes sum (|p - c|^2 - r^2)^2.
inline ArcFit fit_arc(const std::vector<cplx>& pts) {
    if (pts.size() < 4) throw DegenerateError("fit_arc: need at least 4 points");
    const LineFit lf = fit_line(pts);
    if (lf.rms <= 1e-12 * lf.extent) throw DegenerateError("fit_arc: points are collinear; use fit_line");

    const auto n = static_cast<Eigen::Index>(pts.size());
    const cplx c0 = lf.anchor;
    const double s = lf.extent;
    Eigen::MatrixXd M(n, 3);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const cplx p = (pts[static_cast<std::size_t>(i)] - c0) / s;
        M(i, 0) = p.real();
        M(i, 1) = p.imag();
        M(i, 2) = 1.0;
        rhs[i] = -std::norm(p);
    }
    const Eigen::Vector3d sol = M.colPivHouseholderQr().solve(rhs);
    const cplx center_n(-sol[0] / 2.0, -sol[1] / 2.0);
    const double r2 = std::norm(center_n) - sol[2];
    if (!(r2 > 0.0)) throw DegenerateError("fit_arc: no real circle fits the points");

    ArcFit af;
    af.center = c0 + s * center_n;
    af.radius = s * std::sqrt(r2);
    double sum = 0.0, worst = 0.0;
    for (const cplx& p : pts) {
        const double dev = std::abs(p - af.center) - af.radius;
        sum += dev * dev;
        worst = std::max(worst, std::abs(dev));
    }
    af.rms = std::sqrt(sum / static_cast<double>(pts.size()));
    af.distortion = worst / af.radius;
    return af;
}

struct SurfaceCell {
    double offset = 0.0; ///< theta - theta_mode [rad]
    double abundance = 0.0;
    QPoint point;
};

/// Full factorial (offset x abundance) evaluation, rows ordered offset-major.
inline std::vector<SurfaceCell> q_surface(const SweepSource& src, const std::vector<double>& offsets,
                                          const std::vector<double>& abundances) {
    if (offsets.empty() || abundances.empty()) throw InputError("q_surface: empty grid");
    const double mode = detail::mode_angle(src);
    std::vector<SurfaceCell> cells(offsets.size() * abundances.size());
    parallel_for(cells.size(), [&](std::size_t k) {
        const std::size_t i = k / abundances.size(), j = k % abundances.size();
        cells[k].offset = offsets[i];
        cells[k].abundance = abundances[j];
        cells[k].point = detail::evaluate_point(src, mode + offsets[i], abundances[j], offsets[i]);
    });
    return cells;
}

} // namespace fanocav
