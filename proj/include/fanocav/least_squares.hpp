#pragma once

// Box-constrained damped least squares (Levenberg-Marquardt with Marquardt
// diagonal scaling), central-difference Jacobian when none is supplied, and a
// Nelder-Mead polish when the damping runs away without progress.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fanocav/errors.hpp"

namespace fanocav {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

using ResidualFn = std::function<Vec(const Vec&)>;
using JacobianFn = std::function<Mat(const Vec&)>;

enum class Termination { tolerance_met, iteration_cap, stall, non_finite };

inline std::string to_string(Termination t) {
    switch (t) {
    case Termination::tolerance_met: return "tolerance_met";
    case Termination::iteration_cap: return "iteration_cap";
    case Termination::stall: return "stall";
    case Termination::non_finite: return "non_finite";
    }
    return "unknown";
}

struct Bounds {
    Vec lower;
    Vec upper;

    static Bounds unbounded(Eigen::Index n) {
        const double inf = std::numeric_limits<double>::infinity();
        return {Vec::Constant(n, -inf), Vec::Constant(n, inf)};
    }
    Vec clamp(const Vec& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
};

struct LsqConfig {
    int max_iterations = 500;
    double parameter_tolerance = 1e-12; ///< relative step size
    double residual_tolerance = 1e-14;  ///< relative decrease of the objective
    double gradient_tolerance = 1e-16;  ///< absolute, on J^T r
    double absolute_objective = 0.0;    ///< stop once sum r^2 falls to this level
    bool restart_on_stall = true;
    int nelder_mead_evaluations = 2000;
};

struct LsqResult {
    Vec x;
    Vec residuals;
    double objective = 0.0; ///< sum of squared residuals
    Vec uncertainties;      ///< sqrt(diag(s^2 (J^T J)^-1)), empty if singular
    int iterations = 0;
    int evaluations = 0;
    int restarts = 0;
    Termination reason = Termination::iteration_cap;
    std::vector<double> objective_history; ///< after each accepted step, starting value first

    bool converged() const { return reason == Termination::tolerance_met; }
};

namespace detail {

inline bool all_finite(const Vec& v) { return v.allFinite(); }

inline Mat fd_jacobian(const ResidualFn& f, const Vec& x, const Vec& r0, const Bounds& b, int& evals) {
    const double h0 = std::cbrt(std::numeric_limits<double>::epsilon());
    Mat J(r0.size(), x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = h0 * std::max(std::abs(x[j]), 1e-3);
        Vec xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const bool up_ok = xp[j] <= b.upper[j];
        const bool dn_ok = xm[j] >= b.lower[j];
        if (up_ok && dn_ok) {
            J.col(j) = (f(xp) - f(xm)) / (2.0 * h);
            evals += 2;
        } else if (up_ok) {
            J.col(j) = (f(xp) - r0) / h;
            ++evals;
        } else {
            J.col(j) = (r0 - f(xm)) / h;
            ++evals;
        }
    }
    return J;
}

/// Bounded Nelder-Mead on sum r^2; returns the best vertex.
inline Vec nelder_mead(const ResidualFn& f, const Vec& start, const Bounds& b, int max_evals, int& evals) {
    const Eigen::Index n = start.size();
    auto cost = [&](const Vec& x) {
        ++evals;
        const Vec r = f(b.clamp(x));
        const double c = r.squaredNorm();
        return std::isfinite(c) ? c : std::numeric_limits<double>::infinity();
    };
    std::vector<Vec> pts(n + 1, b.clamp(start));
    std::vector<double> val(n + 1);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double step = 0.05 * std::max(std::abs(start[j]), 1e-3);
        pts[j + 1][j] += (pts[j + 1][j] + step <= b.upper[j]) ? step : -step;
        pts[j + 1] = b.clamp(pts[j + 1]);
    }
    for (Eigen::Index i = 0; i <= n; ++i) val[i] = cost(pts[i]);

    std::vector<Eigen::Index> order(n + 1);
    int used = 0;
    while (used < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto c) { return val[a] < val[c]; });
        const auto best = order.front(), worst = order.back(), second = order[n - 1];
        if (val[worst] - val[best] <= 1e-15 * (std::abs(val[best]) + 1e-300)) break;

        Vec centroid = Vec::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i) centroid += pts[order[i]];
        centroid /= static_cast<double>(n);

        const Vec xr = b.clamp(centroid + (centroid - pts[worst]));
        const double fr = cost(xr);
        ++used;
        if (fr < val[best]) {
            const Vec xe = b.clamp(centroid + 2.0 * (centroid - pts[worst]));
            const double fe = cost(xe);
            ++used;
            if (fe < fr) { pts[worst] = xe; val[worst] = fe; }
            else { pts[worst] = xr; val[worst] = fr; }
        } else if (fr < val[second]) {
            pts[worst] = xr;
            val[worst] = fr;
        } else {
            const Vec xc = b.clamp(centroid + 0.5 * (pts[worst] - centroid));
            const double fc = cost(xc);
            ++used;
            if (fc < val[worst]) {
                pts[worst] = xc;
                val[worst] = fc;
            } else {
                for (Eigen::Index i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    pts[i] = b.clamp(pts[best] + 0.5 * (pts[i] - pts[best]));
                    val[i] = cost(pts[i]);
                    ++used;
                }
            }
        }
    }
    const auto it = std::min_element(val.begin(), val.end());
    return pts[static_cast<std::size_t>(it - val.begin())];
}

} // namespace detail

/// Minimizes sum r(x)^2 over the box `bounds`. The objective never increases
/// across accepted steps; a non-finite residual mid-run stops the search and
/// returns the last good state with reason `non_finite`.
inline LsqResult least_squares_minimize(const ResidualFn& f, Vec start, const Bounds& bounds,
                                        const LsqConfig& cfg = {}, const JacobianFn& jacobian = {}) {
    LsqResult res;
    Vec x = bounds.clamp(start);
    Vec r = f(x);
    res.evaluations = 1;
    if (!detail::all_finite(r)) throw FitError("least_squares_minimize: residuals not finite at the start point");
    double cost = r.squaredNorm();
    res.objective_history.push_back(cost);

    auto jac = [&](const Vec& at, const Vec& r_at) {
        return jacobian ? jacobian(at) : detail::fd_jacobian(f, at, r_at, bounds, res.evaluations);
    };

    Mat J = jac(x, r);
    double mu = -1.0, nu = 2.0;
    bool done = false;
    while (!done) {
        if (res.iterations >= cfg.max_iterations) {
            res.reason = Termination::iteration_cap;
            break;
        }
        if (cost <= cfg.absolute_objective) {
            res.reason = Termination::tolerance_met;
            break;
        }
        const Vec g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() <= cfg.gradient_tolerance) {
            res.reason = Termination::tolerance_met;
            break;
        }
        const Mat A = J.transpose() * J;
        Vec d = A.diagonal().cwiseMax(1e-12 * std::max(A.diagonal().maxCoeff(), 1e-300));
        if (mu < 0) mu = 1e-3;

        ++res.iterations;
        bool accepted = false;
        while (!accepted) {
            Mat M = A;
            M.diagonal() += mu * d;
            const Vec step = M.ldlt().solve(-g);
            const Vec x_new = bounds.clamp(x + step);
            const Vec s = x_new - x;
            const Vec r_new = f(x_new);
            ++res.evaluations;
            if (!detail::all_finite(r_new)) {
                res.reason = Termination::non_finite;
                done = true;
                break;
            }
            const double cost_new = r_new.squaredNorm();
            const double predicted = -(2.0 * g.dot(s) + s.dot(A * s));
            if (cost_new < cost) {
                const double rho = predicted > 0 ? (cost - cost_new) / predicted : 0.0;
                mu *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
                nu = 2.0;
                const double drop = cost - cost_new;
                const bool small_step = s.norm() <= cfg.parameter_tolerance * (x.norm() + cfg.parameter_tolerance);
                x = x_new;
                r = r_new;
                cost = cost_new;
                res.objective_history.push_back(cost);
                J = jac(x, r);
                accepted = true;
                if (drop <= cfg.residual_tolerance * cost_new || small_step) {
                    res.reason = Termination::tolerance_met;
                    done = true;
                }
            } else {
                const bool flat = s.norm() <= cfg.parameter_tolerance * (x.norm() + cfg.parameter_tolerance);
                if (flat && cost_new <= cost * (1.0 + 1e-15)) {
                    // Step is at rounding level: a minimum for practical purposes.
                    res.reason = Termination::tolerance_met;
                    done = true;
                    break;
                }
                mu *= nu;
                nu *= 2.0;
                if (mu > 1e20) {
                    res.reason = Termination::stall;
                    if (cfg.restart_on_stall && res.restarts == 0) {
                        ++res.restarts;
                        const Vec polished = detail::nelder_mead(f, x, bounds, cfg.nelder_mead_evaluations,
                                                                 res.evaluations);
                        const Vec rp = f(polished);
                        ++res.evaluations;
                        if (detail::all_finite(rp) && rp.squaredNorm() < cost) {
                            x = polished;
                            r = rp;
                            cost = rp.squaredNorm();
                            res.objective_history.push_back(cost);
                            J = jac(x, r);
                            mu = 1e-3;
                            nu = 2.0;
                            accepted = true;
                            continue;
                        }
                    }
                    done = true;
                    break;
                }
            }
        }
    }

    res.x = x;
    res.residuals = r;
    res.objective = cost;
    const Eigen::Index m = r.size(), n = x.size();
    if (m > n) {
        const Mat A = J.transpose() * J;
        Eigen::FullPivLU<Mat> lu(A);
        if (lu.isInvertible()) {
            const double s2 = cost / static_cast<double>(m - n);
            res.uncertainties = (lu.inverse().diagonal() * s2).cwiseMax(0.0).cwiseSqrt();
        }
    }
    return res;
}

} // namespace fanocav
