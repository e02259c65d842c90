#pragma once

// Command-line front end shared by tools/fano_cavity and the tests.
//
// Exit codes: 0 success, 2 usage / schema / input error, 3 fit did not converge,
// 4 --expect comparison failed, 5 fewer than 90% of trajectory points succeeded.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fanocav/core_model.hpp"
#include "fanocav/errors.hpp"
#include "fanocav/fitting.hpp"
#include "fanocav/layersim.hpp"
#include "fanocav/scan_io.hpp"
#include "fanocav/stack_io.hpp"
#include "fanocav/trajectory.hpp"

namespace fanocav::cli {

using nlohmann::json;

enum ExitCode : int { ok = 0, usage = 2, no_convergence = 3, expect_failed = 4, trajectory_failed = 5 };

class UsageError : public std::invalid_argument {
public:
    explicit UsageError(const std::string& w) : std::invalid_argument(w) {}
};
class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(const std::string& w) : std::runtime_error(w) {}
};
class ExpectationError : public std::runtime_error {
public:
    explicit ExpectationError(const std::string& w) : std::runtime_error(w) {}
};

struct RunConfig {
    std::string command;
    std::optional<std::string> stack_path;
    std::optional<std::string> in_path;
    std::optional<std::string> out_path;
    std::optional<std::string> expect_path;
    std::string format = "csv";
    std::optional<std::string> source;
    std::optional<double> theta_mrad;
    std::optional<double> abundance;
    std::optional<int> points;
    std::uint64_t seed = 0;
    double noise = 0.0;
    std::string preset = "overcritical";
    std::optional<double> mode_mrad, kappa, kappa_r, amplitude, dispersion;
    double collective_ratio = 100.0;
    std::string mode = "abundance";
    std::string regime = "auto";
    std::vector<double> grid;
    int verbosity = 0;
};

namespace detail {

template <class T>
void take(const json& obj, const char* key, const std::string& where, T& dst) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw InputError(where + "." + key + ": wrong type");
    }
}

template <class T>
void take(const json& obj, const char* key, const std::string& where, std::optional<T>& dst) {
    if (!obj.contains(key)) return;
    T v{};
    take(obj, key, where, v);
    dst = v;
}

} // namespace detail

/// Applies a JSON configuration file onto `cfg`. Unknown keys are rejected with their location.
inline void apply_config_file(const std::string& path, RunConfig& cfg) {
    using fanocav::detail::reject_unknown_keys;
    const json j = fanocav::detail::parse_json_file(path);
    reject_unknown_keys(j, {"stack", "input", "expect", "cavity", "ensemble", "scan", "output", "seed", "verbosity"},
                        "config");
    detail::take(j, "stack", "config", cfg.stack_path);
    detail::take(j, "input", "config", cfg.in_path);
    detail::take(j, "expect", "config", cfg.expect_path);
    detail::take(j, "seed", "config", cfg.seed);
    detail::take(j, "verbosity", "config", cfg.verbosity);
    if (j.contains("cavity")) {
        const json& c = j.at("cavity");
        reject_unknown_keys(c, {"preset", "theta_mode_mrad", "kappa", "kappa_r", "A", "phi"}, "config.cavity");
        detail::take(c, "preset", "config.cavity", cfg.preset);
        detail::take(c, "theta_mode_mrad", "config.cavity", cfg.mode_mrad);
        detail::take(c, "kappa", "config.cavity", cfg.kappa);
        detail::take(c, "kappa_r", "config.cavity", cfg.kappa_r);
        detail::take(c, "A", "config.cavity", cfg.amplitude);
        detail::take(c, "phi", "config.cavity", cfg.dispersion);
    }
    if (j.contains("ensemble")) {
        const json& e = j.at("ensemble");
        reject_unknown_keys(e, {"collective_ratio"}, "config.ensemble");
        detail::take(e, "collective_ratio", "config.ensemble", cfg.collective_ratio);
    }
    if (j.contains("scan")) {
        const json& s = j.at("scan");
        reject_unknown_keys(s, {"source", "theta_mrad", "abundance", "points", "mode", "grid", "noise", "regime"},
                            "config.scan");
        detail::take(s, "source", "config.scan", cfg.source);
        detail::take(s, "theta_mrad", "config.scan", cfg.theta_mrad);
        detail::take(s, "abundance", "config.scan", cfg.abundance);
        detail::take(s, "points", "config.scan", cfg.points);
        detail::take(s, "mode", "config.scan", cfg.mode);
        detail::take(s, "grid", "config.scan", cfg.grid);
        detail::take(s, "noise", "config.scan", cfg.noise);
        detail::take(s, "regime", "config.scan", cfg.regime);
    }
    if (j.contains("output")) {
        const json& o = j.at("output");
        reject_unknown_keys(o, {"path", "format"}, "config.output");
        detail::take(o, "path", "config.output", cfg.out_path);
        detail::take(o, "format", "config.output", cfg.format);
    }
}

// ---------------------------------------------------------------------------
// Helpers

inline CavityPreset model_cavity(const RunConfig& cfg) {
    CavityPreset p;
    if (cfg.preset == "overcritical") p = overcritical_preset();
    else if (cfg.preset == "undercritical") p = undercritical_preset();
    else throw UsageError("unknown preset '" + cfg.preset + "' (overcritical|undercritical)");
    if (cfg.mode_mrad) p.cavity.theta_mode = *cfg.mode_mrad * 1e-3;
    if (cfg.kappa) p.cavity.kappa = *cfg.kappa * 1e-2;
    if (cfg.kappa_r) p.cavity.kappa_r = *cfg.kappa_r * 1e-2;
    if (cfg.amplitude) p.amplitude = *cfg.amplitude;
    if (cfg.dispersion) p.dispersion = *cfg.dispersion;
    validate(p.cavity);
    return p;
}

inline Source resolve_source(const RunConfig& cfg) {
    const std::string s = cfg.source.value_or(cfg.stack_path ? "oracle" : "model");
    if (s == "model") return Source::model;
    if (s == "oracle") {
        if (!cfg.stack_path) throw UsageError("--source oracle requires --stack FILE");
        return Source::oracle;
    }
    throw UsageError("unknown source '" + s + "' (model|oracle)");
}

inline std::size_t point_count(const RunConfig& cfg, std::size_t fallback) {
    if (!cfg.points) return fallback;
    if (*cfg.points <= 0) throw UsageError("--points must be positive");
    return static_cast<std::size_t>(*cfg.points);
}

inline void add_noise(std::vector<double>& y, const RunConfig& cfg) {
    if (cfg.noise <= 0.0) return;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> n(0.0, cfg.noise);
    for (double& v : y) v *= 1.0 + n(rng);
}

inline void emit(const RunConfig& cfg, const std::string& text, std::ostream& out) {
    if (!cfg.out_path) {
        out << text;
        return;
    }
    std::ofstream f(*cfg.out_path, std::ios::binary);
    if (!f) throw InputError("cannot write '" + *cfg.out_path + "'");
    f << text;
}

inline void check_format(const RunConfig& cfg) {
    if (cfg.format != "csv" && cfg.format != "json") throw UsageError("--format must be csv or json");
}

inline std::string emit_scan(const RunConfig& cfg, const Scan& s) {
    if (cfg.format == "json") return scan_to_json(s).dump(2) + "\n";
    return scan_to_csv(s, s.kind == "rocking" ? "theta_mrad" : "detuning_gamma");
}

/// Compares fitted values with a reference file:
///   {"tolerance": 1e-3, "values": {"kappa": 1.938, "phi": {"value": -0.02, "tolerance": 1e-2}}, "regime": ".."}
/// Tolerances are relative; a zero reference is compared absolutely.
inline void check_expectations(const std::string& path, const json& result, std::ostream& err) {
    const json e = fanocav::detail::parse_json_file(path);
    fanocav::detail::reject_unknown_keys(e, {"tolerance", "values", "regime"}, "expect");
    double tol = 1e-3;
    detail::take(e, "tolerance", "expect", tol);
    std::vector<std::string> breaches;
    if (e.contains("values")) {
        const json& vals = e.at("values");
        if (!vals.is_object()) throw InputError("expect.values: expected an object");
        for (auto it = vals.begin(); it != vals.end(); ++it) {
            if (!result.contains(it.key()) || !result.at(it.key()).is_number())
                throw InputError("expect.values." + it.key() + ": not a numeric fit output");
            double ref = 0.0, t = tol;
            if (it.value().is_number()) ref = it.value().get<double>();
            else if (it.value().is_object()) {
                fanocav::detail::reject_unknown_keys(it.value(), {"value", "tolerance"}, "expect.values." + it.key());
                ref = fanocav::detail::get_number(it.value(), "value", "expect.values." + it.key());
                detail::take(it.value(), "tolerance", "expect.values." + it.key(), t);
            } else throw InputError("expect.values." + it.key() + ": expected a number or object");
            const double got = result.at(it.key()).get<double>();
            const double allowed = ref != 0.0 ? t * std::abs(ref) : t;
            if (!(std::abs(got - ref) <= allowed))
                breaches.push_back(it.key() + ": got " + format_number(got) + ", expected " + format_number(ref));
        }
    }
    if (e.contains("regime")) {
        const std::string want = e.at("regime").get<std::string>();
        const std::string got = result.value("regime", "");
        if (want != got) breaches.push_back("regime: got " + got + ", expected " + want);
    }
    for (const auto& b : breaches) err << "expect: " << b << "\n";
    if (!breaches.empty()) throw ExpectationError("expectation check failed");
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_bare_scan(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    check_format(cfg);
    const std::size_t n = point_count(cfg, 2001);
    const auto theta = linspace(2.0e-3, 2.7e-3, n);
    Scan s;
    s.kind = "rocking";
    s.x_unit = "mrad";
    if (resolve_source(cfg) == Source::oracle) {
        s.source = "oracle";
        s.y = rocking_scan(load_stack(*cfg.stack_path), theta);
    } else {
        s.source = "model";
        s.y = bare_cavity_curve(theta, model_cavity(cfg));
    }
    add_noise(s.y, cfg);
    for (double t : theta) s.x.push_back(t * 1e3);
    emit(cfg, emit_scan(cfg, s), out);
    return ok;
}

inline int cmd_energy_scan(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    check_format(cfg);
    const std::size_t n = point_count(cfg, 4001);
    const auto x = linspace(-200.0, 200.0, n);
    const double abundance = cfg.abundance.value_or(1.0);
    Scan s;
    s.kind = "energy";
    s.x_unit = "gamma";
    s.x = x;
    s.abundance = abundance;
    if (resolve_source(cfg) == Source::oracle) {
        const LayerStack stack = load_stack(*cfg.stack_path);
        double theta = 0.0;
        if (cfg.theta_mrad) theta = *cfg.theta_mrad * 1e-3;
        else theta = prepare_oracle(stack).cavity.theta_mode;
        s.source = "oracle";
        s.theta_mrad = theta * 1e3;
        s.y = energy_scan(stack, theta, x, abundance);
    } else {
        const CavityPreset p = model_cavity(cfg);
        const double theta = cfg.theta_mrad ? *cfg.theta_mrad * 1e-3 : p.cavity.theta_mode;
        const NuclearEnsemble e = make_ensemble(p.cavity, cfg.collective_ratio, abundance);
        std::vector<double> w(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) w[i] = x[i] * e.gamma;
        s.source = "model";
        s.theta_mrad = theta * 1e3;
        s.y = reflectivity_spectrum(w, theta, p.cavity, e);
    }
    add_noise(s.y, cfg);
    emit(cfg, emit_scan(cfg, s), out);
    return ok;
}

inline json bare_fit_json(const BareCavityFit& f) {
    json j;
    j["kind"] = "bare_cavity";
    j["A"] = round12(f.A);
    j["phi"] = round12(f.phi);
    j["theta_mode_mrad"] = round12(f.theta_mode);
    j["kappa"] = round12(f.kappa);
    j["kappa_r"] = round12(f.kappa_r);
    j["regime"] = to_string(f.regime);
    j["regime_ambiguous"] = f.regime_ambiguous;
    j["residual_rms"] = round12(f.residual_rms);
    j["converged"] = f.converged;
    j["termination"] = to_string(f.termination);
    j["iterations"] = f.iterations;
    if (f.uncertainties.size() == 5) {
        const char* names[] = {"A", "phi", "theta_mode_mrad", "kappa", "kappa_r"};
        for (int i = 0; i < 5; ++i) j["uncertainties"][names[i]] = round12(f.uncertainties[static_cast<std::size_t>(i)]);
    }
    if (!f.diagnostic.empty()) j["diagnostic"] = f.diagnostic;
    return j;
}

inline json fano_fit_json(const FanoFit& f) {
    json j;
    j["kind"] = "fano";
    j["re_q"] = round12(f.q.real());
    j["im_q"] = round12(f.q.imag());
    j["pi_strength"] = round12(f.pi_strength);
    j["width"] = round12(f.width);
    j["shift"] = round12(f.shift);
    j["a"] = round12(f.a);
    j["b"] = round12(f.b);
    if (f.model_lamb_shift) j["model_lamb_shift"] = round12(*f.model_lamb_shift);
    j["residual_rms"] = round12(f.residual_rms);
    j["converged"] = f.converged;
    j["im_sign_from_context"] = f.im_sign_from_context;
    j["termination"] = to_string(f.termination);
    j["iterations"] = f.iterations;
    const char* names[] = {"re_q", "im_q", "width", "shift", "a", "b"};
    for (std::size_t i = 0; i < f.uncertainties.size(); ++i) j["uncertainties"][names[i]] = round12(f.uncertainties[i]);
    if (!f.diagnostic.empty()) j["diagnostic"] = f.diagnostic;
    return j;
}

inline int finish_fit(const RunConfig& cfg, const json& result, bool converged, std::ostream& out, std::ostream& err) {
    emit(cfg, result.dump(2) + "\n", out);
    if (!converged) {
        err << "fit did not converge: " << result.value("diagnostic", std::string("no diagnostic")) << "\n";
        return no_convergence;
    }
    if (cfg.expect_path) check_expectations(*cfg.expect_path, result, err);
    return ok;
}

inline int cmd_fit_cavity(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (!cfg.in_path) throw UsageError("fit-cavity requires --in FILE");
    const Scan s = read_scan(*cfg.in_path);
    if (!s.x_unit.empty() && s.x_unit != "mrad") throw InputError(*cfg.in_path + ": rocking scans use x_unit mrad");
    std::vector<double> theta(s.x.size());
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = s.x[i] * 1e-3;
    OptimizerConfig oc;
    oc.poisson_weights = false;
    if (cfg.regime == "overcritical") oc.branch = Regime::overcritical;
    else if (cfg.regime == "undercritical") oc.branch = Regime::undercritical;
    else if (cfg.regime != "auto") throw UsageError("--regime must be auto, overcritical or undercritical");
    const BareCavityFit f = fit_bare_cavity(theta, s.y, oc);
    return finish_fit(cfg, bare_fit_json(f), f.converged, out, err);
}

inline int cmd_fit_fano(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (!cfg.in_path) throw UsageError("fit-fano requires --in FILE");
    const Scan s = read_scan(*cfg.in_path);
    if (!s.x_unit.empty() && s.x_unit != "gamma") throw InputError(*cfg.in_path + ": energy scans use x_unit gamma");
    CavityParams cavity;
    NuclearEnsemble ensemble;
    if (resolve_source(cfg) == Source::oracle) {
        const OracleSource o = prepare_oracle(load_stack(*cfg.stack_path));
        cavity = o.cavity;
        ensemble = o.ensemble;
    } else {
        cavity = model_cavity(cfg).cavity;
        ensemble = make_ensemble(cavity, cfg.collective_ratio);
    }
    double theta = cavity.theta_mode;
    if (cfg.theta_mrad) theta = *cfg.theta_mrad * 1e-3;
    else if (s.theta_mrad) theta = *s.theta_mrad * 1e-3;
    ensemble.abundance = cfg.abundance.value_or(s.abundance.value_or(1.0));
    const FanoFitContext ctx = make_fano_context(theta, cavity, ensemble, ensemble.gamma);
    FanoFit f;
    try {
        f = fit_fano(s.x, s.y, ctx);
    } catch (const FitError& e) {
        throw ConvergenceError(e.what());
    }
    return finish_fit(cfg, fano_fit_json(f), f.converged, out, err);
}

inline SweepSource make_source(const RunConfig& cfg) {
    if (resolve_source(cfg) == Source::oracle) return prepare_oracle(load_stack(*cfg.stack_path));
    const CavityParams c = model_cavity(cfg).cavity;
    return ModelSource{c, make_ensemble(c, cfg.collective_ratio)};
}

inline std::vector<double> offset_grid(const RunConfig& cfg) {
    if (!cfg.grid.empty()) {
        std::vector<double> g;
        for (double v : cfg.grid) g.push_back(v * 1e-6);
        return g;
    }
    if (cfg.points) return linspace(-50e-6, 46e-6, point_count(cfg, 25));
    return default_offset_grid();
}

inline std::string csv_row(double control, const QPoint& p, Source src) {
    return format_number(control) + "," + format_number(p.q.real()) + "," + format_number(p.q.imag()) + "," +
           format_number(p.pi_strength) + "," + to_string(src) + "," + (p.ok ? "1" : "0") + "\n";
}

inline json point_json(double control, const QPoint& p, Source src) {
    json j{{"control", round12(control)},
           {"re_q", round12(p.q.real())},
           {"im_q", round12(p.q.imag())},
           {"pi", round12(p.pi_strength)},
           {"source", to_string(src)},
           {"ok", p.ok}};
    if (!p.error.empty()) j["error"] = p.error;
    return j;
}

inline int cmd_trajectory(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    check_format(cfg);
    if (cfg.mode != "abundance" && cfg.mode != "angle") throw UsageError("--mode must be abundance or angle");
    if (cfg.points && *cfg.points <= 0) throw UsageError("--points must be positive");
    const SweepSource src = make_source(cfg);
    const double mode_angle = std::visit([](const auto& s) { return s.cavity.theta_mode; }, src);

    QTrajectory t;
    std::vector<double> controls;
    if (cfg.mode == "abundance") {
        const std::vector<double> grid = cfg.grid.empty() ? default_abundance_grid() : cfg.grid;
        const double theta = cfg.theta_mrad ? *cfg.theta_mrad * 1e-3 : mode_angle;
        t = sweep_abundance(src, theta, grid);
        controls = grid;
    } else {
        const std::vector<double> grid = offset_grid(cfg);
        t = sweep_angle(src, cfg.abundance.value_or(1.0), grid);
        for (double g : grid) controls.push_back(g * 1e6);
    }

    json summary;
    const auto pts = t.good_points();
    try {
        if (cfg.mode == "abundance") {
            const LineFit lf = fit_line(pts);
            summary = {{"type", "line"},
                       {"anchor_re", round12(lf.anchor.real())},
                       {"anchor_im", round12(lf.anchor.imag())},
                       {"direction", round12(lf.direction)},
                       {"rms", round12(lf.rms)},
                       {"extent", round12(lf.extent)},
                       {"distance_to_i", round12(lf.distance_to({0.0, 1.0}))},
                       {"collinear", lf.collinear()}};
        } else {
            const ArcFit af = fit_arc(pts);
            summary = {{"type", "arc"},
                       {"center_re", round12(af.center.real())},
                       {"center_im", round12(af.center.imag())},
                       {"radius", round12(af.radius)},
                       {"rms", round12(af.rms)},
                       {"distortion", round12(af.distortion)}};
        }
    } catch (const DegenerateError& e) {
        summary = {{"type", cfg.mode == "abundance" ? "line" : "arc"}, {"error", e.what()}};
    }

    std::string text;
    if (cfg.format == "json") {
        json j;
        j["mode"] = cfg.mode;
        j["control_unit"] = cfg.mode == "abundance" ? "fraction" : "urad";
        j["points"] = json::array();
        for (std::size_t i = 0; i < t.points.size(); ++i) j["points"].push_back(point_json(controls[i], t.points[i], t.source));
        j["summary"] = summary;
        text = j.dump(2) + "\n";
    } else {
        text = "control,Re_q,Im_q,Pi,source,ok\n";
        for (std::size_t i = 0; i < t.points.size(); ++i) text += csv_row(controls[i], t.points[i], t.source);
        text += "# " + summary.value("type", std::string("summary"));
        for (auto it = summary.begin(); it != summary.end(); ++it) {
            if (it.key() == "type") continue;
            text += " " + it.key() + "=";
            if (it.value().is_number()) text += format_number(it.value().get<double>());
            else if (it.value().is_boolean()) text += it.value().get<bool>() ? "1" : "0";
            else text += it.value().get<std::string>();
        }
        text += "\n";
    }
    emit(cfg, text, out);
    if (t.ok_fraction() < 0.9) {
        err << "trajectory: only " << format_number(100.0 * t.ok_fraction()) << "% of points succeeded\n";
        return trajectory_failed;
    }
    return ok;
}

inline int cmd_surface(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    check_format(cfg);
    if (cfg.points && *cfg.points <= 0) throw UsageError("--points must be positive");
    const SweepSource src = make_source(cfg);
    const auto offsets = offset_grid(cfg);
    const auto abundances = default_abundance_grid();
    const auto cells = q_surface(src, offsets, abundances);
    const Source s = std::holds_alternative<ModelSource>(src) ? Source::model : Source::oracle;
    std::string text;
    std::size_t good = 0;
    if (cfg.format == "json") {
        json j = json::array();
        for (const auto& c : cells) {
            json row = point_json(c.offset * 1e6, c.point, s);
            row.erase("control");
            row["offset_urad"] = round12(c.offset * 1e6);
            row["abundance"] = round12(c.abundance);
            j.push_back(row);
        }
        text = j.dump(2) + "\n";
    } else {
        text = "offset_urad,abundance,Re_q,Im_q,Pi,source,ok\n";
        for (const auto& c : cells)
            text += format_number(c.offset * 1e6) + "," + csv_row(c.abundance, c.point, s);
    }
    for (const auto& c : cells) good += c.point.ok ? 1 : 0;
    emit(cfg, text, out);
    if (static_cast<double>(good) < 0.9 * static_cast<double>(cells.size())) {
        err << "surface: too many failed cells\n";
        return trajectory_failed;
    }
    return ok;
}

/// Parses `args` (without the program name) and runs one subcommand.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Fano resonances in thin-film X-ray cavities: simulate, fit, analyze q trajectories", "fano_cavity"};
    app.require_subcommand(1, 1);
    std::optional<std::string> config_path;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--stack", cfg.stack_path, "layer stack JSON file");
        sub->add_option("--out", cfg.out_path, "output file (default stdout)");
        sub->add_option("--format", cfg.format, "csv|json");
        sub->add_option("--source", cfg.source, "model|oracle");
        sub->add_option("--theta", cfg.theta_mrad, "grazing angle [mrad]");
        sub->add_option("--abundance", cfg.abundance, "nuclear abundance fraction");
        sub->add_option("--points", cfg.points, "number of grid points");
        sub->add_option("--seed", cfg.seed, "seed for noise injection");
        sub->add_option("--expect", cfg.expect_path, "reference values; nonzero exit on breach");
        sub->add_option("--preset", cfg.preset, "model cavity: overcritical|undercritical");
        sub->add_option("--collective-ratio", cfg.collective_ratio, "N Gamma_s / gamma on mode at 100% abundance");
        sub->add_option("--noise", cfg.noise, "multiplicative Gaussian noise level");
        sub->add_option("--grid", cfg.grid, "explicit sweep grid (abundances, or offsets in urad)")->delimiter(',');
        sub->add_flag("-v,--verbose", cfg.verbosity);
    };
    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {{"bare-scan", "rocking curve of the bare cavity"},
                        {"energy-scan", "Fano spectrum at fixed angle and abundance"},
                        {"fit-cavity", "fit the bare-cavity model to a rocking curve"},
                        {"fit-fano", "fit the Fano profile to an energy scan"},
                        {"trajectory", "q trajectory versus abundance or angle offset"},
                        {"surface", "q over the (angle offset, abundance) grid"}};
    std::map<std::string, CLI::App*> apps;
    for (const auto& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        common(sub);
        apps[s.name] = sub;
    }
    apps["fit-cavity"]->add_option("--in", cfg.in_path, "rocking scan file")->required();
    apps["fit-cavity"]->add_option("--regime", cfg.regime, "auto|overcritical|undercritical");
    apps["fit-fano"]->add_option("--in", cfg.in_path, "energy scan file")->required();
    apps["trajectory"]->add_option("--mode", cfg.mode, "abundance|angle");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return ok;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return usage;
    }
    for (const auto& [name, sub] : apps)
        if (sub->parsed()) cfg.command = name;

    try {
        if (config_path) {
            // Flags given on the command line win over the file.
            RunConfig from_file;
            apply_config_file(*config_path, from_file);
            RunConfig merged = from_file;
            const RunConfig defaults;
            auto pick = [](auto& dst, const auto& cli_value, const auto& default_value) {
                if (cli_value != default_value) dst = cli_value;
            };
            pick(merged.stack_path, cfg.stack_path, defaults.stack_path);
            pick(merged.in_path, cfg.in_path, defaults.in_path);
            pick(merged.out_path, cfg.out_path, defaults.out_path);
            pick(merged.expect_path, cfg.expect_path, defaults.expect_path);
            pick(merged.format, cfg.format, defaults.format);
            pick(merged.source, cfg.source, defaults.source);
            pick(merged.theta_mrad, cfg.theta_mrad, defaults.theta_mrad);
            pick(merged.abundance, cfg.abundance, defaults.abundance);
            pick(merged.points, cfg.points, defaults.points);
            pick(merged.seed, cfg.seed, defaults.seed);
            pick(merged.noise, cfg.noise, defaults.noise);
            pick(merged.preset, cfg.preset, defaults.preset);
            pick(merged.collective_ratio, cfg.collective_ratio, defaults.collective_ratio);
            pick(merged.mode, cfg.mode, defaults.mode);
            pick(merged.regime, cfg.regime, defaults.regime);
            pick(merged.grid, cfg.grid, defaults.grid);
            pick(merged.verbosity, cfg.verbosity, defaults.verbosity);
            merged.command = cfg.command;
            cfg = merged;
        }
        if (cfg.command == "bare-scan") return cmd_bare_scan(cfg, out, err);
        if (cfg.command == "energy-scan") return cmd_energy_scan(cfg, out, err);
        if (cfg.command == "fit-cavity") return cmd_fit_cavity(cfg, out, err);
        if (cfg.command == "fit-fano") return cmd_fit_fano(cfg, out, err);
        if (cfg.command == "trajectory") return cmd_trajectory(cfg, out, err);
        if (cfg.command == "surface") return cmd_surface(cfg, out, err);
        throw UsageError("no subcommand");
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return usage;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return usage;
    } catch (const DomainError& e) {
        err << "input error: " << e.what() << "\n";
        return usage;
    } catch (const ExpectationError& e) {
        err << e.what() << "\n";
        return expect_failed;
    } catch (const ConvergenceError& e) {
        err << "fit did not converge: " << e.what() << "\n";
        return no_convergence;
    } catch (const FitError& e) {
        err << "fit did not converge: " << e.what() << "\n";
        return no_convergence;
    }
}

} // namespace fanocav::cli
