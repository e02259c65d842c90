// Prints q(abundance) and q(angle offset) for both model cavities, with the
// line and arc summaries. Pass a stack file to use the layer simulation instead.

#include <cstdio>
#include <string>

#include "fanocav/stack_io.hpp"
#include "fanocav/trajectory.hpp"

using namespace fanocav;

static void report(const char* label, const SweepSource& src) {
    const double theta = std::visit([](const auto& s) { return s.cavity.theta_mode; }, src);
    std::printf("== %s (mode %.5f mrad)\n", label, theta * 1e3);

    const auto ab = sweep_abundance(src, theta, default_abundance_grid());
    std::printf("abundance   Re q        Im q        Pi\n");
    for (const auto& p : ab.points)
        std::printf("%6.2f  %10.5f  %10.5f  %8.5f%s\n", p.control, p.q.real(), p.q.imag(), p.pi_strength,
                    p.ok ? "" : "  (failed)");
    const LineFit lf = fit_line(ab.good_points());
    std::printf("line: direction %.6f rad, rms %.3g, distance to i %.3g\n\n", lf.direction, lf.rms,
                lf.distance_to({0.0, 1.0}));

    for (double a : {1.0, 0.1}) {
        const auto tr = sweep_angle(src, a, default_offset_grid());
        const ArcFit af = fit_arc(tr.good_points());
        std::printf("angle sweep at abundance %.0f%%: radius %.4f, distortion %.4f\n", a * 100, af.radius,
                    af.distortion);
    }
    std::printf("\n");
}

int main(int argc, char** argv) {
    if (argc > 1) {
        report(argv[1], prepare_oracle(load_stack(argv[1])));
        return 0;
    }
    for (const auto& [name, preset] : {std::pair{"overcritical", overcritical_preset()},
                                       std::pair{"undercritical", undercritical_preset()}}) {
        report(name, ModelSource{preset.cavity, make_ensemble(preset.cavity)});
    }
    return 0;
}
