#pragma once

#include <optional>
#include <string>
#include <vector>

#include "procspace/scenario.hpp"

namespace procspace {

struct CheckResult {
    std::string name;
    double value = 0.0;
    double reference = 0.0;
    double gap = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;  // mode, warnings or the error message of a failed check
};

struct RunReport {
    std::string scenario;
    std::uint64_t seed = 0;
    std::vector<CheckResult> checks;
    double seconds = 0.0;

    bool pass() const;
    // Columns: check,value,reference,gap,tolerance,pass,detail. Timing is not written so that
    // identical runs give identical files.
    void write_csv(std::ostream& os) const;
};

// Check names understood by run_scenario.
std::vector<std::string> check_names();

// Runs every check listed under `checks`; numeric failures are recorded per check. Writes
// report.csv (and per-check tables) to out_dir when it is nonempty.
RunReport run_scenario(const Config& cfg, const std::string& out_dir = "");

struct SweepLevel {
    std::string level;
    double x = 0.0;
    double value = 0.0;
    double std_error = 0.0;
    double error = 0.0;  // against the closed form (or the FD closed form for fd.dx)
};

struct SweepReport {
    std::string parameter;
    std::vector<SweepLevel> levels;
    std::optional<double> slope;  // log-log slope of std_error (particles) or error (others)
    std::string metric;
    std::vector<std::string> warnings;

    void write_csv(std::ostream& os) const;
};

// parameter in {steps, particles.idio, particles.common, control.grid, delta, fd.dx}.
SweepReport sweep(const Config& cfg, const std::string& parameter, const std::vector<std::string>& ladder,
                  const std::string& out_dir = "");

// Minimal static SVG line chart; log axes when requested.
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};
void write_svg_plot(const std::string& path, const std::string& title, const std::vector<Series>& series,
                    bool log_x, bool log_y, const std::string& x_label, const std::string& y_label);

}  // namespace procspace
