#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "procspace/singular.hpp"

namespace procspace {

struct GaugeBatteryOptions {
    int paths = 100000;
    int derivative_points = 1000;
    std::vector<int> exponents = {6, 8};
    int max_dim = 3;
    int steps = 16;
    std::uint64_t seed = 1;
    double tolerance = 1e-10;       // relative, sandwich / triangle / derivative bounds
    double fd_tolerance = 1e-6;     // relative, analytic against finite-difference derivatives
};

struct GaugeBatteryReport {
    int paths = 0;
    int sandwich_violations = 0;
    int triangle_violations = 0;
    int derivative_points = 0;
    int derivative_mismatches = 0;
    int bound_violations = 0;
    double max_fd_error = 0.0;  // worst relative gap between analytic and FD derivatives
    double seconds = 0.0;

    bool pass() const {
        return sandwich_violations == 0 && triangle_violations == 0 && derivative_mismatches == 0 &&
               bound_violations == 0;
    }
    void write_csv(std::ostream& os) const;
};

// Random paths: sandwich |x|^p <= Upsilon <= 3|x|^p, the 2^{p-1} triangle bound, analytic
// derivatives against Richardson-extrapolated central differences and the derivative bounds.
GaugeBatteryReport gauge_battery(const GaugeBatteryOptions& options = {});

struct ViscosityCase {
    std::string scenario;
    std::string side;  // "sub" or "super"
    double shift = 0.0;
    double classical = 0.0;  // classical residual of the shifted solution
    ViscosityReport report;
};

struct ViscosityBatteryOptions {
    double shift = 0.5;  // c in U -+ c (T - t)
    int steps = 32;
    int particles = 64;
    std::vector<int> ladder = {1, 2, 4, 8};  // delta in steps
    std::uint64_t seed = 11;
};

struct ViscosityBattery {
    double heat_classical = 0.0;  // classical residual of the exact heat solution
    std::vector<ViscosityCase> cases;
    bool pass(double classical_tol = 1e-8) const;
    void write_csv(std::ostream& os) const;
};

// Exact solutions of the heat and drift-control scenarios shifted by -+ c (T - t), tested on
// both sides with themselves as smooth test functionals.
ViscosityBattery viscosity_battery(const ViscosityBatteryOptions& options = {});

struct VariationalBatteryOptions {
    int instances = 1000;
    int max_points = 200;
    std::uint64_t seed = 3;
    int gauge_instances = 20;  // instances built from process points with bar-Upsilon
};

struct VariationalBatteryReport {
    int instances = 0;
    int failures = 0;
    int max_sequence = 0;
    std::vector<std::string> messages;
    double seconds = 0.0;
    bool pass() const { return failures == 0 && instances > 0; }
};

// Random finite metric spaces with squared-distance and process gauges; every Borwein-Preiss
// conclusion is checked by enumeration.
VariationalBatteryReport variational_battery(const VariationalBatteryOptions& options = {});

struct SingularBatteryOptions {
    int scenarios = 50;
    int base_particles = 16;              // expanded over the full Rademacher tree
    int steps = 4;                        // grid on [0, horizon]; the family has 2^steps members
    double horizon = 0.25;
    std::vector<int> ladder = {1, 2, 4};  // delta in steps
    std::uint64_t seed = 5;
};

struct SingularCase {
    double k = 0.0;
    double p = 0.0;
    std::vector<double> ratios;  // |phi_{t+delta}(X) - phi_t(X)| / delta along the ladder
    double ratio_spread = 0.0;   // max ratio / min ratio
    int rate_failures = 0;       // ladder entries where the after-anchor rate bound fails
    double worst_rate_margin = 0.0;  // max over the ladder of (lhs - rhs) / tolerance
    bool monotone_in_k = true;
};

struct SingularBatteryReport {
    std::vector<SingularCase> cases;
    double seconds = 0.0;
    bool pass(double spread = 2.0) const;
    void write_csv(std::ostream& os) const;
};

// Random drifted and diffusing X against random lifted integrators on tree noise (exact
// expectations): rate ratios along the delta ladder, the after-anchor rate bound, and monotonicity of phi in k.
SingularBatteryReport singular_battery(const SingularBatteryOptions& options = {});

}  // namespace procspace
