#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/gauge.hpp"
#include "procspace/noise.hpp"
#include "procspace/sde.hpp"

namespace procspace {

// phi_t(xi) = sign * min_alpha { k E[|I^alpha_t(xi)|^p + |I^alpha_t'(xi')|^p] + int_t'^t f~^alpha ds }
// with I the lifted integrator anchored at (t_tilde, xi_tilde).
struct SingularFunctional {
    double t_tilde = 0.0;
    ProcessEnsemble xi_tilde;
    double t_prime = 0.0;
    ProcessEnsemble xi_prime;
    TildeCoefficients tilde;
    double k = 1.0;
    double p = 2.0;
    std::optional<double> gamma_star;
    int sign = 1;  // +1 for the plus class, -1 for its negation
};

struct PhiValue {
    double value = 0.0;
    std::uint64_t argmin = 0;
    std::vector<double> candidates;  // plus-class value of every member
    // sign * k |I_t(xi_j)|^p for the minimizing member (weights not applied).
    std::vector<double> particle_terms;
    std::vector<std::string> warnings;
};

PhiValue phi_eval(const SingularFunctional& phi, double t, const ProcessEnsemble& xi, const ControlFamily& family,
                  const NoiseBundle& noise);

enum class RateCase { after_anchor, before_anchor };  // t >= t' and t < t'

struct RateReport {
    RateCase rate_case = RateCase::after_anchor;
    double lhs = 0.0;  // phi_{t+delta}(X) - phi_t(X)
    double rhs = 0.0;
    double std_error = 0.0;
    double tolerance = 0.0;
    double constant = 0.0;  // max(p, p(p-1)/2), multiplies k I^p
    bool pass = false;
    std::vector<double> candidate_rhs;
    std::vector<std::string> warnings;
};

// Rate bound for t -> phi_t(X) over [t, t + delta] along a simulation with recorded (beta, gamma).
// After the anchor time the bound is the minimum over tails alpha of the concatenation of the
// minimizer at t with alpha; before it, the minimizer at t is used and delta^2 is added.
RateReport phi_rate_check(const SingularFunctional& phi, const SimulationResult& X, double t, double delta,
                          const ControlFamily& family, const NoiseBundle& noise, int batches = 16);

struct TestPair {
    SmoothFunctional smooth;
    std::shared_ptr<const SingularFunctional> singular;  // null means phi = 0
    std::optional<ControlFamily> singular_family;        // family of the inf inside phi
    int sign = 1;
};

enum class ViscositySide { sub, super };

using ProcessFunctional = std::function<double(double t, const ProcessEnsemble& xi)>;

struct ViscosityOptions {
    int cloud = 32;          // sampled (s, zeta) points for the touching check
    int cloud_steps = 2;     // s ranges over t .. t + cloud_steps * dt
    double radius = 0.05;    // scale of the ensemble perturbations
    std::uint64_t seed = 7;
    double touch_tolerance = 1e-8;
    int batches = 16;
};

struct ViscosityRow {
    double delta = 0.0;
    double residual = 0.0;
    double std_error = 0.0;
    std::uint64_t argmin = 0;
};

struct ViscosityReport {
    std::vector<ViscosityRow> rows;
    double touching_slack = 0.0;
    bool touching_ok = true;
    double intercept = 0.0;  // linear fit of residual against delta
    double slope = 0.0;
    bool sign_ok = false;    // sub: every residual >= -tol; super: every residual <= tol
    std::vector<std::string> warnings;

    void write_csv(std::ostream& os) const;
};

// Per delta: d_t phi + min over heads alpha of (1/delta) [sum_s H_s(xi_{.^t}, d_X phi, d_xX phi, alpha_s) dt
//   + phi_{t+delta}(Xbar^alpha) - phi_t(xi)], with Xbar the frozen process.
ViscosityReport viscosity_residual(const ProcessFunctional& U, const TestPair& pair, const CoefficientSet& coeffs,
                                   double t, const ProcessEnsemble& xi, ViscositySide side,
                                   const std::vector<double>& deltas, const ControlFamily& family,
                                   const NoiseBundle& noise, const ViscosityOptions& options = {});

}  // namespace procspace
