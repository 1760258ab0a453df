#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/gauge.hpp"
#include "procspace/value.hpp"

namespace procspace {

struct HamiltonianResult {
    std::vector<double> values;  // one per action
    double infimum = 0.0;
    int argmin = 0;
};

// H(xi, Z, Gamma, a) = E[b . Z + 1/2 sigma sigma^T : Gamma] + f for every action of the grid,
// with xi stopped at t. Coefficients receive eval_time (default t) as their time argument.
HamiltonianResult hamiltonian(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                              const std::vector<Vec>& Z, const std::vector<Mat>& Gamma, const ActionGrid& actions,
                              std::optional<double> eval_time = std::nullopt);

// Same with an action per particle.
double hamiltonian_value(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const std::vector<Vec>& Z,
                         const std::vector<Mat>& Gamma, const std::vector<Vec>& actions, double eval_time);

// dU/dt + inf_a H(xi, dU/dX, d2U/dxdX, a).
double classical_residual(const SmoothFunctional& U, const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                          const ActionGrid& actions);

// One-dimensional state-dependent data for the finite-difference oracle.
struct StateCoefficients {
    std::function<double(double t, double x, double a)> drift;
    std::function<double(double t, double x, double a)> volatility;
    std::function<double(double t, double x, double a)> running;
    std::function<double(double x)> terminal;
    std::vector<double> actions;
};

struct SpaceGrid {
    double lo = -1.0;
    double hi = 1.0;
    int cells = 2;

    double dx() const { return (hi - lo) / cells; }
    double x(int j) const { return lo + j * dx(); }
    int nodes() const { return cells + 1; }
};

// Grid with spacing close to dx covering [lo - pad, hi + pad].
SpaceGrid padded_space_grid(double lo, double hi, double pad, double dx);

struct ValueTable {
    TimeGrid time;
    SpaceGrid space;
    Mat v;                // time nodes x space nodes
    Eigen::MatrixXi arg;  // time steps x space nodes, argmin action index

    // Linear interpolation in x at a node of the time grid (constant extension outside).
    double at(double t, double x) const;
    // Columns t,x,v; with max_layers > 0 only about that many evenly spaced time layers.
    void write_csv(std::ostream& os, int max_layers = 0) const;
};

// Smallest step count on [t0, T] meeting dt * max(sigma^2/dx^2 + |b|/dx) <= safety.
TimeGrid stable_time_grid(const StateCoefficients& sc, const SpaceGrid& space, double t0, double T, double safety = 0.9);

// Explicit monotone upwind scheme with per-node exhaustive action minimization and linear
// extrapolation at both boundaries. Throws ParameterError if the step violates
// dt * (sigma^2/dx^2 + |b|/dx) <= 1 anywhere (which implies dt <= dx^2 / max sigma^2).
ValueTable fd_oracle(const StateCoefficients& sc, const SpaceGrid& space, const TimeGrid& time);

// Coefficient set b(x_t, a), sigma(x_t, a), f = E[running], g = E[terminal] for particle methods.
CoefficientSet state_coefficient_set(const StateCoefficients& sc, const std::string& name);

// Feedback control that applies the table's argmin at the nearest table layer.
ControlSpec feedback_from_table(const ValueTable& table, const ActionGrid& actions, const TimeGrid& grid, int first_step);

struct LiftReport {
    double particle_value = 0.0;
    double particle_std_error = 0.0;
    double lifted_value = 0.0;  // E[v_t(xi_t)]
    double gap = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    EstimateMode mode = EstimateMode::monte_carlo;
};

// Compares the particle value with the ensemble average of the interpolated table. The
// tolerance is 3 standard errors plus fd_bound.
LiftReport check_lift(const ValueTable& table, const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                      const ControlFamily& family, const NoiseBundle& noise, double fd_bound,
                      const ValueOptions& options = {});

// Coefficients of X - B for a problem with identity volatility: b~(x) = b(x + B), sigma~ = 0,
// costs evaluated on the re-shifted law.
CoefficientSet constant_vol_transform(const CoefficientSet& coeffs);

struct TransformReport {
    double direct = 0.0;
    double transformed = 0.0;
    double gap = 0.0;
    std::uint64_t argmin_direct = 0;
    std::uint64_t argmin_transformed = 0;
};

TransformReport transform_constant_vol(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                                       const ControlFamily& family, const NoiseBundle& noise,
                                       const ValueOptions& options = {});

}  // namespace procspace
