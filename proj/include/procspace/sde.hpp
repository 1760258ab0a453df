#pragma once

#include <optional>
#include <string>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/noise.hpp"

namespace procspace {

struct SimulationOptions {
    // Coefficients evaluated at the state and law stopped at t (the frozen process).
    bool frozen = false;
    // Keep the drift and diffusion used at every step (needed by Ito and rate checks).
    bool record_coefficients = false;
    // Evaluate the law-level running cost f at every step.
    bool running_costs = true;
    // Last node to simulate; -1 means the horizon.
    int end_node = -1;
};

struct SimulationResult {
    ProcessEnsemble paths;
    ProcessEnsemble noise_paths;  // cumulative B, zero at node 0
    int start_node = 0;
    int end_node = 0;
    std::vector<std::vector<Vec>> actions;   // [k - start_node][particle]
    std::vector<double> running;             // f at steps start_node..end_node-1
    std::vector<std::vector<Vec>> drift;     // recorded b, same indexing as actions
    std::vector<std::vector<Mat>> diffusion; // recorded sigma
    bool frozen = false;

    bool recorded() const noexcept { return !drift.empty() || end_node == start_node; }
    const std::vector<Vec>& actions_at(int k) const { return actions.at(static_cast<size_t>(k - start_node)); }
    // Law handle at node k with the actions chosen at k (the frozen law for frozen runs).
    EnsembleView law_at(int k, const ProcessEnsemble& xi) const;
};

// Euler-Maruyama with left-point coefficients, from the node of t to the horizon (or end_node).
SimulationResult simulate(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlSpec& control,
                          const NoiseBundle& noise, const SimulationOptions& options = {});

ProcessEnsemble simulate_state(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                               const ControlSpec& control, const NoiseBundle& noise);
ProcessEnsemble simulate_frozen(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                                const ControlSpec& control, const NoiseBundle& noise);

// Context of the lifted coefficients (b~, sigma~, f~): they see the noise path and the
// action, never the state.
struct LiftedContext {
    double t = 0.0;
    int node = 0;
    int particle = 0;
    int common = 0;
    const Vec* action = nullptr;
    PathView noise;
    const EnsembleView* controls = nullptr;
};

struct TildeCoefficients {
    int dim = 1;
    int noise_dim = 1;
    std::function<Vec(const LiftedContext&)> drift;
    std::function<Mat(const LiftedContext&)> diffusion;
    std::function<double(double t, const EnsembleView& controls)> running;
};

struct LiftedIntegral {
    // I_s(X) = X_s - xi~_{t~} - sum (b~ dt + sigma~ dB) over steps in [t~, s).
    ProcessEnsemble integrator;
    // F at every node: sum of f~ dt over steps in [t~, s), zero before t~.
    std::vector<double> running;
    int start_node = 0;
    std::vector<std::vector<Vec>> drift;      // b~ per step from start_node
    std::vector<std::vector<Mat>> diffusion;  // sigma~ per step
    std::vector<std::string> warnings;
};

LiftedIntegral integrate_lifted(const TildeCoefficients& tilde, double t_tilde, const ProcessEnsemble& xi_tilde,
                                const ControlSpec& control, const ProcessEnsemble& X, const NoiseBundle& noise,
                                std::optional<double> gamma_star = std::nullopt);

struct SdeEstimateReport {
    std::vector<double> growth_ratio;     // ||X||_p / (1 + ||xi||_p) per initial ensemble
    std::vector<double> stability_ratio;  // ||X - X'||_p / ||xi - xi'||_p per consecutive pair
    std::vector<double> increment_steps;  // h
    std::vector<double> increment_norms;  // ||X_{t+h} - X_t||_p
    double growth_constant = 0.0;
    double stability_constant = 0.0;
    double holder_exponent = 0.0;         // log-log slope of increment norms
    double holder_constant = 0.0;
};

// Empirical growth, stability and time-regularity constants over a batch of initial ensembles
// driven by the same control and noise.
SdeEstimateReport check_sde_estimates(const CoefficientSet& coeffs, double t, const std::vector<ProcessEnsemble>& batch,
                                      const ControlSpec& control, const NoiseBundle& noise, double p = 2.0);

// True when a refined run's constants exceed the coarse ones by more than `factor`.
bool estimates_diverge(const SdeEstimateReport& coarse, const SdeEstimateReport& fine, double factor = 2.0);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace procspace
