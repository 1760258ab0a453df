#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/noise.hpp"
#include "procspace/sde.hpp"

namespace procspace {

enum class EstimateMode { monte_carlo, exact_tree };

const char* to_string(EstimateMode m);

struct ValueEstimate {
    double value = 0.0;
    double std_error = 0.0;  // batch-means standard error; 0 in exact-tree mode
    EstimateMode mode = EstimateMode::monte_carlo;
    ControlSpec argmin;
    std::uint64_t argmin_index = 0;
    std::vector<double> candidates;  // cost of every searched member (enumerated families)
};

struct ValueOptions {
    int batches = 16;  // batch-means groups for the Monte Carlo standard error
};

// Batch-means standard error of sum_p w_p x_p (groups as in cost_J); 0 with fewer than two groups.
double batch_std_error(const ProcessEnsemble& xi, const std::vector<double>& per_particle, int batches = 16);

// J = g(X_T) + dt * sum of f at left points, along simulate_state.
ValueEstimate cost_J(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlSpec& control,
                     const NoiseBundle& noise, const ValueOptions& options = {});

// Minimum of cost_J over the family (lowest index wins ties), all members on the same noise.
// Full-tree families are solved by backward induction over the atoms of xi; this requires tree
// noise, law-free b and sigma and pointwise costs.
ValueEstimate value_V(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlFamily& family,
                      const NoiseBundle& noise, const ValueOptions& options = {});

struct DppReport {
    double value_t = 0.0;
    double rhs = 0.0;  // min over heads of V_{t+delta}(X) + int f
    double gap = 0.0;  // value_t - rhs
    double std_error = 0.0;
    double tolerance = 0.0;
    bool one_sided = false;  // family not closed under concatenation: only gap >= -tol is checked
    bool pass = false;
    EstimateMode mode = EstimateMode::monte_carlo;
    std::uint64_t heads = 0;
    std::vector<std::string> warnings;
};

DppReport check_dpp(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, double delta,
                    const ControlFamily& family, const NoiseBundle& noise, const ValueOptions& options = {});

// A family of controls starting at a given grid step.
using FamilyFactory = std::function<ControlFamily(int first_step)>;

// (t, xi) against (t2, xi2). Equal times give a spatial quotient; equal ensembles a temporal one.
struct RegularityPair {
    double t = 0.0;
    ProcessEnsemble xi;
    double t2 = 0.0;
    ProcessEnsemble xi2;
};

struct RegularityReport {
    std::vector<double> spatial, spatial_std_error;
    std::vector<double> temporal, temporal_std_error;
    int filtered = 0;  // diagonal pairs excluded
    double spatial_median = 0.0, spatial_max = 0.0;
    double temporal_median = 0.0, temporal_max = 0.0;
};

// Quotients |V_t(xi) - V_t(xi')| / ||xi - xi'||_2^beta and
// |V_t(xi) - V_t'(xi)| / ((1 + ||xi||_2) |t - t'|^{beta/2}).
RegularityReport estimate_regularity(const CoefficientSet& coeffs, const std::vector<RegularityPair>& pairs,
                                     const FamilyFactory& family, const NoiseBundle& noise, double beta,
                                     const ValueOptions& options = {});

// True when a refined battery's maxima exceed the coarse ones by more than `factor`.
bool regularity_unstable(const RegularityReport& coarse, const RegularityReport& fine, double factor = 2.0);

double median(std::vector<double> v);

}  // namespace procspace
