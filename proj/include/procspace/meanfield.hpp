#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/noise.hpp"
#include "procspace/value.hpp"

namespace procspace {

// Wasserstein-space data. The law argument is the empirical joint law of (path, action) of one
// common batch (the conditional law given the common noise).
struct CheckCoefficientSet {
    std::string name;
    int dim = 1;
    int idio_noise_dim = 1;
    int common_noise_dim = 0;
    int action_dim = 1;
    std::function<Vec(double t, const PathView& x, const Vec& a, const EnsembleView& law)> drift;
    std::function<Mat(double t, const PathView& x, const Vec& a, const EnsembleView& law)> diffusion;
    std::function<double(double t, const PathView& x, const Vec& a, const EnsembleView& law)> running;
    std::function<double(const PathView& x, const EnsembleView& law)> terminal;
    CoefficientMetadata meta;

    void validate() const;
};

// b(ctx) = b-check(t, path, a, batch law of the particle's common index); f and g are weighted
// averages of f-check and g-check against the batch laws.
CoefficientSet lift_coefficients(const CheckCoefficientSet& check);

enum class InvarianceMode { permutation, resample };

struct InvarianceReport {
    InvarianceMode mode = InvarianceMode::permutation;
    ValueEstimate first;
    ValueEstimate second;
    double gap = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// Permutation mode: xi2 must be xi with idio indices permuted inside batches and/or whole batches
// permuted; the noise follows the particles. Resample mode: xi2 is an independent draw with the
// same layout, run on the same noise.
InvarianceReport check_law_invariance(const CheckCoefficientSet& check, double t, const ProcessEnsemble& xi,
                                      const ProcessEnsemble& xi2, InvarianceMode mode, const ControlFamily& family,
                                      const NoiseBundle& noise, const ValueOptions& options = {});

struct DecompositionOptions {
    ValueOptions value;
    std::optional<double> dpp_delta;          // conditional DPP diagnostic on the lifted problem
    std::vector<RegularityPair> regularity;   // regularity diagnostic pairs
    double beta = 1.0;
};

struct DecompositionReport {
    ValueEstimate lifted;
    std::vector<double> batch_values;   // per common batch, batch-local controls
    std::vector<double> batch_weights;
    double average = 0.0;
    double gap = 0.0;  // lifted - average
    double std_error = 0.0;
    double tolerance = 0.0;
    bool factorizes = true;
    bool pass = false;
    std::optional<DppReport> dpp;
    std::optional<RegularityReport> regularity;
    std::vector<std::string> warnings;
};

// Lifted value against the weighted average of per-batch values with batch-local controls.
DecompositionReport check_decomposition(const CheckCoefficientSet& check, double t, const ProcessEnsemble& xi,
                                        const ControlFamily& family, const NoiseBundle& noise,
                                        const DecompositionOptions& options = {});

struct LipschitzReport {
    std::vector<double> lhs;  // |b(law) - b(law')| per (pair, batch, particle, action)
    std::vector<double> rhs;  // L * W2 of the batch path laws
    int violations = 0;
    double max_ratio = 0.0;
};

// Same path and action, two batch laws: |b-check(mu) - b-check(mu')| <= L W2(mu, mu').
LipschitzReport lipschitz_probe(const CheckCoefficientSet& check, double t,
                                const std::vector<std::pair<ProcessEnsemble, ProcessEnsemble>>& pairs,
                                const ActionGrid& actions);

}  // namespace procspace
