#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "procspace/core.hpp"
#include "procspace/gauge.hpp"

namespace procspace {

// Finite metric space (E, d) with a function psi and a candidate gauge table.
struct FiniteInstance {
    Mat d;
    Vec psi;
    Mat gauge;

    int size() const noexcept { return static_cast<int>(psi.size()); }
    // Throws DomainError unless d is a metric, gauge(x, x) = 0 and gauge >= 0 (shapes must agree).
    void validate(double tol = 1e-12) const;
};

struct GaugeCheck {
    bool is_gauge = false;
    std::optional<std::pair<int, int>> witness;  // pair violating the definition
    // Smallest off-diagonal gauge value: gauge(x, y) below it forces x = y.
    double separation = 0.0;
    // (gauge level, largest d among pairs at or below it), sorted by level.
    std::vector<std::pair<double, double>> modulus;
};

// On a finite set: gauge(x, x) = 0, gauge >= 0, and gauge(x, y) <= threshold only when x = y.
GaugeCheck is_gauge(const FiniteInstance& inst, double threshold = 0.0);

struct BorweinPreiss {
    int x_hat = 0;
    std::vector<int> sequence;  // x_0 .. x_m; x_i = x_m for every i > m
    Vec Psi;                    // psi - sum_i 2^{-i} gauge(., x_i)
    bool verified = false;
    std::string failure;
};

// Iterates x_{i+1} = argmax of psi - sum_{j<=i} 2^{-j} gauge(., x_j) over its upper level set
// (ties to the lowest index) until it repeats, then checks every conclusion by enumeration.
// Throws DomainError when psi(x0) < max psi - epsilon.
BorweinPreiss borwein_preiss(const FiniteInstance& inst, double epsilon, int x0);

// Points (t, xi) with d the gauge metric and the gauge table bar-Upsilon.
FiniteInstance instance_from_gauge(const std::vector<GaugePoint>& points, int p, Vec psi);

}  // namespace procspace
