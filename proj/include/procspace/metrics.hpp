#pragma once

#include <vector>

#include "procspace/core.hpp"

namespace procspace {

// Weighted atoms. With block > 0 an atom is a flattened path (block = state dimension) and the
// ground distance is the max over nodes of the Euclidean node distance.
struct EmpiricalMeasure {
    std::vector<Vec> atoms;
    std::vector<double> weights;
    int block = 0;

    static EmpiricalMeasure uniform(std::vector<Vec> atoms, int block = 0);
    int size() const noexcept { return static_cast<int>(atoms.size()); }
    int dim() const noexcept { return atoms.empty() ? 0 : static_cast<int>(atoms[0].size()); }
    // Throws on empty, negative weights, non-unit mass or mixed dimensions.
    void validate() const;
};

double ground_distance(const Vec& a, const Vec& b, int block);

// Exact W_p between empirical measures. One-dimensional atoms use the quantile coupling; other
// cases need uniform weights and are solved as an assignment (enumeration up to 10 atoms,
// Hungarian method otherwise, at most 256 atoms after replication to a common count).
double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p);

// Minimum-cost perfect matching on a square cost matrix; returns the column of each row.
std::vector<int> solve_assignment(const Mat& cost);

// Law of the paths of common batch c stopped at t, as flattened path atoms.
EmpiricalMeasure conditional_law(const ProcessEnsemble& xi, int common, double t);
// Law of the state at t within common batch c (plain d-vectors).
EmpiricalMeasure conditional_state_law(const ProcessEnsemble& xi, int common, double t);

struct FourierQuadrature {
    double cutoff = 1000.0;  // integrate |z| <= cutoff
    int order = 20;          // Gauss-Legendre nodes per panel
    double panel_width = 0.25;
};

struct FourierDistance {
    double value = 0.0;             // rho (square root of the truncated integral)
    double squared = 0.0;           // truncated integral
    double truncation_bound = 0.0;  // bound on the neglected part of the squared integral
};

// rho^2 = int |F_{mu-nu}(z)|^2 / (1 + |z|^k) dz with F_m(z) = int exp(-i z x) m(dx); d = 1.
FourierDistance fourier_wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                                    const FourierQuadrature& quad = {});

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace procspace
