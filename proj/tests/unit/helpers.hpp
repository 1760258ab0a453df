#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>

#include "procspace/core.hpp"
#include "procspace/noise.hpp"

namespace testing {

using procspace::Mat;
using procspace::Vec;

inline Vec v1(double x) { return Vec::Constant(1, x); }

// Law-free one-dimensional data b(t, x, a), sigma(t, x, a) with pointwise costs.
inline procspace::CoefficientSet scalar_coeffs(std::function<double(double, double, double)> b,
                                               std::function<double(double, double, double)> s,
                                               std::function<double(double, double, double)> f,
                                               std::function<double(double)> g) {
    procspace::CoefficientSet c;
    c.name = "test";
    c.law_free = true;
    c.drift = [b](const procspace::PointContext& ctx) { return v1(b(ctx.t, ctx.path.current()[0], (*ctx.action)[0])); };
    c.diffusion = [s](const procspace::PointContext& ctx) {
        return Mat::Constant(1, 1, s(ctx.t, ctx.path.current()[0], (*ctx.action)[0]));
    };
    c.running_point = [f](double t, const procspace::PathView& x, const Vec& a) { return f(t, x.current()[0], a[0]); };
    c.terminal_point = [g](const procspace::PathView& x) { return g(x.current()[0]); };
    procspace::derive_costs_from_pointwise(c);
    return c;
}

inline procspace::ProcessEnsemble gaussian_ensemble(const procspace::TimeGrid& grid, int n_common, int n_idio,
                                                    std::uint64_t seed, double mean = 0.0, double sd = 1.0) {
    const procspace::CounterStream rng(seed, 99);
    std::vector<Vec> x0;
    for (int p = 0; p < n_common * n_idio; ++p) x0.push_back(v1(mean + sd * rng.normal(static_cast<std::uint64_t>(p))));
    return procspace::ProcessEnsemble::constant(grid, x0, n_common, n_idio);
}

// Random-walk paths with independent values at every node.
inline procspace::ProcessEnsemble random_walk(const procspace::TimeGrid& grid, int dim, int n_common, int n_idio,
                                              std::uint64_t seed) {
    procspace::ProcessEnsemble e(grid, dim, n_common, n_idio);
    const procspace::CounterStream rng(seed, 98);
    std::uint64_t idx = 0;
    for (int p = 0; p < e.size(); ++p) {
        Mat& v = e.particle(p).values();
        for (int k = 0; k < v.cols(); ++k) {
            for (int r = 0; r < dim; ++r) v(r, k) = (k ? v(r, k - 1) : 0.0) + rng.normal(idx++);
        }
    }
    return e;
}

}  // namespace testing
