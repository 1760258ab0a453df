#include "procspace/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace procspace {

void FiniteInstance::validate(double tol) const {
    const int n = size();
    if (n == 0) throw DomainError("empty instance");
    if (d.rows() != n || d.cols() != n || gauge.rows() != n || gauge.cols() != n) {
        throw ShapeError("instance tables must be n x n");
    }
    if (!psi.allFinite() || !d.allFinite() || !gauge.allFinite()) throw DomainError("instance tables must be finite");
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
        if (std::abs(d(i, i)) > tol * scale) throw DomainError("metric has a nonzero diagonal");
        if (std::abs(gauge(i, i)) > tol * scale) throw DomainError("gauge table has a nonzero diagonal");
        for (int j = 0; j < n; ++j) {
            if (gauge(i, j) < 0.0) throw DomainError("gauge table has a negative entry");
            if (std::abs(d(i, j) - d(j, i)) > tol * scale) throw DomainError("metric is not symmetric");
            if (i != j && !(d(i, j) > 0.0)) throw DomainError("metric does not separate points");
        }
    }
    for (int k = 0; k < n; ++k) {
        for (int i = 0; i < n; ++i) {
            const double dik = d(i, k);
            for (int j = 0; j < n; ++j) {
                if (d(i, j) > dik + d(k, j) + tol * scale) throw DomainError("metric violates the triangle inequality");
            }
        }
    }
}

GaugeCheck is_gauge(const FiniteInstance& inst, double threshold) {
    const int n = inst.size();
    if (inst.gauge.rows() != n || inst.gauge.cols() != n || inst.d.rows() != n || inst.d.cols() != n) {
        throw ShapeError("instance tables must be n x n");
    }
    GaugeCheck out;
    out.is_gauge = true;
    out.separation = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < n && out.is_gauge; ++i) {
        if (inst.gauge(i, i) != 0.0) {
            out.is_gauge = false;
            out.witness = std::make_pair(i, i);
            break;
        }
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double g = inst.gauge(i, j);
            if (!(g >= 0.0) || g <= threshold) {
                out.is_gauge = false;
                out.witness = std::make_pair(i, j);
                break;
            }
            out.separation = std::min(out.separation, g);
            pairs.emplace_back(g, inst.d(i, j));
        }
    }
    if (!out.is_gauge) {
        out.separation = 0.0;
        return out;
    }
    if (n == 1) out.separation = 0.0;
    std::sort(pairs.begin(), pairs.end());
    double running = 0.0;
    for (const auto& [g, dist] : pairs) {
        running = std::max(running, dist);
        if (!out.modulus.empty() && out.modulus.back().first == g) {
            out.modulus.back().second = running;
        } else {
            out.modulus.emplace_back(g, running);
        }
    }
    return out;
}

BorweinPreiss borwein_preiss(const FiniteInstance& inst, double epsilon, int x0) {
    inst.validate();
    const int n = inst.size();
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (x0 < 0 || x0 >= n) throw RangeError("starting point outside the instance");
    const double sup = inst.psi.maxCoeff();
    if (inst.psi[x0] < sup - epsilon) throw DomainError("psi(x0) is below sup psi - epsilon");
    if (!is_gauge(inst).is_gauge) throw DomainError("gauge table does not separate points");

    BorweinPreiss out;
    out.sequence.push_back(x0);
    // f holds psi - sum_{j<i} 2^{-j} gauge(., x_j); level marks the current upper level set.
    Vec f = inst.psi;
    std::vector<char> level(static_cast<size_t>(n), 1);
    double w = 1.0;
    for (int it = 0; it <= n + 1; ++it) {
        const int xi = out.sequence.back();
        for (int x = 0; x < n; ++x) f[x] -= w * inst.gauge(x, xi);
        const double floor = f[xi];
        int best = -1;
        for (int x = 0; x < n; ++x) {
            if (!level[static_cast<size_t>(x)]) continue;
            if (f[x] < floor) {
                level[static_cast<size_t>(x)] = 0;
                continue;
            }
            if (best < 0 || f[x] > f[best]) best = x;
        }
        w *= 0.5;
        if (best == xi) break;
        out.sequence.push_back(best);
    }
    const int m = static_cast<int>(out.sequence.size()) - 1;
    out.x_hat = out.sequence.back();

    // Closed form with the constant tail: sum_{i>=m} 2^{-i} = 2^{1-m}.
    out.Psi = inst.psi;
    for (int i = 0; i < m; ++i) {
        for (int x = 0; x < n; ++x) out.Psi[x] -= std::ldexp(1.0, -i) * inst.gauge(x, out.sequence[static_cast<size_t>(i)]);
    }
    for (int x = 0; x < n; ++x) out.Psi[x] -= std::ldexp(1.0, 1 - m) * inst.gauge(x, out.x_hat);

    std::ostringstream why;
    for (int i = 0; i <= m; ++i) {
        const double g = inst.gauge(out.x_hat, out.sequence[static_cast<size_t>(i)]);
        if (g > epsilon * std::ldexp(1.0, -i)) why << "gauge(x_hat, x_" << i << ") exceeds its bound; ";
    }
    if (inst.gauge(out.x_hat, out.x_hat) != 0.0) why << "sequence tail is not at x_hat; ";
    if (out.Psi[out.x_hat] < inst.psi[x0]) why << "Psi(x_hat) < psi(x0); ";
    for (int x = 0; x < n; ++x) {
        if (x != out.x_hat && !(out.Psi[x] < out.Psi[out.x_hat])) {
            why << "x_hat is not the strict maximizer (point " << x << "); ";
            break;
        }
        if (out.Psi[x] > inst.psi[x]) {
            why << "Psi exceeds psi at point " << x << "; ";
            break;
        }
    }
    out.failure = why.str();
    out.verified = out.failure.empty();
    return out;
}

FiniteInstance instance_from_gauge(const std::vector<GaugePoint>& points, int p, Vec psi) {
    const int n = static_cast<int>(points.size());
    if (psi.size() != n) throw ShapeError("one psi value per point expected");
    FiniteInstance inst;
    inst.d = Mat::Zero(n, n);
    inst.gauge = Mat::Zero(n, n);
    inst.psi = std::move(psi);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const GaugeValues g = gauge_distance(points[static_cast<size_t>(i)], points[static_cast<size_t>(j)], p);
            inst.d(i, j) = inst.d(j, i) = g.d_metric;
            inst.gauge(i, j) = inst.gauge(j, i) = g.bar_upsilon;
        }
    }
    return inst;
}

}  // namespace procspace
