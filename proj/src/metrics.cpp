#include "procspace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace procspace {

namespace {

bool is_uniform(const EmpiricalMeasure& m) {
    const double w = 1.0 / m.size();
    return std::all_of(m.weights.begin(), m.weights.end(), [&](double x) { return std::abs(x - w) <= 1e-12; });
}

double quantile_coupling(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    auto sorted = [](const EmpiricalMeasure& m) {
        std::vector<std::pair<double, double>> v;
        for (int i = 0; i < m.size(); ++i) v.emplace_back(m.atoms[static_cast<size_t>(i)][0], m.weights[static_cast<size_t>(i)]);
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto a = sorted(mu);
    const auto b = sorted(nu);
    size_t i = 0, j = 0;
    double ra = a[0].second, rb = b[0].second, total = 0.0;
    while (i < a.size() && j < b.size()) {
        const double m = std::min(ra, rb);
        total += m * std::pow(std::abs(a[i].first - b[j].first), p);
        ra -= m;
        rb -= m;
        if (ra <= 1e-15) {
            if (++i < a.size()) ra = a[i].second;
        }
        if (rb <= 1e-15) {
            if (++j < b.size()) rb = b[j].second;
        }
    }
    return std::pow(total, 1.0 / p);
}

double enumerate_assignment(const Mat& cost) {
    const int n = static_cast<int>(cost.rows());
    std::vector<int> perm(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += cost(i, perm[static_cast<size_t>(i)]);
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

}  // namespace

EmpiricalMeasure EmpiricalMeasure::uniform(std::vector<Vec> atoms, int block) {
    EmpiricalMeasure m;
    m.weights.assign(atoms.size(), atoms.empty() ? 0.0 : 1.0 / static_cast<double>(atoms.size()));
    m.atoms = std::move(atoms);
    m.block = block;
    return m;
}

void EmpiricalMeasure::validate() const {
    if (atoms.empty()) throw DomainError("empirical measure has no atoms");
    if (weights.size() != atoms.size()) throw ShapeError("one weight per atom required");
    double s = 0.0;
    for (size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].size() != atoms[0].size()) throw ShapeError("atoms must share one dimension");
        if (!(weights[i] >= 0.0)) throw DomainError("negative atom weight");
        s += weights[i];
    }
    if (std::abs(s - 1.0) > 1e-9) throw DomainError("atom weights must sum to 1");
    if (block > 0 && atoms[0].size() % block != 0) throw ShapeError("path atoms must be whole node blocks");
}

double ground_distance(const Vec& a, const Vec& b, int block) {
    if (block <= 0) return (a - b).norm();
    double m = 0.0;
    for (Eigen::Index j = 0; j < a.size(); j += block) m = std::max(m, (a.segment(j, block) - b.segment(j, block)).norm());
    return m;
}

std::vector<int> solve_assignment(const Mat& cost) {
    // Hungarian method with row/column potentials, O(n^3).
    const int n = static_cast<int>(cost.rows());
    if (cost.cols() != n) throw ShapeError("assignment needs a square cost matrix");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(n + 1), 0.0), v(static_cast<size_t>(n + 1), 0.0);
    std::vector<int> match(static_cast<size_t>(n + 1), 0), way(static_cast<size_t>(n + 1), 0);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(static_cast<size_t>(n + 1), inf);
        std::vector<char> used(static_cast<size_t>(n + 1), 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int i0 = match[static_cast<size_t>(j0)];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(match[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (match[static_cast<size_t>(j0)] != 0);
        do {
            const int j1 = way[static_cast<size_t>(j0)];
            match[static_cast<size_t>(j0)] = match[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> col_of_row(static_cast<size_t>(n));
    for (int j = 1; j <= n; ++j) col_of_row[static_cast<size_t>(match[static_cast<size_t>(j)] - 1)] = j - 1;
    return col_of_row;
}

double wasserstein_p(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double p) {
    mu.validate();
    nu.validate();
    if (!(p >= 1.0)) throw DomainError("Wasserstein distance needs p >= 1");
    if (mu.dim() != nu.dim() || mu.block != nu.block) throw ShapeError("measures live in different spaces");
    const bool one_d = mu.dim() == 1;
    if (one_d) return quantile_coupling(mu, nu, p);
    if (!is_uniform(mu) || !is_uniform(nu)) {
        throw UnsupportedError("multi-dimensional Wasserstein distance needs uniform weights");
    }
    const int n = std::lcm(mu.size(), nu.size());
    if (n > 256) throw UnsupportedError("assignment size exceeds 256 atoms");
    const int ra = n / mu.size();
    const int rb = n / nu.size();
    Mat cost(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cost(i, j) = std::pow(ground_distance(mu.atoms[static_cast<size_t>(i / ra)], nu.atoms[static_cast<size_t>(j / rb)],
                                                  mu.block),
                                  p);
        }
    }
    double total = 0.0;
    if (n <= 10) {
        total = enumerate_assignment(cost);
    } else {
        const auto a = solve_assignment(cost);
        for (int i = 0; i < n; ++i) total += cost(i, a[static_cast<size_t>(i)]);
    }
    return std::pow(std::max(total, 0.0) / n, 1.0 / p);
}

EmpiricalMeasure conditional_law(const ProcessEnsemble& xi, int common, double t) {
    if (common < 0 || common >= xi.n_common()) throw RangeError("common index out of range");
    const int k = xi.grid().node_at(t);
    const int d = xi.dim();
    EmpiricalMeasure m;
    m.block = d;
    const double bw = xi.batch_weight(common);
    for (int i = 0; i < xi.n_idio(); ++i) {
        const int p = xi.index(common, i);
        Vec a(d * (k + 1));
        for (int j = 0; j <= k; ++j) a.segment(j * d, d) = xi.value(p, j);
        m.atoms.push_back(std::move(a));
        m.weights.push_back(bw > 0 ? xi.weight(p) / bw : 1.0 / xi.n_idio());
    }
    return m;
}

EmpiricalMeasure conditional_state_law(const ProcessEnsemble& xi, int common, double t) {
    if (common < 0 || common >= xi.n_common()) throw RangeError("common index out of range");
    const int k = xi.grid().node_at(t);
    EmpiricalMeasure m;
    const double bw = xi.batch_weight(common);
    for (int i = 0; i < xi.n_idio(); ++i) {
        const int p = xi.index(common, i);
        m.atoms.push_back(xi.value(p, k));
        m.weights.push_back(bw > 0 ? xi.weight(p) / bw : 1.0 / xi.n_idio());
    }
    return m;
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
    if (n < 1) throw ParameterError("Gauss-Legendre order must be positive");
    nodes.assign(static_cast<size_t>(n), 0.0);
    weights.assign(static_cast<size_t>(n), 0.0);
    // Returns (P_n(x), P_n'(x)) by the three-term recurrence.
    auto legendre = [n](double x) {
        double p0 = 1.0, p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        return std::pair<double, double>{p1, n * (x * p1 - p0) / (x * x - 1.0)};
    };
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            const auto [p, dp] = legendre(x);
            const double dx = p / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double dp = legendre(x).second;
        nodes[static_cast<size_t>(i)] = -x;
        nodes[static_cast<size_t>(n - 1 - i)] = x;
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[static_cast<size_t>(i)] = w;
        weights[static_cast<size_t>(n - 1 - i)] = w;
    }
}

FourierDistance fourier_wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double k,
                                    const FourierQuadrature& quad) {
    mu.validate();
    nu.validate();
    if (mu.dim() != 1 || nu.dim() != 1) throw UnsupportedError("Fourier-Wasserstein distance is one-dimensional only");
    if (!(k > 1.0)) throw ParameterError("Fourier-Wasserstein exponent k must exceed 1");
    if (!(quad.cutoff > 0.0) || quad.order < 1 || !(quad.panel_width > 0.0)) {
        throw ParameterError("invalid quadrature specification");
    }
    std::vector<double> x, a;
    for (int i = 0; i < mu.size(); ++i) {
        x.push_back(mu.atoms[static_cast<size_t>(i)][0]);
        a.push_back(mu.weights[static_cast<size_t>(i)]);
    }
    for (int i = 0; i < nu.size(); ++i) {
        x.push_back(nu.atoms[static_cast<size_t>(i)][0]);
        a.push_back(-nu.weights[static_cast<size_t>(i)]);
    }
    auto integrand = [&](double z) {
        double re = 0.0, im = 0.0;
        for (size_t i = 0; i < x.size(); ++i) {
            re += a[i] * std::cos(z * x[i]);
            im -= a[i] * std::sin(z * x[i]);
        }
        return (re * re + im * im) / (1.0 + std::pow(z, k));
    };
    std::vector<double> gx, gw;
    gauss_legendre(quad.order, gx, gw);
    const int panels = static_cast<int>(std::ceil(quad.cutoff / quad.panel_width));
    const double h = quad.cutoff / panels;
    double total = 0.0;
    for (int j = 0; j < panels; ++j) {
        const double lo = j * h;
        double s = 0.0;
        for (size_t q = 0; q < gx.size(); ++q) s += gw[q] * integrand(lo + 0.5 * h * (gx[q] + 1.0));
        total += 0.5 * h * s;
    }
    FourierDistance out;
    // The integrand is even in z.
    out.squared = 2.0 * total;
    out.value = std::sqrt(std::max(out.squared, 0.0));
    // 2 * int_Z^inf 4 / (1 + z^k) dz <= 8 Z^{1-k} / (k - 1).
    out.truncation_bound = 8.0 * std::pow(quad.cutoff, 1.0 - k) / (k - 1.0);
    return out;
}

}  // namespace procspace
