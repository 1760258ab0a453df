#include "procspace/gauge.hpp"

#include <algorithm>
#include <cmath>

#include "procspace/parallel.hpp"

namespace procspace {

namespace {

// Running maximum S, terminal value y and the ratio u = (|y| / S)^p.
struct GaugeParts {
    double S = 0.0;
    double r = 0.0;
    double u = 0.0;
    Vec y;
};

GaugeParts parts(const PathView& x, int p) {
    GaugeParts g;
    g.y = x.current();
    g.r = g.y.norm();
    g.S = x.sup_norm();
    if (g.S > 0.0) g.u = std::min(1.0, std::pow(g.r / g.S, p));
    return g;
}

}  // namespace

void require_gauge_exponent(int p) {
    if (p < 6 || p % 2 != 0) throw ParameterError("gauge exponent must be even and at least 6, got " + std::to_string(p));
}

double upsilon(const PathView& x, int p) {
    require_gauge_exponent(p);
    const GaugeParts g = parts(x, p);
    if (g.S == 0.0) return 0.0;
    const double M = std::pow(g.S, p);
    const double v = 1.0 - g.u;
    return M * (v * v * v + 3.0 * g.u);
}

double upsilon(double t, const PathSample& x, int p) {
    return upsilon(PathView(x.values(), x.grid().node_at(t)), p);
}

GaugeDerivatives upsilon_derivatives(const PathView& x, int p) {
    require_gauge_exponent(p);
    const GaugeParts g = parts(x, p);
    const int d = static_cast<int>(g.y.size());
    GaugeDerivatives out{Vec::Zero(d), Mat::Zero(d, d)};
    if (g.r == 0.0) return out;
    // With m = |y|^p and M = S^p: dU/dm = 3u(2 - u), d2U/dm2 = 6(1 - u)/M.
    const double dm = 3.0 * g.u * (2.0 - g.u);
    const double rp2 = std::pow(g.r, p - 2);
    const double rp4 = std::pow(g.r, p - 4);
    out.grad = dm * p * rp2 * g.y;
    const Mat yy = g.y * g.y.transpose();
    out.hess = dm * (p * rp2 * Mat::Identity(d, d) + p * (p - 2.0) * rp4 * yy) +
               6.0 * (1.0 - g.u) * p * p * g.u * rp4 * yy;
    return out;
}

GaugeDerivatives upsilon_derivatives(double t, const PathSample& x, int p) {
    return upsilon_derivatives(PathView(x.values(), x.grid().node_at(t)), p);
}

Mat stopped_difference(const PathSample& a, int ka, const PathSample& b, int kb) {
    const Eigen::Index n = a.values().cols();
    Mat out(a.dim(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        out.col(j) = a.values().col(std::min<Eigen::Index>(j, ka)) - b.values().col(std::min<Eigen::Index>(j, kb));
    }
    return out;
}

GaugeValues gauge_distance(const GaugePoint& a, const GaugePoint& b, int p) {
    require_gauge_exponent(p);
    require_same_layout(a.xi, b.xi, "gauge distance");
    const int ka = a.xi.grid().node_at(a.t);
    const int kb = b.xi.grid().node_at(b.t);
    const int k = std::max(ka, kb);
    const int n = a.xi.size();
    std::vector<double> ups(static_cast<size_t>(n)), sup(static_cast<size_t>(n));
    parallel_for(n, [&](int q) {
        const Mat diff = stopped_difference(a.xi.particle(q), ka, b.xi.particle(q), kb);
        const PathView v(diff, k);
        ups[static_cast<size_t>(q)] = a.xi.weight(q) * upsilon(v, p);
        sup[static_cast<size_t>(q)] = a.xi.weight(q) * std::pow(v.sup_norm(), p);
    });
    GaugeValues g;
    g.upsilon0 = pairwise_sum(ups);
    const double dt = std::abs(a.t - b.t);
    g.d_metric = dt + std::pow(pairwise_sum(sup), 1.0 / p);
    g.bar_upsilon = g.upsilon0 + dt * dt;
    return g;
}

GaugeValues gauge_distance(const DoubledPoint& a, const DoubledPoint& b, int p) {
    if (a.level != b.level || (a.level != 1 && a.level != 2)) throw ParameterError("doubled points need level 1 or 2");
    if (a.level == 1 && (a.first.t != a.second.t || b.first.t != b.second.t)) {
        throw ContractError("level-1 points share one time");
    }
    const GaugeValues x = gauge_distance(a.first, b.first, p);
    const GaugeValues y = gauge_distance(a.second, b.second, p);
    GaugeValues g;
    g.d_metric = x.d_metric + y.d_metric;
    g.upsilon0 = x.upsilon0 + y.upsilon0;
    if (a.level == 1) {
        const double dt = std::abs(a.first.t - b.first.t);
        g.bar_upsilon = g.upsilon0 + dt * dt;
    } else {
        g.bar_upsilon = x.bar_upsilon + y.bar_upsilon;
    }
    return g;
}

double QuadraticFunctional::value(double t, const PathView& x) const {
    return a_ * x.current().squaredNorm() + c_ * (T_ - t);
}
double QuadraticFunctional::time_derivative(double, const PathView&) const { return -c_; }
Vec QuadraticFunctional::gradient(double, const PathView& x) const { return 2.0 * a_ * x.current(); }
Mat QuadraticFunctional::hessian(double, const PathView& x) const {
    return 2.0 * a_ * Mat::Identity(x.dim(), x.dim());
}

double CubicFunctional::value(double t, const PathView& x) const {
    const Vec y = x.current();
    return (c3_.array() * y.array().cube() + c2_.array() * y.array().square() + c1_.array() * y.array()).sum() +
           c_ * (T_ - t);
}
double CubicFunctional::time_derivative(double, const PathView&) const { return -c_; }
Vec CubicFunctional::gradient(double, const PathView& x) const {
    const Vec y = x.current();
    return (3.0 * c3_.array() * y.array().square() + 2.0 * c2_.array() * y.array() + c1_.array()).matrix();
}
Mat CubicFunctional::hessian(double, const PathView& x) const {
    const Vec y = x.current();
    return (6.0 * c3_.array() * y.array() + 2.0 * c2_.array()).matrix().asDiagonal();
}

GaugeFunctional::GaugeFunctional(int p) : p_(p) { require_gauge_exponent(p); }
double GaugeFunctional::value(double, const PathView& x) const { return upsilon(x, p_); }
Vec GaugeFunctional::gradient(double, const PathView& x) const { return upsilon_derivatives(x, p_).grad; }
Mat GaugeFunctional::hessian(double, const PathView& x) const { return upsilon_derivatives(x, p_).hess; }

namespace {

// Path of particle q shifted by the anchor, stopped at node k.
Mat shifted_path(const SmoothFunctional& phi, const ProcessEnsemble& xi, int q, int k) {
    if (!phi.anchor) {
        Mat v = xi.particle(q).values();
        for (Eigen::Index j = k + 1; j < v.cols(); ++j) v.col(j) = v.col(k);
        return v;
    }
    const int kh = phi.anchor->grid().node_at(phi.t_hat);
    return stopped_difference(xi.particle(q), k, phi.anchor->particle(q), kh);
}

}  // namespace

SmoothEval smooth_eval(const SmoothFunctional& phi, double t, const ProcessEnsemble& xi) {
    if (!phi.map) throw ContractError("smooth functional has no pathwise map");
    if (t < phi.t_hat - 1e-12) throw RangeError("smooth functional evaluated before its base time");
    if (phi.anchor) require_same_layout(xi, *phi.anchor, "smooth functional anchor");
    const int k = xi.grid().node_at(t);
    const int n = xi.size();
    SmoothEval out;
    out.dX.resize(static_cast<size_t>(n));
    out.dxX.resize(static_cast<size_t>(n));
    std::vector<double> val(static_cast<size_t>(n)), dt(static_cast<size_t>(n));
    std::vector<char> violated(static_cast<size_t>(n), 0);
    const double C = phi.growth_constant;
    parallel_for(n, [&](int q) {
        const Mat path = shifted_path(phi, xi, q, k);
        const PathView v(path, k);
        const double f = phi.map->value(t, v);
        const double ft = phi.map->time_derivative(t, v);
        Vec g = phi.map->gradient(t, v);
        Mat h = phi.map->hessian(t, v);
        if (std::isfinite(C)) {
            const double s = v.sup_norm();
            const double r = v.current().norm();
            const bool bad = std::abs(f) > C * (1.0 + std::pow(s, phi.p)) * (1 + 1e-12) ||
                             std::abs(ft) > C * (1.0 + std::pow(s, phi.p)) * (1 + 1e-12) ||
                             g.norm() > C * (1.0 + std::pow(r, phi.p - 1.0)) * (1 + 1e-12) ||
                             h.norm() > C * (1.0 + std::pow(r, std::max(phi.p - 2.0, 0.0))) * (1 + 1e-12);
            violated[static_cast<size_t>(q)] = bad;
        }
        val[static_cast<size_t>(q)] = xi.weight(q) * f;
        dt[static_cast<size_t>(q)] = xi.weight(q) * ft;
        out.dX[static_cast<size_t>(q)] = std::move(g);
        out.dxX[static_cast<size_t>(q)] = std::move(h);
    });
    out.value = pairwise_sum(val);
    out.dt = pairwise_sum(dt);
    if (std::any_of(violated.begin(), violated.end(), [](char c) { return c != 0; })) {
        out.warnings.push_back("growth bound violated on evaluated paths");
    }
    return out;
}

ItoReport ito_check(const SmoothFunctional& phi, const SimulationResult& X, double t1, double t2) {
    const TimeGrid& grid = X.paths.grid();
    const int k1 = grid.node_at(t1);
    const int k2 = grid.node_at(t2);
    if (k1 > k2) throw RangeError("Ito window is reversed");
    if (k1 < X.start_node || k2 > X.end_node) throw RangeError("Ito window outside the simulated range");
    if (k2 > k1 && X.drift.empty()) throw ContractError("simulation has no recorded drift and diffusion");
    const double dt = grid.dt();
    const int n = X.paths.size();
    ItoReport rep;
    rep.lhs = smooth_eval(phi, t2, X.paths).value - smooth_eval(phi, t1, X.paths).value;
    std::vector<double> terms;
    std::vector<double> cond_terms;
    for (int k = k1; k < k2; ++k) {
        const double s = grid.time(k);
        const SmoothEval e = smooth_eval(phi, s, X.paths);
        const auto& b = X.drift[static_cast<size_t>(k - X.start_node)];
        const auto& sg = X.diffusion[static_cast<size_t>(k - X.start_node)];
        std::vector<double> gen(static_cast<size_t>(n)), cond(static_cast<size_t>(n));
        parallel_for(n, [&](int q) {
            const auto& Z = e.dX[static_cast<size_t>(q)];
            const auto& G = e.dxX[static_cast<size_t>(q)];
            const Mat a = sg[static_cast<size_t>(q)] * sg[static_cast<size_t>(q)].transpose();
            gen[static_cast<size_t>(q)] = X.paths.weight(q) * (Z.dot(b[static_cast<size_t>(q)]) + 0.5 * (G.array() * a.array()).sum());
            // Exact expectation of the next value over the 2^m Rademacher branches.
            Mat path = shifted_path(phi, X.paths, q, k);
            const PathView now(path, k);
            const double here = phi.map->value(s, now);
            const int m = static_cast<int>(sg[static_cast<size_t>(q)].cols());
            const Vec base = path.col(k) + b[static_cast<size_t>(q)] * dt;
            double acc = 0.0;
            const int branches = 1 << m;
            Vec eps(m);
            for (int br = 0; br < branches; ++br) {
                for (int j = 0; j < m; ++j) eps[j] = ((br >> j) & 1) ? std::sqrt(dt) : -std::sqrt(dt);
                path.col(k + 1) = base + sg[static_cast<size_t>(q)] * eps;
                acc += phi.map->value(s + dt, PathView(path, k + 1));
            }
            cond[static_cast<size_t>(q)] = X.paths.weight(q) * (acc / branches - here);
        });
        terms.push_back((e.dt + pairwise_sum(gen)) * dt);
        cond_terms.push_back(pairwise_sum(cond));
    }
    rep.integral = pairwise_sum(terms);
    rep.residual = std::abs(rep.lhs - rep.integral);
    rep.conditional_residual = std::abs(pairwise_sum(cond_terms) - rep.integral);
    return rep;
}

}  // namespace procspace
