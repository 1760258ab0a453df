#include "procspace/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "procspace/parallel.hpp"

namespace procspace {

double hamiltonian_value(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const std::vector<Vec>& Z,
                         const std::vector<Mat>& Gamma, const std::vector<Vec>& actions, double eval_time) {
    const int n = xi.size();
    if (static_cast<int>(Z.size()) != n || static_cast<int>(Gamma.size()) != n || static_cast<int>(actions.size()) != n) {
        throw ShapeError("Hamiltonian needs one Z, Gamma and action per particle");
    }
    const int k = xi.grid().node_at(t);
    const ProcessEnsemble zero_noise(xi.grid(), coeffs.noise_dim(), xi.n_common(), xi.n_idio());
    const EnsembleView law(xi, k, &actions, &zero_noise);
    std::vector<double> terms(static_cast<size_t>(n));
    std::vector<int> bad(static_cast<size_t>(n), 0);
    parallel_for(n, [&](int p) {
        PointContext ctx;
        ctx.t = eval_time;
        ctx.node = k;
        ctx.particle = p;
        ctx.common = xi.common_of(p);
        ctx.path = PathView(xi.particle(p).values(), k);
        ctx.action = &actions[static_cast<size_t>(p)];
        ctx.law = &law;
        ctx.noise = PathView(zero_noise.particle(p).values(), k);
        const Vec b = coeffs.drift(ctx);
        const Mat s = coeffs.diffusion(ctx);
        const auto& z = Z[static_cast<size_t>(p)];
        const auto& g = Gamma[static_cast<size_t>(p)];
        if (b.size() != z.size() || g.rows() != s.rows() || g.cols() != s.rows()) {
            bad[static_cast<size_t>(p)] = 1;
            return;
        }
        const Mat a = s * s.transpose();
        terms[static_cast<size_t>(p)] = xi.weight(p) * (b.dot(z) + 0.5 * (a.array() * g.array()).sum());
    });
    if (std::any_of(bad.begin(), bad.end(), [](int b) { return b != 0; })) {
        throw ShapeError("Z or Gamma dimension does not match the coefficients");
    }
    const double f = coeffs.running ? coeffs.running(eval_time, law) : 0.0;
    return pairwise_sum(terms) + f;
}

HamiltonianResult hamiltonian(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                              const std::vector<Vec>& Z, const std::vector<Mat>& Gamma, const ActionGrid& actions,
                              std::optional<double> eval_time) {
    HamiltonianResult out;
    out.infimum = std::numeric_limits<double>::infinity();
    for (int a = 0; a < actions.size(); ++a) {
        const std::vector<Vec> acts(static_cast<size_t>(xi.size()), actions[a]);
        const double h = hamiltonian_value(coeffs, t, xi, Z, Gamma, acts, eval_time.value_or(t));
        out.values.push_back(h);
        if (h < out.infimum) {
            out.infimum = h;
            out.argmin = a;
        }
    }
    return out;
}

double classical_residual(const SmoothFunctional& U, const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                          const ActionGrid& actions) {
    const SmoothEval e = smooth_eval(U, t, xi);
    return e.dt + hamiltonian(coeffs, t, xi, e.dX, e.dxX, actions).infimum;
}

SpaceGrid padded_space_grid(double lo, double hi, double pad, double dx) {
    if (!(dx > 0.0) || !(hi >= lo) || !(pad >= 0.0)) throw ParameterError("invalid space grid request");
    SpaceGrid g;
    g.lo = lo - pad;
    g.hi = hi + pad;
    g.cells = std::max(2, static_cast<int>(std::ceil((g.hi - g.lo) / dx - 1e-9)));
    return g;
}

double ValueTable::at(double t, double x) const {
    const int k = time.node_at(t);
    const double dx = space.dx();
    double r = (x - space.lo) / dx;
    if (r <= 0) return v(k, 0);
    if (r >= space.cells) return v(k, space.cells);
    const int j = std::min(static_cast<int>(r), space.cells - 1);
    const double w = r - j;
    return (1.0 - w) * v(k, j) + w * v(k, j + 1);
}

void ValueTable::write_csv(std::ostream& os, int max_layers) const {
    os << "t,x,v\n";
    os.precision(17);
    const int stride = max_layers > 0 ? std::max(1, time.steps() / max_layers) : 1;
    std::vector<int> layers;
    for (int k = 0; k < time.steps(); k += stride) layers.push_back(k);
    layers.push_back(time.steps());
    for (int k : layers) {
        for (int j = 0; j < space.nodes(); ++j) os << time.time(k) << ',' << space.x(j) << ',' << v(k, j) << '\n';
    }
}

namespace {

double stability_rate(const StateCoefficients& sc, const SpaceGrid& space, double t) {
    const double dx = space.dx();
    double rate = 0.0;
    for (int j = 0; j < space.nodes(); ++j) {
        for (double a : sc.actions) {
            const double s = sc.volatility(t, space.x(j), a);
            rate = std::max(rate, s * s / (dx * dx) + std::abs(sc.drift(t, space.x(j), a)) / dx);
        }
    }
    return rate;
}

}  // namespace

TimeGrid stable_time_grid(const StateCoefficients& sc, const SpaceGrid& space, double t0, double T, double safety) {
    const double rate = std::max(stability_rate(sc, space, t0), stability_rate(sc, space, T));
    const int steps = std::max(1, static_cast<int>(std::ceil((T - t0) * rate / safety)));
    return TimeGrid(t0, T, steps);
}

ValueTable fd_oracle(const StateCoefficients& sc, const SpaceGrid& space, const TimeGrid& time) {
    if (sc.actions.empty()) throw DomainError("finite-difference oracle needs at least one action");
    if (space.cells < 2) throw ParameterError("space grid needs at least two cells");
    const int J = space.cells;
    const int N = time.steps();
    const double dx = space.dx();
    const double dt = time.dt();
    ValueTable tab;
    tab.time = time;
    tab.space = space;
    tab.v = Mat::Zero(time.nodes(), space.nodes());
    tab.arg = Eigen::MatrixXi::Zero(N, space.nodes());
    for (int j = 0; j <= J; ++j) tab.v(N, j) = sc.terminal(space.x(j));
    std::vector<int> cfl(static_cast<size_t>(J + 1), 0);
    for (int k = N - 1; k >= 0; --k) {
        const double t = time.time(k);
        parallel_for(J - 1, [&](int jj) {
            const int j = jj + 1;
            const double x = space.x(j);
            const double vm = tab.v(k + 1, j - 1), v0 = tab.v(k + 1, j), vp = tab.v(k + 1, j + 1);
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (size_t a = 0; a < sc.actions.size(); ++a) {
                const double act = sc.actions[a];
                const double b = sc.drift(t, x, act);
                const double s = sc.volatility(t, x, act);
                if (dt * (s * s / (dx * dx) + std::abs(b) / dx) > 1.0 + 1e-12) cfl[static_cast<size_t>(j)] = 1;
                const double h = std::max(b, 0.0) * (vp - v0) / dx - std::max(-b, 0.0) * (v0 - vm) / dx +
                                 0.5 * s * s * (vp - 2.0 * v0 + vm) / (dx * dx) + sc.running(t, x, act);
                if (h < best) {
                    best = h;
                    arg = static_cast<int>(a);
                }
            }
            tab.v(k, j) = v0 + dt * best;
            tab.arg(k, j) = arg;
        });
        if (std::any_of(cfl.begin(), cfl.end(), [](int c) { return c != 0; })) {
            throw ParameterError("finite-difference step violates the monotonicity (CFL) condition");
        }
        tab.v(k, 0) = 2.0 * tab.v(k, 1) - tab.v(k, 2);
        tab.v(k, J) = 2.0 * tab.v(k, J - 1) - tab.v(k, J - 2);
        tab.arg(k, 0) = tab.arg(k, 1);
        tab.arg(k, J) = tab.arg(k, J - 1);
    }
    return tab;
}

CoefficientSet state_coefficient_set(const StateCoefficients& sc, const std::string& name) {
    CoefficientSet c;
    c.name = name;
    c.dim = 1;
    c.idio_noise_dim = 1;
    c.common_noise_dim = 0;
    c.action_dim = 1;
    c.law_free = true;
    c.drift = [sc](const PointContext& ctx) {
        return Vec::Constant(1, sc.drift(ctx.t, ctx.path.current()[0], (*ctx.action)[0]));
    };
    c.diffusion = [sc](const PointContext& ctx) {
        return Mat::Constant(1, 1, sc.volatility(ctx.t, ctx.path.current()[0], (*ctx.action)[0]));
    };
    c.running_point = [sc](double t, const PathView& x, const Vec& a) { return sc.running(t, x.current()[0], a[0]); };
    c.terminal_point = [sc](const PathView& x) { return sc.terminal(x.current()[0]); };
    derive_costs_from_pointwise(c);
    return c;
}

ControlSpec feedback_from_table(const ValueTable& table, const ActionGrid& actions, const TimeGrid& grid, int first_step) {
    const SpaceGrid& sp = table.space;
    std::vector<double> breakpoints;
    for (int j = 0; j < sp.cells; ++j) breakpoints.push_back(sp.x(j) + 0.5 * sp.dx());
    std::vector<std::vector<int>> rows;
    for (int k = first_step; k < grid.steps(); ++k) {
        const double s = grid.time(k);
        int layer = static_cast<int>(std::lround((s - table.time.start()) / table.time.dt()));
        layer = std::clamp(layer, 0, table.time.steps() - 1);
        std::vector<int> row(static_cast<size_t>(sp.nodes()));
        for (int j = 0; j < sp.nodes(); ++j) row[static_cast<size_t>(j)] = table.arg(layer, j);
        rows.push_back(std::move(row));
    }
    return ControlSpec::state_feedback(actions, std::move(breakpoints), std::move(rows), first_step);
}

LiftReport check_lift(const ValueTable& table, const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                      const ControlFamily& family, const NoiseBundle& noise, double fd_bound,
                      const ValueOptions& options) {
    if (!coeffs.law_free || !coeffs.pointwise() || coeffs.dim != 1) {
        throw ContractError("lift check needs a decoupled one-dimensional scenario");
    }
    LiftReport rep;
    const ValueEstimate v = value_V(coeffs, t, xi, family, noise, options);
    rep.particle_value = v.value;
    rep.particle_std_error = v.std_error;
    rep.mode = v.mode;
    const int k = xi.grid().node_at(t);
    std::vector<double> terms(static_cast<size_t>(xi.size()));
    for (int p = 0; p < xi.size(); ++p) terms[static_cast<size_t>(p)] = xi.weight(p) * table.at(t, xi.value(p, k)[0]);
    rep.lifted_value = pairwise_sum(terms);
    rep.gap = rep.particle_value - rep.lifted_value;
    rep.tolerance = 3.0 * rep.particle_std_error + fd_bound + 1e-12 * std::max(1.0, std::abs(rep.lifted_value));
    rep.pass = std::abs(rep.gap) <= rep.tolerance;
    return rep;
}

CoefficientSet constant_vol_transform(const CoefficientSet& coeffs) {
    if (coeffs.dim != coeffs.noise_dim()) throw ContractError("constant-volatility transform needs noise dimension = d");
    CoefficientSet c = coeffs;
    c.name = coeffs.name + "~";
    const auto drift = coeffs.drift;
    c.drift = [drift](const PointContext& ctx) {
        PointContext s = ctx;
        const EnsembleView law = ctx.law->shifted_by_noise();
        s.path = ctx.path.shifted(ctx.noise);
        s.law = &law;
        return drift(s);
    };
    const int d = coeffs.dim;
    const int m = coeffs.noise_dim();
    c.diffusion = [d, m](const PointContext&) { return Mat::Zero(d, m).eval(); };
    const auto running = coeffs.running;
    if (running) c.running = [running](double t, const EnsembleView& law) { return running(t, law.shifted_by_noise()); };
    const auto terminal = coeffs.terminal;
    if (terminal) c.terminal = [terminal](const EnsembleView& law) { return terminal(law.shifted_by_noise()); };
    c.running_point = nullptr;
    c.terminal_point = nullptr;
    c.law_free = false;
    return c;
}

TransformReport transform_constant_vol(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                                       const ControlFamily& family, const NoiseBundle& noise,
                                       const ValueOptions& options) {
    const int k0 = xi.grid().node_at(t);
    const int d = coeffs.dim;
    if (d != coeffs.noise_dim()) throw ContractError("constant-volatility transform needs noise dimension = d");
    {
        const ProcessEnsemble zero_noise(xi.grid(), coeffs.noise_dim(), xi.n_common(), xi.n_idio());
        for (int a = 0; a < family.grid().size(); ++a) {
            const std::vector<Vec> acts(static_cast<size_t>(xi.size()), family.grid()[a]);
            const EnsembleView law(xi, k0, &acts, &zero_noise);
            for (int p = 0; p < xi.size(); ++p) {
                PointContext ctx;
                ctx.t = xi.grid().time(k0);
                ctx.node = k0;
                ctx.particle = p;
                ctx.common = xi.common_of(p);
                ctx.path = PathView(xi.particle(p).values(), k0);
                ctx.action = &acts[static_cast<size_t>(p)];
                ctx.law = &law;
                ctx.noise = PathView(zero_noise.particle(p).values(), k0);
                const Mat s = coeffs.diffusion(ctx);
                if (s.rows() != d || s.cols() != d || (s - Mat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-14) {
                    throw ContractError("constant-volatility transform needs sigma = identity");
                }
            }
        }
    }
    const CoefficientSet tilde = constant_vol_transform(coeffs);
    const ProcessEnsemble B = noise.cumulative(xi.n_common(), xi.n_idio());
    ProcessEnsemble xt = xi.stopped(k0);
    for (int p = 0; p < xt.size(); ++p) {
        auto& v = xt.particle(p).values();
        for (int j = 0; j < v.cols(); ++j) v.col(j) -= B.particle(p).values().col(std::min(j, k0));
    }
    TransformReport rep;
    const ValueEstimate a = value_V(coeffs, t, xi, family, noise, options);
    const ValueEstimate b = value_V(tilde, t, xt, family, noise, options);
    rep.direct = a.value;
    rep.transformed = b.value;
    rep.gap = std::abs(a.value - b.value);
    rep.argmin_direct = a.argmin_index;
    rep.argmin_transformed = b.argmin_index;
    return rep;
}

}  // namespace procspace
