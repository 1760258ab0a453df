#include "procspace/batteries.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "procspace/hjb.hpp"
#include "procspace/noise.hpp"
#include "procspace/parallel.hpp"
#include "procspace/scenario.hpp"
#include "procspace/variational.hpp"

namespace procspace {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Random walk with a random overall scale; column k is the value at node k.
Mat random_path(const CounterStream& rng, std::uint64_t offset, int dim, int steps) {
    const double scale = std::exp(4.0 * rng.uniform(offset) - 2.0);
    Mat x(dim, steps + 1);
    std::uint64_t idx = offset + 1;
    for (int r = 0; r < dim; ++r) x(r, 0) = scale * rng.normal(idx++);
    for (int k = 1; k <= steps; ++k) {
        for (int r = 0; r < dim; ++r) x(r, k) = x(r, k - 1) + scale * rng.normal(idx++);
    }
    return x;
}

// Spectral norm of a symmetric matrix.
double sym_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<Mat>(m, Eigen::EigenvaluesOnly).eigenvalues().cwiseAbs().maxCoeff();
}

bool bounds_hold(const GaugeDerivatives& g, double r, int p, double tol) {
    const double gb = 3.0 * p * std::pow(r, p - 1);
    const double hb = 3.0 * p * (3.0 * p - 1.0) * std::pow(r, p - 2);
    return g.grad.norm() <= gb * (1.0 + tol) + 1e-300 && sym_norm(g.hess) <= hb * (1.0 + tol) + 1e-300;
}

// Central differences of upsilon in the terminal value, Richardson-extrapolated over h and h/2.
GaugeDerivatives fd_derivatives(Mat x, int node, int p, double h) {
    const int d = static_cast<int>(x.rows());
    auto value = [&](const Vec& bump) {
        Mat y = x;
        y.col(node) += bump;
        return upsilon(PathView(y, node), p);
    };
    auto at_step = [&](double s) {
        GaugeDerivatives g{Vec::Zero(d), Mat::Zero(d, d)};
        const double f0 = value(Vec::Zero(d));
        for (int i = 0; i < d; ++i) {
            const Vec ei = Vec::Unit(d, i) * s;
            const double fp = value(ei), fm = value(-ei);
            g.grad[i] = (fp - fm) / (2.0 * s);
            g.hess(i, i) = (fp - 2.0 * f0 + fm) / (s * s);
            for (int j = 0; j < i; ++j) {
                const Vec ej = Vec::Unit(d, j) * s;
                const double v = (value(ei + ej) - value(ei - ej) - value(-ei + ej) + value(-ei - ej)) / (4.0 * s * s);
                g.hess(i, j) = g.hess(j, i) = v;
            }
        }
        return g;
    };
    const GaugeDerivatives a = at_step(h), b = at_step(0.5 * h);
    return {(4.0 * b.grad - a.grad) / 3.0, (4.0 * b.hess - a.hess) / 3.0};
}

}  // namespace

void GaugeBatteryReport::write_csv(std::ostream& os) const {
    os << "quantity,count\n";
    os << "paths," << paths << '\n';
    os << "sandwich_violations," << sandwich_violations << '\n';
    os << "triangle_violations," << triangle_violations << '\n';
    os << "derivative_points," << derivative_points << '\n';
    os << "derivative_mismatches," << derivative_mismatches << '\n';
    os << "bound_violations," << bound_violations << '\n';
    os.precision(17);
    os << "max_fd_error," << max_fd_error << '\n';
}

GaugeBatteryReport gauge_battery(const GaugeBatteryOptions& o) {
    if (o.exponents.empty() || o.max_dim < 1 || o.steps < 1) throw ParameterError("empty gauge battery");
    for (int p : o.exponents) require_gauge_exponent(p);
    const auto start = std::chrono::steady_clock::now();
    const int ne = static_cast<int>(o.exponents.size());
    GaugeBatteryReport rep;
    rep.paths = o.paths;
    rep.derivative_points = o.derivative_points;

    std::vector<char> sandwich(static_cast<size_t>(o.paths)), triangle(sandwich.size()), bounds(sandwich.size());
    parallel_for(o.paths, [&](int i) {
        const int p = o.exponents[static_cast<size_t>(i % ne)];
        const int d = 1 + (i / ne) % o.max_dim;
        const CounterStream rng(o.seed, static_cast<std::uint32_t>(i));
        const Mat x = random_path(rng, 0, d, o.steps);
        const Mat y = random_path(rng, 1u << 20, d, o.steps);
        const int node = static_cast<int>(rng.uniform(1u << 21) * (o.steps + 1)) % (o.steps + 1);
        const PathView vx(x, node), vy(y, node);
        const Mat s = x + y;
        const double ux = upsilon(vx, p), uy = upsilon(vy, p), us = upsilon(PathView(s, node), p);
        const double Sp = std::pow(vx.sup_norm(), p);
        sandwich[static_cast<size_t>(i)] = Sp > ux * (1.0 + o.tolerance) || ux > 3.0 * Sp * (1.0 + o.tolerance);
        triangle[static_cast<size_t>(i)] = us > std::ldexp(1.0, p - 1) * (ux + uy) * (1.0 + o.tolerance);
        bounds[static_cast<size_t>(i)] = !bounds_hold(upsilon_derivatives(vx, p), x.col(node).norm(), p, o.tolerance);
    });
    for (size_t i = 0; i < sandwich.size(); ++i) {
        rep.sandwich_violations += sandwich[i];
        rep.triangle_violations += triangle[i];
        rep.bound_violations += bounds[i];
    }

    std::vector<double> err(static_cast<size_t>(o.derivative_points));
    std::vector<char> bad_bound(err.size());
    parallel_for(o.derivative_points, [&](int j) {
        const int p = o.exponents[static_cast<size_t>(j % ne)];
        const int d = 1 + (j / ne) % o.max_dim;
        const CounterStream rng(o.seed + 1, static_cast<std::uint32_t>(j));
        Mat x = random_path(rng, 0, d, o.steps);
        const int node = 1 + static_cast<int>(rng.uniform(1u << 21) * o.steps) % o.steps;
        double S = 0.0;
        for (int k = 0; k < node; ++k) S = std::max(S, x.col(k).norm());
        // Terminal value strictly inside the running maximum: off the set |x_t| = S. Below |x_t| = S/2
        // the derivatives are so small against S^p that double-precision differences lose the 1e-6 target.
        Vec dir(d);
        for (int r = 0; r < d; ++r) dir[r] = rng.normal((1u << 22) + r);
        const double ratio = 0.5 + 0.45 * rng.uniform(1u << 23);
        x.col(node) = ratio * S * dir.normalized();
        const PathView v(x, node);
        const GaugeDerivatives an = upsilon_derivatives(v, p);
        const GaugeDerivatives fd = fd_derivatives(x, node, p, 1e-3 * S);
        const double eg = (an.grad - fd.grad).norm() / an.grad.norm();
        const double eh = (an.hess - fd.hess).norm() / an.hess.norm();
        err[static_cast<size_t>(j)] = std::max(eg, eh);
        bad_bound[static_cast<size_t>(j)] = !bounds_hold(an, ratio * S, p, o.tolerance);
    });
    for (size_t j = 0; j < err.size(); ++j) {
        rep.max_fd_error = std::max(rep.max_fd_error, err[j]);
        rep.derivative_mismatches += !(err[j] <= o.fd_tolerance);
        rep.bound_violations += bad_bound[j];
    }
    rep.seconds = seconds_since(start);
    return rep;
}

// ---------------------------------------------------------------------------------------------

bool ViscosityBattery::pass(double classical_tol) const {
    if (!(std::abs(heat_classical) <= classical_tol) || cases.empty()) return false;
    for (const auto& c : cases) {
        if (!c.report.sign_ok || !c.report.touching_ok) return false;
    }
    return true;
}

void ViscosityBattery::write_csv(std::ostream& os) const {
    os << "scenario,side,shift,classical,delta,residual,stderr,touching_slack,sign_ok\n";
    os.precision(17);
    for (const auto& c : cases) {
        for (const auto& r : c.report.rows) {
            os << c.scenario << ',' << c.side << ',' << c.shift << ',' << c.classical << ',' << r.delta << ','
               << r.residual << ',' << r.std_error << ',' << c.report.touching_slack << ','
               << (c.report.sign_ok ? "true" : "false") << '\n';
        }
    }
}

ViscosityBattery viscosity_battery(const ViscosityBatteryOptions& o) {
    if (o.ladder.empty()) throw ParameterError("empty delta ladder");
    const int max_delta = *std::max_element(o.ladder.begin(), o.ladder.end());
    if (max_delta >= o.steps) throw ParameterError("delta ladder exceeds the grid");
    const double T = 1.0;
    const TimeGrid grid(0.0, T, o.steps);
    const int k0 = std::max(0, std::min(o.steps / 4, o.steps - max_delta));
    const double t = grid.time(k0);
    const Config cfg = Config::parse("scenario = heat\n", "<viscosity>");

    std::vector<Vec> x0;
    const CounterStream rng(o.seed, 0);
    for (int p = 0; p < o.particles; ++p) x0.push_back(Vec::Constant(1, rng.normal(static_cast<std::uint64_t>(p))));
    const ProcessEnsemble xi = ProcessEnsemble::constant(grid, x0, 1, o.particles);
    std::vector<double> deltas;
    for (int m : o.ladder) deltas.push_back(m * grid.dt());

    ViscosityBattery out;
    for (const std::string key : {"heat", "drift_control"}) {
        const Scenario s = make_scenario(key, cfg);
        const NoiseBundle noise(NoiseMode::gaussian, o.seed, grid, s.coeffs.idio_noise_dim, s.coeffs.common_noise_dim);
        const ControlFamily family = ControlFamily::deterministic(s.actions, k0, o.steps);
        const bool heat = key == "heat";
        if (heat) {
            SmoothFunctional exact;
            exact.t_hat = t;
            exact.map = std::make_shared<QuadraticFunctional>(1.0, 1.0, T);
            out.heat_classical = classical_residual(exact, s.coeffs, t, xi, s.actions);
        }
        for (int sgn : {1, -1}) {
            // sgn = +1: U - c (T - t) is a subsolution; sgn = -1: U + c (T - t) a supersolution.
            const double c = o.shift * sgn;
            ViscosityCase vc;
            vc.scenario = key;
            vc.side = sgn > 0 ? "sub" : "super";
            vc.shift = -c;
            TestPair pair;
            pair.sign = sgn;
            pair.smooth.t_hat = t;
            if (heat) {
                pair.smooth.map = std::make_shared<QuadraticFunctional>(1.0, 1.0 - c, T);
            } else {
                pair.smooth.map = std::make_shared<CubicFunctional>(Vec::Zero(1), Vec::Zero(1), Vec::Ones(1), -1.0 - c, T);
            }
            const auto closed = s.closed_form;
            const ProcessFunctional U = [closed, c, T](double s_, const ProcessEnsemble& z) {
                return closed(s_, z) - c * (T - s_);
            };
            vc.classical = classical_residual(pair.smooth, s.coeffs, t, xi, s.actions);
            ViscosityOptions vo;
            vo.seed = o.seed;
            vc.report = viscosity_residual(U, pair, s.coeffs, t, xi, sgn > 0 ? ViscositySide::sub : ViscositySide::super,
                                           deltas, family, noise, vo);
            out.cases.push_back(std::move(vc));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------------

VariationalBatteryReport variational_battery(const VariationalBatteryOptions& o) {
    if (o.instances < 1 || o.max_points < 2) throw ParameterError("empty variational battery");
    const auto start = std::chrono::steady_clock::now();
    const int total = o.instances + o.gauge_instances;
    std::vector<std::string> failure(static_cast<size_t>(total));
    std::vector<int> length(failure.size());
    parallel_for(total, [&](int i) {
        const CounterStream rng(o.seed, static_cast<std::uint32_t>(i));
        std::uint64_t idx = 0;
        FiniteInstance inst;
        if (i < o.instances) {
            const int n = 2 + static_cast<int>(rng.uniform(idx++) * (o.max_points - 1)) % (o.max_points - 1);
            const int dim = 1 + i % 3;
            Mat pts(dim, n);
            for (int j = 0; j < n; ++j) {
                for (int r = 0; r < dim; ++r) pts(r, j) = rng.uniform(idx++);
            }
            inst.d = Mat::Zero(n, n);
            for (int a = 0; a < n; ++a) {
                for (int b = a + 1; b < n; ++b) inst.d(a, b) = inst.d(b, a) = (pts.col(a) - pts.col(b)).norm();
            }
            // Gauges: d^2, d and a scaled d^4.
            const int kind = i % 3;
            inst.gauge = kind == 0 ? inst.d.cwiseProduct(inst.d).eval()
                         : kind == 1 ? inst.d
                                     : (10.0 * inst.d.array().pow(4.0)).matrix().eval();
            inst.psi.resize(n);
            for (int j = 0; j < n; ++j) inst.psi[j] = rng.uniform(idx++);
        } else {
            const int n = 4 + i % 12;
            const TimeGrid grid(0.0, 1.0, 4);
            std::vector<GaugePoint> points;
            for (int j = 0; j < n; ++j) {
                const int node = static_cast<int>(rng.uniform(idx++) * 4.999);
                ProcessEnsemble xi(grid, 1, 1, 3);
                for (int q = 0; q < 3; ++q) {
                    Mat& v = xi.particle(q).values();
                    v(0, 0) = rng.normal(idx++);
                    for (int k = 1; k <= 4; ++k) v(0, k) = v(0, k - 1) + 0.5 * rng.normal(idx++);
                }
                points.push_back({grid.time(node), xi.stopped(node)});
            }
            Vec psi(n);
            for (int j = 0; j < n; ++j) psi[j] = rng.uniform(idx++);
            inst = instance_from_gauge(points, 6, psi);
        }
        const int n = inst.size();
        const double sup = inst.psi.maxCoeff();
        const double eps = std::pow(10.0, -3.0 * rng.uniform(idx++));
        std::vector<int> near;
        for (int j = 0; j < n; ++j) {
            if (inst.psi[j] >= sup - eps) near.push_back(j);
        }
        const int x0 = near[static_cast<size_t>(rng.uniform(idx++) * near.size()) % near.size()];
        try {
            const BorweinPreiss bp = borwein_preiss(inst, eps, x0);
            length[static_cast<size_t>(i)] = static_cast<int>(bp.sequence.size());
            if (!bp.verified) failure[static_cast<size_t>(i)] = bp.failure;
        } catch (const std::exception& e) {
            failure[static_cast<size_t>(i)] = e.what();
        }
    });
    VariationalBatteryReport rep;
    rep.instances = total;
    for (int i = 0; i < total; ++i) {
        rep.max_sequence = std::max(rep.max_sequence, length[static_cast<size_t>(i)]);
        if (!failure[static_cast<size_t>(i)].empty()) {
            ++rep.failures;
            if (rep.messages.size() < 10) rep.messages.push_back("instance " + std::to_string(i) + ": " + failure[static_cast<size_t>(i)]);
        }
    }
    rep.seconds = seconds_since(start);
    return rep;
}


// ---------------------------------------------------------------------------------------------

bool SingularBatteryReport::pass(double spread) const {
    if (cases.empty()) return false;
    return std::all_of(cases.begin(), cases.end(), [spread](const SingularCase& c) {
        return c.ratio_spread <= spread && c.rate_failures == 0 && c.monotone_in_k;
    });
}

void SingularBatteryReport::write_csv(std::ostream& os) const {
    os << "case,k,p,delta_index,ratio,ratio_spread,rate_failures,worst_rate_margin,monotone_in_k\n";
    os.precision(17);
    for (size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        for (size_t j = 0; j < c.ratios.size(); ++j) {
            os << i << ',' << c.k << ',' << c.p << ',' << j << ',' << c.ratios[j] << ',' << c.ratio_spread << ','
               << c.rate_failures << ',' << c.worst_rate_margin << ',' << (c.monotone_in_k ? "true" : "false") << '\n';
        }
    }
}

SingularBatteryReport singular_battery(const SingularBatteryOptions& o) {
    if (o.scenarios < 1 || o.base_particles < 1 || o.ladder.empty()) throw ParameterError("empty singular battery");
    if (*std::max_element(o.ladder.begin(), o.ladder.end()) > o.steps) throw ParameterError("delta ladder exceeds the grid");
    const auto start = std::chrono::steady_clock::now();
    const TimeGrid grid(0.0, o.horizon, o.steps);
    const ActionGrid actions = ActionGrid::scalar({-1.0, 1.0});
    const ControlFamily family = ControlFamily::deterministic(actions, 0, o.steps);
    SingularBatteryReport out;
    out.cases.resize(static_cast<size_t>(o.scenarios));
    for (int j = 0; j < o.scenarios; ++j) {
        const CounterStream rng(o.seed, 0x40000u + static_cast<std::uint32_t>(j));
        std::uint64_t idx = 0;
        const double m = 0.5 + 0.5 * rng.uniform(idx++);
        const double s = 0.5 + rng.uniform(idx++);
        const double s_tilde = 1.5 * rng.uniform(idx++);
        const double c = 0.25 * rng.uniform(idx++);
        const double w = rng.uniform(idx++);
        SingularCase& sc = out.cases[static_cast<size_t>(j)];
        sc.k = 0.5 + 1.5 * rng.uniform(idx++);
        sc.p = j % 2 ? 3.0 : 2.0;

        const NoiseBundle noise(NoiseMode::tree, o.seed, grid, 1, 0);
        std::vector<Vec> x0, base;
        for (int q = 0; q < o.base_particles; ++q) {
            const double x = rng.normal(idx++);
            x0.push_back(Vec::Constant(1, x));
            base.push_back(Vec::Constant(1, x - 1.0));
        }
        const ProcessEnsemble xi = tree_expand(ProcessEnsemble::constant(grid, x0, 1, o.base_particles), noise);
        CoefficientSet coeffs;
        coeffs.name = "singular-battery";
        coeffs.law_free = true;
        coeffs.drift = [m](const PointContext& ctx) { return Vec::Constant(1, m + 0.2 * std::sin(ctx.path.current()[0])); };
        coeffs.diffusion = [s](const PointContext&) { return Mat::Constant(1, 1, s); };
        SimulationOptions so;
        so.record_coefficients = true;
        so.running_costs = false;
        const SimulationResult X = simulate(coeffs, 0.0, xi, ControlSpec::constant(ActionGrid::scalar({0.0}), 0, 0, o.steps),
                                            noise, so);

        SingularFunctional phi;
        phi.xi_tilde = tree_expand(ProcessEnsemble::constant(grid, base, 1, o.base_particles), noise);
        phi.xi_prime = xi;
        phi.k = sc.k;
        phi.p = sc.p;
        phi.tilde.drift = [c](const LiftedContext& ctx) { return Vec::Constant(1, c * (*ctx.action)[0]); };
        phi.tilde.diffusion = [s_tilde](const LiftedContext&) { return Mat::Constant(1, 1, s_tilde); };
        phi.tilde.running = [w](double, const EnsembleView& law) {
            double f = 0.0;
            for (int q = 0; q < law.size(); ++q) f += law.weight(q) * w * law.action(q).squaredNorm();
            return f;
        };

        const double phi0 = phi_eval(phi, 0.0, X.paths, family, noise).value;
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
        for (int n : o.ladder) {
            const double delta = n * grid.dt();
            const double r = std::abs(phi_eval(phi, delta, X.paths, family, noise).value - phi0) / delta;
            sc.ratios.push_back(r);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
            const RateReport rr = phi_rate_check(phi, X, 0.0, delta, family, noise);
            if (!rr.pass) ++sc.rate_failures;
            const double margin = (rr.lhs - rr.rhs) / std::max(rr.tolerance, 1e-300);
            sc.worst_rate_margin = sc.ratios.size() == 1 ? margin : std::max(sc.worst_rate_margin, margin);
        }
        sc.ratio_spread = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();

        const double t_mid = grid.time(o.steps / 2);
        double prev = -std::numeric_limits<double>::infinity();
        for (double kk : {0.0, 0.5 * sc.k, sc.k, 2.0 * sc.k}) {
            SingularFunctional q = phi;
            q.k = kk;
            const double v = phi_eval(q, t_mid, X.paths, family, noise).value;
            if (v < prev) sc.monotone_in_k = false;
            prev = v;
        }
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace procspace
