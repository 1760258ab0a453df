#include "procspace/sde.hpp"

#include <algorithm>
#include <cmath>

#include "procspace/parallel.hpp"

namespace procspace {

namespace {

constexpr double kOverflow = 1e150;

bool finite_vec(const Eigen::Ref<const Mat>& m) {
    return m.allFinite() && (m.size() == 0 || m.cwiseAbs().maxCoeff() < kOverflow);
}

}  // namespace

EnsembleView SimulationResult::law_at(int k, const ProcessEnsemble& xi) const {
    const auto* acts = (k >= start_node && k < end_node) ? &actions_at(k) : nullptr;
    if (frozen) return EnsembleView(xi, start_node, acts, &noise_paths);
    return EnsembleView(paths, k, acts, &noise_paths);
}

SimulationResult simulate(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlSpec& control,
                          const NoiseBundle& noise, const SimulationOptions& options) {
    const TimeGrid& grid = xi.grid();
    if (!(noise.grid() == grid)) throw ShapeError("noise and ensemble grids differ");
    if (xi.dim() != coeffs.dim) throw ShapeError("ensemble dimension differs from coefficient dimension");
    if (noise.dim() != coeffs.noise_dim()) throw ShapeError("noise dimension differs from coefficient noise dimension");
    if (noise.idio_dim() != coeffs.idio_noise_dim) throw ShapeError("idiosyncratic noise dimension mismatch");
    const int k0 = grid.node_at(t);
    const int kend = options.end_node < 0 ? grid.steps() : options.end_node;
    if (kend < k0 || kend > grid.steps()) throw RangeError("simulation end node out of range");
    if (kend > k0 && (control.first_step() > k0 || control.last_step() < kend)) {
        throw RangeError("control does not cover the simulation window");
    }

    SimulationResult r;
    r.start_node = k0;
    r.end_node = kend;
    r.frozen = options.frozen;
    r.paths = xi.stopped(k0);
    r.noise_paths = noise.cumulative(xi.n_common(), xi.n_idio());
    const int n = xi.size();
    const int d = xi.dim();
    const int m = noise.dim();
    const double dt = grid.dt();

    std::vector<Vec> increments(static_cast<size_t>(n));
    for (int k = k0; k < kend; ++k) {
        const double s = grid.time(k);
        std::vector<Vec> acts(static_cast<size_t>(n));
        parallel_for(n, [&](int p) {
            const auto& state = r.paths.particle(p).values();
            ActionQuery q{k, xi.common_of(p), xi.idio_of(p), PathView(state, k), &noise};
            acts[static_cast<size_t>(p)] = control.action(q);
        });
        r.actions.push_back(std::move(acts));
        const auto& step_actions = r.actions.back();
        const ProcessEnsemble& law_source = options.frozen ? xi : r.paths;
        const int law_node = options.frozen ? k0 : k;
        const EnsembleView law(law_source, law_node, &step_actions, &r.noise_paths);

        std::vector<Vec> drifts(options.record_coefficients ? static_cast<size_t>(n) : 0);
        std::vector<Mat> diffs(options.record_coefficients ? static_cast<size_t>(n) : 0);
        std::vector<int> bad(static_cast<size_t>(n), 0);
        std::vector<Vec> next(static_cast<size_t>(n));
        parallel_for(n, [&](int p) {
            PointContext ctx;
            ctx.t = s;
            ctx.node = k;
            ctx.particle = p;
            ctx.common = xi.common_of(p);
            ctx.path = PathView(law_source.particle(p).values(), law_node);
            ctx.action = &step_actions[static_cast<size_t>(p)];
            ctx.law = &law;
            ctx.noise = PathView(r.noise_paths.particle(p).values(), k);
            const Vec b = coeffs.drift(ctx);
            const Mat sig = coeffs.diffusion(ctx);
            if (b.size() != d || sig.rows() != d || sig.cols() != m) {
                bad[static_cast<size_t>(p)] = 2;
                return;
            }
            if (!finite_vec(b) || !finite_vec(sig)) {
                bad[static_cast<size_t>(p)] = 1;
                return;
            }
            const Vec dB = r.noise_paths.particle(p).values().col(k + 1) - r.noise_paths.particle(p).values().col(k);
            Vec x = r.paths.particle(p).values().col(k) + b * dt + sig * dB;
            if (!finite_vec(x)) {
                bad[static_cast<size_t>(p)] = 1;
                return;
            }
            next[static_cast<size_t>(p)] = std::move(x);
            if (options.record_coefficients) {
                drifts[static_cast<size_t>(p)] = b;
                diffs[static_cast<size_t>(p)] = sig;
            }
        });
        for (int p = 0; p < n; ++p) {
            if (bad[static_cast<size_t>(p)] == 2) throw ShapeError("coefficient returned wrong shape");
            if (bad[static_cast<size_t>(p)] == 1) throw NumericError("non-finite coefficient or state", k);
        }
        if (options.running_costs && coeffs.running) {
            const double f = coeffs.running(s, law);
            if (!std::isfinite(f)) throw NumericError("non-finite running cost", k);
            r.running.push_back(f);
        }
        for (int p = 0; p < n; ++p) {
            auto& v = r.paths.particle(p).values();
            for (int j = k + 1; j < v.cols(); ++j) v.col(j) = next[static_cast<size_t>(p)];
        }
        if (options.record_coefficients) {
            r.drift.push_back(std::move(drifts));
            r.diffusion.push_back(std::move(diffs));
        }
    }
    (void)d;
    return r;
}

ProcessEnsemble simulate_state(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                               const ControlSpec& control, const NoiseBundle& noise) {
    SimulationOptions o;
    o.running_costs = false;
    return simulate(coeffs, t, xi, control, noise, o).paths;
}

ProcessEnsemble simulate_frozen(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi,
                                const ControlSpec& control, const NoiseBundle& noise) {
    SimulationOptions o;
    o.running_costs = false;
    o.frozen = true;
    return simulate(coeffs, t, xi, control, noise, o).paths;
}

LiftedIntegral integrate_lifted(const TildeCoefficients& tilde, double t_tilde, const ProcessEnsemble& xi_tilde,
                                const ControlSpec& control, const ProcessEnsemble& X, const NoiseBundle& noise,
                                std::optional<double> gamma_star) {
    const TimeGrid& grid = X.grid();
    require_same_layout(X, xi_tilde, "lifted integrator");
    if (!(noise.grid() == grid)) throw ShapeError("noise and ensemble grids differ");
    if (noise.dim() != tilde.noise_dim) throw ShapeError("lifted diffusion noise dimension mismatch");
    if (tilde.dim != X.dim()) throw ShapeError("lifted coefficient dimension mismatch");
    const int kt = grid.node_at(t_tilde);
    const int n = X.size();
    const int d = X.dim();
    const int N = grid.steps();
    const double dt = grid.dt();
    if (control.first_step() > kt || control.last_step() < N) throw RangeError("control does not cover [t~, T]");

    LiftedIntegral out;
    out.start_node = kt;
    out.integrator = X;
    out.running.assign(static_cast<size_t>(grid.nodes()), 0.0);
    const ProcessEnsemble noise_paths = noise.cumulative(X.n_common(), X.n_idio());

    std::vector<Vec> acc(static_cast<size_t>(n), Vec::Zero(d));
    bool bound_violated = false;
    for (int k = kt; k < N; ++k) {
        const double s = grid.time(k);
        std::vector<Vec> acts(static_cast<size_t>(n));
        for (int p = 0; p < n; ++p) {
            ActionQuery q{k, X.common_of(p), X.idio_of(p), PathView(X.particle(p).values(), k), &noise};
            acts[static_cast<size_t>(p)] = control.action(q);
        }
        const EnsembleView controls(X, k, &acts, &noise_paths);
        std::vector<Vec> bs(static_cast<size_t>(n));
        std::vector<Mat> ss(static_cast<size_t>(n));
        std::vector<int> viol(static_cast<size_t>(n), 0);
        parallel_for(n, [&](int p) {
            LiftedContext ctx;
            ctx.t = s;
            ctx.node = k;
            ctx.particle = p;
            ctx.common = X.common_of(p);
            ctx.action = &acts[static_cast<size_t>(p)];
            ctx.noise = PathView(noise_paths.particle(p).values(), k);
            ctx.controls = &controls;
            bs[static_cast<size_t>(p)] = tilde.drift ? tilde.drift(ctx) : Vec::Zero(d);
            ss[static_cast<size_t>(p)] = tilde.diffusion ? tilde.diffusion(ctx) : Mat::Zero(d, tilde.noise_dim);
            if (gamma_star && (bs[static_cast<size_t>(p)].norm() > *gamma_star ||
                               ss[static_cast<size_t>(p)].norm() > *gamma_star)) {
                viol[static_cast<size_t>(p)] = 1;
            }
        });
        for (int p = 0; p < n; ++p) {
            const auto& B = noise_paths.particle(p).values();
            if (bs[static_cast<size_t>(p)].size() != d || ss[static_cast<size_t>(p)].rows() != d ||
                ss[static_cast<size_t>(p)].cols() != tilde.noise_dim) {
                throw ShapeError("lifted coefficient returned wrong shape");
            }
            acc[static_cast<size_t>(p)] += bs[static_cast<size_t>(p)] * dt +
                                           ss[static_cast<size_t>(p)] * (B.col(k + 1) - B.col(k));
            bound_violated = bound_violated || viol[static_cast<size_t>(p)];
        }
        const double f = tilde.running ? tilde.running(s, controls) : 0.0;
        out.running[static_cast<size_t>(k + 1)] = out.running[static_cast<size_t>(k)] + f * dt;
        for (int p = 0; p < n; ++p) {
            out.integrator.particle(p).values().col(k + 1) -= acc[static_cast<size_t>(p)];
        }
        out.drift.push_back(std::move(bs));
        out.diffusion.push_back(std::move(ss));
    }
    for (int p = 0; p < n; ++p) {
        const Vec anchor = xi_tilde.particle(p).values().col(kt);
        out.integrator.particle(p).values().colwise() -= anchor;
    }
    if (bound_violated) out.warnings.push_back("lifted coefficients exceed the dominating bound on some samples");
    return out;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("slope fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) throw DomainError("log-log fit needs positive data");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SdeEstimateReport check_sde_estimates(const CoefficientSet& coeffs, double t, const std::vector<ProcessEnsemble>& batch,
                                      const ControlSpec& control, const NoiseBundle& noise, double p) {
    if (batch.size() < 2) throw DomainError("estimate check needs at least two initial ensembles");
    SdeEstimateReport rep;
    std::vector<ProcessEnsemble> outs;
    outs.reserve(batch.size());
    for (const auto& xi : batch) {
        outs.push_back(simulate_state(coeffs, t, xi, control, noise));
        rep.growth_ratio.push_back(process_norm(outs.back(), p) / (1.0 + process_norm(xi, p, t)));
    }
    for (size_t j = 0; j + 1 < batch.size(); ++j) {
        const double din = process_norm(batch[j].stopped(batch[j].grid().node_at(t)).minus(
                                            batch[j + 1].stopped(batch[j + 1].grid().node_at(t))),
                                        p);
        if (din > 0) rep.stability_ratio.push_back(process_norm(outs[j].minus(outs[j + 1]), p) / din);
    }
    const TimeGrid& grid = batch[0].grid();
    const int k0 = grid.node_at(t);
    const auto& X = outs[0];
    for (int h = 1; k0 + h <= grid.steps(); h *= 2) {
        double s = 0.0;
        for (int q = 0; q < X.size(); ++q) {
            const auto& v = X.particle(q).values();
            s += X.weight(q) * std::pow((v.col(k0 + h) - v.col(k0)).norm(), p);
        }
        rep.increment_steps.push_back(h * grid.dt());
        rep.increment_norms.push_back(std::pow(s, 1.0 / p));
    }
    rep.growth_constant = *std::max_element(rep.growth_ratio.begin(), rep.growth_ratio.end());
    if (!rep.stability_ratio.empty()) {
        rep.stability_constant = *std::max_element(rep.stability_ratio.begin(), rep.stability_ratio.end());
    }
    bool positive = rep.increment_norms.size() >= 2;
    for (double v : rep.increment_norms) positive = positive && v > 0;
    if (positive) {
        rep.holder_exponent = loglog_slope(rep.increment_steps, rep.increment_norms);
        for (size_t j = 0; j < rep.increment_steps.size(); ++j) {
            rep.holder_constant = std::max(rep.holder_constant, rep.increment_norms[j] / std::sqrt(rep.increment_steps[j]));
        }
    }
    return rep;
}

bool estimates_diverge(const SdeEstimateReport& coarse, const SdeEstimateReport& fine, double factor) {
    return fine.growth_constant > factor * coarse.growth_constant ||
           fine.stability_constant > factor * std::max(coarse.stability_constant, 1e-300) ||
           fine.holder_constant > factor * std::max(coarse.holder_constant, 1e-300);
}

}  // namespace procspace
