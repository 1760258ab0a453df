#include "procspace/singular.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "procspace/hjb.hpp"
#include "procspace/parallel.hpp"
#include "procspace/value.hpp"

namespace procspace {

namespace {

struct CandidateEval {
    double value = 0.0;
    std::vector<double> terms;  // k |I_t(xi_j)|^p
    std::vector<std::string> warnings;
};

double weighted_moment(const ProcessEnsemble& I, int node, double p, std::vector<double>* terms, double k) {
    std::vector<double> acc(static_cast<size_t>(I.size()));
    for (int j = 0; j < I.size(); ++j) {
        const double v = k * std::pow(I.particle(j).values().col(node).norm(), p);
        if (terms) (*terms)[static_cast<size_t>(j)] = v;
        acc[static_cast<size_t>(j)] = I.weight(j) * v;
    }
    return pairwise_sum(acc);
}

void validate(const SingularFunctional& phi, double t, const ProcessEnsemble& xi) {
    if (!(phi.k >= 0.0)) throw ParameterError("singular functional needs k >= 0");
    if (!(phi.p >= 2.0)) throw ParameterError("singular functional needs p >= 2");
    if (phi.sign != 1 && phi.sign != -1) throw ParameterError("singular functional sign must be +1 or -1");
    if (t < phi.t_tilde - 1e-12) throw RangeError("singular functional evaluated before its base time");
    if (phi.t_prime < phi.t_tilde - 1e-12) throw RangeError("t' precedes the base time");
    require_same_layout(xi, phi.xi_tilde, "singular functional base point");
    require_same_layout(xi, phi.xi_prime, "singular functional reference point");
}

CandidateEval evaluate_candidate(const SingularFunctional& phi, const ControlSpec& alpha, double t,
                                 const ProcessEnsemble& xi, const NoiseBundle& noise) {
    const TimeGrid& grid = xi.grid();
    const int kt = grid.node_at(t);
    const int kp = grid.node_at(phi.t_prime);
    CandidateEval out;
    out.terms.assign(static_cast<size_t>(xi.size()), 0.0);
    const LiftedIntegral li = integrate_lifted(phi.tilde, phi.t_tilde, phi.xi_tilde, alpha, xi, noise, phi.gamma_star);
    const LiftedIntegral lp =
        integrate_lifted(phi.tilde, phi.t_tilde, phi.xi_tilde, alpha, phi.xi_prime, noise, phi.gamma_star);
    out.value = weighted_moment(li.integrator, kt, phi.p, &out.terms, phi.k) +
                weighted_moment(lp.integrator, kp, phi.p, nullptr, phi.k) +
                (li.running[static_cast<size_t>(kt)] - li.running[static_cast<size_t>(kp)]);
    out.warnings = li.warnings;
    return out;
}

std::vector<ControlSpec> members_of(const ControlFamily& family) {
    if (!family.enumerable()) throw UnsupportedError("singular functional needs an enumerable control family");
    const std::uint64_t n = family.size();
    if (n == 0) throw DomainError("empty control family");
    if (n > (1u << 16)) throw UnsupportedError("control family too large for the singular functional");
    std::vector<ControlSpec> out;
    out.reserve(static_cast<size_t>(n));
    for (std::uint64_t i = 0; i < n; ++i) out.push_back(family.member(i));
    return out;
}

double lp_norm_vec(const ProcessEnsemble& X, const std::vector<Vec>& a, const std::vector<Vec>& b, double p) {
    double s = 0.0;
    for (int j = 0; j < X.size(); ++j) {
        s += X.weight(j) * std::pow((a[static_cast<size_t>(j)] - b[static_cast<size_t>(j)]).norm(), p);
    }
    return std::pow(s, 1.0 / p);
}

double lp_norm_mat(const ProcessEnsemble& X, const std::vector<Mat>& a, const std::vector<Mat>& b, double p) {
    double s = 0.0;
    for (int j = 0; j < X.size(); ++j) {
        const auto& A = a[static_cast<size_t>(j)];
        const auto& B = b[static_cast<size_t>(j)];
        if (A.rows() != B.rows() || A.cols() != B.cols()) {
            throw ShapeError("recorded diffusion and lifted diffusion have different shapes");
        }
        s += X.weight(j) * std::pow((A - B).norm(), p);
    }
    return std::pow(s, 1.0 / p);
}

}  // namespace

PhiValue phi_eval(const SingularFunctional& phi, double t, const ProcessEnsemble& xi, const ControlFamily& family,
                  const NoiseBundle& noise) {
    validate(phi, t, xi);
    const std::vector<ControlSpec> members = members_of(family);
    std::vector<CandidateEval> evals(members.size());
    for (size_t m = 0; m < members.size(); ++m) evals[m] = evaluate_candidate(phi, members[m], t, xi, noise);
    PhiValue out;
    double best = std::numeric_limits<double>::infinity();
    for (size_t m = 0; m < evals.size(); ++m) {
        out.candidates.push_back(evals[m].value);
        if (evals[m].value < best) {
            best = evals[m].value;
            out.argmin = m;
        }
        for (const auto& w : evals[m].warnings) {
            if (std::find(out.warnings.begin(), out.warnings.end(), w) == out.warnings.end()) out.warnings.push_back(w);
        }
    }
    out.value = phi.sign * best;
    out.particle_terms = std::move(evals[static_cast<size_t>(out.argmin)].terms);
    for (double& v : out.particle_terms) v *= phi.sign;
    return out;
}

RateReport phi_rate_check(const SingularFunctional& phi, const SimulationResult& X, double t, double delta,
                          const ControlFamily& family, const NoiseBundle& noise, int batches) {
    if (phi.sign != 1) throw ContractError("rate bounds are stated for the plus class");
    if (X.drift.empty() || X.diffusion.empty()) throw ContractError("simulation carries no recorded (beta, gamma)");
    const ProcessEnsemble& paths = X.paths;
    const TimeGrid& grid = paths.grid();
    const int k0 = grid.node_at(t);
    const int k1 = grid.node_at(t + delta);
    if (k1 <= k0) throw ParameterError("rate window must span at least one step");
    if (k0 < X.start_node || k1 > X.end_node) throw RangeError("rate window outside the recorded simulation");
    validate(phi, t, paths);

    RateReport rep;
    const double p = phi.p;
    rep.constant = std::max(p, p * (p - 1.0) / 2.0);
    rep.rate_case = t >= phi.t_prime - 1e-12 ? RateCase::after_anchor : RateCase::before_anchor;

    const PhiValue a = phi_eval(phi, t, paths, family, noise);
    const PhiValue b = phi_eval(phi, t + delta, paths, family, noise);
    rep.lhs = b.value - a.value;
    std::vector<double> diffs(static_cast<size_t>(paths.size()));
    for (size_t j = 0; j < diffs.size(); ++j) diffs[j] = b.particle_terms[j] - a.particle_terms[j];
    rep.std_error = batch_std_error(paths, diffs, batches);

    const std::vector<ControlSpec> members = members_of(family);
    const ControlSpec& best = members[static_cast<size_t>(a.argmin)];
    std::vector<ControlSpec> candidates;
    if (rep.rate_case == RateCase::after_anchor) {
        if (!family.concatenation_closed()) {
            rep.warnings.push_back("family not closed under concatenation; the bound may not apply");
        }
        for (const auto& m : members) candidates.push_back(best.concat(m, k0));
    } else {
        candidates.push_back(best);
    }

    // Integrators of every member and candidate along X; S_k is the largest p-norm among them.
    auto integrate = [&](const ControlSpec& c) {
        return integrate_lifted(phi.tilde, phi.t_tilde, phi.xi_tilde, c, paths, noise, phi.gamma_star);
    };
    std::vector<LiftedIntegral> cand_int;
    for (const auto& c : candidates) cand_int.push_back(integrate(c));
    std::vector<double> S(static_cast<size_t>(k1 - k0), 0.0);
    auto update_sup = [&](const LiftedIntegral& li) {
        for (int k = k0; k < k1; ++k) {
            const double m = std::pow(weighted_moment(li.integrator, k, p, nullptr, 1.0), 1.0 / p);
            S[static_cast<size_t>(k - k0)] = std::max(S[static_cast<size_t>(k - k0)], m);
        }
    };
    for (const auto& m : members) update_sup(integrate(m));
    for (const auto& li : cand_int) update_sup(li);

    const double dt = grid.dt();
    rep.rhs = std::numeric_limits<double>::infinity();
    for (const auto& li : cand_int) {
        double r = 0.0;
        for (int k = k0; k < k1; ++k) {
            const size_t kx = static_cast<size_t>(k - X.start_node);
            const size_t kl = static_cast<size_t>(k - li.start_node);
            const double s = S[static_cast<size_t>(k - k0)];
            const double db = lp_norm_vec(paths, X.drift[kx], li.drift[kl], p);
            const double ds = lp_norm_mat(paths, X.diffusion[kx], li.diffusion[kl], p);
            const double Ip = db * std::pow(s, p - 1.0) + ds * ds * std::pow(s, p - 2.0);
            const double f = li.running[static_cast<size_t>(k + 1)] - li.running[static_cast<size_t>(k)];
            r += rep.constant * phi.k * Ip * dt + f;
        }
        if (rep.rate_case == RateCase::before_anchor) r += delta * delta;
        rep.candidate_rhs.push_back(r);
        rep.rhs = std::min(rep.rhs, r);
    }
    rep.tolerance = 3.0 * rep.std_error + 1e-12 * std::max({1.0, std::abs(a.value), std::abs(b.value)});
    rep.pass = rep.lhs <= rep.rhs + rep.tolerance;
    return rep;
}

void ViscosityReport::write_csv(std::ostream& os) const {
    os << "delta,residual,stderr\n";
    os.precision(17);
    for (const auto& r : rows) os << r.delta << ',' << r.residual << ',' << r.std_error << '\n';
}

ViscosityReport viscosity_residual(const ProcessFunctional& U, const TestPair& pair, const CoefficientSet& coeffs,
                                   double t, const ProcessEnsemble& xi, ViscositySide side,
                                   const std::vector<double>& deltas, const ControlFamily& family,
                                   const NoiseBundle& noise, const ViscosityOptions& options) {
    const int expected = side == ViscositySide::sub ? 1 : -1;
    if (pair.sign != expected) throw ContractError("test pair sign does not match the tested side");
    if (pair.singular && pair.singular->sign != pair.sign) throw ContractError("singular part has the wrong sign");
    if (pair.singular && !pair.singular_family) throw ContractError("singular part needs its control family");
    if (deltas.empty()) throw ParameterError("empty delta ladder");
    const TimeGrid& grid = xi.grid();
    const int k0 = grid.node_at(t);

    auto singular_value = [&](double s, const ProcessEnsemble& z) -> PhiValue {
        if (!pair.singular) {
            PhiValue v;
            v.particle_terms.assign(static_cast<size_t>(z.size()), 0.0);
            return v;
        }
        return phi_eval(*pair.singular, s, z, *pair.singular_family, noise);
    };

    ViscosityReport rep;
    const SmoothEval e = smooth_eval(pair.smooth, t, xi);
    for (const auto& w : e.warnings) rep.warnings.push_back(w);
    const PhiValue phi0 = singular_value(t, xi);

    // Touching on a sampled cloud around (t, xi).
    const double D0 = U(t, xi) - e.value - phi0.value;
    double worst = 0.0;
    for (int c = 0; c < options.cloud; ++c) {
        const int ks = std::min(k0 + c % (options.cloud_steps + 1), grid.steps());
        const double s = grid.time(ks);
        ProcessEnsemble z = xi.stopped(k0);
        const CounterStream rng(options.seed, static_cast<std::uint32_t>(c));
        for (int q = 0; q < z.size(); ++q) {
            Vec shift(z.dim());
            for (int r = 0; r < z.dim(); ++r) {
                shift[r] = options.radius * rng.normal(static_cast<std::uint64_t>(q) * z.dim() + r);
            }
            z.particle(q).values().colwise() += shift;
        }
        const double D = U(s, z) - smooth_eval(pair.smooth, s, z).value - singular_value(s, z).value;
        worst = std::max(worst, side == ViscositySide::sub ? D - D0 : D0 - D);
    }
    rep.touching_slack = worst;
    rep.touching_ok = worst <= options.touch_tolerance;
    if (!rep.touching_ok) rep.warnings.push_back("test pair does not touch U within tolerance on the sampled cloud");

    const double dt = grid.dt();
    for (double delta : deltas) {
        const int k1 = grid.node_at(t + delta);
        if (k1 <= k0) throw ParameterError("delta must span at least one step");
        const ControlFamily heads = family.split(k1).first;
        const std::vector<ControlSpec> members = members_of(heads);
        ViscosityRow row;
        row.delta = grid.time(k1) - grid.time(k0);
        double best = std::numeric_limits<double>::infinity();
        for (size_t m = 0; m < members.size(); ++m) {
            SimulationOptions so;
            so.frozen = true;
            so.running_costs = false;
            so.end_node = k1;
            const SimulationResult r = simulate(coeffs, t, xi, members[m], noise, so);
            std::vector<double> hs;
            for (int k = k0; k < k1; ++k) {
                hs.push_back(hamiltonian_value(coeffs, t, xi, e.dX, e.dxX, r.actions_at(k), grid.time(k)) * dt);
            }
            const PhiValue phi1 = singular_value(grid.time(k1), r.paths);
            const double v = (pairwise_sum(hs) + phi1.value - phi0.value) / row.delta;
            if (v < best) {
                best = v;
                row.argmin = m;
                if (pair.singular) {
                    std::vector<double> diffs(static_cast<size_t>(xi.size()));
                    for (size_t j = 0; j < diffs.size(); ++j) {
                        diffs[j] = phi1.particle_terms[j] - phi0.particle_terms[j];
                    }
                    row.std_error = batch_std_error(xi, diffs, options.batches) / row.delta;
                } else {
                    row.std_error = 0.0;
                }
            }
        }
        row.residual = e.dt + best;
        rep.rows.push_back(row);
    }

    const size_t n = rep.rows.size();
    if (n >= 2) {
        double mx = 0, my = 0;
        for (const auto& r : rep.rows) {
            mx += r.delta / n;
            my += r.residual / n;
        }
        double sxx = 0, sxy = 0;
        for (const auto& r : rep.rows) {
            sxx += (r.delta - mx) * (r.delta - mx);
            sxy += (r.delta - mx) * (r.residual - my);
        }
        rep.slope = sxx > 0 ? sxy / sxx : 0.0;
        rep.intercept = my - rep.slope * mx;
    } else {
        rep.intercept = rep.rows[0].residual;
    }
    rep.sign_ok = true;
    for (const auto& r : rep.rows) {
        const double tol = 3.0 * r.std_error + 1e-10 * std::max(1.0, std::abs(r.residual));
        if (side == ViscositySide::sub ? r.residual < -tol : r.residual > tol) rep.sign_ok = false;
    }
    return rep;
}

}  // namespace procspace
