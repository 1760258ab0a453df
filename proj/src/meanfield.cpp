#include "procspace/meanfield.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "procspace/metrics.hpp"
#include "procspace/parallel.hpp"

namespace procspace {

void CheckCoefficientSet::validate() const {
    if (dim < 1 || idio_noise_dim < 0 || common_noise_dim < 0 || action_dim < 1) {
        throw ParameterError("mean-field data has invalid dimensions");
    }
    if (idio_noise_dim + common_noise_dim < 1) throw ParameterError("mean-field data needs a noise");
    if (!drift || !diffusion || !terminal) throw ContractError("mean-field data needs drift, diffusion and terminal");
}

CoefficientSet lift_coefficients(const CheckCoefficientSet& check) {
    check.validate();
    CoefficientSet c;
    c.name = check.name;
    c.dim = check.dim;
    c.idio_noise_dim = check.idio_noise_dim;
    c.common_noise_dim = check.common_noise_dim;
    c.action_dim = check.action_dim;
    c.meta = check.meta;
    c.law_free = false;
    const auto b = check.drift;
    c.drift = [b](const PointContext& ctx) {
        return b(ctx.t, ctx.path, *ctx.action, ctx.law->batch_of_common(ctx.common));
    };
    const auto s = check.diffusion;
    c.diffusion = [s](const PointContext& ctx) {
        return s(ctx.t, ctx.path, *ctx.action, ctx.law->batch_of_common(ctx.common));
    };
    if (check.running) {
        const auto f = check.running;
        c.running = [f](double t, const EnsembleView& law) {
            // Batch views carry renormalized weights; the outer weights are taken from `law`.
            std::vector<double> terms(static_cast<size_t>(law.size()));
            for (int j = 0; j < law.size(); ++j) {
                const EnsembleView batch = law.batch_of_common(law.common(j));
                terms[static_cast<size_t>(j)] = law.weight(j) * f(t, law.path(j), law.action(j), batch);
            }
            return pairwise_sum(terms);
        };
    }
    const auto g = check.terminal;
    c.terminal = [g](const EnsembleView& law) {
        std::vector<double> terms(static_cast<size_t>(law.size()));
        for (int j = 0; j < law.size(); ++j) {
            terms[static_cast<size_t>(j)] = law.weight(j) * g(law.path(j), law.batch_of_common(law.common(j)));
        }
        return pairwise_sum(terms);
    };
    return c;
}

namespace {

// Map from the particles of b to particles of a with the same path up to node k and the same
// weight, respecting batches. Throws ContractError when no such map exists.
std::vector<std::array<int, 2>> permutation_map(const ProcessEnsemble& a, const ProcessEnsemble& b, int k) {
    auto key = [k](const ProcessEnsemble& e, int p) {
        std::vector<double> v;
        const auto& m = e.particle(p).values();
        for (int j = 0; j <= k; ++j) {
            for (int r = 0; r < m.rows(); ++r) v.push_back(m(r, j));
        }
        v.push_back(e.weight(p));
        return v;
    };
    std::map<std::vector<double>, std::vector<int>> pool;
    for (int p = a.size() - 1; p >= 0; --p) pool[key(a, p)].push_back(p);
    std::vector<std::array<int, 2>> map(static_cast<size_t>(b.size()));
    std::vector<int> common_of(static_cast<size_t>(b.n_common()), -1);
    std::vector<char> used(static_cast<size_t>(a.n_common()), 0);
    for (int q = 0; q < b.size(); ++q) {
        auto it = pool.find(key(b, q));
        if (it == pool.end() || it->second.empty()) throw ContractError("second ensemble is not a permutation of the first");
        // Prefer a source particle in the batch already matched to this common index.
        auto& cands = it->second;
        const int want = common_of[static_cast<size_t>(b.common_of(q))];
        auto pick = cands.end() - 1;
        if (want >= 0) {
            pick = std::find_if(cands.begin(), cands.end(), [&](int p) { return a.common_of(p) == want; });
            if (pick == cands.end()) throw ContractError("permutation does not preserve common batches");
        }
        const int p = *pick;
        cands.erase(pick);
        const int c = a.common_of(p);
        if (want < 0) {
            if (used[static_cast<size_t>(c)]) throw ContractError("permutation does not preserve common batches");
            used[static_cast<size_t>(c)] = 1;
            common_of[static_cast<size_t>(b.common_of(q))] = c;
        }
        map[static_cast<size_t>(q)] = {c, a.idio_of(p)};
    }
    return map;
}

}  // namespace

InvarianceReport check_law_invariance(const CheckCoefficientSet& check, double t, const ProcessEnsemble& xi,
                                      const ProcessEnsemble& xi2, InvarianceMode mode, const ControlFamily& family,
                                      const NoiseBundle& noise, const ValueOptions& options) {
    require_same_layout(xi, xi2, "law invariance");
    const CoefficientSet coeffs = lift_coefficients(check);
    InvarianceReport rep;
    rep.mode = mode;
    rep.first = value_V(coeffs, t, xi, family, noise, options);
    if (mode == InvarianceMode::permutation) {
        const int k = xi.grid().node_at(t);
        const auto map = permutation_map(xi, xi2, k);
        const NoiseBundle moved = noise.remapped(map, xi.n_idio());
        rep.second = value_V(coeffs, t, xi2, family, moved, options);
        rep.gap = std::abs(rep.first.value - rep.second.value);
        rep.tolerance = 1e-12 * std::max(1.0, std::abs(rep.first.value));
    } else {
        rep.second = value_V(coeffs, t, xi2, family, noise, options);
        rep.gap = std::abs(rep.first.value - rep.second.value);
        rep.tolerance = 3.0 * std::hypot(rep.first.std_error, rep.second.std_error) +
                        1e-12 * std::max(1.0, std::abs(rep.first.value));
    }
    rep.pass = rep.gap <= rep.tolerance;
    return rep;
}

DecompositionReport check_decomposition(const CheckCoefficientSet& check, double t, const ProcessEnsemble& xi,
                                        const ControlFamily& family, const NoiseBundle& noise,
                                        const DecompositionOptions& options) {
    const CoefficientSet coeffs = lift_coefficients(check);
    DecompositionReport rep;
    rep.lifted = value_V(coeffs, t, xi, family, noise, options.value);

    // Control groups as lists of common indices.
    std::vector<std::vector<int>> groups;
    if (family.kind() == FamilyKind::deterministic) {
        const int G = family.groups();
        const int cpg = family.commons_per_group();
        groups.resize(static_cast<size_t>(G));
        for (int c = 0; c < xi.n_common(); ++c) groups[static_cast<size_t>(std::min(c / cpg, G - 1))].push_back(c);
        groups.erase(std::remove_if(groups.begin(), groups.end(), [](const auto& g) { return g.empty(); }),
                     groups.end());
        // A single action leaves nothing to coordinate across batches.
        rep.factorizes = family.grid().size() == 1 ||
                         std::all_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() == 1; });
    } else {
        throw UnsupportedError("decomposition needs a deterministic family");
    }
    if (!rep.factorizes) rep.warnings.push_back("control family does not factorize per common batch; gap is one-sided");

    const ControlFamily local = family.for_group();
    std::vector<std::vector<int>> per_batch;
    for (int c = 0; c < xi.n_common(); ++c) per_batch.push_back({c});
    std::vector<double> se2;
    for (const auto& commons : per_batch) {
        const ProcessEnsemble sub = xi.select_commons(commons);
        const NoiseBundle nsub = noise.select_commons(commons, xi.n_idio());
        const ValueEstimate v = value_V(coeffs, t, sub, local, nsub, options.value);
        double w = 0.0;
        for (int c : commons) w += xi.batch_weight(c);
        rep.batch_values.push_back(v.value);
        rep.batch_weights.push_back(w);
        se2.push_back(w * w * v.std_error * v.std_error);
    }
    std::vector<double> terms;
    for (size_t g = 0; g < rep.batch_values.size(); ++g) terms.push_back(rep.batch_weights[g] * rep.batch_values[g]);
    rep.average = pairwise_sum(terms);
    rep.gap = rep.lifted.value - rep.average;
    rep.std_error = rep.lifted.std_error;
    rep.tolerance = 1e-12 * std::max(1.0, std::abs(rep.lifted.value));
    if (rep.lifted.mode == EstimateMode::monte_carlo) {
        double s = rep.lifted.std_error * rep.lifted.std_error;
        for (double v : se2) s += v;
        rep.tolerance += 3.0 * std::sqrt(s);
    }
    rep.pass = rep.factorizes ? std::abs(rep.gap) <= rep.tolerance : rep.gap >= -rep.tolerance;

    if (options.dpp_delta) rep.dpp = check_dpp(coeffs, t, xi, *options.dpp_delta, family, noise, options.value);
    if (!options.regularity.empty()) {
        const int first = family.first_step();
        const int last = family.last_step();
        const ActionGrid grid = family.grid();
        const int G = family.groups();
        const int cpg = family.commons_per_group();
        FamilyFactory factory = [=](int from) {
            return ControlFamily::deterministic(grid, std::max(from, first), last, G, cpg);
        };
        rep.regularity = estimate_regularity(coeffs, options.regularity, factory, noise, options.beta, options.value);
    }
    return rep;
}

LipschitzReport lipschitz_probe(const CheckCoefficientSet& check, double t,
                                const std::vector<std::pair<ProcessEnsemble, ProcessEnsemble>>& pairs,
                                const ActionGrid& actions) {
    check.validate();
    LipschitzReport rep;
    const double L = check.meta.lipschitz;
    for (const auto& [a, b] : pairs) {
        require_same_layout(a, b, "Lipschitz probe");
        const int k = a.grid().node_at(t);
        for (int act = 0; act < actions.size(); ++act) {
            const std::vector<Vec> acts(static_cast<size_t>(a.size()), actions[act]);
            const EnsembleView la(a, k, &acts);
            const EnsembleView lb(b, k, &acts);
            for (int c = 0; c < a.n_common(); ++c) {
                const double w2 = wasserstein_p(conditional_law(a, c, t), conditional_law(b, c, t), 2.0);
                const EnsembleView ba = la.batch_of_common(c);
                const EnsembleView bb = lb.batch_of_common(c);
                for (int i = 0; i < a.n_idio(); ++i) {
                    const int p = a.index(c, i);
                    const PathView x(a.particle(p).values(), k);
                    const double lhs = (check.drift(t, x, actions[act], ba) - check.drift(t, x, actions[act], bb)).norm();
                    const double rhs = L * w2;
                    rep.lhs.push_back(lhs);
                    rep.rhs.push_back(rhs);
                    if (lhs > rhs * (1.0 + 1e-12) + 1e-14) ++rep.violations;
                    if (rhs > 0) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
                }
            }
        }
    }
    return rep;
}

}  // namespace procspace
