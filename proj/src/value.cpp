#include "procspace/value.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "procspace/parallel.hpp"

namespace procspace {

namespace {

constexpr std::uint64_t kMaxCandidates = std::uint64_t{1} << 20;
constexpr double kMaxTreeWork = 5e7;

EstimateMode mode_of(const NoiseBundle& noise) {
    return noise.mode() == NoiseMode::tree ? EstimateMode::exact_tree : EstimateMode::monte_carlo;
}

// Particle lists of the batch-means groups: whole common batches when there are several,
// otherwise contiguous idio ranges.
std::vector<std::vector<int>> mc_groups(const ProcessEnsemble& xi, int batches) {
    std::vector<std::vector<int>> groups;
    if (xi.n_common() > 1) {
        const int G = std::min(batches, xi.n_common());
        for (int g = 0; g < G; ++g) {
            std::vector<int> ps;
            for (int c = g * xi.n_common() / G; c < (g + 1) * xi.n_common() / G; ++c) {
                for (int i = 0; i < xi.n_idio(); ++i) ps.push_back(xi.index(c, i));
            }
            groups.push_back(std::move(ps));
        }
    } else {
        const int G = std::min(batches, xi.n_idio());
        for (int g = 0; g < G; ++g) {
            std::vector<int> ps;
            for (int i = g * xi.n_idio() / G; i < (g + 1) * xi.n_idio() / G; ++i) ps.push_back(xi.index(0, i));
            groups.push_back(std::move(ps));
        }
    }
    return groups;
}

double terminal_and_running(const CoefficientSet& coeffs, const SimulationResult& r, const ProcessEnsemble& xi,
                            const std::vector<int>* subset) {
    const TimeGrid& grid = xi.grid();
    const int N = grid.steps();
    const EnsembleView term(r.paths, N, nullptr, &r.noise_paths);
    double g = 0.0;
    if (coeffs.terminal) g = coeffs.terminal(subset ? term.subset(*subset) : term);
    std::vector<double> fs;
    if (coeffs.running) {
        for (int k = r.start_node; k < r.end_node; ++k) {
            if (!subset) {
                fs.push_back(r.running[static_cast<size_t>(k - r.start_node)]);
            } else {
                const EnsembleView law = r.law_at(k, xi);
                fs.push_back(coeffs.running(grid.time(k), law.subset(*subset)));
            }
        }
    }
    return g + grid.dt() * pairwise_sum(fs);
}

// ---- exact backward induction on the Rademacher tree -------------------------------------

struct Atom {
    int particle = 0;  // representative slot
    double weight = 0.0;
    TreeKey key;       // base particle and prefixes at the start node
};

std::vector<Atom> tree_atoms(const ProcessEnsemble& xi, const NoiseBundle& noise, int k0) {
    if (noise.mode() != NoiseMode::tree) throw ContractError("tree atoms need a tree noise bundle");
    if (xi.n_common() % static_cast<int>(noise.common_branches()) != 0 ||
        xi.n_idio() % static_cast<int>(noise.idio_branches()) != 0) {
        throw ShapeError("ensemble is not a tree expansion of the noise bundle");
    }
    std::map<TreeKey, size_t> index;
    std::vector<Atom> atoms;
    for (int p = 0; p < xi.size(); ++p) {
        const int c = xi.common_of(p);
        const int i = xi.idio_of(p);
        const TreeSlot s = noise.slot(c, i);
        const TreeKey key{s.base_common, s.base_idio, k0, noise.common_prefix(c, k0), noise.idio_prefix(i, k0)};
        const auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, atoms.size());
            atoms.push_back(Atom{p, xi.weight(p), key});
        } else {
            Atom& a = atoms[it->second];
            const auto& v0 = xi.particle(a.particle).values();
            const auto& v1 = xi.particle(p).values();
            if ((v0.leftCols(k0 + 1) - v1.leftCols(k0 + 1)).cwiseAbs().maxCoeff() != 0.0) {
                throw ContractError("slots of one tree atom carry different histories");
            }
            a.weight += xi.weight(p);
        }
    }
    return atoms;
}

struct TreeSolver {
    const CoefficientSet& coeffs;
    const NoiseBundle& noise;
    const ActionGrid& grid;
    const EnsembleView& dummy_law;
    int last = 0;
    int base_common = 0;
    int base_idio = 0;

    struct Result {
        double value = 0.0;
        std::vector<std::pair<TreeKey, int>> policy;
    };

    Result solve(int k, Mat& path, Mat& bpath, std::uint64_t cpre, std::uint64_t ipre) const {
        const TimeGrid& tg = noise.grid();
        if (k == last) return {coeffs.terminal_point(PathView(path, k)), {}};
        const double dt = tg.dt();
        const double s = tg.time(k);
        const int m1 = noise.idio_dim();
        const int m0 = noise.common_dim();
        const int m = m1 + m0;
        const int branches = 1 << m;
        const double h = std::sqrt(dt);
        const int shift = k - noise.first_step();
        Result best;
        best.value = std::numeric_limits<double>::infinity();
        int best_action = 0;
        for (int a = 0; a < grid.size(); ++a) {
            PointContext ctx;
            ctx.t = s;
            ctx.node = k;
            ctx.path = PathView(path, k);
            ctx.action = &grid[a];
            ctx.law = &dummy_law;
            ctx.noise = PathView(bpath, k);
            const Vec b = coeffs.drift(ctx);
            const Mat sig = coeffs.diffusion(ctx);
            const double f = coeffs.running_point(s, PathView(path, k), grid[a]);
            const Vec x = path.col(k) + b * dt;
            const Vec bk = bpath.col(k);
            double acc = 0.0;
            std::vector<std::pair<TreeKey, int>> policy;
            Vec dB(m);
            for (int br = 0; br < branches; ++br) {
                for (int j = 0; j < m; ++j) dB[j] = ((br >> j) & 1) ? h : -h;
                path.col(k + 1) = x + sig * dB;
                bpath.col(k + 1) = bk + dB;
                const std::uint64_t ib = static_cast<std::uint64_t>(br) & ((std::uint64_t{1} << m1) - 1);
                const std::uint64_t cb = static_cast<std::uint64_t>(br) >> m1;
                Result child = solve(k + 1, path, bpath, cpre | (cb << (shift * m0)), ipre | (ib << (shift * m1)));
                acc += child.value;
                policy.insert(policy.end(), child.policy.begin(), child.policy.end());
            }
            const double v = f * dt + acc / branches;
            if (!std::isfinite(v)) throw NumericError("non-finite value in backward induction", k);
            if (v < best.value) {
                best.value = v;
                best.policy = std::move(policy);
                best_action = a;
            }
        }
        best.policy.emplace_back(TreeKey{base_common, base_idio, k, cpre, ipre}, best_action);
        return best;
    }
};

ValueEstimate tree_value(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlFamily& family,
                         const NoiseBundle& noise) {
    if (noise.mode() != NoiseMode::tree) throw ContractError("full-tree families need tree noise");
    if (!coeffs.law_free || !coeffs.pointwise()) {
        throw ContractError("backward induction needs law-free dynamics and pointwise costs");
    }
    const TimeGrid& grid = xi.grid();
    const int k0 = grid.node_at(t);
    const int N = grid.steps();
    if (family.first_step() > k0 || family.last_step() != N) throw RangeError("tree family must cover [t, T]");
    if (k0 < noise.first_step()) throw RangeError("tree noise starts after t");
    const double work = std::pow(static_cast<double>(family.grid().size()) * std::pow(2.0, noise.dim()), N - k0);
    if (work > kMaxTreeWork) throw UnsupportedError("tree backward induction exceeds the work cap");

    const std::vector<Atom> atoms = tree_atoms(xi, noise, k0);
    const ProcessEnsemble bpaths = noise.cumulative(xi.n_common(), xi.n_idio());
    const EnsembleView dummy(xi, k0);
    std::vector<double> vals(atoms.size());
    std::vector<std::vector<std::pair<TreeKey, int>>> policies(atoms.size());
    parallel_for(static_cast<int>(atoms.size()), [&](int j) {
        const Atom& a = atoms[static_cast<size_t>(j)];
        Mat path = xi.particle(a.particle).values();
        Mat bpath = bpaths.particle(a.particle).values();
        TreeSolver solver{coeffs, noise, family.grid(), dummy, N, a.key.base_common, a.key.base_idio};
        auto r = solver.solve(k0, path, bpath, a.key.common_prefix, a.key.idio_prefix);
        vals[static_cast<size_t>(j)] = a.weight * r.value;
        policies[static_cast<size_t>(j)] = std::move(r.policy);
    });
    std::map<TreeKey, int> table;
    for (auto& pol : policies) {
        for (auto& [k, a] : pol) table.emplace(k, a);
    }
    ValueEstimate out;
    out.value = pairwise_sum(vals);
    out.mode = EstimateMode::exact_tree;
    out.argmin = ControlSpec::tree_indexed(family.grid(), std::move(table), k0, N, false);
    return out;
}

// Tree decisions for every atom of xi and every branch inside [k0, k1).
std::vector<TreeKey> window_keys(const ProcessEnsemble& xi, const NoiseBundle& noise, int k0, int k1) {
    std::vector<TreeKey> keys;
    const int m0 = noise.common_dim();
    const int m1 = noise.idio_dim();
    for (const Atom& a : tree_atoms(xi, noise, k0)) {
        for (int k = k0; k < k1; ++k) {
            const int steps = k - k0;
            const int base = k0 - noise.first_step();
            for (std::uint64_t e = 0; e < (std::uint64_t{1} << ((m0 + m1) * steps)); ++e) {
                std::uint64_t cext = 0, iext = 0;
                for (int j = 0; j < steps; ++j) {
                    const std::uint64_t bits = (e >> ((m0 + m1) * j)) & ((std::uint64_t{1} << (m0 + m1)) - 1);
                    iext |= (bits & ((std::uint64_t{1} << m1) - 1)) << (m1 * (base + j));
                    cext |= (bits >> m1) << (m0 * (base + j));
                }
                keys.push_back(TreeKey{a.key.base_common, a.key.base_idio, k, a.key.common_prefix | cext,
                                       a.key.idio_prefix | iext});
            }
        }
    }
    return keys;
}

}  // namespace

const char* to_string(EstimateMode m) { return m == EstimateMode::exact_tree ? "exact-tree" : "monte-carlo"; }

double batch_std_error(const ProcessEnsemble& xi, const std::vector<double>& per_particle, int batches) {
    if (static_cast<int>(per_particle.size()) != xi.size()) throw ShapeError("one value per particle expected");
    if (batches < 2) return 0.0;
    const auto groups = mc_groups(xi, batches);
    const int G = static_cast<int>(groups.size());
    if (G < 2) return 0.0;
    std::vector<double> J(static_cast<size_t>(G), 0.0), W(static_cast<size_t>(G), 0.0);
    double mean = 0.0;
    for (int g = 0; g < G; ++g) {
        for (int p : groups[static_cast<size_t>(g)]) {
            W[static_cast<size_t>(g)] += xi.weight(p);
            J[static_cast<size_t>(g)] += xi.weight(p) * per_particle[static_cast<size_t>(p)];
        }
        mean += J[static_cast<size_t>(g)];
        if (W[static_cast<size_t>(g)] > 0) J[static_cast<size_t>(g)] /= W[static_cast<size_t>(g)];
    }
    double var = 0.0;
    for (int g = 0; g < G; ++g) {
        const double dv = J[static_cast<size_t>(g)] - mean;
        var += W[static_cast<size_t>(g)] * W[static_cast<size_t>(g)] * dv * dv;
    }
    return std::sqrt(var * G / (G - 1.0));
}

ValueEstimate cost_J(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlSpec& control,
                     const NoiseBundle& noise, const ValueOptions& options) {
    const SimulationResult r = simulate(coeffs, t, xi, control, noise);
    ValueEstimate out;
    out.mode = mode_of(noise);
    out.argmin = control;
    out.value = terminal_and_running(coeffs, r, xi, nullptr);
    out.candidates = {out.value};
    if (out.mode == EstimateMode::monte_carlo && options.batches > 1) {
        const auto groups = mc_groups(xi, options.batches);
        const int G = static_cast<int>(groups.size());
        if (G >= 2) {
            std::vector<double> J(static_cast<size_t>(G)), W(static_cast<size_t>(G));
            for (int g = 0; g < G; ++g) {
                J[static_cast<size_t>(g)] = terminal_and_running(coeffs, r, xi, &groups[static_cast<size_t>(g)]);
                double w = 0.0;
                for (int p : groups[static_cast<size_t>(g)]) w += xi.weight(p);
                W[static_cast<size_t>(g)] = w;
            }
            double mean = 0.0;
            for (int g = 0; g < G; ++g) mean += W[static_cast<size_t>(g)] * J[static_cast<size_t>(g)];
            double var = 0.0;
            for (int g = 0; g < G; ++g) {
                const double dv = J[static_cast<size_t>(g)] - mean;
                var += W[static_cast<size_t>(g)] * W[static_cast<size_t>(g)] * dv * dv;
            }
            out.std_error = std::sqrt(var * G / (G - 1.0));
        }
    }
    return out;
}

ValueEstimate value_V(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, const ControlFamily& family,
                      const NoiseBundle& noise, const ValueOptions& options) {
    if (family.kind() == FamilyKind::full_tree) return tree_value(coeffs, t, xi, family, noise);
    const std::uint64_t S = family.size();
    if (S == 0) throw DomainError("empty control family");
    if (S > kMaxCandidates) throw UnsupportedError("control family exceeds 2^20 members");
    std::vector<ValueEstimate> est(static_cast<size_t>(S));
    parallel_for(static_cast<int>(S), [&](int j) {
        est[static_cast<size_t>(j)] = cost_J(coeffs, t, xi, family.member(static_cast<std::uint64_t>(j)), noise, options);
    });
    ValueEstimate out;
    out.mode = mode_of(noise);
    out.value = std::numeric_limits<double>::infinity();
    for (std::uint64_t j = 0; j < S; ++j) {
        out.candidates.push_back(est[j].value);
        if (est[j].value < out.value) {
            out.value = est[j].value;
            out.std_error = est[j].std_error;
            out.argmin_index = j;
        }
    }
    out.argmin = std::move(est[out.argmin_index].argmin);
    return out;
}

DppReport check_dpp(const CoefficientSet& coeffs, double t, const ProcessEnsemble& xi, double delta,
                    const ControlFamily& family, const NoiseBundle& noise, const ValueOptions& options) {
    const TimeGrid& grid = xi.grid();
    const int k0 = grid.node_at(t);
    const int k1 = grid.node_at(t + delta);
    if (k1 <= k0 || k1 >= grid.steps()) throw RangeError("delta must be a positive multiple of dt ending before T");
    DppReport rep;
    rep.mode = mode_of(noise);
    const ValueEstimate vt = value_V(coeffs, t, xi, family, noise, options);
    rep.value_t = vt.value;
    auto [head_family, tail_family] = family.split(k1);
    rep.one_sided = !family.concatenation_closed();
    if (rep.one_sided) rep.warnings.push_back("family not closed under concatenation: one-sided check");

    std::vector<ControlSpec> heads;
    if (family.kind() == FamilyKind::full_tree) {
        const auto keys = window_keys(xi, noise, k0, k1);
        const auto A = static_cast<std::uint64_t>(family.grid().size());
        std::uint64_t count = 1;
        for (size_t j = 0; j < keys.size(); ++j) {
            if (count > kMaxCandidates / A) throw UnsupportedError("too many head controls to enumerate");
            count *= A;
        }
        for (std::uint64_t idx = 0; idx < count; ++idx) {
            std::map<TreeKey, int> table;
            std::uint64_t r = idx;
            for (const auto& key : keys) {
                table.emplace(key, static_cast<int>(r % A));
                r /= A;
            }
            heads.push_back(ControlSpec::tree_indexed(family.grid(), std::move(table), k0, k1, false));
        }
    } else {
        const std::uint64_t S = head_family.size();
        if (S > kMaxCandidates) throw UnsupportedError("too many head controls to enumerate");
        for (std::uint64_t j = 0; j < S; ++j) heads.push_back(head_family.member(j));
    }
    rep.heads = heads.size();

    std::vector<double> rhs(heads.size()), se(heads.size());
    parallel_for(static_cast<int>(heads.size()), [&](int j) {
        SimulationOptions o;
        o.end_node = k1;
        const SimulationResult r = simulate(coeffs, t, xi, heads[static_cast<size_t>(j)], noise, o);
        double run = 0.0;
        {
            std::vector<double> fs(r.running.begin(), r.running.end());
            run = grid.dt() * pairwise_sum(fs);
        }
        const ValueEstimate v = value_V(coeffs, t + delta, r.paths, tail_family, noise, options);
        rhs[static_cast<size_t>(j)] = v.value + run;
        se[static_cast<size_t>(j)] = v.std_error;
    });
    size_t best = 0;
    for (size_t j = 1; j < rhs.size(); ++j) {
        if (rhs[j] < rhs[best]) best = j;
    }
    rep.rhs = rhs[best];
    rep.gap = rep.value_t - rep.rhs;
    if (rep.mode == EstimateMode::exact_tree) {
        rep.tolerance = 1e-12 * std::max(1.0, std::abs(rep.value_t));
    } else {
        rep.std_error = std::sqrt(vt.std_error * vt.std_error + se[best] * se[best]);
        rep.tolerance = std::max(3.0 * rep.std_error, 1e-12 * std::max(1.0, std::abs(rep.value_t)));
    }
    rep.pass = rep.one_sided ? rep.gap >= -rep.tolerance : std::abs(rep.gap) <= rep.tolerance;
    return rep;
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

RegularityReport estimate_regularity(const CoefficientSet& coeffs, const std::vector<RegularityPair>& pairs,
                                     const FamilyFactory& family, const NoiseBundle& noise, double beta,
                                     const ValueOptions& options) {
    RegularityReport rep;
    for (const auto& pr : pairs) {
        const TimeGrid& grid = pr.xi.grid();
        const int k1 = grid.node_at(pr.t);
        const int k2 = grid.node_at(pr.t2);
        if (k1 == k2) {
            const double dn = process_norm(pr.xi.stopped(k1).minus(pr.xi2.stopped(k1)), 2.0);
            if (dn == 0.0) {
                ++rep.filtered;
                continue;
            }
            const auto a = value_V(coeffs, pr.t, pr.xi, family(k1), noise, options);
            const auto b = value_V(coeffs, pr.t, pr.xi2, family(k1), noise, options);
            const double den = std::pow(dn, beta);
            rep.spatial.push_back(std::abs(a.value - b.value) / den);
            rep.spatial_std_error.push_back(std::hypot(a.std_error, b.std_error) / den);
        } else {
            const auto a = value_V(coeffs, pr.t, pr.xi, family(k1), noise, options);
            const auto b = value_V(coeffs, pr.t2, pr.xi, family(k2), noise, options);
            const double den = (1.0 + process_norm(pr.xi, 2.0, std::max(pr.t, pr.t2))) *
                               std::pow(std::abs(pr.t - pr.t2), beta / 2.0);
            rep.temporal.push_back(std::abs(a.value - b.value) / den);
            rep.temporal_std_error.push_back(std::hypot(a.std_error, b.std_error) / den);
        }
    }
    rep.spatial_median = median(rep.spatial);
    rep.temporal_median = median(rep.temporal);
    for (double q : rep.spatial) rep.spatial_max = std::max(rep.spatial_max, q);
    for (double q : rep.temporal) rep.temporal_max = std::max(rep.temporal_max, q);
    return rep;
}

bool regularity_unstable(const RegularityReport& coarse, const RegularityReport& fine, double factor) {
    return fine.spatial_max > factor * std::max(coarse.spatial_max, 1e-300) ||
           fine.temporal_max > factor * std::max(coarse.temporal_max, 1e-300);
}

}  // namespace procspace
