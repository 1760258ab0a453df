#include "procspace/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace procspace {

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "scenario", "seed", "t", "horizon", "steps", "particles.idio", "particles.common", "noise",
        "control.grid", "control.groups", "control.kind", "init", "init.mean", "init.std", "init.points",
        "init.weights", "delta", "fd.dx", "fd.pad", "fd.safety", "checks", "batches", "beta",
        "regularity.pairs", "regularity.scale", "regularity.h", "tol.lift_rel", "tol.ito", "tol.transform",
        "sweep.parameter", "sweep.ladder", "viscosity.shift", "viscosity.ladder"};
    return keys;
}

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace

bool known_config_key(const std::string& key) { return known_keys().count(key) || key.rfind("model.", 0) == 0; }

Config Config::parse(const std::string& text, const std::string& origin) {
    Config c;
    c.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(origin + ": expected key = value", n);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ParseError(origin + ": empty key", n);
        if (!known_config_key(key)) throw ParseError(origin + ": unknown key '" + key + "'", n);
        if (c.values_.count(key)) throw ParseError(origin + ": duplicate key '" + key + "'", n);
        c.values_[key] = value;
        c.lines_[key] = n;
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open config " + path, 0);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void Config::set_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ParseError("override must be key=value: " + assignment, 0);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
    if (!known_config_key(key)) throw ParseError("unknown key '" + key + "'", 0);
    values_[key] = value;
    lines_[key] = 0;
}

int Config::line_of(const std::string& key) const {
    const auto it = lines_.find(key);
    return it == lines_.end() ? 0 : it->second;
}

std::string Config::get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError(origin_ + ": '" + key + "' is not a number", line_of(key));
    }
}

int Config::get_int(const std::string& key, int fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const long v = std::stol(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw ParseError(origin_ + ": '" + key + "' is not an integer", line_of(key));
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        size_t pos = 0;
        const unsigned long long v = std::stoull(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ParseError(origin_ + ": '" + key + "' is not an unsigned integer", line_of(key));
    }
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::istringstream in(get(key, ""));
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

void Config::validate() const {
    auto require = [&](bool ok, const std::string& key, const std::string& what) {
        if (!ok) throw ParseError(origin_ + ": " + key + " " + what, line_of(key));
    };
    require(get_int("steps", 1) >= 1, "steps", "must be at least 1");
    require(get_int("particles.idio", 1) >= 1, "particles.idio", "must be at least 1");
    require(get_int("particles.common", 1) >= 1, "particles.common", "must be at least 1");
    require(get_double("horizon", 1.0) > 0.0, "horizon", "must be positive");
    require(get_double("t", 0.0) >= 0.0 && get_double("t", 0.0) < get_double("horizon", 1.0), "t",
            "must lie in [0, horizon)");
    require(get_int("batches", 16) >= 1, "batches", "must be at least 1");
    require(get_int("control.groups", 1) >= 1, "control.groups", "must be at least 1");
    const std::string noise = get("noise", "gaussian");
    require(noise == "gaussian" || noise == "tree", "noise", "must be gaussian or tree");
    const std::string kind = get("control.kind", "deterministic");
    require(kind == "deterministic" || kind == "feedback" || kind == "full_tree" || kind == "common_tree",
            "control.kind", "must be deterministic, feedback, full_tree or common_tree");
    const std::string init = get("init", "gaussian");
    require(init == "gaussian" || init == "constant" || init == "two_point" || init == "uniform", "init",
            "must be gaussian, constant, two_point or uniform");
    require(get_double("init.std", 1.0) >= 0.0, "init.std", "must be nonnegative");
    require(get_double("fd.dx", 0.05) > 0.0, "fd.dx", "must be positive");
    require(get_double("delta", 1.0) > 0.0, "delta", "must be positive");
    if (has("control.grid")) {
        try {
            (void)ActionGrid::parse(get("control.grid", "0"));
        } catch (const Error& e) {
            throw ParseError(origin_ + ": control.grid: " + e.what(), line_of("control.grid"));
        }
    }
}

// ---------------------------------------------------------------------------------------------

namespace {

struct Entry {
    const char* key;
    const char* description;
};

const std::vector<Entry>& registry() {
    static const std::vector<Entry> r = {
        {"heat", "b = 0, sigma = s, f = 0, g = x^2; V = E[xi_t^2] + s^2 (T - t)"},
        {"heat_cos", "b = 0, sigma = s, f = 0, g = cos x; V = E[cos xi_t] exp(-s^2 (T - t) / 2) (Gaussian noise)"},
        {"lq", "b = a, sigma = 1, f = x^2 + a^2, g = x^2; solved through the FD feedback"},
        {"drift_control", "b = a in {-1, 1}, sigma = 0, f = 0, g = x; V = E[xi_t] - (T - t)"},
        {"linear_payoff", "b = a in {-1, 0, 1}, sigma = 1, f = 0, g = x; V = E[xi_t] - (T - t)"},
        {"mean_reverting", "b = theta (E[X_t] - x) + a, sigma = 1, f = a^2 / 2, g = x^2"},
        {"ou", "b = -kappa x + a, sigma = s, f = (a^2 + x^2) / 2, g = x^2"},
        {"path_max", "b = a, sigma = 1, f = c a^2, g = max_s X_s (path-dependent payoff)"},
        {"mfc.heat_common", "b = 0, sigma = (s1, s0), g = x^2; V = E[xi_t^2] + (s1^2 + s0^2)(T - t)"},
        {"mfc.mean_field_drift", "b = a + batch mean, sigma = (1, s0), f = a^2, g = x^2"},
        {"mfc.crowd", "b = a, sigma = (1, s0), f = a^2 / 2 + l (x - batch mean)^2, g = x^2 + l (x - batch mean)^2"},
    };
    return r;
}

Vec vec1(double v) { return Vec::Constant(1, v); }
Mat mat1(double v) { return Mat::Constant(1, 1, v); }

double expect_state(const ProcessEnsemble& xi, double t, int power) {
    const int k = xi.grid().node_at(t);
    double s = 0.0;
    for (int p = 0; p < xi.size(); ++p) s += xi.weight(p) * std::pow(xi.value(p, k)[0], power);
    return s;
}

Scenario decoupled(const std::string& key, StateCoefficients sc, ActionGrid actions) {
    Scenario s;
    s.key = key;
    s.coeffs = state_coefficient_set(sc, key);
    s.state = std::move(sc);
    s.actions = std::move(actions);
    return s;
}

Scenario lifted(const std::string& key, CheckCoefficientSet check, ActionGrid actions) {
    Scenario s;
    s.key = key;
    s.coeffs = lift_coefficients(check);
    s.check = std::move(check);
    s.actions = std::move(actions);
    return s;
}

ActionGrid actions_from(const Config& cfg, const std::string& fallback) {
    return ActionGrid::parse(cfg.get("control.grid", fallback));
}

}  // namespace

std::vector<std::string> scenario_keys() {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.emplace_back(e.key);
    return out;
}

std::string scenario_description(const std::string& key) {
    for (const auto& e : registry()) {
        if (key == e.key) return e.description;
    }
    throw ParameterError("unknown scenario '" + key + "'");
}

Scenario make_scenario(const std::string& key, const Config& cfg) {
    Scenario s;
    if (key == "heat") {
        const double sig = cfg.get_double("model.sigma", 1.0);
        StateCoefficients sc;
        sc.drift = [](double, double, double) { return 0.0; };
        sc.volatility = [sig](double, double, double) { return sig; };
        sc.running = [](double, double, double) { return 0.0; };
        sc.terminal = [](double x) { return x * x; };
        sc.actions = {0.0};
        s = decoupled(key, sc, actions_from(cfg, "0"));
        const double T = cfg.get_double("horizon", 1.0);
        s.closed_form = [sig, T](double t, const ProcessEnsemble& xi) {
            return expect_state(xi, t, 2) + sig * sig * (T - t);
        };
        s.identity_volatility = sig == 1.0;
    } else if (key == "heat_cos") {
        const double sig = cfg.get_double("model.sigma", 1.0);
        StateCoefficients sc;
        sc.drift = [](double, double, double) { return 0.0; };
        sc.volatility = [sig](double, double, double) { return sig; };
        sc.running = [](double, double, double) { return 0.0; };
        sc.terminal = [](double x) { return std::cos(x); };
        sc.actions = {0.0};
        s = decoupled(key, sc, actions_from(cfg, "0"));
        const double T = cfg.get_double("horizon", 1.0);
        const bool tree = cfg.get("noise", "gaussian") == "tree";
        const double dt = T / cfg.get_int("steps", 8);
        // E cos(x + s W) = cos(x) exp(-s^2 tau / 2); on the tree each step contributes cos(s sqrt(dt)).
        s.closed_form = [sig, T, tree, dt](double t, const ProcessEnsemble& xi) {
            const int k = xi.grid().node_at(t);
            double m = 0.0;
            for (int p = 0; p < xi.size(); ++p) m += xi.weight(p) * std::cos(xi.value(p, k)[0]);
            const double factor = tree ? std::pow(std::cos(sig * std::sqrt(dt)), std::lround((T - t) / dt))
                                       : std::exp(-0.5 * sig * sig * (T - t));
            return m * factor;
        };
        s.identity_volatility = sig == 1.0;
    } else if (key == "lq") {
        StateCoefficients sc;
        sc.drift = [](double, double, double a) { return a; };
        sc.volatility = [](double, double, double) { return 1.0; };
        sc.running = [](double, double x, double a) { return x * x + a * a; };
        sc.terminal = [](double x) { return x * x; };
        const ActionGrid grid = actions_from(cfg, "-2,-1.5,-1,-0.5,0,0.5,1,1.5,2");
        for (const auto& a : grid.actions()) sc.actions.push_back(a[0]);
        s = decoupled(key, sc, grid);
        s.identity_volatility = true;
    } else if (key == "drift_control" || key == "linear_payoff") {
        const bool linear = key == "linear_payoff";
        const double sig = linear ? 1.0 : 0.0;
        StateCoefficients sc;
        sc.drift = [](double, double, double a) { return a; };
        sc.volatility = [sig](double, double, double) { return sig; };
        sc.running = [](double, double, double) { return 0.0; };
        sc.terminal = [](double x) { return x; };
        const ActionGrid grid = actions_from(cfg, linear ? "-1,0,1" : "-1,1");
        double amin = grid[0][0];
        for (const auto& a : grid.actions()) {
            sc.actions.push_back(a[0]);
            amin = std::min(amin, a[0]);
        }
        s = decoupled(key, sc, grid);
        const double T = cfg.get_double("horizon", 1.0);
        s.closed_form = [amin, T](double t, const ProcessEnsemble& xi) { return expect_state(xi, t, 1) + amin * (T - t); };
        s.identity_volatility = linear;
        s.lipschitz_payoff = true;
    } else if (key == "mean_reverting") {
        const double theta = cfg.get_double("model.theta", 1.0);
        s.key = key;
        s.actions = actions_from(cfg, "-1,0,1");
        CoefficientSet& c = s.coeffs;
        c.name = key;
        c.drift = [theta](const PointContext& ctx) {
            return vec1(theta * (ctx.law->mean_state()[0] - ctx.path.current()[0]) + (*ctx.action)[0]);
        };
        c.diffusion = [](const PointContext&) { return mat1(1.0); };
        c.running_point = [](double, const PathView&, const Vec& a) { return 0.5 * a[0] * a[0]; };
        c.terminal_point = [](const PathView& x) { return x.current()[0] * x.current()[0]; };
        derive_costs_from_pointwise(c);
        s.identity_volatility = true;
    } else if (key == "ou") {
        const double kappa = cfg.get_double("model.kappa", 1.0);
        const double sig = cfg.get_double("model.sigma", 0.5);
        StateCoefficients sc;
        sc.drift = [kappa](double, double x, double a) { return -kappa * x + a; };
        sc.volatility = [sig](double, double, double) { return sig; };
        sc.running = [](double, double x, double a) { return 0.5 * (a * a + x * x); };
        sc.terminal = [](double x) { return x * x; };
        const ActionGrid grid = actions_from(cfg, "-1,0,1");
        for (const auto& a : grid.actions()) sc.actions.push_back(a[0]);
        s = decoupled(key, sc, grid);
        s.identity_volatility = sig == 1.0;
    } else if (key == "path_max") {
        const double cost = cfg.get_double("model.cost", 0.1);
        s.key = key;
        s.actions = actions_from(cfg, "-1,0,1");
        CoefficientSet& c = s.coeffs;
        c.name = key;
        c.law_free = true;
        c.drift = [](const PointContext& ctx) { return vec1((*ctx.action)[0]); };
        c.diffusion = [](const PointContext&) { return mat1(1.0); };
        c.running_point = [cost](double, const PathView&, const Vec& a) { return cost * a[0] * a[0]; };
        c.terminal_point = [](const PathView& x) {
            double m = x.at(0)[0];
            for (int k = 1; k <= x.node(); ++k) m = std::max(m, x.at(k)[0]);
            return m;
        };
        derive_costs_from_pointwise(c);
        s.identity_volatility = true;
    } else if (key == "mfc.heat_common") {
        const double s1 = cfg.get_double("model.sigma_idio", 0.0);
        const double s0 = cfg.get_double("model.sigma_common", 1.0);
        CheckCoefficientSet ch;
        ch.name = key;
        ch.common_noise_dim = 1;
        ch.drift = [](double, const PathView&, const Vec&, const EnsembleView&) { return vec1(0.0); };
        ch.diffusion = [s1, s0](double, const PathView&, const Vec&, const EnsembleView&) {
            Mat m(1, 2);
            m << s1, s0;
            return m;
        };
        ch.terminal = [](const PathView& x, const EnsembleView&) { return x.current()[0] * x.current()[0]; };
        s = lifted(key, ch, actions_from(cfg, "0"));
        const double T = cfg.get_double("horizon", 1.0);
        s.closed_form = [s1, s0, T](double t, const ProcessEnsemble& xi) {
            return expect_state(xi, t, 2) + (s1 * s1 + s0 * s0) * (T - t);
        };
    } else if (key == "mfc.mean_field_drift") {
        const double s0 = cfg.get_double("model.sigma_common", 0.5);
        CheckCoefficientSet ch;
        ch.name = key;
        ch.common_noise_dim = s0 != 0.0 ? 1 : 0;
        ch.drift = [](double, const PathView&, const Vec& a, const EnsembleView& law) {
            return vec1(a[0] + law.mean_state()[0]);
        };
        const int m0 = ch.common_noise_dim;
        ch.diffusion = [s0, m0](double, const PathView&, const Vec&, const EnsembleView&) {
            Mat m(1, 1 + m0);
            m(0, 0) = 1.0;
            if (m0) m(0, 1) = s0;
            return m;
        };
        ch.running = [](double, const PathView&, const Vec& a, const EnsembleView&) { return a[0] * a[0]; };
        ch.terminal = [](const PathView& x, const EnsembleView&) { return x.current()[0] * x.current()[0]; };
        ch.meta.lipschitz = 1.0;
        s = lifted(key, ch, actions_from(cfg, "-1,0,1"));
    } else if (key == "mfc.crowd") {
        const double s0 = cfg.get_double("model.sigma_common", 0.5);
        const double lam = cfg.get_double("model.lambda", 1.0);
        CheckCoefficientSet ch;
        ch.name = key;
        ch.common_noise_dim = s0 != 0.0 ? 1 : 0;
        const int m0 = ch.common_noise_dim;
        ch.drift = [](double, const PathView&, const Vec& a, const EnsembleView&) { return vec1(a[0]); };
        ch.diffusion = [s0, m0](double, const PathView&, const Vec&, const EnsembleView&) {
            Mat m(1, 1 + m0);
            m(0, 0) = 1.0;
            if (m0) m(0, 1) = s0;
            return m;
        };
        ch.running = [lam](double, const PathView& x, const Vec& a, const EnsembleView& law) {
            const double dx = x.current()[0] - law.mean_state()[0];
            return 0.5 * a[0] * a[0] + lam * dx * dx;
        };
        ch.terminal = [lam](const PathView& x, const EnsembleView& law) {
            const double v = x.current()[0];
            const double dx = v - law.mean_state()[0];
            return v * v + lam * dx * dx;
        };
        ch.meta.lipschitz = 0.0;
        s = lifted(key, ch, actions_from(cfg, "-1,0,1"));
    } else {
        throw ParameterError("unknown scenario '" + key + "'");
    }
    s.description = scenario_description(key);
    return s;
}

ProcessEnsemble make_initial(const Config& cfg, const TimeGrid& grid, int dim, int n_common, int n_idio,
                             std::uint32_t stream) {
    const std::string init = cfg.get("init", "gaussian");
    const double mean = cfg.get_double("init.mean", 0.0);
    const double sd = cfg.get_double("init.std", 1.0);
    const std::uint64_t seed = cfg.get_u64("seed", 1);
    const CounterStream rng(seed, 0x10000u + stream);
    const int n = n_common * n_idio;
    std::vector<Vec> x0(static_cast<size_t>(n), Vec::Constant(dim, mean));
    std::vector<double> w(static_cast<size_t>(n), 1.0);
    if (init == "gaussian" || init == "uniform") {
        for (int p = 0; p < n; ++p) {
            for (int r = 0; r < dim; ++r) {
                const std::uint64_t idx = static_cast<std::uint64_t>(p) * dim + r;
                x0[static_cast<size_t>(p)][r] +=
                    init == "gaussian" ? sd * rng.normal(idx) : sd * std::sqrt(3.0) * (2.0 * rng.uniform(idx) - 1.0);
            }
        }
    } else if (init == "two_point") {
        std::vector<double> pts, wts;
        for (const auto& s : cfg.get_list("init.points")) pts.push_back(std::stod(s));
        for (const auto& s : cfg.get_list("init.weights")) wts.push_back(std::stod(s));
        if (pts.size() != 2) pts = {mean - sd, mean + sd};
        if (wts.size() != 2) wts = {0.5, 0.5};
        for (int p = 0; p < n; ++p) {
            const int which = (p % n_idio) % 2;
            x0[static_cast<size_t>(p)] = Vec::Constant(dim, pts[static_cast<size_t>(which)]);
            w[static_cast<size_t>(p)] = wts[static_cast<size_t>(which)];
        }
    }
    ProcessEnsemble xi = ProcessEnsemble::constant(grid, x0, n_common, n_idio);
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    xi.set_weights(std::move(w));
    return xi;
}

Setup make_setup(const Config& cfg) {
    cfg.validate();
    Setup s;
    const std::string key = cfg.get("scenario", "");
    if (key.empty()) throw ParseError(cfg.origin() + ": missing 'scenario'", 0);
    s.scenario = make_scenario(key, cfg);
    s.grid = TimeGrid(0.0, cfg.get_double("horizon", 1.0), cfg.get_int("steps", 8));
    try {
        s.k0 = s.grid.node_at(cfg.get_double("t", 0.0));
    } catch (const RangeError&) {
        throw ParseError(cfg.origin() + ": t must be a grid node", 0);
    }
    s.t = s.grid.time(s.k0);
    s.seed = cfg.get_u64("seed", 1);
    s.batches = cfg.get_int("batches", 16);
    const NoiseMode mode = cfg.get("noise", "gaussian") == "tree" ? NoiseMode::tree : NoiseMode::gaussian;
    const CoefficientSet& c = s.scenario.coeffs;
    s.noise = NoiseBundle(mode, s.seed, s.grid, c.idio_noise_dim, c.common_noise_dim,
                          mode == NoiseMode::tree ? s.k0 : 0);
    s.base = make_initial(cfg, s.grid, c.dim, cfg.get_int("particles.common", 1), cfg.get_int("particles.idio", 1000), 0);
    s.xi = tree_expand(s.base, s.noise);
    return s;
}

ControlFamily make_family(const Config& cfg, const Setup& s, int first) {
    const std::string kind = cfg.get("control.kind", "deterministic");
    const ActionGrid& actions = s.scenario.actions;
    const int N = s.grid.steps();
    if (kind == "full_tree") return ControlFamily::full_tree(actions, first, N);
    if (kind == "common_tree") return ControlFamily::common_tree(actions, first, N, s.noise, s.base.n_common());
    if (kind == "feedback") {
        if (!s.scenario.state) throw ContractError("feedback controls need a decoupled scenario");
        const StateCoefficients& sc = *s.scenario.state;
        const SpaceGrid space = padded_space_grid(-3.0, 3.0, cfg.get_double("fd.pad", 6.0), cfg.get_double("fd.dx", 0.05));
        const ValueTable table = fd_oracle(sc, space, stable_time_grid(sc, space, 0.0, s.grid.horizon(),
                                                                      cfg.get_double("fd.safety", 0.9)));
        return ControlFamily::explicit_list({feedback_from_table(table, actions, s.grid, first)}, true);
    }
    const int groups = cfg.get_int("control.groups", 1);
    const int nc = s.xi.n_common();
    const int cpg = groups == 1 ? (1 << 30) : std::max(1, (nc + groups - 1) / groups);
    return ControlFamily::deterministic(actions, first, N, groups, cpg);
}

}  // namespace procspace
