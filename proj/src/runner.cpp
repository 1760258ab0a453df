#include "procspace/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "procspace/gauge.hpp"
#include "procspace/hjb.hpp"
#include "procspace/meanfield.hpp"
#include "procspace/sde.hpp"
#include "procspace/value.hpp"

namespace procspace {

namespace {

const std::vector<std::string>& all_checks() {
    static const std::vector<std::string> names = {"value_V",       "check_dpp",   "check_lift",
                                                   "transform",     "regularity",  "ito",
                                                   "law_invariance", "decomposition", "lipschitz"};
    return names;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
    return s;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

double tree_tol(double v) { return 1e-12 * std::max(1.0, std::abs(v)); }

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::ofstream f(std::filesystem::path(dir) / name);
    if (!f) throw Error("cannot write " + name + " in " + dir);
    return f;
}

// xi with particles moved by scale * N(0, 1) per particle (constant along the path).
ProcessEnsemble perturbed(const ProcessEnsemble& xi, double scale, std::uint64_t seed, std::uint32_t stream) {
    ProcessEnsemble out = xi;
    const CounterStream rng(seed, 0x20000u + stream);
    for (int p = 0; p < out.size(); ++p) {
        Vec z(out.dim());
        for (int r = 0; r < out.dim(); ++r) z[r] = scale * rng.normal(static_cast<std::uint64_t>(p) * out.dim() + r);
        out.particle(p).values().colwise() += z;
    }
    return out;
}

// Perturbs the base ensemble so that tree atoms keep a single history, then expands it.
ProcessEnsemble perturbed_setup(const Setup& s, double scale, std::uint32_t stream) {
    return tree_expand(perturbed(s.base, scale, s.seed, stream), s.noise);
}

int delta_steps(const Config& cfg, const Setup& s) {
    const int remaining = s.grid.steps() - s.k0;
    if (remaining < 2) throw ParameterError("DPP needs at least two remaining steps");
    if (!cfg.has("delta")) return std::max(1, remaining / 2);
    const double d = cfg.get_double("delta", 0.0);
    const int k = static_cast<int>(std::lround(d / s.grid.dt()));
    if (k < 1 || k >= remaining || std::abs(k * s.grid.dt() - d) > 1e-9 * s.grid.dt() + 1e-12) {
        throw ParameterError("delta must be a whole number of steps inside the horizon");
    }
    return k;
}

ValueTable lift_table(const Config& cfg, const Setup& s) {
    const StateCoefficients& sc = *s.scenario.state;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (int p = 0; p < s.xi.size(); ++p) {
        lo = std::min(lo, s.xi.value(p, s.k0)[0]);
        hi = std::max(hi, s.xi.value(p, s.k0)[0]);
    }
    const double sig = std::abs(sc.volatility(s.t, 0.0, sc.actions.front()));
    double bmax = 0.0;
    for (double a : sc.actions) bmax = std::max(bmax, std::abs(sc.drift(s.t, 0.0, a)));
    const double T = s.grid.horizon() - s.t;
    const double pad = cfg.get_double("fd.pad", 6.0) * std::max(sig, 0.1) * std::sqrt(T) + bmax * T;
    const SpaceGrid space = padded_space_grid(lo, hi, pad, cfg.get_double("fd.dx", 0.05));
    return fd_oracle(sc, space, stable_time_grid(sc, space, s.t, s.grid.horizon(), cfg.get_double("fd.safety", 0.9)));
}

CheckResult run_check(const std::string& name, const Config& cfg, const Setup& s, const std::string& out_dir) {
    CheckResult r;
    r.name = name;
    const CoefficientSet& coeffs = s.scenario.coeffs;
    ValueOptions vo;
    vo.batches = s.batches;
    const bool tree = s.noise.mode() == NoiseMode::tree;
    if (name == "value_V") {
        const ValueEstimate v = value_V(coeffs, s.t, s.xi, make_family(cfg, s, s.k0), s.noise, vo);
        r.value = v.value;
        r.detail = to_string(v.mode);
        if (s.scenario.closed_form) {
            r.reference = s.scenario.closed_form(s.t, s.xi);
            r.gap = v.value - r.reference;
            r.tolerance = tree ? tree_tol(r.reference) : 3.0 * v.std_error + tree_tol(r.reference);
            r.pass = std::abs(r.gap) <= r.tolerance;
        } else {
            r.reference = std::numeric_limits<double>::quiet_NaN();
            r.tolerance = v.std_error;
            r.pass = std::isfinite(v.value);
            r.detail += "; no closed form";
        }
    } else if (name == "check_dpp") {
        const int ks = delta_steps(cfg, s);
        const DppReport d = check_dpp(coeffs, s.t, s.xi, ks * s.grid.dt(), make_family(cfg, s, s.k0), s.noise, vo);
        r.value = d.value_t;
        r.reference = d.rhs;
        r.gap = d.gap;
        r.tolerance = d.tolerance;
        r.pass = d.pass;
        r.detail = std::string(to_string(d.mode)) + (d.one_sided ? "; one-sided" : "");
        if (!d.warnings.empty()) r.detail += "; " + join(d.warnings);
    } else if (name == "check_lift") {
        if (!s.scenario.state) throw ContractError("check_lift needs a decoupled scenario");
        const ValueTable table = lift_table(cfg, s);
        const double rel = cfg.get_double("tol.lift_rel", tree ? 0.0 : 0.02);
        double ev = 0.0;
        for (int p = 0; p < s.xi.size(); ++p) ev += s.xi.weight(p) * table.at(s.t, s.xi.value(p, s.k0)[0]);
        const LiftReport l = check_lift(table, coeffs, s.t, s.xi, make_family(cfg, s, s.k0), s.noise,
                                        rel * std::abs(ev), vo);
        r.value = l.particle_value;
        r.reference = l.lifted_value;
        r.gap = l.gap;
        r.tolerance = l.tolerance;
        r.pass = l.pass;
        r.detail = to_string(l.mode);
        if (!out_dir.empty()) {
            auto f = open_out(out_dir, "lift_table.csv");
            table.write_csv(f, 20);
        }
    } else if (name == "transform") {
        if (!s.scenario.identity_volatility) throw ContractError("transform needs identity volatility");
        const ControlFamily fam = make_family(cfg, s, s.k0);
        if (!fam.enumerable() || fam.kind() == FamilyKind::explicit_list) {
            throw UnsupportedError("transform needs an enumerable open-loop family");
        }
        const TransformReport t = transform_constant_vol(coeffs, s.t, s.xi, fam, s.noise, vo);
        r.value = t.direct;
        r.reference = t.transformed;
        r.gap = t.direct - t.transformed;
        r.tolerance = cfg.get_double("tol.transform", 1e-10);
        r.pass = t.gap <= r.tolerance && t.argmin_direct == t.argmin_transformed;
    } else if (name == "regularity") {
        const int n = cfg.get_int("regularity.pairs", 20);
        const double scale = cfg.get_double("regularity.scale", 0.1);
        const int hsteps = std::max(1, std::min(cfg.get_int("regularity.h", 1), s.grid.steps() - s.k0 - 1));
        std::vector<RegularityPair> pairs;
        for (int j = 0; j < n; ++j) {
            RegularityPair p;
            p.t = p.t2 = s.t;
            p.xi = s.xi;
            if (j % 2 == 0) {
                p.xi2 = perturbed_setup(s, scale, static_cast<std::uint32_t>(j));
            } else {
                p.xi = perturbed_setup(s, scale, static_cast<std::uint32_t>(j));
                p.xi2 = p.xi;
                p.t2 = s.grid.time(s.k0 + hsteps);
            }
            pairs.push_back(std::move(p));
        }
        const FamilyFactory factory = [&](int first) { return make_family(cfg, s, first); };
        const RegularityReport g = estimate_regularity(coeffs, pairs, factory, s.noise, cfg.get_double("beta", 1.0), vo);
        r.value = std::max(g.spatial_max, g.temporal_max);
        r.reference = std::max(g.spatial_median, g.temporal_median);
        r.gap = r.value - 10.0 * r.reference;
        r.tolerance = 0.0;
        r.pass = g.spatial_max <= 10.0 * g.spatial_median + 1e-12 && g.temporal_max <= 10.0 * g.temporal_median + 1e-12;
        std::ostringstream d;
        d.precision(4);
        d << g.spatial.size() << " spatial (max " << g.spatial_max << ", median " << g.spatial_median << "), "
          << g.temporal.size() << " temporal (max " << g.temporal_max << ", median " << g.temporal_median << ")";
        if (s.scenario.lipschitz_payoff) {
            for (size_t j = 0; j < g.spatial.size(); ++j) {
                if (g.spatial[j] > 1.0 + 3.0 * g.spatial_std_error[j] + 1e-12) r.pass = false;
            }
            d << "; 1-Lipschitz bound checked";
        }
        r.detail = d.str();
        if (!out_dir.empty()) {
            auto f = open_out(out_dir, "regularity.csv");
            f.precision(17);
            f << "kind,quotient,stderr\n";
            for (size_t j = 0; j < g.spatial.size(); ++j) f << "spatial," << g.spatial[j] << ',' << g.spatial_std_error[j] << '\n';
            for (size_t j = 0; j < g.temporal.size(); ++j) f << "temporal," << g.temporal[j] << ',' << g.temporal_std_error[j] << '\n';
        }
    } else if (name == "ito") {
        SmoothFunctional phi;
        phi.t_hat = s.t;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 0.0, s.grid.horizon());
        SimulationOptions so;
        so.record_coefficients = true;
        int smallest = 0;
        for (int a = 1; a < s.scenario.actions.size(); ++a) {
            if (s.scenario.actions[a].norm() < s.scenario.actions[smallest].norm()) smallest = a;
        }
        const ControlSpec ctrl = ControlSpec::constant(s.scenario.actions, smallest, s.k0, s.grid.steps());
        const SimulationResult sim = simulate(coeffs, s.t, s.xi, ctrl, s.noise, so);
        const ItoReport it = ito_check(phi, sim, s.t, s.grid.horizon());
        r.value = it.lhs;
        r.reference = it.integral;
        r.gap = it.conditional_residual;
        r.tolerance = cfg.get_double("tol.ito", 0.05);
        r.pass = it.conditional_residual <= r.tolerance;
        std::ostringstream d;
        d.precision(6);
        d << "plain residual " << it.residual;
        r.detail = d.str();
    } else if (name == "law_invariance") {
        if (!s.scenario.check) throw ContractError("law_invariance needs a mean-field scenario");
        ProcessEnsemble xi2 = s.xi;
        std::vector<double> w(static_cast<size_t>(s.xi.size()));
        for (int c = 0; c < s.xi.n_common(); ++c) {
            for (int i = 0; i < s.xi.n_idio(); ++i) {
                const int src = s.xi.index(c, s.xi.n_idio() - 1 - i);
                xi2.particle(s.xi.index(c, i)) = s.xi.particle(src);
                w[static_cast<size_t>(s.xi.index(c, i))] = s.xi.weight(src);
            }
        }
        xi2.set_weights(std::move(w));
        const InvarianceReport inv = check_law_invariance(*s.scenario.check, s.t, s.xi, xi2, InvarianceMode::permutation,
                                                          make_family(cfg, s, s.k0), s.noise, vo);
        r.value = inv.first.value;
        r.reference = inv.second.value;
        r.gap = inv.gap;
        r.tolerance = inv.tolerance;
        r.pass = inv.pass;
        r.detail = "idio permutation";
    } else if (name == "decomposition") {
        if (!s.scenario.check) throw ContractError("decomposition needs a mean-field scenario");
        DecompositionOptions o;
        o.value = vo;
        if (tree && s.grid.steps() - s.k0 >= 2) o.dpp_delta = delta_steps(cfg, s) * s.grid.dt();
        const DecompositionReport d =
            check_decomposition(*s.scenario.check, s.t, s.xi, make_family(cfg, s, s.k0), s.noise, o);
        r.value = d.lifted.value;
        r.reference = d.average;
        r.gap = d.gap;
        r.tolerance = d.tolerance;
        r.pass = d.pass;
        r.detail = to_string(d.lifted.mode);
        if (d.dpp) {
            r.detail += "; conditional DPP gap " + std::to_string(d.dpp->gap);
            r.pass = r.pass && d.dpp->pass;
        }
        if (!d.warnings.empty()) r.detail += "; " + join(d.warnings);
    } else if (name == "lipschitz") {
        if (!s.scenario.check) throw ContractError("lipschitz needs a mean-field scenario");
        std::vector<std::pair<ProcessEnsemble, ProcessEnsemble>> pairs;
        const double scale = cfg.get_double("regularity.scale", 0.1);
        for (int j = 0; j < 5; ++j) {
            pairs.emplace_back(s.xi, perturbed_setup(s, scale * (j + 1), 100u + static_cast<std::uint32_t>(j)));
        }
        const LipschitzReport l = lipschitz_probe(*s.scenario.check, s.t, pairs, s.scenario.actions);
        r.value = l.max_ratio;
        r.reference = 1.0;
        r.gap = static_cast<double>(l.violations);
        r.tolerance = 0.0;
        r.pass = l.violations == 0;
        r.detail = std::to_string(l.lhs.size()) + " probes";
    } else {
        throw ParameterError("unknown check '" + name + "'");
    }
    return r;
}

}  // namespace

bool RunReport::pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

void RunReport::write_csv(std::ostream& os) const {
    os << "check,value,reference,gap,tolerance,pass,detail\n";
    os.precision(17);
    for (const auto& c : checks) {
        os << c.name << ',' << c.value << ',' << c.reference << ',' << c.gap << ',' << c.tolerance << ','
           << (c.pass ? "true" : "false") << ',' << csv_field(c.detail) << '\n';
    }
}

std::vector<std::string> check_names() { return all_checks(); }

RunReport run_scenario(const Config& cfg, const std::string& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> checks = cfg.get_list("checks");
    if (checks.empty()) checks = {"value_V"};
    for (const auto& c : checks) {
        if (std::find(all_checks().begin(), all_checks().end(), c) == all_checks().end()) {
            throw ParameterError("unknown check '" + c + "'");
        }
    }
    const Setup s = make_setup(cfg);
    RunReport rep;
    rep.scenario = s.scenario.key;
    rep.seed = s.seed;
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
    for (const auto& name : checks) {
        try {
            rep.checks.push_back(run_check(name, cfg, s, out_dir));
        } catch (const std::exception& e) {
            CheckResult r;
            r.name = name;
            r.value = r.reference = r.gap = std::numeric_limits<double>::quiet_NaN();
            r.pass = false;
            r.detail = std::string("error: ") + e.what();
            rep.checks.push_back(r);
        }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) {
        auto f = open_out(out_dir, "report.csv");
        rep.write_csv(f);
    }
    return rep;
}

void SweepReport::write_csv(std::ostream& os) const {
    os << "parameter,level,x,value,stderr,error\n";
    os.precision(17);
    for (const auto& l : levels) {
        os << parameter << ',' << csv_field(l.level) << ',' << l.x << ',' << l.value << ',' << l.std_error << ','
           << l.error << '\n';
    }
    os << "# metric," << metric << "\n# slope,";
    if (slope) {
        os << *slope;
    } else {
        os << "none";
    }
    os << '\n';
}

SweepReport sweep(const Config& cfg, const std::string& parameter, const std::vector<std::string>& ladder,
                  const std::string& out_dir) {
    static const std::vector<std::string> allowed = {"steps", "particles.idio", "particles.common",
                                                     "control.grid", "delta", "fd.dx"};
    if (std::find(allowed.begin(), allowed.end(), parameter) == allowed.end()) {
        throw ParameterError("cannot sweep '" + parameter + "'");
    }
    if (ladder.empty()) throw ParameterError("empty sweep ladder");
    SweepReport rep;
    rep.parameter = parameter;
    for (const auto& level : ladder) {
        Config c = cfg;
        c.set(parameter, level);
        c.validate();
        const Setup s = make_setup(c);
        ValueOptions vo;
        vo.batches = s.batches;
        SweepLevel L;
        L.level = level;
        if (parameter == "fd.dx") {
            if (!s.scenario.state) throw ContractError("fd.dx sweeps need a decoupled scenario");
            const ValueTable table = lift_table(c, s);
            L.x = table.space.dx();
            double err = 0.0;
            const double mean = c.get_double("init.mean", 0.0);
            // Without a closed form the reference is the same scheme on a grid four times finer
            // than the finest level.
            std::optional<ValueTable> fine;
            if (!s.scenario.closed_form) {
                double finest = std::numeric_limits<double>::infinity();
                for (const auto& l : ladder) finest = std::min(finest, std::stod(l));
                Config fc = c;
                fc.set("fd.dx", std::to_string(finest / 4.0));
                fine = lift_table(fc, s);
            }
            for (int j = 0; j < table.space.nodes(); ++j) {
                const double x = table.space.x(j);
                if (std::abs(x - mean) > 2.0) continue;
                double ref;
                if (fine) {
                    ref = fine->at(s.t, x);
                } else {
                    const ProcessEnsemble point = ProcessEnsemble::constant(s.grid, {Vec::Constant(1, x)}, 1, 1);
                    ref = s.scenario.closed_form(s.t, point);
                }
                err = std::max(err, std::abs(table.v(0, j) - ref));
            }
            L.value = table.at(s.t, mean);
            L.error = err;
        } else if (parameter == "delta") {
            const int ks = delta_steps(c, s);
            const DppReport d = check_dpp(s.scenario.coeffs, s.t, s.xi, ks * s.grid.dt(), make_family(c, s, s.k0), s.noise, vo);
            L.x = ks * s.grid.dt();
            L.value = d.gap;
            L.std_error = d.std_error;
            L.error = std::abs(d.gap);
        } else {
            const ValueEstimate v = value_V(s.scenario.coeffs, s.t, s.xi, make_family(c, s, s.k0), s.noise, vo);
            L.value = v.value;
            L.std_error = v.std_error;
            if (s.scenario.closed_form) L.error = std::abs(v.value - s.scenario.closed_form(s.t, s.xi));
            if (parameter == "control.grid") {
                L.x = s.scenario.actions.size();
            } else {
                L.x = std::stod(level);
            }
        }
        rep.levels.push_back(L);
    }
    const bool particles = parameter == "particles.idio" || parameter == "particles.common";
    rep.metric = particles ? "stderr" : "error";
    std::vector<double> xs, ys;
    for (const auto& l : rep.levels) {
        const double y = particles ? l.std_error : l.error;
        if (l.x > 0 && y > 0) {
            xs.push_back(l.x);
            ys.push_back(y);
        }
    }
    if (rep.levels.size() < 2) {
        rep.warnings.push_back("ladder of length 1: no slope");
    } else if (xs.size() < 2) {
        rep.warnings.push_back("fewer than two positive levels: no slope");
    } else {
        rep.slope = loglog_slope(xs, ys);
    }
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        auto f = open_out(out_dir, "sweep.csv");
        rep.write_csv(f);
        if (xs.size() >= 2) {
            write_svg_plot((std::filesystem::path(out_dir) / "sweep.svg").string(), "sweep over " + parameter,
                           {Series{rep.metric, xs, ys}}, true, true, parameter, rep.metric);
        }
    }
    return rep;
}

void write_svg_plot(const std::string& path, const std::string& title, const std::vector<Series>& series, bool log_x,
                    bool log_y, const std::string& x_label, const std::string& y_label) {
    const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
    auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series) {
        for (size_t i = 0; i < s.x.size(); ++i) {
            if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0))) continue;
            x0 = std::min(x0, tx(s.x[i]));
            x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    }
    if (!(x1 > x0)) x1 = x0 + 1, x0 -= 1;
    if (!(y1 > y0)) y1 = y0 + 1, y0 -= 1;
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    f << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    f << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    f << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label
      << (log_x ? " (log10)" : "") << "</text>\n";
    f << "<text x=\"16\" y=\"" << H / 2 << "\" transform=\"rotate(-90 16 " << H / 2
      << ")\" text-anchor=\"middle\" font-size=\"12\">" << y_label << (log_y ? " (log10)" : "") << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
        const double X = L + (W - L - R) * i / 4.0, Y = H - B - (H - T - B) * i / 4.0;
        f << "<text x=\"" << X << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">" << xv
          << "</text>\n";
        f << "<text x=\"" << L - 6 << "\" y=\"" << Y + 3 << "\" text-anchor=\"end\" font-size=\"10\">" << yv
          << "</text>\n";
    }
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
    for (size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* col = colors[k % 5];
        f << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0))) continue;
            f << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
        }
        f << "\"/>\n";
        for (size_t i = 0; i < s.x.size(); ++i) {
            if ((log_x && !(s.x[i] > 0)) || (log_y && !(s.y[i] > 0))) continue;
            f << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        }
        f << "<text x=\"" << W - R - 4 << "\" y=\"" << T + 14 * (k + 1) << "\" text-anchor=\"end\" font-size=\"11\" fill=\""
          << col << "\">" << s.label << "</text>\n";
    }
    f << "</svg>\n";
}

}  // namespace procspace
