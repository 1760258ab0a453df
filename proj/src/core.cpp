#include "procspace/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "procspace/noise.hpp"
#include "procspace/parallel.hpp"

namespace procspace {

TimeGrid::TimeGrid(double start, double horizon, int steps)
    : start_(start), horizon_(horizon), steps_(steps) {
    if (steps <= 0) throw ParameterError("time grid needs at least one step");
    if (!(horizon > start)) throw ParameterError("time grid horizon must exceed its start");
    dt_ = (horizon - start) / steps;
}

double TimeGrid::time(int k) const {
    if (k < 0 || k > steps_) throw RangeError("grid node " + std::to_string(k) + " out of range");
    return k == steps_ ? horizon_ : start_ + k * dt_;
}

bool TimeGrid::is_node(double t) const noexcept {
    const double r = (t - start_) / dt_;
    const double k = std::round(r);
    return k >= 0 && k <= steps_ && std::abs(r - k) <= 1e-9;
}

int TimeGrid::node_at(double t) const {
    if (!is_node(t)) {
        throw RangeError("time " + std::to_string(t) + " is not a node of the grid [" + std::to_string(start_) +
                         ", " + std::to_string(horizon_) + "]");
    }
    return static_cast<int>(std::lround((t - start_) / dt_));
}

PathSample::PathSample(TimeGrid grid, int dim) : grid_(grid), values_(Mat::Zero(dim, grid.nodes())) {}

PathSample::PathSample(TimeGrid grid, Mat values) : grid_(grid), values_(std::move(values)) {
    if (values_.cols() != grid_.nodes()) throw ShapeError("path length does not match grid");
}

double PathSample::sup_norm(int until) const {
    double m = 0.0;
    for (int k = 0; k <= until; ++k) m = std::max(m, values_.col(k).norm());
    return m;
}

PathSample stopped_path(const PathSample& x, double t) {
    const int k = x.grid().node_at(t);
    Mat v = x.values();
    for (int j = k + 1; j < v.cols(); ++j) v.col(j) = v.col(k);
    return PathSample(x.grid(), std::move(v));
}

Vec PathView::at(int k) const {
    const int j = std::min(k, node_);
    if (shift_) return values_->col(j) + shift_->col(j);
    return values_->col(j);
}

PathView PathView::shifted(const PathView& by) const {
    if (shift_) throw ContractError("path view is already shifted");
    if (by.values_->rows() != values_->rows()) throw ShapeError("shift path dimension mismatch");
    return PathView(*values_, node_, by.values_);
}

double PathView::sup_norm() const {
    double m = 0.0;
    for (int k = 0; k <= node_; ++k) m = std::max(m, at(k).norm());
    return m;
}

ProcessEnsemble::ProcessEnsemble(TimeGrid grid, int dim, int n_common, int n_idio)
    : grid_(grid), dim_(dim), n_common_(n_common), n_idio_(n_idio) {
    if (dim <= 0 || n_common <= 0 || n_idio <= 0) throw ParameterError("ensemble counts must be positive");
    particles_.assign(static_cast<size_t>(n_common) * n_idio, PathSample(grid, dim));
    weights_.assign(particles_.size(), 1.0 / static_cast<double>(particles_.size()));
}

ProcessEnsemble ProcessEnsemble::constant(TimeGrid grid, const std::vector<Vec>& initial, int n_common,
                                          int n_idio) {
    if (initial.empty()) throw DomainError("no initial values");
    ProcessEnsemble e(grid, static_cast<int>(initial[0].size()), n_common, n_idio);
    if (initial.size() != 1 && static_cast<int>(initial.size()) != e.size()) {
        throw ShapeError("initial values must be one per particle or a single broadcast value");
    }
    for (int p = 0; p < e.size(); ++p) {
        const Vec& v = initial.size() == 1 ? initial[0] : initial[static_cast<size_t>(p)];
        if (v.size() != e.dim()) throw ShapeError("initial value dimension mismatch");
        e.particles_[static_cast<size_t>(p)].values().colwise() = v;
    }
    return e;
}

void ProcessEnsemble::set_weights(std::vector<double> w) {
    if (w.size() != particles_.size()) throw ShapeError("one weight per particle required");
    for (double x : w) {
        if (!(x >= 0.0)) throw DomainError("weights must be nonnegative");
    }
    if (std::abs(pairwise_sum(w) - 1.0) > 1e-12) throw DomainError("weights must sum to 1");
    weights_ = std::move(w);
}

double ProcessEnsemble::batch_weight(int c) const {
    double s = 0.0;
    for (int i = 0; i < n_idio_; ++i) s += weights_[static_cast<size_t>(index(c, i))];
    return s;
}

ProcessEnsemble ProcessEnsemble::stopped(int k) const {
    ProcessEnsemble out = *this;
    for (auto& path : out.particles_) {
        for (int j = k + 1; j < path.values().cols(); ++j) path.values().col(j) = path.values().col(k);
    }
    return out;
}

ProcessEnsemble ProcessEnsemble::select_commons(const std::vector<int>& commons) const {
    if (commons.empty()) throw DomainError("empty common selection");
    ProcessEnsemble out(grid_, dim_, static_cast<int>(commons.size()), n_idio_);
    std::vector<double> w(static_cast<size_t>(out.size()));
    double total = 0.0;
    for (size_t g = 0; g < commons.size(); ++g) {
        const int c = commons[g];
        if (c < 0 || c >= n_common_) throw RangeError("common index out of range");
        for (int i = 0; i < n_idio_; ++i) {
            const int src = index(c, i);
            const int dst = out.index(static_cast<int>(g), i);
            out.particles_[static_cast<size_t>(dst)] = particles_[static_cast<size_t>(src)];
            w[static_cast<size_t>(dst)] = weights_[static_cast<size_t>(src)];
            total += weights_[static_cast<size_t>(src)];
        }
    }
    if (!(total > 0.0)) throw DomainError("selected batches carry no weight");
    for (double& x : w) x /= total;
    out.weights_ = std::move(w);
    return out;
}

ProcessEnsemble ProcessEnsemble::minus(const ProcessEnsemble& other) const {
    require_same_layout(*this, other, "ensemble difference");
    ProcessEnsemble out = *this;
    for (size_t p = 0; p < particles_.size(); ++p) out.particles_[p].values() -= other.particles_[p].values();
    return out;
}

void require_same_layout(const ProcessEnsemble& a, const ProcessEnsemble& b, const char* what) {
    if (!(a.grid() == b.grid())) throw ShapeError(std::string(what) + ": grids differ");
    if (a.dim() != b.dim()) throw ShapeError(std::string(what) + ": dimensions differ");
    if (a.n_common() != b.n_common() || a.n_idio() != b.n_idio()) {
        throw ShapeError(std::string(what) + ": batch layouts differ");
    }
}

double process_norm(const ProcessEnsemble& xi, double p, std::optional<double> t) {
    if (xi.size() == 0) throw DomainError("process norm of an empty ensemble");
    if (!(p >= 1.0)) throw DomainError("process norm needs p >= 1");
    const int until = t ? xi.grid().node_at(*t) : xi.grid().steps();
    std::vector<double> terms(static_cast<size_t>(xi.size()));
    parallel_for(xi.size(), [&](int i) {
        terms[static_cast<size_t>(i)] = xi.weight(i) * std::pow(xi.particle(i).sup_norm(until), p);
    });
    return std::pow(pairwise_sum(terms), 1.0 / p);
}

std::shared_ptr<const EnsembleView::Data> EnsembleView::build(const ProcessEnsemble& ens, int node,
                                                              std::vector<int> idx,
                                                              const std::vector<Vec>* actions,
                                                              const ProcessEnsemble* noise,
                                                              const ProcessEnsemble* shift, bool split) {
    if (idx.empty()) throw DomainError("empty law view");
    auto d = std::make_shared<Data>();
    d->ens = &ens;
    d->node = node;
    d->actions = actions;
    d->noise = noise;
    d->shift = shift;
    d->idx = std::move(idx);
    d->w.resize(d->idx.size());
    double total = 0.0;
    for (size_t j = 0; j < d->idx.size(); ++j) {
        d->w[j] = ens.weight(d->idx[j]);
        total += d->w[j];
    }
    if (!(total > 0.0)) {
        for (double& w : d->w) w = 1.0 / static_cast<double>(d->w.size());
    } else {
        for (double& w : d->w) w /= total;
    }
    d->mean = Vec::Zero(ens.dim());
    for (size_t j = 0; j < d->idx.size(); ++j) {
        const int p = d->idx[j];
        Vec x = ens.particle(p).values().col(node);
        if (shift) x += shift->particle(p).values().col(node);
        d->mean += d->w[j] * x;
    }
    if (split) {
        std::vector<int> commons;
        commons.reserve(d->idx.size());
        for (int p : d->idx) commons.push_back(ens.common_of(p));
        std::vector<int> uniq = commons;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() > 1) {
            std::vector<std::vector<int>> groups(uniq.size());
            for (size_t j = 0; j < d->idx.size(); ++j) {
                const auto g = std::lower_bound(uniq.begin(), uniq.end(), commons[j]) - uniq.begin();
                groups[static_cast<size_t>(g)].push_back(d->idx[j]);
            }
            d->batch_commons = uniq;
            for (auto& g : groups) d->batches.push_back(build(ens, node, std::move(g), actions, noise, shift, false));
        } else {
            d->batch_commons = uniq;
        }
    }
    return d;
}

EnsembleView::EnsembleView(const ProcessEnsemble& ens, int node, const std::vector<Vec>* actions,
                           const ProcessEnsemble* noise) {
    std::vector<int> idx(static_cast<size_t>(ens.size()));
    std::iota(idx.begin(), idx.end(), 0);
    d_ = build(ens, node, std::move(idx), actions, noise, nullptr, true);
}

EnsembleView::EnsembleView(const ProcessEnsemble& ens, int node, std::vector<int> particles,
                           const std::vector<Vec>* actions, const ProcessEnsemble* noise,
                           const ProcessEnsemble* shift)
    : d_(build(ens, node, std::move(particles), actions, noise, shift, true)) {}

PathView EnsembleView::path(int j) const {
    const int p = particle(j);
    return PathView(d_->ens->particle(p).values(), d_->node,
                    d_->shift ? &d_->shift->particle(p).values() : nullptr);
}

Vec EnsembleView::state(int j) const {
    const int p = particle(j);
    Vec x = d_->ens->particle(p).values().col(d_->node);
    if (d_->shift) x += d_->shift->particle(p).values().col(d_->node);
    return x;
}

const Vec& EnsembleView::action(int j) const {
    if (!d_->actions) throw ContractError("law view carries no actions");
    return (*d_->actions)[static_cast<size_t>(particle(j))];
}

int EnsembleView::batch_count() const noexcept {
    return d_->batches.empty() ? 1 : static_cast<int>(d_->batches.size());
}

EnsembleView EnsembleView::batch_at(int b) const {
    if (d_->batches.empty()) {
        if (b != 0) throw RangeError("batch index out of range");
        return *this;
    }
    return EnsembleView(d_->batches.at(static_cast<size_t>(b)));
}

EnsembleView EnsembleView::batch_of_common(int c) const {
    if (d_->batches.empty()) {
        if (d_->batch_commons.empty() || d_->batch_commons[0] != c) throw RangeError("common index not in view");
        return *this;
    }
    const auto it = std::lower_bound(d_->batch_commons.begin(), d_->batch_commons.end(), c);
    if (it == d_->batch_commons.end() || *it != c) throw RangeError("common index not in view");
    return EnsembleView(d_->batches[static_cast<size_t>(it - d_->batch_commons.begin())]);
}

EnsembleView EnsembleView::subset(std::vector<int> particles) const {
    return EnsembleView(build(*d_->ens, d_->node, std::move(particles), d_->actions, d_->noise, d_->shift, true));
}

EnsembleView EnsembleView::shifted_by_noise() const {
    if (!d_->noise) throw ContractError("law view carries no noise paths");
    if (d_->noise->dim() != d_->ens->dim()) throw ShapeError("noise shift needs noise dimension = state dimension");
    if (d_->shift) throw ContractError("law view is already shifted");
    // Built once per view so coefficients can request it for every particle.
    std::call_once(d_->shift_once, [&] {
        d_->shifted = build(*d_->ens, d_->node, d_->idx, d_->actions, d_->noise, d_->noise, true);
    });
    return EnsembleView(d_->shifted);
}

EnsembleView EnsembleView::at_node(int node) const {
    return EnsembleView(build(*d_->ens, node, d_->idx, nullptr, d_->noise, d_->shift, true));
}

void derive_costs_from_pointwise(CoefficientSet& c) {
    if (!c.pointwise()) throw ContractError("coefficient set has no pointwise costs");
    auto f = c.running_point;
    c.running = [f](double t, const EnsembleView& law) {
        double s = 0.0;
        for (int j = 0; j < law.size(); ++j) s += law.weight(j) * f(t, law.path(j), law.action(j));
        return s;
    };
    auto g = c.terminal_point;
    c.terminal = [g](const EnsembleView& law) {
        double s = 0.0;
        for (int j = 0; j < law.size(); ++j) s += law.weight(j) * g(law.path(j));
        return s;
    };
}

void write_ensemble_csv(std::ostream& os, const ProcessEnsemble& xi) {
    os << "common_idx,idio_idx,step";
    for (int r = 0; r < xi.dim(); ++r) os << ",x_" << r + 1;
    os << ",weight\n";
    const auto old = os.precision(17);
    for (int p = 0; p < xi.size(); ++p) {
        const Mat& v = xi.particle(p).values();
        for (int k = 0; k < v.cols(); ++k) {
            os << xi.common_of(p) << ',' << xi.idio_of(p) << ',' << k;
            for (int r = 0; r < xi.dim(); ++r) os << ',' << v(r, k);
            os << ',' << xi.weight(p) << '\n';
        }
    }
    os.precision(old);
}

namespace {

struct PointValues {
    std::vector<Vec> b;
    std::vector<Mat> s;
    double f = 0.0;
};

PointValues evaluate_at(const CoefficientSet& c, const ProcessEnsemble& xi, const ProcessEnsemble& noise, int node,
                        const Vec& action) {
    const std::vector<Vec> acts(static_cast<size_t>(xi.size()), action);
    const EnsembleView law(xi, node, &acts, &noise);
    PointValues out;
    for (int p = 0; p < xi.size(); ++p) {
        PointContext ctx;
        ctx.t = xi.grid().time(node);
        ctx.node = node;
        ctx.particle = p;
        ctx.common = xi.common_of(p);
        ctx.path = PathView(xi.particle(p).values(), node);
        ctx.action = &acts[static_cast<size_t>(p)];
        ctx.law = &law;
        ctx.noise = PathView(noise.particle(p).values(), node);
        out.b.push_back(c.drift(ctx));
        out.s.push_back(c.diffusion(ctx));
    }
    if (c.running) out.f = c.running(xi.grid().time(node), law);
    return out;
}

bool same_bits(const Mat& a, const Mat& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    return std::equal(a.data(), a.data() + a.size(), b.data(),
                      [](double x, double y) { return std::memcmp(&x, &y, sizeof(double)) == 0; });
}

}  // namespace

AdaptednessReport probe_adaptedness(const CoefficientSet& coeffs, const ProcessEnsemble& xi, int node,
                                    const std::vector<Vec>& actions, std::uint64_t seed) {
    const TimeGrid& grid = xi.grid();
    if (node < 0 || node > grid.steps()) throw RangeError("probe node outside the grid");
    const ProcessEnsemble noise(grid, coeffs.noise_dim(), xi.n_common(), xi.n_idio());
    ProcessEnsemble xi2 = xi, noise2 = noise;
    const CounterStream rng(seed, 0x30000u);
    std::uint64_t idx = 0;
    for (int p = 0; p < xi.size(); ++p) {
        for (int k = node + 1; k <= grid.steps(); ++k) {
            for (int r = 0; r < xi.dim(); ++r) xi2.particle(p).values()(r, k) = 10.0 * rng.normal(idx++);
            for (int r = 0; r < noise.dim(); ++r) noise2.particle(p).values()(r, k) = 10.0 * rng.normal(idx++);
        }
    }
    AdaptednessReport rep;
    for (const Vec& a : actions) {
        const PointValues u = evaluate_at(coeffs, xi, noise, node, a);
        const PointValues v = evaluate_at(coeffs, xi2, noise2, node, a);
        for (size_t p = 0; p < u.b.size(); ++p) {
            ++rep.evaluations;
            if (!same_bits(u.b[p], v.b[p]) || !same_bits(u.s[p], v.s[p])) ++rep.changed;
        }
        ++rep.evaluations;
        if (std::memcmp(&u.f, &v.f, sizeof(double)) != 0) ++rep.changed;
    }
    return rep;
}

}  // namespace procspace
