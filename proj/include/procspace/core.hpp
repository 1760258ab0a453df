#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "procspace/errors.hpp"

namespace procspace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Uniform grid start + k * dt, k = 0..steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double start, double horizon, int steps);

    double start() const noexcept { return start_; }
    double horizon() const noexcept { return horizon_; }
    int steps() const noexcept { return steps_; }
    int nodes() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return dt_; }
    double time(int k) const;

    // Node index of t; throws RangeError when t is outside the grid or between nodes.
    int node_at(double t) const;
    bool is_node(double t) const noexcept;

    bool operator==(const TimeGrid& o) const noexcept {
        return start_ == o.start_ && horizon_ == o.horizon_ && steps_ == o.steps_;
    }

private:
    double start_ = 0.0;
    double horizon_ = 1.0;
    int steps_ = 1;
    double dt_ = 1.0;
};

// A d-dimensional path sampled at every grid node (values is d x nodes).
class PathSample {
public:
    PathSample() = default;
    PathSample(TimeGrid grid, int dim);
    PathSample(TimeGrid grid, Mat values);

    const TimeGrid& grid() const noexcept { return grid_; }
    int dim() const noexcept { return static_cast<int>(values_.rows()); }
    const Mat& values() const noexcept { return values_; }
    Mat& values() noexcept { return values_; }
    Vec at(int k) const { return values_.col(k); }

    // max_k |x_k| over nodes k <= until (Euclidean norm per node).
    double sup_norm(int until) const;
    double sup_norm() const { return sup_norm(grid_.steps()); }

private:
    TimeGrid grid_;
    Mat values_;
};

// Equal to x up to the node of t and constant afterwards.
PathSample stopped_path(const PathSample& x, double t);

// Non-owning view of a path stopped at `node`, optionally shifted by another path.
class PathView {
public:
    PathView() = default;
    PathView(const Mat& values, int node, const Mat* shift = nullptr)
        : values_(&values), node_(node), shift_(shift) {}

    int node() const noexcept { return node_; }
    int dim() const noexcept { return static_cast<int>(values_->rows()); }
    Vec at(int k) const;
    Vec current() const { return at(node_); }
    double sup_norm() const;
    PathView stopped(int node) const { return PathView(*values_, node < node_ ? node : node_, shift_); }
    // Same view with an added shift path; throws if the view is already shifted.
    PathView shifted(const PathView& by) const;

private:
    const Mat* values_ = nullptr;
    int node_ = 0;
    const Mat* shift_ = nullptr;
};

// Particle ensemble indexed p = c * n_idio + i (c common batch, i idiosyncratic index).
class ProcessEnsemble {
public:
    ProcessEnsemble() = default;
    ProcessEnsemble(TimeGrid grid, int dim, int n_common, int n_idio);

    // Every particle constant equal to initial[p] (size 1 broadcasts).
    static ProcessEnsemble constant(TimeGrid grid, const std::vector<Vec>& initial, int n_common,
                                    int n_idio);

    const TimeGrid& grid() const noexcept { return grid_; }
    int dim() const noexcept { return dim_; }
    int n_common() const noexcept { return n_common_; }
    int n_idio() const noexcept { return n_idio_; }
    int size() const noexcept { return n_common_ * n_idio_; }
    int index(int c, int i) const noexcept { return c * n_idio_ + i; }
    int common_of(int p) const noexcept { return p / n_idio_; }
    int idio_of(int p) const noexcept { return p % n_idio_; }

    const PathSample& particle(int p) const { return particles_.at(static_cast<size_t>(p)); }
    PathSample& particle(int p) { return particles_.at(static_cast<size_t>(p)); }
    Vec value(int p, int k) const { return particles_[static_cast<size_t>(p)].values().col(k); }

    double weight(int p) const { return weights_[static_cast<size_t>(p)]; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    // Validates nonnegativity and unit sum (1e-12).
    void set_weights(std::vector<double> w);
    double batch_weight(int c) const;

    // Copy with every path stopped at node k.
    ProcessEnsemble stopped(int k) const;
    // Sub-ensemble made of the listed common batches; weights renormalized.
    ProcessEnsemble select_commons(const std::vector<int>& commons) const;
    // Particle-wise difference this - other at each node (same layout required).
    ProcessEnsemble minus(const ProcessEnsemble& other) const;

private:
    TimeGrid grid_;
    int dim_ = 0;
    int n_common_ = 0;
    int n_idio_ = 0;
    std::vector<PathSample> particles_;
    std::vector<double> weights_;
};

// (sum_i w_i |xi_i|_inf^p)^{1/p}; with t, over paths stopped at t.
double process_norm(const ProcessEnsemble& xi, double p, std::optional<double> t = std::nullopt);

// Checks that two ensembles share grid, dimension and batch layout.
void require_same_layout(const ProcessEnsemble& a, const ProcessEnsemble& b, const char* what);

// Cross-sectional law handle: a weighted set of particles observed at one node, with the
// actions chosen at that node (the control-law handle) when available.
class EnsembleView {
public:
    EnsembleView() = default;
    // All particles of ens.
    EnsembleView(const ProcessEnsemble& ens, int node, const std::vector<Vec>* actions = nullptr,
                 const ProcessEnsemble* noise = nullptr);
    EnsembleView(const ProcessEnsemble& ens, int node, std::vector<int> particles,
                 const std::vector<Vec>* actions, const ProcessEnsemble* noise,
                 const ProcessEnsemble* shift = nullptr);

    int node() const noexcept { return d_->node; }
    double time() const { return d_->ens->grid().time(d_->node); }
    int size() const noexcept { return static_cast<int>(d_->idx.size()); }
    int dim() const noexcept { return d_->ens->dim(); }
    int particle(int j) const { return d_->idx[static_cast<size_t>(j)]; }
    int common(int j) const { return d_->ens->common_of(particle(j)); }
    double weight(int j) const { return d_->w[static_cast<size_t>(j)]; }
    PathView path(int j) const;
    Vec state(int j) const;
    bool has_actions() const noexcept { return d_->actions != nullptr; }
    const Vec& action(int j) const;
    const Vec& mean_state() const noexcept { return d_->mean; }

    // Sub-views grouped by common batch, ordered by common index.
    int batch_count() const noexcept;
    EnsembleView batch_at(int b) const;
    // The batch containing common index c.
    EnsembleView batch_of_common(int c) const;

    EnsembleView subset(std::vector<int> particles) const;
    // Same particles viewed as x + B, with B the cumulative noise paths (requires d = m).
    EnsembleView shifted_by_noise() const;
    // Same particles stopped at an earlier node.
    EnsembleView at_node(int node) const;

    const ProcessEnsemble& ensemble() const noexcept { return *d_->ens; }
    const ProcessEnsemble* noise_paths() const noexcept { return d_->noise; }
    const ProcessEnsemble* shift() const noexcept { return d_->shift; }

private:
    struct Data {
        const ProcessEnsemble* ens = nullptr;
        int node = 0;
        std::vector<int> idx;
        std::vector<double> w;
        const std::vector<Vec>* actions = nullptr;
        const ProcessEnsemble* noise = nullptr;
        const ProcessEnsemble* shift = nullptr;
        Vec mean;
        std::vector<int> batch_commons;
        std::vector<std::shared_ptr<const Data>> batches;
        mutable std::once_flag shift_once;
        mutable std::shared_ptr<const Data> shifted;
    };
    static std::shared_ptr<const Data> build(const ProcessEnsemble& ens, int node, std::vector<int> idx,
                                             const std::vector<Vec>* actions, const ProcessEnsemble* noise,
                                             const ProcessEnsemble* shift, bool split);
    explicit EnsembleView(std::shared_ptr<const Data> d) : d_(std::move(d)) {}
    std::shared_ptr<const Data> d_;
};

// Everything a drift or diffusion coefficient may look at for one particle at one step.
struct PointContext {
    double t = 0.0;
    int node = 0;
    int particle = 0;
    int common = 0;
    PathView path;   // state path stopped at the evaluation node
    const Vec* action = nullptr;
    const EnsembleView* law = nullptr;
    PathView noise;  // cumulative noise path, stopped at the evaluation node
};

using DriftFn = std::function<Vec(const PointContext&)>;
using DiffusionFn = std::function<Mat(const PointContext&)>;
using RunningCostFn = std::function<double(double t, const EnsembleView& law)>;
using TerminalCostFn = std::function<double(const EnsembleView& law)>;
using PointRunningFn = std::function<double(double t, const PathView& x, const Vec& a)>;
using PointTerminalFn = std::function<double(const PathView& x)>;

struct CoefficientMetadata {
    double lipschitz = 1.0;  // L
    double holder = 1.0;     // beta
    double bound = 1.0;      // C0
    double p = 2.0;
};

// Data (b, sigma, f, g). f and g see the law handle of the whole ensemble; when the
// costs are expectations of pointwise maps those are exposed as running_point /
// terminal_point and f, g are derived from them.
struct CoefficientSet {
    std::string name;
    int dim = 1;
    int idio_noise_dim = 1;
    int common_noise_dim = 0;
    int action_dim = 1;
    DriftFn drift;
    DiffusionFn diffusion;  // dim x (idio_noise_dim + common_noise_dim)
    RunningCostFn running;
    TerminalCostFn terminal;
    PointRunningFn running_point;
    PointTerminalFn terminal_point;
    // b and sigma ignore the law and control-law handles.
    bool law_free = false;
    CoefficientMetadata meta;

    int noise_dim() const noexcept { return idio_noise_dim + common_noise_dim; }
    bool pointwise() const noexcept { return static_cast<bool>(running_point) && static_cast<bool>(terminal_point); }
};

// Fills running/terminal as weighted averages of the pointwise maps.
void derive_costs_from_pointwise(CoefficientSet& c);

// Columns common_idx,idio_idx,step,x_1..x_d,weight.
void write_ensemble_csv(std::ostream& os, const ProcessEnsemble& xi);

struct AdaptednessReport {
    int evaluations = 0;
    int changed = 0;  // evaluations whose b, sigma or f differ bit-for-bit
    bool adapted() const noexcept { return changed == 0; }
};

// Evaluates b, sigma and f at `node` for every particle and action, then again after replacing
// every path (and the noise paths) strictly after `node` by random values.
AdaptednessReport probe_adaptedness(const CoefficientSet& coeffs, const ProcessEnsemble& xi, int node,
                                    const std::vector<Vec>& actions, std::uint64_t seed = 1);

}  // namespace procspace
