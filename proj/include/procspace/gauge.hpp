#pragma once

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "procspace/core.hpp"
#include "procspace/sde.hpp"

namespace procspace {

// Throws ParameterError unless p is even and at least 6.
void require_gauge_exponent(int p);

// Upsilon_t(x) = ((S^p - |x_t|^p)^3 / S^{2p}) 1_{S != 0} + 3 |x_t|^p with S = |x_{.^t}|_inf.
double upsilon(const PathView& x, int p);
double upsilon(double t, const PathSample& x, int p);

// Vertical (terminal-value bump) derivatives of upsilon; the running maximum is held fixed.
struct GaugeDerivatives {
    Vec grad;
    Mat hess;
};
GaugeDerivatives upsilon_derivatives(const PathView& x, int p);
GaugeDerivatives upsilon_derivatives(double t, const PathSample& x, int p);

// Point (t, xi) with xi stopped at t.
struct GaugePoint {
    double t = 0.0;
    ProcessEnsemble xi;
};

// Level-1 points share one time; level-2 points carry two independent times.
struct DoubledPoint {
    int level = 1;
    GaugePoint first;
    GaugePoint second;
};

struct GaugeValues {
    double d_metric = 0.0;     // |t - t'| + ||xi_{.^t} - xi'_{.^t'}||_p
    double upsilon0 = 0.0;     // E[Upsilon_{t v t'}(xi_{.^t} - xi'_{.^t'})]
    double bar_upsilon = 0.0;  // upsilon0 + |t - t'|^2
};

GaugeValues gauge_distance(const GaugePoint& a, const GaugePoint& b, int p);
GaugeValues gauge_distance(const DoubledPoint& a, const DoubledPoint& b, int p);

// Particle path xi_{min(j,k)} - xi'_{min(j,k')} for all nodes j.
Mat stopped_difference(const PathSample& a, int ka, const PathSample& b, int kb);

// Pathwise map phi-bar with closed-form Dupire derivatives.
class PathFunctional {
public:
    virtual ~PathFunctional() = default;
    virtual double value(double t, const PathView& x) const = 0;
    virtual double time_derivative(double t, const PathView& x) const = 0;
    virtual Vec gradient(double t, const PathView& x) const = 0;
    virtual Mat hessian(double t, const PathView& x) const = 0;
    virtual std::string name() const = 0;
};

// a |x_t|^2 + c (T - t).
class QuadraticFunctional : public PathFunctional {
public:
    QuadraticFunctional(double a, double c, double horizon) : a_(a), c_(c), T_(horizon) {}
    double value(double t, const PathView& x) const override;
    double time_derivative(double t, const PathView& x) const override;
    Vec gradient(double t, const PathView& x) const override;
    Mat hessian(double t, const PathView& x) const override;
    std::string name() const override { return "quadratic"; }

private:
    double a_, c_, T_;
};

// sum_j (c3_j x_j^3 + c2_j x_j^2 + c1_j x_j) at the terminal value, plus c (T - t).
class CubicFunctional : public PathFunctional {
public:
    CubicFunctional(Vec c3, Vec c2, Vec c1, double c, double horizon)
        : c3_(std::move(c3)), c2_(std::move(c2)), c1_(std::move(c1)), c_(c), T_(horizon) {}
    double value(double t, const PathView& x) const override;
    double time_derivative(double t, const PathView& x) const override;
    Vec gradient(double t, const PathView& x) const override;
    Mat hessian(double t, const PathView& x) const override;
    std::string name() const override { return "cubic"; }

private:
    Vec c3_, c2_, c1_;
    double c_, T_;
};

// Upsilon_t(x) as a pathwise functional.
class GaugeFunctional : public PathFunctional {
public:
    explicit GaugeFunctional(int p);
    double value(double t, const PathView& x) const override;
    double time_derivative(double, const PathView&) const override { return 0.0; }
    Vec gradient(double t, const PathView& x) const override;
    Mat hessian(double t, const PathView& x) const override;
    std::string name() const override { return "gauge"; }

private:
    int p_;
};

// phi_t(xi) = E[phi-bar_t(xi - xi-hat_{.^t-hat})]. Without an anchor the shift is zero.
struct SmoothFunctional {
    double t_hat = 0.0;
    std::optional<ProcessEnsemble> anchor;
    std::shared_ptr<const PathFunctional> map;
    double p = 2.0;
    // Constant of the growth bounds checked on evaluated paths; infinity disables the check.
    double growth_constant = std::numeric_limits<double>::infinity();
};

struct SmoothEval {
    double value = 0.0;
    double dt = 0.0;
    std::vector<Vec> dX;
    std::vector<Mat> dxX;
    std::vector<std::string> warnings;
};

SmoothEval smooth_eval(const SmoothFunctional& phi, double t, const ProcessEnsemble& xi);

struct ItoReport {
    double lhs = 0.0;       // phi_{t2}(X) - phi_{t1}(X)
    double integral = 0.0;  // sum of drift terms times dt
    double residual = 0.0;  // |lhs - integral|
    // Same comparison with each step's increment replaced by its exact one-step conditional
    // expectation under Rademacher increments with the recorded (b, sigma).
    double conditional_residual = 0.0;
};

// Functional Ito check along a recorded simulation over [t1, t2].
ItoReport ito_check(const SmoothFunctional& phi, const SimulationResult& X, double t1, double t2);

}  // namespace procspace
