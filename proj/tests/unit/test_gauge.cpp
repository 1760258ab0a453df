#include "helpers.hpp"
#include "procspace/batteries.hpp"
#include "procspace/control.hpp"
#include "procspace/gauge.hpp"
#include "procspace/sde.hpp"

using namespace procspace;
using testing::v1;

TEST_CASE("upsilon values") {
    const TimeGrid g(0.0, 1.0, 2);
    CHECK(upsilon(1.0, PathSample(g, Mat::Zero(1, 3)), 6) == 0.0);
    CHECK(upsilon(1.0, PathSample(g, Mat::Ones(1, 3)), 6) == doctest::Approx(3.0));
    Mat v(1, 3);
    v << 0.0, 2.0, 1.0;
    CHECK(upsilon(1.0, PathSample(g, v), 6) == doctest::Approx(63.0 * 63.0 * 63.0 / 4096.0 + 3.0).epsilon(1e-15));
    CHECK_THROWS_AS(upsilon(1.0, PathSample(g, v), 5), ParameterError);
    CHECK_THROWS_AS(upsilon(1.0, PathSample(g, v), 4), ParameterError);
}

TEST_CASE("upsilon derivatives") {
    const TimeGrid g(0.0, 1.0, 2);
    const GaugeDerivatives z = upsilon_derivatives(1.0, PathSample(g, Mat::Zero(2, 3)), 6);
    CHECK(z.grad.norm() == 0.0);
    CHECK(z.hess.norm() == 0.0);
    const GaugeDerivatives c = upsilon_derivatives(1.0, PathSample(g, Mat::Ones(1, 3)), 6);
    CHECK(c.grad[0] == doctest::Approx(18.0));
    // One-sided difference downward keeps the running maximum at 1.
    const double h = 1e-6;
    Mat lower = Mat::Ones(1, 3);
    lower(0, 2) -= h;
    const double fd = (3.0 - upsilon(1.0, PathSample(g, lower), 6)) / h;
    CHECK(fd == doctest::Approx(18.0).epsilon(1e-5));
}

TEST_CASE("gauge battery at unit scale") {
    GaugeBatteryOptions o;
    o.paths = 3000;
    o.derivative_points = 200;
    const GaugeBatteryReport r = gauge_battery(o);
    CHECK(r.sandwich_violations == 0);
    CHECK(r.triangle_violations == 0);
    CHECK(r.bound_violations == 0);
    CHECK(r.derivative_mismatches == 0);
}

TEST_CASE("gauge_distance") {
    const TimeGrid g(0.0, 1.0, 4);
    const ProcessEnsemble xi = testing::random_walk(g, 2, 1, 6, 1);
    const GaugePoint a{0.5, xi.stopped(2)};
    SUBCASE("diagonal") {
        const GaugeValues v = gauge_distance(a, a, 6);
        CHECK(v.d_metric == 0.0);
        CHECK(v.upsilon0 == 0.0);
        CHECK(v.bar_upsilon == 0.0);
    }
    SUBCASE("constant shift") {
        ProcessEnsemble shifted = xi.stopped(2);
        Vec c(2);
        c << 0.3, -0.4;
        for (int q = 0; q < shifted.size(); ++q) shifted.particle(q).values().colwise() += c;
        const GaugeValues v = gauge_distance(a, GaugePoint{0.5, shifted}, 6);
        CHECK(v.upsilon0 == doctest::Approx(3.0 * std::pow(0.5, 6)));
        CHECK(v.d_metric == doctest::Approx(0.5));
    }
    SUBCASE("random pairs lie in the sandwich") {
        for (int s = 0; s < 10; ++s) {
            const ProcessEnsemble other = testing::random_walk(g, 2, 1, 6, 100 + s);
            const int k2 = s % 5;
            const GaugePoint b{g.time(k2), other.stopped(k2)};
            const GaugeValues v = gauge_distance(a, b, 8);
            const double np = std::pow(v.d_metric - std::abs(a.t - b.t), 8);
            CHECK(v.upsilon0 >= np * (1 - 1e-12));
            CHECK(v.upsilon0 <= 3 * np * (1 + 1e-12));
            CHECK(v.bar_upsilon == doctest::Approx(v.upsilon0 + (a.t - b.t) * (a.t - b.t)));
        }
    }
    SUBCASE("doubled points") {
        const ProcessEnsemble other = testing::random_walk(g, 2, 1, 6, 7);
        const GaugePoint b{0.5, other.stopped(2)};
        const DoubledPoint A{1, a, b}, B{1, b, a};
        const GaugeValues v = gauge_distance(A, B, 6);
        CHECK(v.upsilon0 == doctest::Approx(2 * gauge_distance(a, b, 6).upsilon0));
        const DoubledPoint bad{1, a, GaugePoint{0.25, other.stopped(1)}};
        CHECK_THROWS_AS(gauge_distance(bad, bad, 6), ContractError);
    }
}

TEST_CASE("smooth_eval") {
    const TimeGrid g(0.0, 1.0, 4);
    const ProcessEnsemble xi = testing::random_walk(g, 1, 1, 5, 2);
    SUBCASE("quadratic with anchor") {
        const ProcessEnsemble anchor = testing::random_walk(g, 1, 1, 5, 3);
        SmoothFunctional phi;
        phi.t_hat = 0.25;
        phi.anchor = anchor;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 1.0, 1.0);
        const SmoothEval e = smooth_eval(phi, 0.5, xi);
        double expect = 0;
        for (int q = 0; q < 5; ++q) {
            const double y = xi.value(q, 2)[0] - anchor.value(q, 1)[0];
            expect += 0.2 * y * y;
            CHECK(e.dX[static_cast<size_t>(q)][0] == doctest::Approx(2 * y));
            CHECK(e.dxX[static_cast<size_t>(q)](0, 0) == doctest::Approx(2.0));
        }
        CHECK(e.value == doctest::Approx(expect + 0.5));
        CHECK(e.dt == doctest::Approx(-1.0));
        CHECK_THROWS_AS(smooth_eval(phi, 0.0, xi), RangeError);
    }
    SUBCASE("gauge functional agrees with the gauge module") {
        const ProcessEnsemble anchor = testing::random_walk(g, 1, 1, 5, 4);
        SmoothFunctional phi;
        phi.t_hat = 0.5;
        phi.anchor = anchor;
        phi.map = std::make_shared<GaugeFunctional>(6);
        const SmoothEval e = smooth_eval(phi, 0.75, xi);
        const GaugeValues v = gauge_distance(GaugePoint{0.75, xi}, GaugePoint{0.5, anchor}, 6);
        CHECK(e.value == doctest::Approx(v.upsilon0).epsilon(1e-13));
        const Mat diff = stopped_difference(xi.particle(1), 3, anchor.particle(1), 2);
        CHECK((e.dX[1] - upsilon_derivatives(PathView(diff, 3), 6).grad).norm() <= 1e-12);
    }
    SUBCASE("cubic gradient against bumped terminal values") {
        const ProcessEnsemble y = testing::random_walk(g, 2, 1, 3, 9);
        Vec c3(2), c2(2), c1(2);
        c3 << 0.3, -0.2;
        c2 << 1.1, 0.4;
        c1 << -0.5, 2.0;
        SmoothFunctional phi;
        phi.map = std::make_shared<CubicFunctional>(c3, c2, c1, 0.0, 1.0);
        const SmoothEval e = smooth_eval(phi, 0.5, y);
        for (int q = 0; q < 3; ++q) {
            for (int r = 0; r < 2; ++r) {
                const double h = 1e-5;
                Mat up = y.particle(q).values(), dn = up;
                up(r, 2) += h;
                dn(r, 2) -= h;
                const double fd = (phi.map->value(0.5, PathView(up, 2)) - phi.map->value(0.5, PathView(dn, 2))) / (2 * h);
                CHECK(std::abs(fd - e.dX[static_cast<size_t>(q)][r]) <= 1e-6 * std::max(1.0, std::abs(fd)));
            }
        }
    }
    SUBCASE("growth bound warnings") {
        SmoothFunctional phi;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 0.0, 1.0);
        phi.growth_constant = 1e-6;
        CHECK_FALSE(smooth_eval(phi, 0.5, xi).warnings.empty());
        phi.growth_constant = 2.0;
        CHECK(smooth_eval(phi, 0.5, xi).warnings.empty());
    }
}

TEST_CASE("ito_check") {
    const TimeGrid g(0.0, 1.0, 8);
    SimulationOptions so;
    so.record_coefficients = true;
    const ControlSpec zero = ControlSpec::constant(ActionGrid::scalar({0.0}), 0, 0, 8);
    SUBCASE("static process, static functional") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x; });
        const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 10, 1);
        const SimulationResult r = simulate(c, 0.0, xi, zero, NoiseBundle(NoiseMode::gaussian, 1, g, 1, 0), so);
        SmoothFunctional phi;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 0.0, 1.0);
        CHECK(ito_check(phi, r, 0.0, 1.0).residual == 0.0);
    }
    SUBCASE("X = B on the tree grows by exactly delta per step") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 1.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x; });
        const NoiseBundle nb(NoiseMode::tree, 1, g, 1, 0);
        const ProcessEnsemble xi = tree_expand(ProcessEnsemble::constant(g, {v1(0.0)}, 1, 1), nb);
        const SimulationResult r = simulate(c, 0.0, xi, zero, nb, so);
        SmoothFunctional phi;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 0.0, 1.0);
        const ItoReport rep = ito_check(phi, r, 0.0, 1.0);
        CHECK(rep.lhs == doctest::Approx(1.0));
        CHECK(rep.residual <= 1e-12);
        CHECK(rep.conditional_residual <= 1e-12);
    }
    SUBCASE("unrecorded simulations are rejected") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 1.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x; });
        const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 4, 1);
        const SimulationResult r = simulate(c, 0.0, xi, zero, NoiseBundle(NoiseMode::gaussian, 1, g, 1, 0));
        SmoothFunctional phi;
        phi.map = std::make_shared<QuadraticFunctional>(1.0, 0.0, 1.0);
        CHECK_THROWS_AS(ito_check(phi, r, 0.0, 1.0), ContractError);
    }
}
