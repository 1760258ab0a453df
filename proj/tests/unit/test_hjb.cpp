#include "helpers.hpp"
#include "procspace/hjb.hpp"
#include "procspace/scenario.hpp"

using namespace procspace;
using testing::v1;

namespace {

StateCoefficients heat_state(double sigma, std::function<double(double)> g) {
    StateCoefficients sc;
    sc.drift = [](double, double, double) { return 0.0; };
    sc.volatility = [sigma](double, double, double) { return sigma; };
    sc.running = [](double, double, double) { return 0.0; };
    sc.terminal = std::move(g);
    sc.actions = {0.0};
    return sc;
}

// Largest table error on [-1, 1] against v(t, x) at t = 0.
double table_error(const ValueTable& v, const std::function<double(double)>& exact) {
    double e = 0.0;
    for (int j = 0; j < v.space.nodes(); ++j) {
        const double x = v.space.x(j);
        if (std::abs(x) <= 1.0 + 1e-12) e = std::max(e, std::abs(v.v(0, j) - exact(x)));
    }
    return e;
}

}  // namespace

TEST_CASE("hamiltonian") {
    const TimeGrid g(0.0, 1.0, 2);
    const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 6, 1);
    const std::vector<Vec> Z(6, v1(1.0));
    const std::vector<Mat> G(6, Mat::Constant(1, 1, 0.5));
    const ActionGrid acts = ActionGrid::scalar({-1, 0, 1});
    SUBCASE("zero data") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; }, [](double) { return 0.0; });
        for (double h : hamiltonian(c, 0.5, xi, Z, G, acts).values) CHECK(h == 0.0);
    }
    SUBCASE("enumeration") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double a) { return a; },
                                                        [](double, double, double) { return std::sqrt(2.0); },
                                                        [](double, double, double a) { return a * a; }, [](double) { return 0.0; });
        const HamiltonianResult h = hamiltonian(c, 0.5, xi, Z, G, acts);
        CHECK(h.values[0] == doctest::Approx(0.5));
        CHECK(h.values[1] == doctest::Approx(0.5));
        CHECK(h.values[2] == doctest::Approx(2.5));
        CHECK(h.infimum == doctest::Approx(0.5));
    }
    SUBCASE("linear in Z and Gamma") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double x, double a) { return a - x; },
                                                        [](double, double x, double) { return 1 + 0.5 * std::cos(x); },
                                                        [](double, double, double) { return 0.0; }, [](double) { return 0.0; });
        std::vector<Vec> Z2;
        std::vector<Mat> G2;
        for (int p = 0; p < 6; ++p) {
            Z2.push_back(v1(0.3 * p - 1));
            G2.push_back(Mat::Constant(1, 1, 0.1 * p));
        }
        std::vector<Vec> Zs;
        std::vector<Mat> Gs;
        for (int p = 0; p < 6; ++p) {
            Zs.push_back(2.0 * Z[static_cast<size_t>(p)] + 3.0 * Z2[static_cast<size_t>(p)]);
            Gs.push_back(2.0 * G[static_cast<size_t>(p)] + 3.0 * G2[static_cast<size_t>(p)]);
        }
        for (int a = 0; a < 3; ++a) {
            const double lhs = hamiltonian(c, 0.5, xi, Zs, Gs, acts).values[static_cast<size_t>(a)];
            const double rhs = 2 * hamiltonian(c, 0.5, xi, Z, G, acts).values[static_cast<size_t>(a)] +
                               3 * hamiltonian(c, 0.5, xi, Z2, G2, acts).values[static_cast<size_t>(a)];
            CHECK(lhs == doctest::Approx(rhs).epsilon(1e-13));
        }
    }
    SUBCASE("shape mismatch") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; }, [](double) { return 0.0; });
        CHECK_THROWS_AS(hamiltonian(c, 0.5, xi, std::vector<Vec>(6, Vec::Zero(2)), G, acts), ShapeError);
    }
}

TEST_CASE("classical residual") {
    const TimeGrid g(0.0, 1.0, 4);
    const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 7, 2, 0.3);
    const ActionGrid none = ActionGrid::scalar({0.0});
    const CoefficientSet heat = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                       [](double, double, double) { return 1.0; },
                                                       [](double, double, double) { return 0.0; }, [](double x) { return x * x; });
    SmoothFunctional U;
    U.map = std::make_shared<QuadraticFunctional>(1.0, 1.0, 1.0);
    CHECK(std::abs(classical_residual(U, heat, 0.5, xi, none)) <= 1e-14);
    SmoothFunctional W;
    W.map = std::make_shared<QuadraticFunctional>(1.0, 2.0, 1.0);
    CHECK(classical_residual(W, heat, 0.5, xi, none) == doctest::Approx(-1.0));

    // b = a, sigma = 1, f = x^2 + a^2 against U = x^2 + (T - t): E x^2 + min_a (a^2 + 2 a E x).
    const CoefficientSet lq = testing::scalar_coeffs([](double, double, double a) { return a; },
                                                     [](double, double, double) { return 1.0; },
                                                     [](double, double x, double a) { return x * x + a * a; },
                                                     [](double x) { return x * x; });
    double m = 0.0, m2 = 0.0;
    for (int p = 0; p < 7; ++p) {
        const double x = xi.value(p, 2)[0];
        m += x / 7;
        m2 += x * x / 7;
    }
    const double expect = m2 + std::min({1 - 2 * m, 0.0, 1 + 2 * m});
    CHECK(classical_residual(U, lq, 0.5, xi, ActionGrid::scalar({-1, 0, 1})) == doctest::Approx(expect).epsilon(1e-13));
}

TEST_CASE("finite-difference oracle") {
    SUBCASE("heat with quadratic payoff") {
        const StateCoefficients sc = heat_state(1.0, [](double x) { return x * x; });
        const SpaceGrid sp = padded_space_grid(-1, 1, 4, 0.05);
        const ValueTable v = fd_oracle(sc, sp, stable_time_grid(sc, sp, 0, 1));
        // The interior stencil is exact on x^2; what remains comes from the linear boundary closure.
        CHECK(table_error(v, [](double x) { return x * x + 1; }) <= 1e-4);
    }
    SUBCASE("deterministic drive down") {
        StateCoefficients sc;
        sc.drift = [](double, double, double a) { return a; };
        sc.volatility = [](double, double, double) { return 0.0; };
        sc.running = [](double, double, double) { return 0.0; };
        sc.terminal = [](double x) { return x; };
        sc.actions = {-1.0, 1.0};
        const SpaceGrid sp = padded_space_grid(-1, 1, 2, 0.05);
        const ValueTable v = fd_oracle(sc, sp, stable_time_grid(sc, sp, 0, 1));
        CHECK(table_error(v, [](double x) { return x - 1; }) <= 1e-12);
        for (int j = 0; j < v.arg.cols(); ++j) CHECK(v.arg(0, j) == 0);
    }
    SUBCASE("halving dx on a smooth payoff") {
        const StateCoefficients sc = heat_state(1.0, [](double x) { return std::cos(x); });
        auto err = [&](double dx) {
            const SpaceGrid sp = padded_space_grid(-1, 1, 6, dx);
            return table_error(fd_oracle(sc, sp, stable_time_grid(sc, sp, 0, 1)),
                               [](double x) { return std::cos(x) * std::exp(-0.5); });
        };
        const double e1 = err(0.1), e2 = err(0.05);
        CHECK(e1 / e2 >= 3.0);
    }
    SUBCASE("unstable step rejected") {
        const StateCoefficients sc = heat_state(1.0, [](double x) { return x * x; });
        const SpaceGrid sp = padded_space_grid(-1, 1, 1, 0.01);
        CHECK_THROWS_AS(fd_oracle(sc, sp, TimeGrid(0, 1, 10)), ParameterError);
    }
}

TEST_CASE("lift against the FD table") {
    const Config cfg = Config::parse("scenario = heat\nhorizon = 1\nsteps = 8\nparticles.idio = 4000\nseed = 5\n");
    const Setup s = make_setup(cfg);
    const SpaceGrid sp = padded_space_grid(-4, 4, 4, 0.05);
    const ValueTable v = fd_oracle(*s.scenario.state, sp, stable_time_grid(*s.scenario.state, sp, 0, 1));
    const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, s.grid.steps());
    SUBCASE("heat") {
        const LiftReport r = check_lift(v, s.scenario.coeffs, 0.0, s.xi, fam, s.noise, 0.0);
        CHECK(r.pass);
        CHECK(std::abs(r.gap) <= 3 * r.particle_std_error + 1e-6);
    }
    SUBCASE("two-point initial law") {
        std::vector<Vec> x0;
        for (int p = 0; p < s.xi.size(); ++p) x0.push_back(v1(p % 2 ? 1.0 : -0.5));
        const ProcessEnsemble two = ProcessEnsemble::constant(s.grid, x0, 1, s.xi.size());
        const LiftReport r = check_lift(v, s.scenario.coeffs, 0.0, two, fam, s.noise, 0.0);
        CHECK(r.lifted_value == doctest::Approx(0.5 * (1 + 0.25) + 1).epsilon(1e-6));
        CHECK(r.pass);
    }
}

TEST_CASE("constant-volatility transform") {
    const TimeGrid g(0.0, 1.0, 6);
    const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 200, 4);
    const NoiseBundle nb(NoiseMode::gaussian, 11, g, 1, 0);
    const ControlFamily fam = ControlFamily::deterministic(ActionGrid::scalar({-1, 0, 1}), 0, 6, 1);
    SUBCASE("pure shift") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 1.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x * x; });
        const TransformReport r = transform_constant_vol(c, 0.0, xi, ControlFamily::deterministic(ActionGrid::scalar({0}), 0, 6), nb);
        CHECK(r.gap <= 1e-12);
    }
    SUBCASE("drift control") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double x, double a) { return a - 0.5 * std::sin(x); },
                                                        [](double, double, double) { return 1.0; },
                                                        [](double, double x, double a) { return a * a + 0.1 * x * x; },
                                                        [](double x) { return x * x; });
        const TransformReport r = transform_constant_vol(c, 0.0, xi, fam, nb);
        CHECK(r.gap <= 1e-10);
        CHECK(r.argmin_direct == r.argmin_transformed);
    }
}
