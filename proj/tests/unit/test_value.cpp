#include "helpers.hpp"
#include "procspace/scenario.hpp"
#include "procspace/value.hpp"

using namespace procspace;
using testing::v1;

namespace {

CoefficientSet drift_square() {
    return testing::scalar_coeffs([](double, double, double a) { return a; }, [](double, double, double) { return 0.0; },
                                  [](double, double, double) { return 0.0; }, [](double x) { return x * x; });
}

Setup heat_setup(int idio, std::uint64_t seed, int steps = 8) {
    Config cfg = Config::parse("scenario = heat\nhorizon = 1\ninit = gaussian\n");
    cfg.set("steps", std::to_string(steps));
    cfg.set("particles.idio", std::to_string(idio));
    cfg.set("seed", std::to_string(seed));
    return make_setup(cfg);
}

}  // namespace

TEST_CASE("cost_J examples") {
    const TimeGrid g(0.0, 1.0, 4);
    const ControlSpec zero = ControlSpec::constant(ActionGrid::scalar({0.0}), 0, 0, 4);
    const NoiseBundle nb(NoiseMode::gaussian, 1, g, 1, 0);
    SUBCASE("frozen terminal") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x; });
        const ProcessEnsemble xi = ProcessEnsemble::constant(g, {v1(2.5)}, 1, 8);
        CHECK(cost_J(c, 0.0, xi, zero, nb).value == doctest::Approx(2.5));
    }
    SUBCASE("unit running cost") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 1.0; },
                                                        [](double, double, double) { return 1.0; }, [](double) { return 0.0; });
        const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 8, 3);
        CHECK(cost_J(c, 0.25, xi, zero, nb).value == doctest::Approx(0.75).epsilon(1e-14));
    }
    SUBCASE("one Euler step") {
        const TimeGrid one(0.0, 1.0, 1);
        const ProcessEnsemble xi = ProcessEnsemble::constant(one, {v1(0.7)}, 1, 1);
        const ControlSpec down = ControlSpec::constant(ActionGrid::scalar({-1.0}), 0, 0, 1);
        CHECK(cost_J(drift_square(), 0.0, xi, down, NoiseBundle(NoiseMode::gaussian, 1, one, 1, 0)).value ==
              doctest::Approx(0.09));
    }
}

TEST_CASE("value_V examples") {
    const TimeGrid one(0.0, 1.0, 1);
    const ProcessEnsemble xi = ProcessEnsemble::constant(one, {v1(0.7)}, 1, 1);
    const NoiseBundle nb(NoiseMode::gaussian, 1, one, 1, 0);
    SUBCASE("enumeration") {
        const ValueEstimate v =
            value_V(drift_square(), 0.0, xi, ControlFamily::deterministic(ActionGrid::scalar({-1, 0, 1}), 0, 1), nb);
        CHECK(v.value == doctest::Approx(0.09));
        REQUIRE(v.candidates.size() == 3);
        CHECK(v.candidates[1] == doctest::Approx(0.49));
        CHECK(v.candidates[2] == doctest::Approx(2.89));
        CHECK(v.argmin_index == 0);
    }
    SUBCASE("control never enters, first member wins") {
        const CoefficientSet c = testing::scalar_coeffs([](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double, double) { return 0.0; }, [](double x) { return x; });
        const ValueEstimate v = value_V(c, 0.0, xi, ControlFamily::deterministic(ActionGrid::scalar({3, 1, 2}), 0, 1), nb);
        CHECK(v.value == doctest::Approx(0.7));
        CHECK(v.argmin_index == 0);
    }
    SUBCASE("heat closed form within three standard errors") {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            const Setup s = heat_setup(4000, seed);
            const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, s.grid.steps());
            const ValueEstimate v = value_V(s.scenario.coeffs, 0.0, s.xi, fam, s.noise);
            CHECK(v.std_error > 0.0);
            CHECK(std::abs(v.value - s.scenario.closed_form(0.0, s.xi)) <= 3 * v.std_error);
        }
    }
}

TEST_CASE("dynamic programming") {
    SUBCASE("tree, two steps, three actions, tree-indexed controls") {
        const TimeGrid g(0.0, 1.0, 2);
        const CoefficientSet c = testing::scalar_coeffs([](double, double x, double a) { return a - 0.5 * x; },
                                                        [](double, double x, double) { return 1.0 + 0.3 * std::sin(x); },
                                                        [](double, double x, double a) { return a * a + std::cos(x); },
                                                        [](double x) { return x * x; });
        const NoiseBundle nb(NoiseMode::tree, 1, g, 1, 0);
        const ProcessEnsemble xi = tree_expand(testing::gaussian_ensemble(g, 1, 2, 5), nb);
        const DppReport r = check_dpp(c, 0.0, xi, 0.5, ControlFamily::full_tree(ActionGrid::scalar({-1, 0, 1}), 0, 2), nb);
        CHECK(r.mode == EstimateMode::exact_tree);
        CHECK(std::abs(r.gap) <= 1e-12);
        CHECK(r.pass);
    }
    SUBCASE("deterministic dynamics and controls") {
        const TimeGrid g(0.0, 1.0, 4);
        const CoefficientSet c = testing::scalar_coeffs([](double, double x, double a) { return a * x; },
                                                        [](double, double, double) { return 0.0; },
                                                        [](double, double x, double a) { return a * a + x; },
                                                        [](double x) { return (x - 1) * (x - 1); });
        const ProcessEnsemble xi = testing::gaussian_ensemble(g, 1, 5, 6);
        const NoiseBundle nb(NoiseMode::gaussian, 1, g, 1, 0);
        const DppReport r = check_dpp(c, 0.0, xi, 0.5, ControlFamily::deterministic(ActionGrid::scalar({-1, 0, 1}), 0, 4), nb);
        CHECK(r.gap == 0.0);
        CHECK(r.pass);
    }
    SUBCASE("Monte Carlo heat") {
        const Setup s = heat_setup(4000, 9);
        const DppReport r = check_dpp(s.scenario.coeffs, 0.0, s.xi, 0.5,
                                      ControlFamily::deterministic(s.scenario.actions, 0, s.grid.steps()), s.noise);
        CHECK(std::abs(r.gap) <= 3 * r.std_error + 1e-12);
        CHECK(r.pass);
    }
    SUBCASE("delta off the grid") {
        const Setup s = heat_setup(50, 9);
        CHECK_THROWS(check_dpp(s.scenario.coeffs, 0.0, s.xi, 0.3,
                               ControlFamily::deterministic(s.scenario.actions, 0, s.grid.steps()), s.noise));
    }
}

TEST_CASE("regularity quotients") {
    const TimeGrid g(0.0, 1.0, 4);
    const CoefficientSet c = testing::scalar_coeffs([](double, double, double a) { return a; },
                                                    [](double, double, double) { return 1.0; },
                                                    [](double, double, double) { return 0.0; }, [](double x) { return x; });
    const NoiseBundle nb(NoiseMode::tree, 1, g, 1, 0);
    const ActionGrid acts = ActionGrid::scalar({-1, 0, 1});
    FamilyFactory fam = [&](int from) { return ControlFamily::full_tree(acts, from, 4); };
    std::vector<RegularityPair> pairs;
    const ProcessEnsemble a = tree_expand(testing::gaussian_ensemble(g, 1, 2, 1), nb);
    const ProcessEnsemble b = tree_expand(testing::gaussian_ensemble(g, 1, 2, 2), nb);
    pairs.push_back({0.0, a, 0.0, a});
    pairs.push_back({0.0, a, 0.0, b});
    pairs.push_back({0.0, a, 0.25, a});
    const RegularityReport r = estimate_regularity(c, pairs, fam, nb, 1.0);
    CHECK(r.filtered == 1);
    REQUIRE(r.spatial.size() == 1);
    REQUIRE(r.temporal.size() == 1);
    // V = E[xi_t] - (T - t) is 1-Lipschitz in the L2 norm.
    CHECK(r.spatial[0] <= 1.0 + 1e-12);
    CHECK(r.temporal[0] > 0.0);
    CHECK(median({3.0, 1.0, 2.0}) == 2.0);
}
