#include "helpers.hpp"
#include "procspace/meanfield.hpp"
#include "procspace/metrics.hpp"
#include "procspace/scenario.hpp"

using namespace procspace;
using testing::v1;

namespace {

CheckCoefficientSet mean_drift() {
    CheckCoefficientSet ch;
    ch.name = "mean-drift";
    ch.drift = [](double, const PathView&, const Vec& a, const EnsembleView& law) { return v1(a[0] + law.mean_state()[0]); };
    ch.diffusion = [](double, const PathView&, const Vec&, const EnsembleView&) { return Mat::Constant(1, 1, 1.0); };
    ch.running = [](double, const PathView& x, const Vec& a, const EnsembleView& law) {
        return x.current()[0] * x.current()[0] + a[0] * law.mean_state()[0];
    };
    ch.terminal = [](const PathView& x, const EnsembleView&) { return x.current()[0]; };
    ch.meta.lipschitz = 1.0;
    return ch;
}

Setup setup_from(const std::string& text) { return make_setup(Config::parse(text)); }

}  // namespace

TEST_CASE("lifted coefficients") {
    const TimeGrid g(0.0, 1.0, 2);
    const ProcessEnsemble xi = testing::random_walk(g, 1, 2, 3, 6);
    const CoefficientSet c = lift_coefficients(mean_drift());
    const std::vector<Vec> acts(6, v1(0.5));
    const EnsembleView law(xi, 1, &acts);
    for (int p = 0; p < 6; ++p) {
        PointContext ctx;
        ctx.t = 0.5;
        ctx.node = 1;
        ctx.particle = p;
        ctx.common = xi.common_of(p);
        ctx.path = PathView(xi.particle(p).values(), 1);
        ctx.action = &acts[static_cast<size_t>(p)];
        ctx.law = &law;
        double m = 0;
        for (int i = 0; i < 3; ++i) m += xi.value(xi.index(ctx.common, i), 1)[0] / 3;
        CHECK(c.drift(ctx)[0] == doctest::Approx(0.5 + m).epsilon(1e-14));
    }

    // A single common batch: the conditional law is the whole ensemble.
    const ProcessEnsemble one = testing::random_walk(g, 1, 1, 5, 7);
    const std::vector<Vec> a5(5, v1(0.5));
    const EnsembleView l1(one, 1, &a5);
    double m = 0, f = 0;
    for (int p = 0; p < 5; ++p) m += one.value(p, 1)[0] / 5;
    for (int p = 0; p < 5; ++p) f += (std::pow(one.value(p, 1)[0], 2) + 0.5 * m) / 5;
    CHECK(c.running(0.5, l1) == doctest::Approx(f).epsilon(1e-14));

    CheckCoefficientSet bad = mean_drift();
    bad.terminal = nullptr;
    CHECK_THROWS_AS(lift_coefficients(bad), ContractError);
}

TEST_CASE("law invariance") {
    const Setup s = setup_from(
        "scenario = mfc.mean_field_drift\nseed = 13\nsteps = 2\nnoise = tree\nparticles.common = 2\n"
        "particles.idio = 2\ncontrol.kind = deterministic\ncontrol.groups = 2\nmodel.sigma_common = 0\n");
    const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, 2, 2, s.xi.n_common() / 2);
    SUBCASE("idio permutation") {
        ProcessEnsemble xi2 = s.xi;
        for (int c = 0; c < s.xi.n_common(); ++c)
            for (int i = 0; i < s.xi.n_idio(); ++i)
                xi2.particle(s.xi.index(c, i)) = s.xi.particle(s.xi.index(c, (i + 3) % s.xi.n_idio()));
        const InvarianceReport r =
            check_law_invariance(*s.scenario.check, 0.0, s.xi, xi2, InvarianceMode::permutation, fam, s.noise);
        CHECK(r.gap <= 1e-12);
        CHECK(r.pass);
    }
    SUBCASE("not a permutation") {
        ProcessEnsemble xi2 = s.xi;
        xi2.particle(0).values().array() += 1.0;
        CHECK_THROWS_AS(check_law_invariance(*s.scenario.check, 0.0, s.xi, xi2, InvarianceMode::permutation, fam, s.noise),
                        ContractError);
    }
}

TEST_CASE("common batch permutation with a batch-symmetric payoff") {
    const Setup s = setup_from("scenario = mfc.heat_common\nseed = 4\nsteps = 4\nparticles.common = 6\nparticles.idio = 5\n");
    ProcessEnsemble xi2 = s.xi;
    const int C = s.xi.n_common();
    for (int c = 0; c < C; ++c)
        for (int i = 0; i < s.xi.n_idio(); ++i) xi2.particle(s.xi.index(c, i)) = s.xi.particle(s.xi.index(C - 1 - c, i));
    const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, 4);
    const InvarianceReport r = check_law_invariance(*s.scenario.check, 0.0, s.xi, xi2, InvarianceMode::permutation, fam, s.noise);
    CHECK(r.gap <= 1e-12);
}

TEST_CASE("resampled initial law") {
    const Config cfg = Config::parse("scenario = mfc.heat_common\nseed = 8\nsteps = 4\nparticles.common = 200\nparticles.idio = 20\n"
                                     "model.sigma_idio = 0.5\ninit = gaussian\n");
    const Setup s = make_setup(cfg);
    const ProcessEnsemble xi2 = make_initial(cfg, s.grid, 1, 200, 20, 77);
    const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, 4);
    const InvarianceReport r = check_law_invariance(*s.scenario.check, 0.0, s.xi, xi2, InvarianceMode::resample, fam, s.noise);
    CHECK(r.gap <= r.tolerance);
    CHECK(std::abs(r.first.value - s.scenario.closed_form(0.0, s.xi)) <= 3 * r.first.std_error + 1e-12);
}

TEST_CASE("decomposition") {
    SUBCASE("one common batch is an identity") {
        const Setup s = setup_from("scenario = mfc.mean_field_drift\nseed = 2\nsteps = 2\nnoise = tree\nparticles.idio = 2\n"
                                   "model.sigma_common = 0\n");
        const DecompositionReport d =
            check_decomposition(*s.scenario.check, 0.0, s.xi, ControlFamily::deterministic(s.scenario.actions, 0, 2), s.noise);
        CHECK(d.gap == 0.0);
        CHECK(d.pass);
    }
    SUBCASE("two tree batches with batch-local controls") {
        const Setup s = setup_from(
            "scenario = mfc.mean_field_drift\nseed = 13\nsteps = 2\nnoise = tree\nparticles.common = 2\n"
            "particles.idio = 2\nmodel.sigma_common = 0\n");
        DecompositionOptions o;
        o.dpp_delta = 0.5;
        const ControlFamily fam = ControlFamily::deterministic(s.scenario.actions, 0, 2, 2, s.xi.n_common() / 2);
        const DecompositionReport d = check_decomposition(*s.scenario.check, 0.0, s.xi, fam, s.noise, o);
        CHECK(d.factorizes);
        CHECK(std::abs(d.gap) <= 1e-12);
        REQUIRE(d.dpp);
        CHECK(std::abs(d.dpp->gap) <= 1e-12);
    }
    SUBCASE("shared controls across batches are one-sided") {
        const Setup s = setup_from(
            "scenario = mfc.mean_field_drift\nseed = 13\nsteps = 2\nnoise = tree\nparticles.common = 2\n"
            "particles.idio = 2\nmodel.sigma_common = 0\n");
        const DecompositionReport d =
            check_decomposition(*s.scenario.check, 0.0, s.xi, ControlFamily::deterministic(s.scenario.actions, 0, 2), s.noise);
        CHECK_FALSE(d.factorizes);
        CHECK_FALSE(d.warnings.empty());
        CHECK(d.gap >= -1e-12);
    }
    SUBCASE("common-noise heat") {
        const Setup s = setup_from("scenario = mfc.heat_common\nseed = 21\nsteps = 8\nparticles.common = 300\nparticles.idio = 20\n"
                                   "model.sigma_idio = 0\nmodel.sigma_common = 1\n");
        const DecompositionReport d =
            check_decomposition(*s.scenario.check, 0.0, s.xi, ControlFamily::deterministic(s.scenario.actions, 0, 8), s.noise);
        CHECK(std::abs(d.gap) <= d.tolerance);
        CHECK(std::abs(d.average - s.scenario.closed_form(0.0, s.xi)) <= 3 * d.lifted.std_error + 1e-12);
    }
}

TEST_CASE("Lipschitz probe") {
    const TimeGrid g(0.0, 1.0, 2);
    std::vector<std::pair<ProcessEnsemble, ProcessEnsemble>> pairs;
    for (int j = 0; j < 5; ++j) pairs.emplace_back(testing::random_walk(g, 1, 3, 4, 10 + j), testing::random_walk(g, 1, 3, 4, 30 + j));
    const LipschitzReport r = lipschitz_probe(mean_drift(), 0.5, pairs, ActionGrid::scalar({-1, 1}));
    CHECK(r.violations == 0);
    CHECK(r.lhs.size() == 5u * 2 * 12);
    CHECK(r.max_ratio <= 1.0 + 1e-12);

    // Doubling the drift's law dependence breaks the stated constant somewhere.
    CheckCoefficientSet steep = mean_drift();
    steep.drift = [](double, const PathView&, const Vec& a, const EnsembleView& law) { return v1(a[0] + 3 * law.mean_state()[0]); };
    CHECK(lipschitz_probe(steep, 0.5, pairs, ActionGrid::scalar({0})).violations > 0);
}
