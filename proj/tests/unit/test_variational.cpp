#include "helpers.hpp"
#include "procspace/batteries.hpp"
#include "procspace/variational.hpp"

using namespace procspace;

namespace {

FiniteInstance line_instance(const std::vector<double>& x, const std::vector<double>& psi) {
    const int n = static_cast<int>(x.size());
    FiniteInstance inst;
    inst.d = Mat::Zero(n, n);
    inst.psi = Vec::Map(psi.data(), n);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) inst.d(a, b) = std::abs(x[static_cast<size_t>(a)] - x[static_cast<size_t>(b)]);
    inst.gauge = inst.d.array().square();
    return inst;
}

}  // namespace

TEST_CASE("is_gauge") {
    FiniteInstance inst = line_instance({0.0, 1.0, 2.5}, {0, 0, 0});
    const GaugeCheck g = is_gauge(inst);
    CHECK(g.is_gauge);
    CHECK_FALSE(g.witness);
    CHECK(g.separation == doctest::Approx(1.0));

    FiniteInstance zero = line_instance({0.0, 1.0}, {0, 0});
    zero.gauge.setZero();
    const GaugeCheck z = is_gauge(zero);
    CHECK_FALSE(z.is_gauge);
    REQUIRE(z.witness);
    CHECK(z.witness->first != z.witness->second);

    FiniteInstance broken = line_instance({0.0, 1.0}, {0, 0});
    broken.d(0, 1) = -1;
    CHECK_THROWS_AS(broken.validate(), DomainError);
}

TEST_CASE("gauge tables from process points") {
    const TimeGrid g(0.0, 1.0, 4);
    std::vector<GaugePoint> pts;
    for (int j = 0; j < 20; ++j) {
        const int k = j % 5;
        pts.push_back({g.time(k), testing::random_walk(g, 1, 1, 3, 50 + j).stopped(k)});
    }
    const FiniteInstance inst = instance_from_gauge(pts, 6, Vec::Zero(20));
    inst.validate();
    CHECK(is_gauge(inst).is_gauge);
}

TEST_CASE("Borwein-Preiss") {
    SUBCASE("unique strict maximum at the start") {
        const FiniteInstance inst = line_instance({0.0, 1.0, 2.0, 3.0}, {0.0, 2.0, 1.0, -1.0});
        const BorweinPreiss bp = borwein_preiss(inst, 0.1, 1);
        CHECK(bp.verified);
        CHECK(bp.x_hat == 1);
        for (int x : bp.sequence) CHECK(x == 1);
        CHECK(bp.Psi[1] == doctest::Approx(2.0));
    }
    SUBCASE("three points with a tie") {
        const FiniteInstance inst = line_instance({0.0, 1.0, 2.0}, {0.0, 1.0, 1.0});
        const BorweinPreiss bp = borwein_preiss(inst, 0.5, 2);
        CHECK(bp.verified);
        CHECK(bp.failure.empty());
        int maxima = 0;
        for (int x = 0; x < 3; ++x) {
            if (bp.Psi[x] >= bp.Psi[bp.x_hat]) ++maxima;
            CHECK(bp.Psi[x] <= inst.psi[x]);
        }
        CHECK(maxima == 1);
        CHECK(bp.Psi[bp.x_hat] >= inst.psi[2]);
        for (size_t i = 0; i < bp.sequence.size(); ++i) {
            CHECK(inst.gauge(bp.x_hat, bp.sequence[i]) <= 0.5 * std::pow(2.0, -static_cast<double>(i)) + 1e-15);
        }
    }
    SUBCASE("start below the epsilon level") {
        const FiniteInstance inst = line_instance({0.0, 1.0}, {0.0, 1.0});
        CHECK_THROWS_AS(borwein_preiss(inst, 0.5, 0), DomainError);
    }
}

TEST_CASE("small variational battery") {
    VariationalBatteryOptions o;
    o.instances = 60;
    o.max_points = 40;
    o.gauge_instances = 4;
    const VariationalBatteryReport r = variational_battery(o);
    CHECK(r.instances == 64);
    CHECK(r.failures == 0);
    CHECK(r.pass());
}
