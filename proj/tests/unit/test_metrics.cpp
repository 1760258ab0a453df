#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <algorithm>
#include <numeric>

#include "helpers.hpp"
#include "procspace/metrics.hpp"

using namespace procspace;
using testing::v1;

namespace {

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("wasserstein examples") {
    const auto mu = EmpiricalMeasure::uniform({v1(0.0), v1(1.0)});
    CHECK(wasserstein_p(mu, mu, 2.0) == doctest::Approx(0.0));
    const auto nu = EmpiricalMeasure::uniform({v1(0.5), v1(1.5)});
    CHECK(wasserstein_p(mu, nu, 2.0) == doctest::Approx(0.5));
    CHECK(wasserstein_p(nu, mu, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("two-dimensional wasserstein against brute force over all pairings") {
    const CounterStream rng(4, 0);
    std::uint64_t idx = 0;
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Vec> a, b;
        for (int i = 0; i < 4; ++i) {
            a.push_back(v2(rng.normal(idx++), rng.normal(idx++)));
            b.push_back(v2(rng.normal(idx++), rng.normal(idx++)));
        }
        std::vector<int> perm{0, 1, 2, 3};
        double best = 1e300;
        do {
            double s = 0;
            for (int i = 0; i < 4; ++i) s += (a[static_cast<size_t>(i)] - b[static_cast<size_t>(perm[static_cast<size_t>(i)])]).squaredNorm() / 4;
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(wasserstein_p(EmpiricalMeasure::uniform(a), EmpiricalMeasure::uniform(b), 2.0) ==
              doctest::Approx(std::sqrt(best)).epsilon(1e-12));
    }
}

TEST_CASE("Hungarian solver matches enumeration") {
    const CounterStream rng(8, 0);
    std::uint64_t idx = 0;
    for (int n : {2, 5, 8}) {
        Mat c(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) c(i, j) = rng.uniform(idx++);
        const std::vector<int> col = solve_assignment(c);
        double got = 0;
        for (int i = 0; i < n; ++i) got += c(i, col[static_cast<size_t>(i)]);
        std::vector<int> perm(static_cast<size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        double best = 1e300;
        do {
            double s = 0;
            for (int i = 0; i < n; ++i) s += c(i, perm[static_cast<size_t>(i)]);
            best = std::min(best, s);
        } while (std::next_permutation(perm.begin(), perm.end()));
        CHECK(got == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("large assignment-based wasserstein is symmetric and vanishes on itself") {
    std::vector<Vec> a, b;
    const CounterStream rng(12, 0);
    for (int i = 0; i < 40; ++i) {
        a.push_back(v2(rng.normal(4 * i), rng.normal(4 * i + 1)));
        b.push_back(v2(rng.normal(4 * i + 2), rng.normal(4 * i + 3)));
    }
    const auto A = EmpiricalMeasure::uniform(a), B = EmpiricalMeasure::uniform(b);
    CHECK(wasserstein_p(A, A, 2.0) == doctest::Approx(0.0));
    CHECK(wasserstein_p(A, B, 2.0) == doctest::Approx(wasserstein_p(B, A, 2.0)).epsilon(1e-12));
}

TEST_CASE("measure validation") {
    EmpiricalMeasure m;
    CHECK_THROWS(m.validate());
    m.atoms = {v1(0.0)};
    m.weights = {0.5};
    CHECK_THROWS(m.validate());
}

TEST_CASE("conditional laws") {
    const TimeGrid g(0.0, 1.0, 2);
    SUBCASE("single batch is the whole ensemble") {
        const ProcessEnsemble e = testing::random_walk(g, 1, 1, 5, 3);
        const EmpiricalMeasure m = conditional_state_law(e, 0, 1.0);
        CHECK(m.size() == 5);
        for (int i = 0; i < 5; ++i) CHECK(m.atoms[static_cast<size_t>(i)][0] == e.value(i, 2)[0]);
    }
    SUBCASE("two batches of constant paths") {
        const ProcessEnsemble e = ProcessEnsemble::constant(g, {v1(1.0), v1(1.0), v1(4.0), v1(4.0)}, 2, 2);
        const EmpiricalMeasure a = conditional_law(e, 0, 1.0), b = conditional_law(e, 1, 1.0);
        CHECK(wasserstein_p(a, a, 2.0) == doctest::Approx(0.0));
        CHECK(wasserstein_p(a, b, 2.0) == doctest::Approx(3.0));
    }
}

TEST_CASE("Fourier metric") {
    const auto d0 = EmpiricalMeasure::uniform({v1(0.0)});
    CHECK(fourier_wasserstein(d0, d0, 2.0).value == doctest::Approx(0.0));

    const double a = 0.7, k = 2.0, cutoff = 1000.0;
    const auto da = EmpiricalMeasure::uniform({v1(a)});
    auto integrand = [&](double z) { return 2.0 * (1.0 - std::cos(z * a)) / (1.0 + std::pow(std::abs(z), k)); };
    // Adaptive Gauss-Kronrod on unit panels as the independent oracle.
    double oracle = 0.0;
    for (double lo = 0.0; lo < cutoff; lo += 1.0) {
        oracle += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, lo, lo + 1.0, 8, 1e-14);
    }
    oracle *= 2.0;
    const FourierDistance f = fourier_wasserstein(d0, da, k);
    CHECK(std::abs(f.squared - oracle) <= 1e-8 * oracle);
    CHECK(f.truncation_bound > 0.0);

    const CounterStream rng(2, 0);
    std::vector<Vec> x, y;
    for (int i = 0; i < 6; ++i) {
        x.push_back(v1(rng.normal(2 * i)));
        y.push_back(v1(rng.normal(2 * i + 1)));
    }
    const auto X = EmpiricalMeasure::uniform(x), Y = EmpiricalMeasure::uniform(y);
    CHECK(fourier_wasserstein(X, Y, 2.0).value == doctest::Approx(fourier_wasserstein(Y, X, 2.0).value).epsilon(1e-13));
}
