#include <catch_amalgamated.hpp>

#include <qfluid/measures.hpp>
#include <qfluid/random.hpp>

#include "support/oracles.hpp"

#include <vector>

using namespace qfluid;

TEST_CASE("empirical measures")
{
    const std::vector<double> none;
    const auto z = TailMeasure::from_samples(none, 0.01);
    CHECK(z.total() == 0.0);
    CHECK(z.tail_at(-5.0) == 0.0);
    CHECK(z.tail_at(3.0) == 0.0);

    const std::vector<double> v{1, 2, 3};
    const auto m = TailMeasure::from_samples(v, 1.0);
    CHECK(m.total() == 3.0);
    CHECK(m.tail_at(1.5) == 2.0);
    CHECK(m.tail_at(2.0) == 1.0);
    CHECK(m.tail_at(0.0) == 3.0);
    CHECK(m.tail_at(3.0) == 0.0);
    CHECK(m.tail_at(99.0) == 0.0);

    const std::vector<double> w{-0.5, 0.5};
    const auto n = TailMeasure::from_samples(w, 0.5);
    CHECK(n.total() == 1.0);
    CHECK(n.tail_at(0.0) == 0.5);
    CHECK(n.tail_at(-1.0) == 1.0);
}

TEST_CASE("empirical tails agree with brute-force counts")
{
    RandomStream rng(9);
    std::vector<double> v(500);
    for (auto &x : v)
        x = 4.0 * rng.uniform() - 1.0;
    v.push_back(v[3]); // a repeated value
    const std::vector<double> probes{-2.0, -0.3, 0.0, 0.7, 2.9, 5.0};
    const auto m = TailMeasure::from_samples(v, 0.01, probes);
    for (double x : probes)
        CHECK(m.tail_at(x) == Catch::Approx(0.01 * oracle::count_above(v, x)).margin(1e-12));
    CHECK(m.tail_at(v[3]) == Catch::Approx(0.01 * oracle::count_above(v, v[3])).margin(1e-12));
}

TEST_CASE("tabulated tails interpolate linearly")
{
    const auto m = TailMeasure::tabulated({0.0, 1.0}, {1.0, 0.0}, 1.0);
    CHECK(m.tail_at(0.5) == Catch::Approx(0.5));
    CHECK(m.tail_at(-1.0) == 1.0);
    CHECK(m.tail_at(2.0) == 0.0);
    const auto s = TailMeasure::tabulated({0.0, 1.0}, {1.0, 0.0}, 1.0, TailKind::step);
    CHECK(s.tail_at(0.5) == 1.0);
}

TEST_CASE("tabulated tails are validated")
{
    CHECK_THROWS_AS(TailMeasure::tabulated({0.0, 0.0}, {1.0, 0.5}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(TailMeasure::tabulated({0.0, 1.0}, {0.5, 0.7}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(TailMeasure::tabulated({0.0, 1.0}, {1.5, 0.7}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(TailMeasure::tabulated({0.0}, {1.0, 0.7}, 1.0), InvalidArgument);
    CHECK_THROWS_AS(TailMeasure::tabulated({0.0}, {0.0}, -1.0), InvalidArgument);
}

TEST_CASE("sup distance")
{
    const std::vector<double> one{1.0}, two{2.0};
    const auto d1 = TailMeasure::from_samples(one, 1.0);
    const auto d2 = TailMeasure::from_samples(two, 1.0);
    const std::vector<double> probes{0.0, 1.5, 3.0};
    CHECK(sup_distance(d1, d1, probes) == 0.0);
    CHECK(sup_distance(d1, d2, probes) == 1.0);

    const std::vector<double> pts{1.0, 2.0};
    const auto e = TailMeasure::from_samples(pts, 0.5);
    const std::vector<double> zero_probe{0.0};
    CHECK(sup_distance(e, TailMeasure::zero(), zero_probe) == 1.0);
    // the total-mass term is seen even with probes far to the right
    const std::vector<double> far{10.0};
    CHECK(sup_distance(e, TailMeasure::zero(), far) == 1.0);

    CHECK_THROWS_AS(sup_distance(d1, d2, std::vector<double>{}), InvalidArgument);
}

TEST_CASE("sup distance is a pseudometric on a fixed probe set")
{
    RandomStream rng(1);
    auto random_measure = [&]
    {
        std::vector<double> v(20);
        for (auto &x : v)
            x = 3.0 * rng.uniform() - 1.0;
        return TailMeasure::from_samples(v, 0.05 * (0.5 + rng.uniform()));
    };
    const auto probes = uniform_probes(-2.0, 3.0, 64);
    for (int i = 0; i < 50; ++i)
    {
        const auto a = random_measure(), b = random_measure(), c = random_measure();
        const double ab = sup_distance(a, b, probes);
        CHECK(ab == sup_distance(b, a, probes));
        CHECK(ab >= 0.0);
        CHECK(sup_distance(a, c, probes) <= ab + sup_distance(b, c, probes) + 1e-15);
    }
}

TEST_CASE("scaling divides every tail")
{
    const std::vector<double> v{0.5, 1.0, 1.0, 4.0};
    const auto m = TailMeasure::from_samples(v, 1.0).scaled(0.25);
    CHECK(m.total() == 1.0);
    CHECK(m.tail_at(0.75) == 0.75);
}

TEST_CASE("uniform probes")
{
    const auto p = uniform_probes(-1.0, 1.0, 5);
    REQUIRE(p.size() == 5);
    CHECK(p.front() == -1.0);
    CHECK(p[2] == 0.0);
    CHECK(p.back() == 1.0);
    CHECK_THROWS_AS(uniform_probes(1.0, 1.0), InvalidArgument);
}
