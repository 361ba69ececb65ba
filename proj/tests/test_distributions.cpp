#include <catch_amalgamated.hpp>

#include <qfluid/distributions.hpp>
#include <qfluid/random.hpp>

#include "support/oracles.hpp"

#include <cmath>
#include <vector>

using namespace qfluid;
using Catch::Approx;

namespace
{
    std::vector<Distribution> families()
    {
        return {
            Distribution::exponential(1.5),
            Distribution::deterministic(2.0),
            Distribution::uniform(0.5, 2.0),
            Distribution::lognormal(0.1, 0.8),
            Distribution::hyperexponential({0.3, 0.7}, {0.5, 3.0}),
        };
    }
}

TEST_CASE("cdf closed forms")
{
    CHECK(Distribution::exponential(1).cdf(std::log(2.0)) == Approx(0.5).margin(1e-15));
    CHECK(Distribution::deterministic(2).cdf(1.0) == 0.0);
    CHECK(Distribution::deterministic(2).cdf(2.0) == 1.0);
    CHECK(Distribution::uniform(0, 2).cdf(0.5) == Approx(0.25).margin(1e-15));
    const auto ln = Distribution::lognormal(0.2, 0.7);
    for (double x : {0.1, 0.5, 1.0, 3.0})
        CHECK(ln.survival(x) == Approx(oracle::lognormal_survival(x, 0.2, 0.7)).margin(1e-14));
    const auto h = Distribution::hyperexponential({0.25, 0.75}, {1.0, 4.0});
    CHECK(h.survival(0.7) == Approx(0.25 * std::exp(-0.7) + 0.75 * std::exp(-2.8)).margin(1e-15));
    for (const auto &d : families())
    {
        CHECK(d.cdf(-1.0) == 0.0);
        CHECK(d.cdf(0.0) == 0.0);
    }
}

TEST_CASE("equilibrium cdf")
{
    CHECK(Distribution::exponential(1.3).equilibrium_cdf(0.8) == Approx(1.0 - std::exp(-1.3 * 0.8)).margin(1e-14));
    CHECK(Distribution::deterministic(2).equilibrium_cdf(1.0) == Approx(0.5).margin(1e-15));
    for (const auto &d : families())
    {
        CHECK(d.equilibrium_cdf(0.0) == 0.0);
        for (double x : {0.3, 1.1, 2.5})
        {
            const double ref = oracle::integrate([&](double y) { return d.survival(y); }, 0.0, x, 1e-13) / d.mean();
            CHECK(d.equilibrium_cdf(x) == Approx(ref).margin(1e-9));
        }
    }
}

TEST_CASE("integrated survival function")
{
    CHECK(Distribution::exponential(1).survival_integral(std::log(2.0)) == Approx(0.5).margin(1e-15));
    CHECK(Distribution::deterministic(2).survival_integral(3.0) == 2.0);
    for (const auto &d : families())
    {
        CHECK(d.survival_integral(0.0) == 0.0);
        double prev = 0.0;
        for (double x : {0.2, 0.9, 1.7, 4.0, 9.0})
        {
            // split at the atom / break points so Simpson sees smooth pieces
            const double ref = oracle::integrate([&](double y) { return d.survival(y); }, 0.0, std::min(x, 0.5)) +
                               oracle::integrate([&](double y) { return d.survival(y); }, std::min(x, 0.5),
                                                 std::min(x, 2.0)) +
                               oracle::integrate([&](double y) { return d.survival(y); }, std::min(x, 2.0), x);
            const double v = d.survival_integral(x);
            CHECK(v == Approx(ref).margin(1e-9));
            CHECK(v >= prev);
            CHECK(v <= d.mean() + 1e-15);
            prev = v;
        }
    }
}

TEST_CASE("integrated survival inverse")
{
    CHECK(Distribution::exponential(1).survival_integral_inverse(0.5) == Approx(std::log(2.0)).margin(1e-12));
    CHECK(Distribution::deterministic(2).survival_integral_inverse(2.5) == 2.0);
    CHECK(std::isinf(Distribution::exponential(1).survival_integral_inverse(1.0)));
    for (const auto &d : families())
    {
        CHECK(d.survival_integral_inverse(0.0) == 0.0);
        for (double frac : {0.05, 0.3, 0.6, 0.95})
        {
            const double y = frac * d.mean();
            CHECK(d.survival_integral(d.survival_integral_inverse(y)) == Approx(y).margin(1e-10));
        }
    }
}

TEST_CASE("quantiles and sampling")
{
    CHECK(Distribution::exponential(1).quantile(0.5) == Approx(std::log(2.0)).margin(1e-15));
    CHECK(Distribution::uniform(0, 2).quantile(0.25) == Approx(0.5).margin(1e-15));
    RandomStream rng(3);
    for (int i = 0; i < 10; ++i)
        CHECK(Distribution::deterministic(2).sample(rng) == 2.0);
    for (const auto &d : families())
    {
        if (d.has_atoms())
            continue;
        for (double u : {0.01, 0.2, 0.5, 0.8, 0.999})
            CHECK(d.cdf(d.quantile(u)) == Approx(u).margin(1e-9));
    }
}

TEST_CASE("sample means match the distribution mean")
{
    for (const auto &d : families())
    {
        RandomStream rng(11);
        const int n = 200000;
        double sum = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i)
        {
            const double x = d.sample(rng);
            REQUIRE(x >= 0.0);
            sum += x;
            sq += x * x;
        }
        const double m = sum / n;
        const double sd = std::sqrt(std::max(sq / n - m * m, 0.0));
        CHECK(std::abs(m - d.mean()) <= 5.0 * sd / std::sqrt(double(n)) + 1e-12);
    }
}

TEST_CASE("stats")
{
    const auto e = Distribution::exponential(2.0).stats();
    CHECK(e.mean == Approx(0.5));
    CHECK(std::isinf(e.support_end));
    CHECK(e.survival_integral_total == Approx(0.5));
    CHECK(e.hazard_bound == Approx(2.0));

    const auto d = Distribution::deterministic(2.0).stats();
    CHECK(d.mean == 2.0);
    CHECK(d.support_end == 2.0);
    CHECK(d.survival_integral_total == 2.0);
    CHECK_FALSE(d.is_lipschitz());

    const auto u = Distribution::uniform(0.0, 4.0).stats();
    CHECK(u.mean == Approx(2.0));
    CHECK(u.support_end == 4.0);
    CHECK(u.survival_integral_total == Approx(2.0));
    CHECK(u.lipschitz == Approx(0.25));

    const auto ln = Distribution::lognormal(0.0, 1.0).stats();
    CHECK(ln.mean == Approx(std::exp(0.5)));
    CHECK(ln.has_bounded_hazard());
    // lognormal hazard is unimodal; a fine scan bounds it from below
    double peak = 0.0;
    const auto l = Distribution::lognormal(0.0, 1.0);
    for (double x = 0.01; x < 20.0; x += 0.001)
        peak = std::max(peak, *l.density(x) / l.survival(x));
    CHECK(ln.hazard_bound >= peak);
    CHECK(ln.hazard_bound <= peak * 1.01);
}

TEST_CASE("lognormal from mean and cv")
{
    const auto d = Distribution::lognormal_from_mean_cv(1.0, 1.0);
    CHECK(d.mean() == Approx(1.0).epsilon(1e-14));
    const auto &p = std::get<LogNormal>(d.params());
    const double var = (std::exp(p.sigma * p.sigma) - 1.0) * d.mean() * d.mean();
    CHECK(std::sqrt(var) == Approx(1.0).epsilon(1e-12));
}

TEST_CASE("scaling")
{
    for (const auto &d : families())
    {
        const auto s = d.with_mean(0.01);
        CHECK(s.mean() == Approx(0.01).epsilon(1e-12));
        CHECK(s.cdf(0.01 / d.mean() * 1.3) == Approx(d.cdf(1.3)).margin(1e-12));
    }
}

TEST_CASE("validation")
{
    CHECK_THROWS_AS(Distribution::exponential(0.0), InvalidArgument);
    CHECK_THROWS_AS(Distribution::exponential(-1.0), InvalidArgument);
    CHECK_THROWS_AS(Distribution::uniform(2.0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(Distribution::lognormal(0.0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(Distribution::hyperexponential({0.5, 0.6}, {1.0, 2.0}), InvalidArgument);
    CHECK_THROWS_AS(Distribution::hyperexponential({1.0}, {1.0, 2.0}), InvalidArgument);
    CHECK_THROWS_WITH(require_service_admissible(Distribution::deterministic(1.0)),
                      Catch::Matchers::ContainsSubstring("invalid service distribution"));
    CHECK_NOTHROW(require_service_admissible(Distribution::lognormal(0.0, 1.0)));
    CHECK_THROWS_AS(require_patience_admissible(Distribution::deterministic(1.0)), InvalidArgument);
    CHECK_NOTHROW(require_patience_admissible(Distribution::uniform(0.0, 2.0)));
    CHECK_NOTHROW(require_patience_admissible(Distribution::hyperexponential({0.5, 0.5}, {1.0, 2.0})));
}

TEST_CASE("random streams are reproducible and distinct per replication")
{
    auto a = RandomStream::for_replication(5, 0);
    auto b = RandomStream::for_replication(5, 0);
    auto c = RandomStream::for_replication(5, 1);
    bool differ = false;
    for (int i = 0; i < 100; ++i)
    {
        const double x = a.uniform();
        CHECK(x == b.uniform());
        CHECK(x > 0.0);
        CHECK(x < 1.0);
        differ = differ || x != c.uniform();
    }
    CHECK(differ);
}
