#pragma once

#include "error.hpp"
#include "random.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

namespace qfluid
{
    inline constexpr double infinity = std::numeric_limits<double>::infinity();

    namespace detail
    {
        template <class... Ts>
        struct overloaded : Ts...
        {
            using Ts::operator()...;
        };
        template <class... Ts>
        overloaded(Ts...) -> overloaded<Ts...>;

        inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
        inline double normal_ccdf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
        inline double normal_pdf(double z)
        {
            return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
        }
        inline double normal_quantile(double u)
        {
            if (u <= 0.0)
                return -infinity;
            if (u >= 1.0)
                return infinity;
            return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
        }

        inline bool positive_finite(double v) { return std::isfinite(v) && v > 0.0; }
    }

    struct Exponential
    {
        double rate;
    };

    struct Deterministic
    {
        double value;
    };

    struct Uniform
    {
        double lo;
        double hi;
    };

    /// log V ~ Normal(mu, sigma^2).
    struct LogNormal
    {
        double mu;
        double sigma;
    };

    struct HyperExponential
    {
        std::vector<double> weights;
        std::vector<double> rates;
    };

    enum class Family
    {
        exponential,
        deterministic,
        uniform,
        lognormal,
        hyperexponential,
    };

    inline std::string_view family_name(Family f)
    {
        switch (f)
        {
        case Family::exponential:
            return "exponential";
        case Family::deterministic:
            return "deterministic";
        case Family::uniform:
            return "uniform";
        case Family::lognormal:
            return "lognormal";
        case Family::hyperexponential:
            return "hyperexponential";
        }
        return "unknown";
    }

    struct DistributionStats
    {
        double mean = 0.0;
        /// inf{x >= 0 : F(x) = 1}; +infinity for unbounded support.
        double support_end = 0.0;
        /// Integral of the survival function over [0, inf).
        double survival_integral_total = 0.0;
        /// Lipschitz constant of the CDF; +infinity when not Lipschitz.
        double lipschitz = 0.0;
        /// sup of the hazard rate; +infinity when unbounded or undefined.
        double hazard_bound = 0.0;

        bool is_lipschitz() const { return std::isfinite(lipschitz); }
        bool has_bounded_hazard() const { return std::isfinite(hazard_bound); }
    };

    /// A parametric lifetime distribution (patience, service or interarrival time).
    ///
    /// Immutable value type. Besides the CDF it exposes the integrated survival
    /// function S(x) = int_0^x [1 - F(y)] dy and its inverse, the equilibrium
    /// (stationary-excess) CDF mean^-1 * S(x), and inverse-CDF sampling.
    class Distribution
    {
    public:
        using Params = std::variant<Exponential, Deterministic, Uniform, LogNormal, HyperExponential>;

        static Distribution exponential(double rate)
        {
            if (!detail::positive_finite(rate))
                throw InvalidArgument("exponential: rate must be positive and finite");
            return Distribution(Exponential{rate});
        }

        static Distribution deterministic(double value)
        {
            if (!detail::positive_finite(value))
                throw InvalidArgument("deterministic: value must be positive and finite");
            return Distribution(Deterministic{value});
        }

        static Distribution uniform(double lo, double hi)
        {
            if (!std::isfinite(lo) || !std::isfinite(hi) || lo < 0.0 || !(lo < hi))
                throw InvalidArgument("uniform: need 0 <= lo < hi < inf");
            return Distribution(Uniform{lo, hi});
        }

        static Distribution lognormal(double mu, double sigma)
        {
            if (!std::isfinite(mu) || !detail::positive_finite(sigma))
                throw InvalidArgument("lognormal: need finite mu and sigma > 0");
            return Distribution(LogNormal{mu, sigma});
        }

        /// Lognormal with the given mean and coefficient of variation.
        static Distribution lognormal_from_mean_cv(double mean, double cv)
        {
            if (!detail::positive_finite(mean) || !detail::positive_finite(cv))
                throw InvalidArgument("lognormal: mean and cv must be positive");
            const double s2 = std::log1p(cv * cv);
            return lognormal(std::log(mean) - 0.5 * s2, std::sqrt(s2));
        }

        static Distribution hyperexponential(std::vector<double> weights, std::vector<double> rates)
        {
            if (weights.empty() || weights.size() != rates.size())
                throw InvalidArgument("hyperexponential: weights and rates must be nonempty and equal length");
            for (std::size_t i = 0; i < weights.size(); ++i)
            {
                if (!detail::positive_finite(weights[i]) || !detail::positive_finite(rates[i]))
                    throw InvalidArgument("hyperexponential: weights and rates must be positive");
            }
            const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
            if (std::abs(sum - 1.0) > 1e-9)
                throw InvalidArgument("hyperexponential: weights must sum to 1");
            for (auto &w : weights)
                w /= sum;
            return Distribution(HyperExponential{std::move(weights), std::move(rates)});
        }

        const Params &params() const { return params_; }

        Family family() const { return static_cast<Family>(params_.index()); }

        bool has_atoms() const { return family() == Family::deterministic; }

        /// P(V <= x).
        double cdf(double x) const
        {
            if (x < 0.0)
                return 0.0;
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return -std::expm1(-p.rate * x); },
                    [&](const Deterministic &p) { return x < p.value ? 0.0 : 1.0; },
                    [&](const Uniform &p) { return std::clamp((x - p.lo) / (p.hi - p.lo), 0.0, 1.0); },
                    [&](const LogNormal &p)
                    { return x == 0.0 ? 0.0 : detail::normal_cdf((std::log(x) - p.mu) / p.sigma); },
                    [&](const HyperExponential &p)
                    {
                        double s = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            s += p.weights[i] * -std::expm1(-p.rates[i] * x);
                        return s;
                    },
                },
                params_);
        }

        /// P(V > x), computed directly rather than as 1 - cdf to keep tail accuracy.
        double survival(double x) const
        {
            if (x < 0.0)
                return 1.0;
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return std::exp(-p.rate * x); },
                    [&](const Deterministic &p) { return x < p.value ? 1.0 : 0.0; },
                    [&](const Uniform &p) { return std::clamp((p.hi - x) / (p.hi - p.lo), 0.0, 1.0); },
                    [&](const LogNormal &p)
                    { return x == 0.0 ? 1.0 : detail::normal_ccdf((std::log(x) - p.mu) / p.sigma); },
                    [&](const HyperExponential &p)
                    {
                        double s = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            s += p.weights[i] * std::exp(-p.rates[i] * x);
                        return s;
                    },
                },
                params_);
        }

        /// Density where one exists; empty for distributions with atoms.
        std::optional<double> density(double x) const
        {
            if (x < 0.0)
                return has_atoms() ? std::nullopt : std::optional<double>(0.0);
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) -> std::optional<double> { return p.rate * std::exp(-p.rate * x); },
                    [&](const Deterministic &) -> std::optional<double> { return std::nullopt; },
                    [&](const Uniform &p) -> std::optional<double>
                    { return (x >= p.lo && x < p.hi) ? 1.0 / (p.hi - p.lo) : 0.0; },
                    [&](const LogNormal &p) -> std::optional<double>
                    {
                        if (x == 0.0)
                            return 0.0;
                        const double z = (std::log(x) - p.mu) / p.sigma;
                        return detail::normal_pdf(z) / (x * p.sigma);
                    },
                    [&](const HyperExponential &p) -> std::optional<double>
                    {
                        double s = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            s += p.weights[i] * p.rates[i] * std::exp(-p.rates[i] * x);
                        return s;
                    },
                },
                params_);
        }

        double mean() const
        {
            return std::visit(
                detail::overloaded{
                    [](const Exponential &p) { return 1.0 / p.rate; },
                    [](const Deterministic &p) { return p.value; },
                    [](const Uniform &p) { return 0.5 * (p.lo + p.hi); },
                    [](const LogNormal &p) { return std::exp(p.mu + 0.5 * p.sigma * p.sigma); },
                    [](const HyperExponential &p)
                    {
                        double s = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            s += p.weights[i] / p.rates[i];
                        return s;
                    },
                },
                params_);
        }

        /// inf{x >= 0 : F(x) = 1}.
        double support_end() const
        {
            return std::visit(
                detail::overloaded{
                    [](const Deterministic &p) { return p.value; },
                    [](const Uniform &p) { return p.hi; },
                    [](const auto &) { return infinity; },
                },
                params_);
        }

        /// S(x) = int_0^x [1 - F(y)] dy = E[min(V, x)] for x >= 0.
        ///
        /// Extended to x < 0 by S(x) = x, which is the same integral with the
        /// survival function equal to one on the negative half-line.
        double survival_integral(double x) const
        {
            if (x <= 0.0)
                return x;
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return -std::expm1(-p.rate * x) / p.rate; },
                    [&](const Deterministic &p) { return std::min(x, p.value); },
                    [&](const Uniform &p)
                    {
                        if (x <= p.lo)
                            return x;
                        if (x >= p.hi)
                            return 0.5 * (p.lo + p.hi);
                        const double u = x - p.lo;
                        return p.lo + u - 0.5 * u * u / (p.hi - p.lo);
                    },
                    [&](const LogNormal &p)
                    {
                        const double z = (std::log(x) - p.mu) / p.sigma;
                        const double m = std::exp(p.mu + 0.5 * p.sigma * p.sigma);
                        return m * detail::normal_cdf(z - p.sigma) + x * detail::normal_ccdf(z);
                    },
                    [&](const HyperExponential &p)
                    {
                        double s = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            s += p.weights[i] * -std::expm1(-p.rates[i] * x) / p.rates[i];
                        return s;
                    },
                },
                params_);
        }

        /// Inverse of survival_integral on [0, mean); returns support_end() for y >= mean.
        double survival_integral_inverse(double y) const
        {
            if (y <= 0.0)
                return y;
            const double total = mean();
            if (y >= total)
                return support_end();
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return -std::log1p(-p.rate * y) / p.rate; },
                    [&](const Deterministic &) { return y; },
                    [&](const Uniform &p)
                    {
                        if (y <= p.lo)
                            return y;
                        const double d = y - p.lo;
                        const double w = p.hi - p.lo;
                        return p.lo + 2.0 * d / (1.0 + std::sqrt(std::max(0.0, 1.0 - 2.0 * d / w)));
                    },
                    [&](const auto &) { return bisect_survival_integral(y); },
                },
                params_);
        }

        /// G_e(x) = S(x) / mean, the stationary residual-life distribution.
        double equilibrium_cdf(double x) const
        {
            if (x <= 0.0)
                return 0.0;
            if (const auto *p = std::get_if<Exponential>(&params_))
                return -std::expm1(-p->rate * x);
            return std::min(1.0, survival_integral(x) / mean());
        }

        /// Inverse CDF, u in [0, 1).
        double quantile(double u) const
        {
            u = std::clamp(u, 0.0, 1.0);
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return -std::log1p(-u) / p.rate; },
                    [&](const Deterministic &p) { return p.value; },
                    [&](const Uniform &p) { return p.lo + u * (p.hi - p.lo); },
                    [&](const LogNormal &p)
                    {
                        if (u <= 0.0)
                            return 0.0;
                        return std::exp(p.mu + p.sigma * detail::normal_quantile(u));
                    },
                    [&](const HyperExponential &p) { return hyperexponential_quantile(p, u); },
                },
                params_);
        }

        double sample(RandomStream &rng) const { return quantile(rng.uniform()); }

        DistributionStats stats() const
        {
            DistributionStats s;
            s.mean = mean();
            s.support_end = support_end();
            s.survival_integral_total = s.mean;
            std::visit(
                detail::overloaded{
                    [&](const Exponential &p)
                    {
                        s.lipschitz = p.rate;
                        s.hazard_bound = p.rate;
                    },
                    [&](const Deterministic &)
                    {
                        s.lipschitz = infinity;
                        s.hazard_bound = infinity;
                    },
                    [&](const Uniform &p)
                    {
                        s.lipschitz = 1.0 / (p.hi - p.lo);
                        s.hazard_bound = infinity;
                    },
                    [&](const LogNormal &p)
                    {
                        // density peaks at the mode exp(mu - sigma^2)
                        const double mode = std::exp(p.mu - p.sigma * p.sigma);
                        s.lipschitz = *density(mode);
                        s.hazard_bound = lognormal_hazard_max(p);
                    },
                    [&](const HyperExponential &p)
                    {
                        // density and hazard of a mixture of exponentials both peak at 0
                        double r = 0.0;
                        for (std::size_t i = 0; i < p.rates.size(); ++i)
                            r += p.weights[i] * p.rates[i];
                        s.lipschitz = r;
                        s.hazard_bound = r;
                    },
                },
                params_);
            return s;
        }

        /// Same family with time rescaled: V -> factor * V.
        Distribution scaled(double factor) const
        {
            if (!detail::positive_finite(factor))
                throw InvalidArgument("scale factor must be positive");
            return std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { return Distribution(Exponential{p.rate / factor}); },
                    [&](const Deterministic &p) { return Distribution(Deterministic{p.value * factor}); },
                    [&](const Uniform &p) { return Distribution(Uniform{p.lo * factor, p.hi * factor}); },
                    [&](const LogNormal &p) { return Distribution(LogNormal{p.mu + std::log(factor), p.sigma}); },
                    [&](const HyperExponential &p)
                    {
                        auto rates = p.rates;
                        for (auto &r : rates)
                            r /= factor;
                        return Distribution(HyperExponential{p.weights, std::move(rates)});
                    },
                },
                params_);
        }

        /// Same family rescaled to the given mean.
        Distribution with_mean(double target_mean) const { return scaled(target_mean / mean()); }

        std::string describe() const
        {
            std::string out(family_name(family()));
            std::visit(
                detail::overloaded{
                    [&](const Exponential &p) { out += "(" + std::to_string(p.rate) + ")"; },
                    [&](const Deterministic &p) { out += "(" + std::to_string(p.value) + ")"; },
                    [&](const Uniform &p) { out += "(" + std::to_string(p.lo) + "," + std::to_string(p.hi) + ")"; },
                    [&](const LogNormal &p) { out += "(" + std::to_string(p.mu) + "," + std::to_string(p.sigma) + ")"; },
                    [&](const HyperExponential &p) { out += "[" + std::to_string(p.rates.size()) + " phases]"; },
                },
                params_);
            return out;
        }

    private:
        explicit Distribution(Params p) : params_(std::move(p)) {}

        // Bracketing bisection, absolute tolerance 1e-12 on x. S is strictly
        // increasing on [0, support_end) with slope <= 1.
        double bisect_survival_integral(double y) const
        {
            double lo = 0.0;
            double hi = std::max(1.0, mean());
            for (int i = 0; i < 2000 && survival_integral(hi) <= y; ++i)
            {
                lo = hi;
                hi *= 2.0;
            }
            for (int i = 0; i < 200 && hi - lo > 1e-12; ++i)
            {
                const double mid = 0.5 * (lo + hi);
                if (survival_integral(mid) < y)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }

        static double hyperexponential_quantile(const HyperExponential &p, double u)
        {
            if (u <= 0.0)
                return 0.0;
            if (u >= 1.0)
                return infinity;
            // the mixture quantile lies between the extreme phase quantiles
            double lo = infinity;
            double hi = 0.0;
            for (double r : p.rates)
            {
                const double q = -std::log1p(-u) / r;
                lo = std::min(lo, q);
                hi = std::max(hi, q);
            }
            auto cdf = [&](double x)
            {
                double s = 0.0;
                for (std::size_t i = 0; i < p.rates.size(); ++i)
                    s += p.weights[i] * -std::expm1(-p.rates[i] * x);
                return s;
            };
            for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i)
            {
                const double mid = 0.5 * (lo + hi);
                if (cdf(mid) < u)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }

        // The lognormal hazard is unimodal; scan in the standardized log scale
        // and pad the maximum slightly so the value is an upper bound.
        static double lognormal_hazard_max(const LogNormal &p)
        {
            double best = 0.0;
            for (int i = -12000; i <= 12000; ++i)
            {
                const double z = i * 1e-3;
                const double x = std::exp(p.mu + p.sigma * z);
                const double tail = detail::normal_ccdf(z);
                if (tail <= 0.0)
                    break;
                best = std::max(best, detail::normal_pdf(z) / (x * p.sigma * tail));
            }
            return best * (1.0 + 1e-3);
        }

        Params params_;
    };

    /// Service distributions must be atomless with 0 < mean < inf.
    inline void require_service_admissible(const Distribution &d)
    {
        const double m = d.mean();
        if (!(m > 0.0) || !std::isfinite(m))
            throw InvalidArgument("invalid service distribution: mean must be positive and finite");
        if (d.has_atoms())
            throw InvalidArgument("invalid service distribution: " + d.describe() + " has an atom");
    }

    /// Patience distributions need a Lipschitz CDF or a bounded hazard rate.
    inline void require_patience_admissible(const Distribution &d)
    {
        const auto s = d.stats();
        if (!s.is_lipschitz() && !s.has_bounded_hazard())
            throw InvalidArgument("invalid patience distribution: " + d.describe() +
                                  " is neither Lipschitz nor of bounded hazard");
    }
}
