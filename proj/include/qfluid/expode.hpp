#pragma once

#include "distributions.hpp"
#include "fluid.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace qfluid
{
    /// Exponential patience (rate alpha) and exponential service (rate mu):
    /// the fluid count obeys X' = mu (rho - 1) - alpha (X - 1)^+ + mu (X - 1)^-.
    struct ExpOdeConfig
    {
        double mu = 1.0;
        double alpha = 1.0;
        double rho = 1.0;
        double x0 = 0.0;
        double horizon = 10.0;
        double dt = 1e-3;
    };

    inline double ode_rhs(const ExpOdeConfig &cfg, double x)
    {
        const double over = std::max(x - 1.0, 0.0);
        const double under = std::max(1.0 - x, 0.0);
        return cfg.mu * (cfg.rho - 1.0) - cfg.alpha * over + cfg.mu * under;
    }

    /// Classical RK4 on the grid t_k = k dt.
    inline std::vector<double> integrate(const ExpOdeConfig &cfg)
    {
        if (!(cfg.dt > 0.0))
            throw InvalidArgument("expode: dt must be positive");
        const auto steps = static_cast<std::size_t>(std::floor(cfg.horizon / cfg.dt + 1e-9));
        std::vector<double> x(steps + 1);
        x[0] = cfg.x0;
        const double h = cfg.dt;
        for (std::size_t k = 0; k < steps; ++k)
        {
            const double k1 = ode_rhs(cfg, x[k]);
            const double k2 = ode_rhs(cfg, x[k] + 0.5 * h * k1);
            const double k3 = ode_rhs(cfg, x[k] + 0.5 * h * k2);
            const double k4 = ode_rhs(cfg, x[k] + h * k3);
            x[k + 1] = x[k] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return x;
    }

    /// Fluid-model inputs that reproduce the exponential special case: the
    /// initial content decays as X0 e^{-mu t} because G_e = G.
    inline FluidConfig exponential_fluid_config(const ExpOdeConfig &cfg, double tolerance = 1e-10)
    {
        return FluidConfig{
            .lambda = cfg.rho * cfg.mu,
            .patience = Distribution::exponential(cfg.alpha),
            .service = Distribution::exponential(cfg.mu),
            .horizon = cfg.horizon,
            .dt = cfg.dt,
            .tolerance = tolerance,
        };
    }

    inline InitialCondition exponential_initial_condition(const ExpOdeConfig &cfg)
    {
        const double lambda = cfg.rho * cfg.mu;
        const double queue = std::max(cfg.x0 - 1.0, 0.0);
        const double in_service = std::min(cfg.x0, 1.0);
        const auto patience = Distribution::exponential(cfg.alpha);
        const double r0 = queue > 0.0 ? lambda * patience.survival_integral_inverse(queue / lambda) : 0.0;
        if (in_service <= 0.0)
            return InitialCondition{r0, EmptyProfile{}};
        return InitialCondition{r0, EquilibriumProfile{in_service}};
    }

    struct OdeCrossCheck
    {
        std::vector<double> times;
        std::vector<double> ode;
        std::vector<double> fluid;
        double sup_diff = 0.0;
    };

    inline OdeCrossCheck cross_check(const ExpOdeConfig &cfg, double tolerance = 1e-10)
    {
        OdeCrossCheck out;
        out.ode = integrate(cfg);
        const auto sol = solve(exponential_fluid_config(cfg, tolerance), exponential_initial_condition(cfg));
        out.fluid = sol.total();
        const std::size_t n = std::min(out.ode.size(), out.fluid.size());
        out.times.resize(n);
        for (std::size_t k = 0; k < n; ++k)
        {
            out.times[k] = sol.time(k);
            out.sup_diff = std::max(out.sup_diff, std::abs(out.ode[k] - out.fluid[k]));
        }
        return out;
    }
}
