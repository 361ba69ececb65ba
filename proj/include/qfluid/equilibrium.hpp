#pragma once

#include "distributions.hpp"
#include "error.hpp"
#include "fluid.hpp"
#include "measures.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace qfluid
{
    /// Offered waiting time: a root of F(w) = max((rho - 1) / rho, 0).
    struct OfferedWait
    {
        double w = 0.0;
        /// Maximal interval on which F stays at the target level. Degenerate
        /// (up to the root tolerance) when F is strictly increasing there.
        double lo = 0.0;
        double hi = 0.0;
    };

    /// Smallest root by bisection over [0, M_F]; when M_F is infinite the
    /// upper bracket is grown geometrically from 1.
    inline OfferedWait solve_offered_wait(double lambda, const Distribution &patience, const Distribution &service,
                                          double tolerance = 1e-10)
    {
        if (!(lambda > 0.0))
            throw InvalidArgument("equilibrium: lambda must be positive");
        require_service_admissible(service);
        const double rho = lambda * service.mean();
        if (rho <= 1.0)
            return {};
        const double target = (rho - 1.0) / rho;
        if (!(target < 1.0))
            throw InvalidArgument("target-unreachable: abandonment fraction " + std::to_string(target) + " >= 1");

        double lo = 0.0;
        double hi = patience.support_end();
        if (!std::isfinite(hi))
        {
            hi = 1.0;
            for (int i = 0; i < 1100 && patience.cdf(hi) < target; ++i)
            {
                lo = hi;
                hi *= 2.0;
            }
        }
        while (hi - lo > tolerance)
        {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi)
                break;
            if (patience.cdf(mid) < target)
                lo = mid;
            else
                hi = mid;
        }
        const double w = hi;
        if (std::abs(patience.cdf(w) - target) > 1e-8)
            throw InvalidArgument("target-unreachable: F(w) = " + std::to_string(target) + " has no solution");

        // probe for a flat stretch of F at the target level
        const double level = patience.cdf(w) + 1e-13;
        double flat_lo = w;
        double flat_hi = w + std::max(1.0, w);
        for (int i = 0; i < 1100 && patience.cdf(flat_hi) <= level; ++i)
        {
            flat_lo = flat_hi;
            flat_hi = w + 2.0 * (flat_hi - w);
        }
        while (flat_hi - flat_lo > tolerance)
        {
            const double mid = 0.5 * (flat_lo + flat_hi);
            if (mid <= flat_lo || mid >= flat_hi)
                break;
            if (patience.cdf(mid) <= level)
                flat_lo = mid;
            else
                flat_hi = mid;
        }
        return {w, w, flat_lo};
    }

    struct EquilibriumState
    {
        double lambda = 0.0;
        double rho = 0.0;
        double w = 0.0;
        double w_lo = 0.0;
        double w_hi = 0.0;
        double queue = 0.0;        // Q_inf = lambda * S(w)
        double in_service = 0.0;   // Z_inf = min(rho, 1)
        double buffer_mass = 0.0;  // R_inf = lambda * w
        double abandonment_fraction = 0.0;
        TailMeasure buffer;
        TailMeasure server;

        double total() const { return queue + in_service; }
    };

    inline EquilibriumState equilibrium_state(double lambda, const Distribution &patience, const Distribution &service,
                                              std::span<const double> probes)
    {
        const auto root = solve_offered_wait(lambda, patience, service);
        EquilibriumState s;
        s.lambda = lambda;
        s.rho = lambda * service.mean();
        s.w = root.w;
        s.w_lo = root.lo;
        s.w_hi = root.hi;
        s.in_service = std::min(s.rho, 1.0);
        s.buffer_mass = lambda * s.w;
        s.queue = lambda * patience.survival_integral(s.w);
        s.abandonment_fraction = patience.cdf(s.w);

        std::vector<double> grid(probes.begin(), probes.end());
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        std::vector<double> buf(grid.size()), srv(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
        {
            const double x = grid[i];
            buf[i] = std::max(0.0, lambda * (patience.survival_integral(x + s.w) - patience.survival_integral(x)));
            srv[i] = s.in_service * (1.0 - service.equilibrium_cdf(x));
        }
        s.buffer = TailMeasure::tabulated(grid, std::move(buf), s.buffer_mass, TailKind::continuous);
        s.server = TailMeasure::tabulated(std::move(grid), std::move(srv), s.in_service, TailKind::continuous);
        return s;
    }

    /// The fluid initial condition that sits at this equilibrium.
    inline InitialCondition as_initial_condition(const EquilibriumState &s)
    {
        return InitialCondition{s.buffer_mass, EquilibriumProfile{s.in_service}};
    }
}
