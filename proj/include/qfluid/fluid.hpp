#pragma once

#include "distributions.hpp"
#include "error.hpp"
#include "measures.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace qfluid
{
    enum class InnerGuess
    {
        /// Start each step's inner iteration from the previous grid value.
        previous,
        /// Start from zero; used to probe uniqueness of the fixed point.
        zero,
    };

    struct FluidConfig
    {
        /// Arrival rate per server (fluid units).
        double lambda;
        Distribution patience;
        Distribution service;
        double horizon = 10.0;
        double dt = 1e-3;
        /// Inner fixed-point tolerance (absolute, on the fluid count).
        double tolerance = 1e-10;
        int max_inner_iterations = 50;
        InnerGuess inner_guess = InnerGuess::previous;

        double rho() const { return lambda * service.mean(); }
    };

    struct EmptyProfile
    {
    };

    /// Tail z * [1 - G_e(x)]: residual service times of a stationary server pool.
    struct EquilibriumProfile
    {
        double mass;
    };

    /// Tail z * [1 - G(x)]: customers that have just started service.
    struct ServiceComplementProfile
    {
        double mass;
    };

    struct TabulatedProfile
    {
        TailMeasure measure;
    };

    using ServerProfile = std::variant<EmptyProfile, EquilibriumProfile, ServiceComplementProfile, TabulatedProfile>;

    /// Server profile tail S_0((x, inf)); equals the profile total for x <= 0.
    inline double profile_tail(const ServerProfile &profile, const Distribution &service, double x)
    {
        return std::visit(
            detail::overloaded{
                [](const EmptyProfile &) { return 0.0; },
                [&](const EquilibriumProfile &p) { return p.mass * (1.0 - service.equilibrium_cdf(x)); },
                [&](const ServiceComplementProfile &p) { return p.mass * service.survival(x); },
                [&](const TabulatedProfile &p) { return x <= 0.0 ? p.measure.total() : p.measure.tail_at(x); },
            },
            profile);
    }

    inline double profile_total(const ServerProfile &profile)
    {
        return std::visit(
            detail::overloaded{
                [](const EmptyProfile &) { return 0.0; },
                [](const EquilibriumProfile &p) { return p.mass; },
                [](const ServiceComplementProfile &p) { return p.mass; },
                [](const TabulatedProfile &p) { return p.measure.total(); },
            },
            profile);
    }

    /// Fluid initial condition before validation. The buffer profile is fully
    /// determined by its mass R0 (customers arrived uniformly at rate lambda
    /// over the last R0/lambda time units).
    struct InitialCondition
    {
        double buffer_mass = 0.0;
        ServerProfile server = EmptyProfile{};
    };

    struct FluidInitialState
    {
        double buffer_mass = 0.0; // R0
        double queue = 0.0;       // Q0
        double in_service = 0.0;  // Z0
        double total = 0.0;       // X0
        ServerProfile server = EmptyProfile{};
    };

    /// Check validity and derive Q0 = lambda * S(R0 / lambda), Z0, X0.
    inline FluidInitialState validate_initial(const FluidConfig &cfg, const InitialCondition &ic)
    {
        constexpr double eps = 1e-12;
        if (!(ic.buffer_mass >= 0.0) || !std::isfinite(ic.buffer_mass))
            throw InvalidInitialCondition("invalid-init: buffer mass must be finite and nonnegative");

        FluidInitialState s;
        s.buffer_mass = ic.buffer_mass;
        s.queue = cfg.lambda * cfg.patience.survival_integral(ic.buffer_mass / cfg.lambda);
        s.server = ic.server;

        std::visit(
            detail::overloaded{
                [](const EmptyProfile &) {},
                [](const auto &p)
                {
                    if (!(p.mass >= 0.0))
                        throw InvalidInitialCondition("invalid-init: negative server mass");
                },
                [&](const TabulatedProfile &p)
                {
                    const auto &m = p.measure;
                    const double slack = 1e-12 * std::max(1.0, m.total());
                    for (std::size_t k = 0; k < m.grid().size(); ++k)
                    {
                        if (m.grid()[k] <= 0.0 && m.tails()[k] < m.total() - slack)
                            throw InvalidInitialCondition("invalid-init: atom at zero");
                    }
                    // an atom shows up as a drop larger than dt * total across a cell narrower than dt
                    for (std::size_t k = 1; k < m.grid().size(); ++k)
                    {
                        const double width = m.grid()[k] - m.grid()[k - 1];
                        const double drop = m.tails()[k - 1] - m.tails()[k];
                        if (width <= cfg.dt && drop > cfg.dt * m.total() + slack)
                            throw InvalidInitialCondition("invalid-init: server profile has an atom");
                    }
                },
            },
            s.server);

        s.in_service = profile_total(s.server);
        s.total = s.queue + s.in_service;
        if (s.in_service > 1.0 + eps)
            throw InvalidInitialCondition("invalid-init: more than one unit of servers busy");
        if (s.queue > eps && s.in_service < 1.0 - eps)
            throw InvalidInitialCondition("invalid-init: queue positive but servers not full");
        return s;
    }

    /// Fraction of virtual-buffer customers still patient when they reach the
    /// head of the line, as a function of the queue length q:
    /// F^c(S^{-1}(q / lambda)) for q below lambda * N_F and 0 above.
    inline double patient_fraction(double lambda, const Distribution &patience, double q)
    {
        const double y = std::max(q, 0.0) / lambda;
        if (y >= patience.mean())
            return 0.0;
        return patience.survival(patience.survival_integral_inverse(y));
    }

    /// Mass of the initial content still in the system at time t when nothing
    /// new enters service: S_0((t, inf)) + Q0 * G^c(t).
    inline double initial_remaining(const FluidInitialState &s, const Distribution &service, double t)
    {
        return profile_tail(s.server, service, t) + s.queue * service.survival(t);
    }

    struct FluidProfiles
    {
        TailMeasure buffer;
        TailMeasure server;
    };

    class FluidSolution;
    inline FluidSolution solve(const FluidConfig &cfg, const InitialCondition &ic);

    /// Grid trajectories of the fluid model. Immutable once built by solve().
    class FluidSolution
    {
    public:
        const FluidConfig &config() const { return cfg_; }
        const FluidInitialState &initial() const { return init_; }

        std::size_t steps() const { return x_.size() - 1; }
        double dt() const { return cfg_.dt; }
        double time(std::size_t k) const { return static_cast<double>(k) * cfg_.dt; }

        const std::vector<double> &total() const { return x_; }     // X
        const std::vector<double> &queue() const { return q_; }     // Q
        const std::vector<double> &in_service() const { return z_; } // Z
        const std::vector<double> &buffer() const { return r_; }    // R
        const std::vector<double> &entered() const { return b_; }   // B = lambda t - R

        int max_inner_iterations_used() const { return max_inner_; }

        /// rho * L_H * G_e(dt) + G(dt); below one the per-step map contracts.
        double contraction_factor() const { return kappa_; }

        /// Grid index of time t; throws when t is not on the grid.
        std::size_t index_of(double t) const
        {
            const double k = std::round(t / cfg_.dt);
            if (k < 0.0 || k > static_cast<double>(steps()) || std::abs(k * cfg_.dt - t) > 1e-9 * std::max(1.0, t))
                throw InvalidArgument("fluid: time " + std::to_string(t) + " is not on the solution grid");
            return static_cast<std::size_t>(k);
        }

        /// Buffer and server measures at a grid time, tabulated on the probes.
        ///
        /// buffer((x, inf)) = lambda [S(x + R/lambda) - S(x)];
        /// server((x, inf)) = S_0((x + t, inf)) + sum over cells of
        ///   F^c(R/lambda) G^c(x + t - s) dB  (midpoint in s, cell-averaged F^c).
        FluidProfiles measures_at(double t, std::span<const double> probes) const
        {
            const std::size_t k = index_of(t);
            const double tk = time(k);
            std::vector<double> grid(probes.begin(), probes.end());
            std::sort(grid.begin(), grid.end());
            grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

            const auto &F = cfg_.patience;
            const auto &G = cfg_.service;
            const double lam = cfg_.lambda;
            const double r = r_[k] / lam;
            if (!std::isfinite(r))
                throw InvariantViolation("invariant-violation: infinite virtual buffer");

            std::vector<double> buf(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i)
                buf[i] = std::max(0.0, lam * (F.survival_integral(grid[i] + r) - F.survival_integral(grid[i])));

            std::vector<double> weight(k + 1, 0.0);
            for (std::size_t j = 1; j <= k; ++j)
            {
                const double patient = 0.5 * (F.survival(r_[j - 1] / lam) + F.survival(r_[j] / lam));
                weight[j] = patient * (b_[j] - b_[j - 1]);
            }
            auto server_tail = [&](double x)
            {
                double s = profile_tail(init_.server, G, x + tk);
                for (std::size_t j = 1; j <= k; ++j)
                    s += weight[j] * G.survival(x + tk - (static_cast<double>(j) - 0.5) * cfg_.dt);
                return s;
            };
            const double server_total = server_tail(0.0);
            std::vector<double> srv(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i)
                srv[i] = grid[i] <= 0.0 ? server_total : std::min(server_total, server_tail(grid[i]));

            return FluidProfiles{
                TailMeasure::tabulated(grid, std::move(buf), r_[k], TailKind::continuous),
                TailMeasure::tabulated(std::move(grid), std::move(srv), server_total, TailKind::continuous),
            };
        }

    private:
        friend FluidSolution solve(const FluidConfig &cfg, const InitialCondition &ic);

        FluidSolution(FluidConfig cfg, FluidInitialState init) : cfg_(std::move(cfg)), init_(std::move(init)) {}

        FluidConfig cfg_;
        FluidInitialState init_;
        std::vector<double> x_, q_, z_, r_, b_;
        int max_inner_ = 0;
        double kappa_ = 0.0;
    };

    namespace detail
    {
        inline std::size_t grid_steps(const FluidConfig &cfg)
        {
            if (!(cfg.lambda > 0.0) || !std::isfinite(cfg.lambda))
                throw InvalidArgument("fluid: lambda must be positive");
            if (!(cfg.dt > 0.0) || !(cfg.horizon >= cfg.dt))
                throw InvalidArgument("fluid: need dt > 0 and horizon >= dt");
            return static_cast<std::size_t>(std::floor(cfg.horizon / cfg.dt + 1e-9));
        }

        struct ConvolutionWeights
        {
            std::vector<double> d_ge; // G_e increments over (t_{j-1}, t_j], index j >= 1
            std::vector<double> d_g;  // G increments over the same cells
        };

        inline ConvolutionWeights convolution_weights(const Distribution &G, double dt, std::size_t steps)
        {
            ConvolutionWeights w{std::vector<double>(steps + 1, 0.0), std::vector<double>(steps + 1, 0.0)};
            double ge_prev = 0.0;
            double g_prev = G.cdf(0.0);
            for (std::size_t j = 1; j <= steps; ++j)
            {
                const double t = static_cast<double>(j) * dt;
                const double ge = G.equilibrium_cdf(t);
                const double g = G.cdf(t);
                w.d_ge[j] = ge - ge_prev;
                w.d_g[j] = g - g_prev;
                ge_prev = ge;
                g_prev = g;
            }
            return w;
        }
    }

    /// Solve the fluid model on the uniform grid t_k = k dt.
    ///
    /// X is obtained by forward time-marching the convolution equation
    ///   X(t) = zeta0(t) + rho int_0^t H((X(t-s)-1)^+) dG_e(s) + int_0^t (X(t-s)-1)^+ dG(s)
    /// with Stieltjes increments over the cells (s_{j-1}, s_j] paired with the
    /// later grid value X(t_{k-j+1}). The cell j = 1 involves X(t_k) itself and
    /// is resolved by a scalar fixed-point loop. Q, Z follow from the policy
    /// constraints, R = lambda S^{-1}(Q / lambda) and B = lambda t - R.
    inline FluidSolution solve(const FluidConfig &cfg, const InitialCondition &ic)
    {
        require_service_admissible(cfg.service);
        require_patience_admissible(cfg.patience);
        const std::size_t K = detail::grid_steps(cfg);
        FluidSolution sol(cfg, validate_initial(cfg, ic));

        const auto &F = cfg.patience;
        const auto &G = cfg.service;
        const double lam = cfg.lambda;
        const double rho = cfg.rho();
        const auto w = detail::convolution_weights(G, cfg.dt, K);

        auto H = [&](double q) { return patient_fraction(lam, F, q); };

        sol.x_.assign(K + 1, 0.0);
        sol.q_.assign(K + 1, 0.0);
        std::vector<double> h(K + 1, 0.0);

        sol.x_[0] = initial_remaining(sol.init_, G, 0.0);
        sol.q_[0] = std::max(sol.x_[0] - 1.0, 0.0);
        h[0] = H(sol.q_[0]);

        const double a = rho * w.d_ge[1];
        const double b = w.d_g[1];
        for (std::size_t k = 1; k <= K; ++k)
        {
            double c = initial_remaining(sol.init_, G, sol.time(k));
            for (std::size_t m = 1; m < k; ++m)
            {
                const std::size_t j = k - m + 1;
                c += rho * w.d_ge[j] * h[m] + w.d_g[j] * sol.q_[m];
            }

            double x = cfg.inner_guess == InnerGuess::previous ? sol.x_[k - 1] : 0.0;
            bool converged = false;
            for (int it = 1; it <= cfg.max_inner_iterations; ++it)
            {
                const double q = std::max(x - 1.0, 0.0);
                const double next = c + a * H(q) + b * q;
                const bool done = std::abs(next - x) <= cfg.tolerance;
                x = next;
                sol.max_inner_ = std::max(sol.max_inner_, it);
                if (done)
                {
                    converged = true;
                    break;
                }
            }
            if (!converged)
                throw NoConvergence("no-convergence: inner fixed-point iteration exceeded " +
                                    std::to_string(cfg.max_inner_iterations) + " iterations at t=" +
                                    std::to_string(sol.time(k)));
            sol.x_[k] = x;
            sol.q_[k] = std::max(x - 1.0, 0.0);
            h[k] = H(sol.q_[k]);
        }

        sol.z_.resize(K + 1);
        sol.r_.resize(K + 1);
        sol.b_.resize(K + 1);
        const double max_queue = lam * F.mean();
        for (std::size_t k = 0; k <= K; ++k)
        {
            sol.z_[k] = std::min(sol.x_[k], 1.0);
            sol.r_[k] = k == 0 ? sol.init_.buffer_mass : lam * F.survival_integral_inverse(sol.q_[k] / lam);
            sol.b_[k] = lam * sol.time(k) - sol.r_[k];
            if (sol.q_[k] > max_queue + 1e-9)
                throw InvariantViolation("invariant-violation: Q exceeds lambda*N_F at t=" + std::to_string(sol.time(k)));
            if (k > 0 && sol.b_[k] - sol.b_[k - 1] < -1e-9)
                throw InvariantViolation("invariant-violation: B nondecreasing fails at t=" + std::to_string(sol.time(k)));
        }

        const auto fs = F.stats();
        const double lip_h = fs.hazard_bound / lam;
        sol.kappa_ = rho * lip_h * G.equilibrium_cdf(cfg.dt) + G.cdf(cfg.dt);
        return sol;
    }

    /// Largest |X_k - RHS_k| when the stored trajectory is substituted back
    /// into the discretized convolution equation.
    inline double fixed_point_residual(const FluidSolution &sol)
    {
        const auto &cfg = sol.config();
        const std::size_t K = sol.steps();
        const auto w = detail::convolution_weights(cfg.service, cfg.dt, K);
        const double rho = cfg.rho();
        std::vector<double> q(K + 1), h(K + 1);
        for (std::size_t k = 0; k <= K; ++k)
        {
            q[k] = std::max(sol.total()[k] - 1.0, 0.0);
            h[k] = patient_fraction(cfg.lambda, cfg.patience, q[k]);
        }
        double worst = std::abs(sol.total()[0] - initial_remaining(sol.initial(), cfg.service, 0.0));
        for (std::size_t k = 1; k <= K; ++k)
        {
            double rhs = initial_remaining(sol.initial(), cfg.service, sol.time(k));
            for (std::size_t j = 1; j <= k; ++j)
                rhs += rho * h[k - j + 1] * w.d_ge[j] + q[k - j + 1] * w.d_g[j];
            worst = std::max(worst, std::abs(sol.total()[k] - rhs));
        }
        return worst;
    }

    /// Largest increase of D(t) = Q(t) - lambda int_0^t H(Q(s)) ds between
    /// adjacent grid points (right-endpoint rule); D is nonincreasing in the
    /// continuous model, so this should not exceed quadrature error.
    inline double check_d_monotone(const FluidSolution &sol)
    {
        const auto &cfg = sol.config();
        const auto &q = sol.queue();
        double worst = -infinity;
        for (std::size_t k = 1; k < q.size(); ++k)
        {
            const double inc = (q[k] - q[k - 1]) - cfg.lambda * cfg.dt * patient_fraction(cfg.lambda, cfg.patience, q[k]);
            worst = std::max(worst, inc);
        }
        return q.size() > 1 ? worst : 0.0;
    }

    struct StructuralReport
    {
        double min_entered_increment = infinity; // min over k of B_k - B_{k-1}
        double max_queue_excess = -infinity;     // max over k of Q_k - lambda N_F
        double max_policy_error = 0.0;           // |Q - (X-1)^+| and |Z - min(X,1)|
    };

    inline StructuralReport structural_report(const FluidSolution &sol)
    {
        StructuralReport r;
        const double cap = sol.config().lambda * sol.config().patience.mean();
        for (std::size_t k = 0; k <= sol.steps(); ++k)
        {
            const double x = sol.total()[k];
            r.max_policy_error = std::max({r.max_policy_error, std::abs(sol.queue()[k] - std::max(x - 1.0, 0.0)),
                                           std::abs(sol.in_service()[k] - std::min(x, 1.0))});
            r.max_queue_excess = std::max(r.max_queue_excess, sol.queue()[k] - cap);
            if (k > 0)
                r.min_entered_increment = std::min(r.min_entered_increment, sol.entered()[k] - sol.entered()[k - 1]);
        }
        return r;
    }
}
