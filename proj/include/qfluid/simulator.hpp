#pragma once

#include "distributions.hpp"
#include "error.hpp"
#include "fluid.hpp"
#include "measures.hpp"
#include "random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <thread>
#include <tuple>
#include <variant>
#include <vector>

namespace qfluid
{
    /// How the initial virtual buffer is seeded from a fluid initial condition.
    enum class BufferSeeding
    {
        /// floor(n R0) customers drawn from the whole buffer profile, including
        /// customers whose patience already ran out (still in the virtual buffer).
        full_profile,
        /// floor(n Q0) customers drawn from the profile restricted to positive
        /// residual patience; no pre-abandoned customers.
        real_queue_only,
    };

    struct EmptyStart
    {
    };

    /// Start near a fluid initial condition: floor(n Z0) customers in service
    /// with residuals drawn from the server profile, plus a virtual buffer
    /// built per `seeding`.
    struct FluidMatchedStart
    {
        double lambda;
        InitialCondition fluid;
        BufferSeeding seeding = BufferSeeding::full_profile;
    };

    using SimStart = std::variant<EmptyStart, FluidMatchedStart>;

    struct SimConfig
    {
        std::size_t servers = 1;
        /// Renewal interarrival law (mean 1 / (n lambda)). Ignored when
        /// `arrival_times` is nonempty.
        std::optional<Distribution> interarrival;
        /// Explicit arrival instants (trace-driven arrivals), increasing.
        std::vector<double> arrival_times;
        Distribution patience = Distribution::exponential(1.0);
        Distribution service = Distribution::exponential(1.0);
        double horizon = 10.0;
        std::vector<double> snapshot_times;
        std::uint64_t seed = 1;
        SimStart start = EmptyStart{};
        /// Extra grid points for the empirical snapshot measures.
        std::vector<double> probes;
        bool record_service_starts = false;
    };

    struct SystemSnapshot
    {
        double time = 0.0;
        /// Residual patience over the virtual buffer (measure on the real line).
        TailMeasure buffer;
        /// Residual service times over busy servers (measure on (0, inf)).
        TailMeasure server;
        std::int64_t queue = 0;        // Q: buffer customers with positive residual patience
        std::int64_t buffer_count = 0; // R: virtual buffer size
        std::int64_t in_service = 0;   // Z
        std::int64_t total = 0;        // X = Q + Z
        std::int64_t arrivals = 0;     // E(t), arrivals in (0, t]
        std::int64_t completions = 0;
        std::int64_t abandoned = 0;    // released without service plus expired still in the virtual buffer
        std::int64_t released = 0;     // expired customers removed at their turn for service
        std::int64_t entered = 0;      // B(t): customers that left the virtual buffer, minus R(0)
        std::int64_t initial_buffer = 0;
        std::int64_t initial_service = 0;
    };

    struct ScaledSnapshot
    {
        double time = 0.0;
        TailMeasure buffer;
        TailMeasure server;
        double queue = 0.0;
        double buffer_count = 0.0;
        double in_service = 0.0;
        double total = 0.0;
        double arrivals = 0.0;
        double completions = 0.0;
        double abandoned = 0.0;
    };

    struct ServiceStart
    {
        std::int64_t index;
        double arrival;
        double start;
    };

    struct SimTrajectory
    {
        std::size_t servers = 0;
        std::vector<SystemSnapshot> snapshots;
        std::vector<ServiceStart> service_starts;
    };

    /// Divide all measures and counts by n.
    inline ScaledSnapshot fluid_scale(const SystemSnapshot &s, std::size_t n)
    {
        const double f = 1.0 / static_cast<double>(n);
        ScaledSnapshot out;
        out.time = s.time;
        out.buffer = s.buffer.scaled(f);
        out.server = s.server.scaled(f);
        out.queue = f * static_cast<double>(s.queue);
        out.buffer_count = f * static_cast<double>(s.buffer_count);
        out.in_service = f * static_cast<double>(s.in_service);
        out.total = f * static_cast<double>(s.total);
        out.arrivals = f * static_cast<double>(s.arrivals);
        out.completions = f * static_cast<double>(s.completions);
        out.abandoned = f * static_cast<double>(s.abandoned);
        return out;
    }

    namespace detail
    {
        // Inverse of x -> 1 - tail(x) / total for a server profile, by bisection.
        inline double sample_server_residual(const ServerProfile &profile, const Distribution &service,
                                             RandomStream &rng)
        {
            const double u = rng.uniform();
            if (std::holds_alternative<ServiceComplementProfile>(profile))
                return service.quantile(u);
            const double total = profile_total(profile);
            auto cdf = [&](double x) { return 1.0 - profile_tail(profile, service, x) / total; };
            double lo = 0.0;
            double hi = 1.0;
            if (const auto *p = std::get_if<TabulatedProfile>(&profile))
                hi = std::max(hi, p->measure.grid().empty() ? 1.0 : p->measure.grid().back());
            for (int i = 0; i < 1100 && cdf(hi) <= u; ++i)
            {
                if (const auto *p = std::get_if<TabulatedProfile>(&profile))
                {
                    // mass beyond the table sits at the last grid point
                    if (!p->measure.grid().empty() && hi >= p->measure.grid().back())
                        return p->measure.grid().back();
                }
                lo = hi;
                hi *= 2.0;
            }
            for (int i = 0; i < 200 && hi - lo > 1e-12 * std::max(1.0, hi); ++i)
            {
                const double mid = 0.5 * (lo + hi);
                if (cdf(mid) <= u)
                    lo = mid;
                else
                    hi = mid;
            }
            return std::max(0.5 * (lo + hi), std::numeric_limits<double>::min());
        }

        class Engine
        {
        public:
            Engine(const SimConfig &cfg, std::uint64_t replication)
                : cfg_(cfg), rng_(RandomStream::for_replication(cfg.seed, replication))
            {
                if (cfg.servers == 0)
                    throw InvalidArgument("simulator: need at least one server");
                completion_.assign(cfg.servers, infinity);
                for (std::size_t s = 0; s < cfg.servers; ++s)
                    idle_.push(s);
            }

            SimTrajectory run()
            {
                std::vector<double> times = cfg_.snapshot_times;
                std::sort(times.begin(), times.end());
                for (double t : times)
                    if (t < 0.0 || t > cfg_.horizon)
                        throw InvalidArgument("simulator: snapshot time outside [0, horizon]");

                seed_initial_state();
                schedule_next_arrival();

                SimTrajectory out;
                out.servers = cfg_.servers;
                out.snapshots.reserve(times.size());
                for (double t : times)
                {
                    advance_to(t);
                    out.snapshots.push_back(snapshot(t));
                }
                out.service_starts = std::move(starts_);
                return out;
            }

        private:
            struct Customer
            {
                std::int64_t index;
                double arrival;
                double patience;
                double service;
            };

            enum Rank : int
            {
                completion = 0,
                arrival = 1,
            };

            // ordered by (time, rank, id): completions before arrivals, lower server first
            using Event = std::tuple<double, int, std::uint64_t>;

            void seed_initial_state()
            {
                const auto *matched = std::get_if<FluidMatchedStart>(&cfg_.start);
                if (!matched)
                    return;
                const FluidConfig fc{.lambda = matched->lambda, .patience = cfg_.patience, .service = cfg_.service};
                const auto init = validate_initial(fc, matched->fluid);
                const double n = static_cast<double>(cfg_.servers);

                const auto busy = static_cast<std::size_t>(std::floor(n * init.in_service + 1e-9));
                for (std::size_t s = 0; s < std::min(busy, cfg_.servers); ++s)
                {
                    idle_.pop();
                    const double residual = sample_server_residual(init.server, cfg_.service, rng_);
                    completion_[s] = residual;
                    events_.emplace(residual, completion, s);
                    ++initial_service_;
                }

                const double window = init.buffer_mass / matched->lambda;
                std::vector<Customer> waiting;
                if (matched->seeding == BufferSeeding::full_profile)
                {
                    const auto count = static_cast<std::size_t>(std::floor(n * init.buffer_mass + 1e-9));
                    for (std::size_t i = 0; i < count; ++i)
                    {
                        const double age = window * rng_.uniform();
                        const double u = cfg_.patience.sample(rng_);
                        waiting.push_back({0, -age, u, cfg_.service.sample(rng_)});
                    }
                }
                else
                {
                    const auto count = static_cast<std::size_t>(std::floor(n * init.queue + 1e-9));
                    while (waiting.size() < count)
                    {
                        const double age = window * rng_.uniform();
                        const double u = cfg_.patience.sample(rng_);
                        if (u > age)
                            waiting.push_back({0, -age, u, cfg_.service.sample(rng_)});
                    }
                }
                std::sort(waiting.begin(), waiting.end(),
                          [](const Customer &a, const Customer &b) { return a.arrival < b.arrival; });
                const auto r0 = static_cast<std::int64_t>(waiting.size());
                for (std::int64_t i = 0; i < r0; ++i)
                {
                    waiting[static_cast<std::size_t>(i)].index = 1 - r0 + i;
                    buffer_.push_back(waiting[static_cast<std::size_t>(i)]);
                }
                initial_buffer_ = r0;

                // servers left idle after flooring take waiting customers at time zero
                while (!idle_.empty() && !buffer_.empty())
                {
                    const std::size_t s = idle_.top();
                    idle_.pop();
                    if (!dispatch(s, 0.0))
                        idle_.push(s);
                }
            }

            void schedule_next_arrival()
            {
                double next = 0.0;
                if (!cfg_.arrival_times.empty())
                {
                    if (trace_pos_ >= cfg_.arrival_times.size())
                        return;
                    next = cfg_.arrival_times[trace_pos_++];
                }
                else if (cfg_.interarrival)
                {
                    next = last_arrival_ + cfg_.interarrival->sample(rng_);
                }
                else
                {
                    return;
                }
                if (next > cfg_.horizon)
                    return;
                last_arrival_ = next;
                events_.emplace(next, arrival, arrival_seq_++);
            }

            void advance_to(double t)
            {
                while (!events_.empty() && std::get<0>(events_.top()) <= t)
                {
                    const auto [time, rank, id] = events_.top();
                    events_.pop();
                    if (rank == completion)
                        on_completion(static_cast<std::size_t>(id), time);
                    else
                        on_arrival(time);
                }
            }

            void start_service(std::size_t s, const Customer &c, double now)
            {
                completion_[s] = now + c.service;
                events_.emplace(completion_[s], completion, s);
                ++scheduled_;
                if (cfg_.record_service_starts)
                    starts_.push_back({c.index, c.arrival, now});
            }

            // Pop the virtual buffer for server s. Expired customers leave
            // without service; returns false when the buffer runs dry.
            bool dispatch(std::size_t s, double now)
            {
                while (!buffer_.empty())
                {
                    const Customer c = buffer_.front();
                    buffer_.pop_front();
                    if (c.patience <= now - c.arrival)
                    {
                        ++released_;
                        ++scheduled_;
                        continue;
                    }
                    start_service(s, c, now);
                    return true;
                }
                return false;
            }

            void on_completion(std::size_t s, double now)
            {
                ++completions_;
                completion_[s] = infinity;
                if (!dispatch(s, now))
                    idle_.push(s);
            }

            void on_arrival(double now)
            {
                ++arrivals_;
                const double u = cfg_.patience.sample(rng_);
                const double v = cfg_.service.sample(rng_);
                const Customer c{next_index_++, now, u, v};
                if (!idle_.empty())
                {
                    const std::size_t s = idle_.top();
                    idle_.pop();
                    start_service(s, c, now);
                }
                else
                {
                    buffer_.push_back(c);
                }
                schedule_next_arrival();
            }

            SystemSnapshot snapshot(double t) const
            {
                std::vector<double> patience_left;
                patience_left.reserve(buffer_.size());
                std::int64_t queue = 0;
                for (const auto &c : buffer_)
                {
                    const double left = c.patience - (t - c.arrival);
                    patience_left.push_back(left);
                    if (left > 0.0)
                        ++queue;
                }
                std::vector<double> service_left;
                for (double done : completion_)
                    if (std::isfinite(done))
                        service_left.push_back(done - t);

                SystemSnapshot s;
                s.time = t;
                s.buffer = TailMeasure::from_samples(patience_left, 1.0, cfg_.probes);
                s.server = TailMeasure::from_samples(service_left, 1.0, cfg_.probes);
                s.queue = queue;
                s.buffer_count = static_cast<std::int64_t>(buffer_.size());
                s.in_service = static_cast<std::int64_t>(service_left.size());
                s.total = s.queue + s.in_service;
                s.arrivals = arrivals_;
                s.completions = completions_;
                s.released = released_;
                s.abandoned = released_ + (s.buffer_count - queue);
                s.entered = scheduled_ - initial_buffer_;
                s.initial_buffer = initial_buffer_;
                s.initial_service = initial_service_;
                return s;
            }

            const SimConfig &cfg_;
            RandomStream rng_;
            std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
            std::priority_queue<std::size_t, std::vector<std::size_t>, std::greater<>> idle_;
            std::vector<double> completion_;
            std::deque<Customer> buffer_;
            std::vector<ServiceStart> starts_;
            std::size_t trace_pos_ = 0;
            double last_arrival_ = 0.0;
            std::uint64_t arrival_seq_ = 0;
            std::int64_t next_index_ = 1;
            std::int64_t arrivals_ = 0;
            std::int64_t completions_ = 0;
            std::int64_t released_ = 0;
            std::int64_t scheduled_ = 0;
            std::int64_t initial_buffer_ = 0;
            std::int64_t initial_service_ = 0;
        };
    }

    /// One replication of the n-server queue with FCFS service and lazy
    /// abandonment: an expired customer is removed only when it reaches the
    /// head of the line. Deterministic in (config, seed, replication).
    inline SimTrajectory run(const SimConfig &cfg, std::uint64_t replication = 0)
    {
        return detail::Engine(cfg, replication).run();
    }

    /// Replications 0..count-1 on up to `threads` workers; result order is
    /// by replication index regardless of scheduling.
    inline std::vector<SimTrajectory> run_replications(const SimConfig &cfg, std::size_t count, std::size_t threads = 1)
    {
        std::vector<SimTrajectory> out(count);
        threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
        if (threads == 1)
        {
            for (std::size_t r = 0; r < count; ++r)
                out[r] = run(cfg, r);
            return out;
        }
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(threads);
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < threads; ++w)
            {
                pool.emplace_back(
                    [&, w]
                    {
                        try
                        {
                            for (std::size_t r = next++; r < count; r = next++)
                                out[r] = run(cfg, r);
                        }
                        catch (...)
                        {
                            errors[w] = std::current_exception();
                        }
                    });
            }
        }
        for (auto &e : errors)
            if (e)
                std::rethrow_exception(e);
        return out;
    }

    /// Interarrival law for n servers at fluid rate lambda: `shape` rescaled
    /// to mean 1 / (n lambda).
    inline Distribution scaled_interarrival(const Distribution &shape, std::size_t servers, double lambda)
    {
        return shape.with_mean(1.0 / (static_cast<double>(servers) * lambda));
    }
}
