#pragma once

#include "distributions.hpp"
#include "error.hpp"
#include "fluid.hpp"
#include "measures.hpp"
#include "random.hpp"
#include "simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qfluid
{
    /// Distances at one snapshot time, aggregated over replications.
    struct ComparisonRow
    {
        double time = 0.0;
        double mean_dist_buffer = 0.0;
        double max_dist_buffer = 0.0;
        double mean_dist_server = 0.0;
        double max_dist_server = 0.0;
        double mean_abs_queue = 0.0;
        double mean_abs_in_service = 0.0;
    };

    /// Per-n summary: over replications, the mean and max of each sup over
    /// snapshot times, plus the mean |Z - Z_fluid| at the last snapshot.
    struct ComparisonSummary
    {
        std::size_t servers = 0;
        std::size_t replications = 0;
        double mean_sup_dist_buffer = 0.0;
        double max_sup_dist_buffer = 0.0;
        double mean_sup_dist_server = 0.0;
        double max_sup_dist_server = 0.0;
        double mean_sup_abs_queue = 0.0;
        double max_sup_abs_queue = 0.0;
        double mean_sup_abs_in_service = 0.0;
        double mean_final_abs_in_service = 0.0;
    };

    struct ComparisonReport
    {
        std::vector<ComparisonRow> rows;
        ComparisonSummary summary;
    };

    inline ComparisonReport compare_to_fluid(std::span<const SimTrajectory> runs, const FluidSolution &sol,
                                             std::span<const double> probes)
    {
        if (runs.empty())
            throw InvalidArgument("compare: no replications");
        const auto &first = runs.front().snapshots;
        if (first.empty())
            throw InvalidArgument("compare: trajectories have no snapshots");

        struct Reference
        {
            std::size_t index;
            FluidProfiles profiles;
        };
        std::vector<Reference> refs;
        refs.reserve(first.size());
        for (const auto &snap : first)
        {
            std::size_t k = 0;
            try
            {
                k = sol.index_of(snap.time);
            }
            catch (const InvalidArgument &)
            {
                throw InvalidArgument("compare: snapshot time " + std::to_string(snap.time) +
                                      " is not on the fluid grid (grid mismatch)");
            }
            refs.push_back({k, sol.measures_at(sol.time(k), probes)});
        }

        const std::size_t m = first.size();
        const double reps = static_cast<double>(runs.size());
        ComparisonReport report;
        report.rows.resize(m);
        for (std::size_t j = 0; j < m; ++j)
            report.rows[j].time = first[j].time;

        auto &sum = report.summary;
        sum.servers = runs.front().servers;
        sum.replications = runs.size();
        for (const auto &run : runs)
        {
            if (run.snapshots.size() != m || run.servers != sum.servers)
                throw InvalidArgument("compare: replications disagree on snapshots or server count");
            double sup_b = 0.0, sup_s = 0.0, sup_q = 0.0, sup_z = 0.0;
            for (std::size_t j = 0; j < m; ++j)
            {
                if (run.snapshots[j].time != first[j].time)
                    throw InvalidArgument("compare: replications disagree on snapshot times");
                const auto scaled = fluid_scale(run.snapshots[j], run.servers);
                const auto k = refs[j].index;
                const double db = sup_distance(scaled.buffer, refs[j].profiles.buffer, probes);
                const double ds = sup_distance(scaled.server, refs[j].profiles.server, probes);
                const double dq = std::abs(scaled.queue - sol.queue()[k]);
                const double dz = std::abs(scaled.in_service - sol.in_service()[k]);

                auto &row = report.rows[j];
                row.mean_dist_buffer += db / reps;
                row.max_dist_buffer = std::max(row.max_dist_buffer, db);
                row.mean_dist_server += ds / reps;
                row.max_dist_server = std::max(row.max_dist_server, ds);
                row.mean_abs_queue += dq / reps;
                row.mean_abs_in_service += dz / reps;

                sup_b = std::max(sup_b, db);
                sup_s = std::max(sup_s, ds);
                sup_q = std::max(sup_q, dq);
                sup_z = std::max(sup_z, dz);
                if (j + 1 == m)
                    sum.mean_final_abs_in_service += dz / reps;
            }
            sum.mean_sup_dist_buffer += sup_b / reps;
            sum.max_sup_dist_buffer = std::max(sum.max_sup_dist_buffer, sup_b);
            sum.mean_sup_dist_server += sup_s / reps;
            sum.max_sup_dist_server = std::max(sum.max_sup_dist_server, sup_s);
            sum.mean_sup_abs_queue += sup_q / reps;
            sum.max_sup_abs_queue = std::max(sum.max_sup_abs_queue, sup_q);
            sum.mean_sup_abs_in_service += sup_z / reps;
        }
        return report;
    }

    /// Probe grid spanning negative residual patience back to -T and the
    /// bulk of both laws forward by T.
    inline std::vector<double> default_probes(const Distribution &patience, const Distribution &service, double horizon,
                                              std::size_t count = 512)
    {
        const double hi = std::max(patience.quantile(0.999), service.quantile(0.999)) + horizon;
        return uniform_probes(-horizon, hi, count);
    }

    /// sup over `probes` of |empirical tail - true tail| for n iid draws.
    inline double gc_diagnostic(const Distribution &d, std::size_t n, std::uint64_t seed,
                                std::span<const double> probes)
    {
        if (n < 100)
            throw InvalidArgument("gc_diagnostic: need at least 100 samples");
        if (probes.empty())
            throw InvalidArgument("gc_diagnostic: probe set is empty");
        RandomStream rng(seed);
        std::vector<double> xs(n);
        for (auto &x : xs)
            x = d.sample(rng);
        std::sort(xs.begin(), xs.end());
        double stat = 0.0;
        for (double p : probes)
        {
            const auto above = xs.end() - std::upper_bound(xs.begin(), xs.end(), p);
            const double empirical = static_cast<double>(above) / static_cast<double>(n);
            stat = std::max(stat, std::abs(empirical - d.survival(p)));
        }
        return stat;
    }

    /// 512 probes over [0, 2 q_0.999].
    inline std::vector<double> gc_probes(const Distribution &d, std::size_t count = 512)
    {
        return uniform_probes(0.0, 2.0 * std::max(d.quantile(0.999), 1e-6), count);
    }

    inline double gc_diagnostic(const Distribution &d, std::size_t n, std::uint64_t seed)
    {
        const auto probes = gc_probes(d);
        return gc_diagnostic(d, n, seed, probes);
    }
}
