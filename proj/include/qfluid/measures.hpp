#pragma once

#include "error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace qfluid
{
    /// How a tail function is evaluated between grid points.
    enum class TailKind
    {
        /// Linear interpolation; used for fluid (atomless) profiles.
        continuous,
        /// Right-continuous step; used for empirical measures.
        step,
    };

    /// A finite nonnegative measure nu on the real line, stored as its tail
    /// function x -> nu((x, inf)) sampled on a strictly increasing grid.
    ///
    /// Below the grid the tail is the total mass, above it the last tabulated
    /// value. Server measures live on (0, inf) and therefore have tail equal
    /// to the total at every x <= 0.
    class TailMeasure
    {
    public:
        TailMeasure() = default;

        static TailMeasure zero() { return {}; }

        /// Tabulated tail. Throws if the grid is not strictly increasing or the
        /// tails are not nonincreasing and within [0, total] (up to rounding).
        static TailMeasure tabulated(std::vector<double> grid, std::vector<double> tails, double total,
                                     TailKind kind = TailKind::continuous)
        {
            if (grid.size() != tails.size())
                throw InvalidArgument("tail measure: grid and tails differ in length");
            if (!(total >= 0.0) || !std::isfinite(total))
                throw InvalidArgument("tail measure: total must be finite and nonnegative");
            const double slack = 1e-9 * std::max(1.0, total);
            for (std::size_t k = 0; k < grid.size(); ++k)
            {
                if (k > 0 && !(grid[k] > grid[k - 1]))
                    throw InvalidArgument("tail measure: grid must be strictly increasing");
                if (tails[k] < -slack || tails[k] > total + slack)
                    throw InvalidArgument("tail measure: tail outside [0, total]");
                if (k > 0 && tails[k] > tails[k - 1] + slack)
                    throw InvalidArgument("tail measure: tails must be nonincreasing");
            }
            TailMeasure m;
            m.grid_ = std::move(grid);
            m.tails_ = std::move(tails);
            m.total_ = total;
            m.kind_ = kind;
            return m;
        }

        /// Empirical measure: a point mass of size `mass_per_point` at each value.
        /// The grid is the sorted distinct values plus the given probe points.
        static TailMeasure from_samples(std::span<const double> values, double mass_per_point,
                                        std::span<const double> probes = {})
        {
            if (!(mass_per_point > 0.0))
                throw InvalidArgument("tail measure: mass per point must be positive");
            std::vector<double> sorted(values.begin(), values.end());
            for (double v : sorted)
                if (!std::isfinite(v))
                    throw InvalidArgument("tail measure: sample values must be finite");
            std::sort(sorted.begin(), sorted.end());

            std::vector<double> grid = sorted;
            grid.insert(grid.end(), probes.begin(), probes.end());
            std::sort(grid.begin(), grid.end());
            grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

            std::vector<double> tails(grid.size());
            for (std::size_t k = 0; k < grid.size(); ++k)
            {
                const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), grid[k]);
                tails[k] = mass_per_point * static_cast<double>(above);
            }
            TailMeasure m;
            m.grid_ = std::move(grid);
            m.tails_ = std::move(tails);
            m.total_ = mass_per_point * static_cast<double>(sorted.size());
            m.kind_ = TailKind::step;
            return m;
        }

        double tail_at(double x) const
        {
            if (grid_.empty() || x < grid_.front())
                return total_;
            if (x >= grid_.back())
                return tails_.back();
            const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
            const std::size_t k = static_cast<std::size_t>(it - grid_.begin()) - 1;
            if (kind_ == TailKind::step || grid_[k] == x)
                return tails_[k];
            const double w = (x - grid_[k]) / (grid_[k + 1] - grid_[k]);
            return (1.0 - w) * tails_[k] + w * tails_[k + 1];
        }

        double total() const { return total_; }
        TailKind kind() const { return kind_; }
        const std::vector<double> &grid() const { return grid_; }
        const std::vector<double> &tails() const { return tails_; }

        TailMeasure scaled(double factor) const
        {
            TailMeasure m = *this;
            for (auto &t : m.tails_)
                t *= factor;
            m.total_ *= factor;
            return m;
        }

    private:
        std::vector<double> grid_;
        std::vector<double> tails_;
        double total_ = 0.0;
        TailKind kind_ = TailKind::step;
    };

    /// max over probes of |tail difference|, together with the total-mass difference.
    ///
    /// A pseudometric on any fixed probe set; used in place of the Prohorov
    /// distance when comparing against continuous limits.
    inline double sup_distance(const TailMeasure &a, const TailMeasure &b, std::span<const double> probes)
    {
        if (probes.empty())
            throw InvalidArgument("sup_distance: probe set is empty");
        double d = std::abs(a.total() - b.total());
        for (double x : probes)
            d = std::max(d, std::abs(a.tail_at(x) - b.tail_at(x)));
        return d;
    }

    /// `count` equally spaced points covering [lo, hi].
    inline std::vector<double> uniform_probes(double lo, double hi, std::size_t count = 512)
    {
        if (count < 2 || !(hi > lo))
            throw InvalidArgument("uniform_probes: need hi > lo and count >= 2");
        std::vector<double> p(count);
        for (std::size_t i = 0; i < count; ++i)
            p[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
        p.back() = hi;
        return p;
    }
}
