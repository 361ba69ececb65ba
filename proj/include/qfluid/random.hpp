#pragma once

#include <cstdint>
#include <random>

namespace qfluid
{
    inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
    {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    /// Seeded deterministic stream of uniforms on the open interval (0, 1).
    ///
    /// The mapping from engine output to doubles is done by hand (top 53 bits, offset by half a step)
    /// so sequences are identical across standard library implementations.
    class RandomStream
    {
    public:
        explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

        /// Independent stream for one Monte Carlo replication.
        static RandomStream for_replication(std::uint64_t seed, std::uint64_t replication)
        {
            return RandomStream(splitmix64(seed ^ splitmix64(replication + 1)));
        }

        double uniform() noexcept
        {
            return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
        }

    private:
        std::mt19937_64 engine_;
    };
}
