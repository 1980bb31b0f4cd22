#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace fedsim {

/// SplitMix64 finalizer. Used to turn (seed, key, key, ...) tuples into
/// well-separated engine seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stable 64-bit key for a string (FNV-1a, then mixed).
std::uint64_t hash_key(std::string_view text) noexcept;

// Stream domain tags. Every derived stream starts with one of these so that
// e.g. the split of device "f_00003" never shares a stream with its training.
enum class StreamTag : std::uint64_t {
    population = 1,
    task = 2,
    split = 3,
    subsample = 4,
    mix = 5,
    select = 6,
    client = 7,
    init = 8,
    local = 9,
    finetune = 10,
    holdout = 11,
    eval = 12,
};

/// Keyed pseudo-random stream.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Distributions are implemented here rather than taken from
/// <random> because the standard leaves their algorithms unspecified:
///   - uniform(): top 53 bits of one engine draw, in [0, 1)
///   - normal(): Box–Muller transform; the second value of each pair is
///     cached and returned by the next call
///   - below(n): Lemire's multiply-shift with rejection (unbiased)
///
/// Streams are derived from a master seed plus a key path, so every consumer
/// (a task, a client in a round, a device split) owns an independent stream
/// and results do not depend on evaluation order.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    static RandomStream derive(std::uint64_t seed, StreamTag tag,
                               std::initializer_list<std::uint64_t> keys = {});

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    double lognormal(double mu, double sigma);
    std::size_t below(std::size_t n);
    std::size_t categorical(std::span<const double> probs);

    template <typename T>
    void shuffle(std::span<T> items)
    {
        // Fisher–Yates, last position first.
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_normal_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace fedsim
