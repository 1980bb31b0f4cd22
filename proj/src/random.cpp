#include "fedsim/random.hpp"

#include <cmath>
#include <numbers>

namespace fedsim {

std::uint64_t hash_key(std::string_view text) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

RandomStream RandomStream::derive(std::uint64_t seed, StreamTag tag,
                                  std::initializer_list<std::uint64_t> keys)
{
    std::uint64_t state = mix64(seed ^ mix64(static_cast<std::uint64_t>(tag)));
    for (std::uint64_t key : keys) {
        state = mix64(state ^ mix64(key + 0x632be59bd9b4e019ULL));
    }
    return RandomStream(state);
}

double RandomStream::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RandomStream::normal()
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    // 1 - u lies in (0, 1], so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_ = true;
    return radius * std::cos(angle);
}

double RandomStream::lognormal(double mu, double sigma)
{
    return std::exp(normal(mu, sigma));
}

std::size_t RandomStream::below(std::size_t n)
{
    if (n <= 1) {
        return 0;
    }
    const std::uint64_t range = n;
    unsigned __int128 product = static_cast<unsigned __int128>(engine_()) * range;
    auto low = static_cast<std::uint64_t>(product);
    if (low < range) {
        const std::uint64_t threshold = (0 - range) % range;
        while (low < threshold) {
            product = static_cast<unsigned __int128>(engine_()) * range;
            low = static_cast<std::uint64_t>(product);
        }
    }
    return static_cast<std::size_t>(product >> 64);
}

std::size_t RandomStream::categorical(std::span<const double> probs)
{
    const double u = uniform();
    double cumulative = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cumulative += probs[i];
        if (u < cumulative) {
            return i;
        }
    }
    // Rounding left u above the final cumulative sum.
    return probs.empty() ? 0 : probs.size() - 1;
}

}  // namespace fedsim
