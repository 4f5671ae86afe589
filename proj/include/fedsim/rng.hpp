#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace fedsim {

// Deterministic, fully specified random stream (splitmix64). The standard
// library distributions are implementation-defined, so everything random in
// this project goes through this generator to keep runs reproducible across
// toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Unbiased-enough integer in [0, n); n > 0. Lemire's multiply-shift.
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; draws two uniforms per call.
    double normal() {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    Rng g(a ^ (0x9E3779B97F4A7C15ULL + b));
    return g.next_u64();
}
}  // namespace detail

// Stream tags keep the independent random consumers (init, partitioning,
// per-client batch shuffles, ...) from ever sharing a sequence.
namespace stream {
inline constexpr std::uint64_t kInit = 0x66656453494E4954ULL;
inline constexpr std::uint64_t kPartition = 0x66656453504152ULL;
inline constexpr std::uint64_t kPool = 0x66656453504F4FULL;
inline constexpr std::uint64_t kPoolSplit = 0x66656453504C54ULL;
inline constexpr std::uint64_t kClient = 0x66656453434C49ULL;
inline constexpr std::uint64_t kTestData = 0x66656453544453ULL;
}  // namespace stream

// Counter-based stream split: (seed, tag, a, b) -> independent generator.
// Used as (seed, kClient, client_id, round) so client parallelism cannot
// perturb any sequence.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t tag,
                         std::uint64_t a = 0, std::uint64_t b = 0) {
    return Rng(detail::mix64(detail::mix64(detail::mix64(seed, tag), a), b));
}

// Fisher-Yates, descending positions.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

inline std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p, rng);
    return p;
}

}  // namespace fedsim
