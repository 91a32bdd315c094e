#pragma once

#include <cmath>
#include <cstdint>

namespace ccgraph {

// Counter-based Gaussian stream. Every draw is a pure function of
// (seed, stream, counter): the counter value is mixed through the
// splitmix64 finalizer twice with the stream and seed folded in, the two
// resulting 64-bit words become uniforms in (0, 1], and a Box-Muller
// transform yields a pair of standard normals. No state beyond the counter
// means streams can be split per path and drawn in any schedule with
// identical output.

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Uniform in (0, 1]: 53 mantissa bits, shifted away from zero so that
// log(u) below is always finite.
inline double to_unit(std::uint64_t x) {
    return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace detail

class GaussianStream {
  public:
    GaussianStream(std::uint64_t seed, std::uint64_t stream)
        : key_(detail::mix64(detail::mix64(seed) ^ detail::mix64(stream * 0x9e3779b97f4a7c15ull + 1))) {}

    /// Sub-stream key, usable as a recordable per-path seed.
    std::uint64_t key() const { return key_; }

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const std::uint64_t w1 = detail::mix64(key_ ^ detail::mix64(counter_++));
        const std::uint64_t w2 = detail::mix64(key_ ^ detail::mix64(counter_++));
        const double u1 = detail::to_unit(w1);
        const double u2 = detail::to_unit(w2);
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace ccgraph
