#pragma once

// Counter-based Gaussian sampling. The generator is a stateless 64-bit mix of
// (seed, stream, counter), so identical RngSpec values reproduce identical
// sample sequences and concurrent samplers just use distinct stream ids.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace freespec {

struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

namespace detail {
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

class GaussianStream {
public:
    explicit GaussianStream(RngSpec spec) : spec_(spec) {}
    GaussianStream(std::uint64_t seed, std::uint64_t stream) : spec_{seed, stream} {}

    // Uniform on (0,1); never returns an exact endpoint.
    double uniform() {
        const std::uint64_t r = next_word();
        return double(r >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    // Standard normal via Box-Muller; the partner deviate is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    const RngSpec& spec() const { return spec_; }

private:
    std::uint64_t next_word() {
        const std::uint64_t base = detail::mix64(spec_.seed) ^ (0x632be59bd9b4e019ULL * (spec_.stream + 1));
        return detail::mix64(detail::mix64(base) ^ counter_++);
    }

    RngSpec spec_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace freespec
