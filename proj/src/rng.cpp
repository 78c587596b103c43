#include "semimtl/rng.hpp"

#include <stdexcept>

namespace semimtl {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

Rng Rng::stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
    std::uint64_t h = fnv1a64(name);
    h ^= seed + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h ^= index + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    Rng r(h);
    r.next_u64();  // burn one output so nearby seeds decorrelate
    return r;
}

int Rng::uniform_int(int n) {
    if (n <= 0) {
        throw std::invalid_argument("Rng::uniform_int: n must be positive");
    }
    // Rejection sampling for an unbiased draw.
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

int Rng::poisson(double lambda) {
    if (lambda < 0.0) {
        throw std::invalid_argument("Rng::poisson: lambda must be non-negative");
    }
    if (lambda == 0.0) {
        return 0;
    }
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= uniform();
    } while (p > limit);
    return k - 1;
}

}  // namespace semimtl
