#include "splitlora/rng.hpp"

#include <cmath>

#include "splitlora/error.hpp"

namespace splitlora {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace

std::uint64_t SeededRng::next_u64() {
    state_ += kGolden;
    return mix64(state_);
}

double SeededRng::next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * next_unit() - 1.0;
        v = 2.0 * next_unit() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
}

std::uint64_t SeededRng::next_below(std::uint64_t n) {
    if (n == 0) {
        throw ParameterError("SeededRng::next_below: n must be positive");
    }
    // Reject draws below 2^64 mod n so the remainder is unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t x = 0;
    do {
        x = next_u64();
    } while (x < threshold);
    return x % n;
}

SeededRng SeededRng::derive(std::uint64_t stream) const {
    return SeededRng(mix64(seed_ ^ (kGolden * (stream + 1))));
}

}  // namespace splitlora
