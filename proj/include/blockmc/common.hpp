#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace blockmc {

using rng_t = std::mt19937_64;

// Error taxonomy mirrored by the CLI exit codes: usage errors are handled by
// the argument parser (exit 2), these map to 3 and 4 respectively.
struct input_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct invariant_error : std::logic_error {
    using std::logic_error::logic_error;
};

enum class Units { nats, bits };

inline double nats_to_bits(double x) { return x / std::log(2.0); }

// splitmix64, used to derive independent substream seeds deterministically.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(seed ^ mix64(stream + 0x51ed2701ULL));
}

// log(exp(a) + exp(b)) without overflow
inline double log_sum_exp(double a, double b) {
    if (a < b) std::swap(a, b);
    if (std::isinf(b) && b < 0) return a;
    return a + std::log1p(std::exp(b - a));
}

}  // namespace blockmc
