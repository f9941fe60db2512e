#pragma once

// Shared aliases, error types, and seeded-randomness helpers.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace csm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector/matrix dimensions do not line up.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid network description (zero-sized layer, bad stride, ...).
class TopologyError : public Error {
public:
    using Error::Error;
};

/// Argument outside its mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed input file; message carries the byte offset where parsing failed.
class ParseError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

/// An iterative solve failed to reach a fixed point (or hit a singular system).
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Non-finite values appeared during relaxation; reports where.
class DivergenceError : public Error {
public:
    DivergenceError(int layer, long iteration)
        : Error("relaxation diverged at layer " + std::to_string(layer) +
                ", iteration " + std::to_string(iteration)),
          layer(layer),
          iteration(iteration) {}

    int layer;
    long iteration;
};

// Uniform double in [0,1) from the top 53 bits; bit-stable across platforms,
// unlike std::uniform_real_distribution.
inline double uniform_unit(std::mt19937_64& gen) {
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& gen, double lo, double hi) {
    return lo + (hi - lo) * uniform_unit(gen);
}

// Box-Muller from the stable uniform above (std::normal_distribution is
// implementation-defined).
inline double normal_unit(std::mt19937_64& gen) {
    double u1 = uniform_unit(gen);
    double u2 = uniform_unit(gen);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Stateless 64-bit mixer; used for per-sample decisions that must survive
/// checkpoint/resume without carrying generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Index in [0, n) without std::uniform_int_distribution (same portability
/// concern); rejection sampling keeps it unbiased.
inline std::size_t uniform_index(std::mt19937_64& gen, std::size_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = gen();
    while (x >= limit) x = gen();
    return static_cast<std::size_t>(x % n);
}

}  // namespace csm
