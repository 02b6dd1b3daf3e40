#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oovrec {

using Vec = std::vector<double>;

// Usage or configuration problem. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, degenerate numerics. CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable/unwritable/malformed files. CLI exit code 4.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// An entity is referenced but has no feature row. Callers that have a
// fallback (e.g. the context-aware ranker) catch this one specifically.
class MissingFeaturesError : public IoError {
public:
    explicit MissingFeaturesError(const std::string& msg) : IoError(msg) {}
};

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    std::span<double> row_span(std::size_t r) { return {row(r), cols}; }
    std::span<const double> row_span(std::size_t r) const { return {row(r), cols}; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return data.size(); }
};

// A trainable parameter block: values plus a gradient accumulator of the
// same shape. Optimizers key their state off the Tensor address.
struct Tensor {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;

    Tensor() = default;
    Tensor(std::string n, std::size_t size)
        : name(std::move(n)), value(size, 0.0), grad(size, 0.0) {}

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

inline uint64_t fnv1a64(const void* bytes, std::size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Derives a child seed from an ordered list of parts. Used to give every
// consumer (phase-1 sampling, phase-2 sampling, table init, projections,
// per-user eval draws) its own stream so that one consumer's draw count
// cannot shift another's sequence.
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (uint64_t v : parts) h = fnv1a64(&v, sizeof(v), h);
    return h;
}

inline uint64_t mix_seed(uint64_t seed, const std::string& tag) {
    return fnv1a64(tag, mix_seed({seed}));
}

// Deterministic PRNG. The engine is mt19937_64 (sequence pinned by the
// standard); the uniform/normal transforms are written out here because the
// std::*_distribution implementations are not portable across toolchains.
class Rng {
public:
    explicit Rng(uint64_t seed) : s_{seed} {
        // splitmix64 expansion of the seed into mt19937_64 state
        state_[0] = next_split();
        state_[1] = next_split();
        state_[2] = next_split();
        state_[3] = next_split();
    }

    uint64_t next_u64() {
        // xoshiro256** step
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // uniform double in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform integer in [0, n), n > 0; rejection-free Lemire-style reduction
    // is avoided in favor of plain rejection to keep the mapping unbiased.
    uint64_t below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // standard normal via Box-Muller, one spare cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.28318530717958647692 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

private:
    uint64_t next_split() {
        uint64_t z = (s_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_;
    uint64_t state_[4];
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace oovrec
