#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oovrec/common.hpp"

namespace oovrec {

// Three-round multiply-xorshift avalanche hash. Each round is a xorshift
// followed by an odd multiply, so the map is bijective on 64 bits.
uint64_t int_hash(uint64_t x);

// SipHash-2-4 over an arbitrary byte string with a 128-bit key.
uint64_t siphash24(uint64_t k0, uint64_t k1, const void* data, std::size_t len);

// K keyed hash functions with 128-bit keys derived from one master seed.
class KeyedHashFamily {
public:
    KeyedHashFamily(uint64_t master_seed, std::size_t num_keys);

    std::size_t size() const { return keys_.size(); }
    uint64_t hash(uint64_t id, std::size_t k) const;

private:
    struct Key {
        uint64_t k0, k1;
    };
    std::vector<Key> keys_;
};

// Fixed Gaussian projection for sign-based LSH codes. Entries are i.i.d.
// standard normal drawn from the seed; the matrix is never mutated after
// construction and never serialized (rebuilt from the seed instead).
class RandomProjection {
public:
    RandomProjection(uint64_t seed, std::size_t bits, std::size_t feat_dim);

    std::size_t bits() const { return proj_.rows; }
    std::size_t feat_dim() const { return proj_.cols; }

    // bit j = 1 iff (P x)_j >= 0; a projection of exactly 0 counts as 1
    std::vector<uint8_t> code(std::span<const double> features) const;

private:
    Matrix proj_;
};

}  // namespace oovrec
