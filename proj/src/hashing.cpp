#include "oovrec/hashing.hpp"

#include <cstring>

#include "oovrec/kernels.hpp"

namespace oovrec {

uint64_t int_hash(uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    x *= 0x2545f4914f6cdd1dULL;
    x ^= x >> 33;
    return x;
}

namespace {

inline uint64_t rotl64(uint64_t x, int b) { return (x << b) | (x >> (64 - b)); }

inline void sipround(uint64_t& v0, uint64_t& v1, uint64_t& v2, uint64_t& v3) {
    v0 += v1;
    v1 = rotl64(v1, 13);
    v1 ^= v0;
    v0 = rotl64(v0, 32);
    v2 += v3;
    v3 = rotl64(v3, 16);
    v3 ^= v2;
    v0 += v3;
    v3 = rotl64(v3, 21);
    v3 ^= v0;
    v2 += v1;
    v1 = rotl64(v1, 17);
    v1 ^= v2;
    v2 = rotl64(v2, 32);
}

inline uint64_t load_le64(const unsigned char* p) {
    uint64_t v;
    std::memcpy(&v, p, 8);
    return v;  // assumes little-endian host, as does the rest of the codebase
}

}  // namespace

uint64_t siphash24(uint64_t k0, uint64_t k1, const void* data, std::size_t len) {
    const auto* in = static_cast<const unsigned char*>(data);
    uint64_t v0 = 0x736f6d6570736575ULL ^ k0;
    uint64_t v1 = 0x646f72616e646f6dULL ^ k1;
    uint64_t v2 = 0x6c7967656e657261ULL ^ k0;
    uint64_t v3 = 0x7465646279746573ULL ^ k1;

    const std::size_t tail = len & 7;
    const unsigned char* end = in + (len - tail);
    for (; in != end; in += 8) {
        const uint64_t m = load_le64(in);
        v3 ^= m;
        sipround(v0, v1, v2, v3);
        sipround(v0, v1, v2, v3);
        v0 ^= m;
    }

    uint64_t b = static_cast<uint64_t>(len) << 56;
    for (std::size_t i = 0; i < tail; ++i) {
        b |= static_cast<uint64_t>(in[i]) << (8 * i);
    }
    v3 ^= b;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    v0 ^= b;

    v2 ^= 0xff;
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    sipround(v0, v1, v2, v3);
    return v0 ^ v1 ^ v2 ^ v3;
}

KeyedHashFamily::KeyedHashFamily(uint64_t master_seed, std::size_t num_keys) {
    Rng rng(mix_seed(master_seed, "keyed-hash-family"));
    keys_.reserve(num_keys);
    for (std::size_t i = 0; i < num_keys; ++i) {
        keys_.push_back(Key{rng.next_u64(), rng.next_u64()});
    }
}

uint64_t KeyedHashFamily::hash(uint64_t id, std::size_t k) const {
    if (k >= keys_.size()) {
        throw ConfigError("keyed_hash: key index " + std::to_string(k) +
                          " out of range (K=" + std::to_string(keys_.size()) + ")");
    }
    return siphash24(keys_[k].k0, keys_[k].k1, &id, sizeof(id));
}

RandomProjection::RandomProjection(uint64_t seed, std::size_t bits, std::size_t feat_dim)
    : proj_(bits, feat_dim) {
    Rng rng(seed);
    for (double& v : proj_.data) v = rng.normal();
}

std::vector<uint8_t> RandomProjection::code(std::span<const double> features) const {
    if (features.size() != proj_.cols) {
        throw ConfigError("lsh_code: feature length " + std::to_string(features.size()) +
                          " does not match projection width " + std::to_string(proj_.cols));
    }
    Vec projected(proj_.rows);
    kernels::matvec(proj_, features, projected);
    std::vector<uint8_t> bits(proj_.rows);
    for (std::size_t j = 0; j < proj_.rows; ++j) {
        bits[j] = projected[j] >= 0.0 ? 1 : 0;
    }
    return bits;
}

}  // namespace oovrec
