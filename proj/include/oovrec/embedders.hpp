#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oovrec/common.hpp"
#include "oovrec/corpus.hpp"
#include "oovrec/hashing.hpp"
#include "oovrec/mlp.hpp"

namespace oovrec {

// Trainable embedding matrix for the in-vocabulary entities of one type.
// Row count is fixed at split time; rows are only written during phase 1
// of training.
struct EmbeddingTable {
    Tensor tensor;
    std::size_t dim = 0;
    std::string entity;                   // "user" | "item"
    std::vector<uint32_t> entity_of_row;  // table row -> dense entity index
    std::vector<int32_t> row_of_entity;   // dense entity index -> row, -1 if OOV
    uint64_t version = 0;                 // bumped after each mutating phase

    EmbeddingTable() = default;
    EmbeddingTable(std::string entity_type, const std::vector<uint8_t>& iv_mask, std::size_t d,
                   uint64_t seed);

    std::size_t num_rows() const { return entity_of_row.size(); }
    bool has_entity(uint32_t e) const {
        return e < row_of_entity.size() && row_of_entity[e] >= 0;
    }
    std::span<const double> row(std::size_t r) const {
        return {tensor.value.data() + r * dim, dim};
    }
    std::span<double> row_mut(std::size_t r) { return {tensor.value.data() + r * dim, dim}; }
    std::span<const double> row_for_entity(uint32_t e) const {
        return row(static_cast<std::size_t>(row_of_entity[e]));
    }
};

enum class EmbedderKind { zero, mean, rand, knn, r_bucket, dhe, fdhe, dnn, m_lsh, s_lsh };

EmbedderKind embedder_kind_from_string(const std::string& s);
const char* embedder_kind_name(EmbedderKind k);
const std::vector<EmbedderKind>& all_embedder_kinds();
bool embedder_kind_trainable(EmbedderKind k);
bool embedder_kind_needs_features(EmbedderKind k);

struct EmbedderConfig {
    EmbedderKind kind = EmbedderKind::zero;
    std::size_t buckets = 64;            // b; for m_lsh the code length p equals b,
                                         // for s_lsh b must be 2^p
    std::size_t knn_k = 10;              // k nearest neighbors
    std::size_t num_hashes = 64;         // K keyed hashes for dhe/fdhe
    std::vector<std::size_t> hidden;     // MLP hidden widths; empty -> {2d, 2d}
};

// One OOV embedder instance for one entity type. Maps an OOV id (plus
// features, for the feature-aware kinds) to a d-vector. Trainable kinds own
// their parameter tensors; gradient for a query is routed exclusively into
// those tensors.
class OovEmbedder {
public:
    OovEmbedder(const EmbedderConfig& cfg, std::string entity_type, std::size_t dim,
                std::size_t feat_dim, uint64_t master_seed);

    EmbedderKind kind() const { return cfg_.kind; }
    const EmbedderConfig& config() const { return cfg_; }
    bool trainable() const { return embedder_kind_trainable(cfg_.kind); }
    bool needs_features() const { return embedder_kind_needs_features(cfg_.kind); }
    std::size_t dim() const { return dim_; }

    // Wires the frozen IV table (mean, knn) and IV feature rows (knn).
    void bind_iv(const EmbeddingTable* table, const EncodedTable* features);

    Vec embed(uint64_t id, std::span<const double> features = {}) const;

    // Accumulates dL/dparams for one query given dL/dembedding. No-op for
    // the untrained kinds.
    void accumulate_grad(uint64_t id, std::span<const double> features,
                         std::span<const double> grad);

    std::vector<Tensor*> params();

    // id -> code / id -> neighbor caches. Population is single-writer via
    // warm_cache; embed never inserts, so concurrent reads are safe.
    void set_caching(bool on) { caching_ = on; }
    void warm_cache(uint64_t id, std::span<const double> features);

private:
    std::vector<uint8_t> lsh_code_for(uint64_t id, std::span<const double> features) const;
    std::vector<uint32_t> neighbors_for(uint64_t id, std::span<const double> features) const;
    Vec hash_encoding(uint64_t id) const;
    void require_features(std::span<const double> features, const char* who) const;

    EmbedderConfig cfg_;
    std::string entity_;
    std::size_t dim_ = 0;
    std::size_t feat_dim_ = 0;

    const EmbeddingTable* iv_table_ = nullptr;
    const EncodedTable* iv_features_ = nullptr;

    // kind-specific state
    Matrix rand_vectors_;                        // rand
    Tensor oov_table_;                           // r_bucket, m_lsh, s_lsh
    std::size_t code_bits_ = 0;                  // m_lsh, s_lsh
    std::unique_ptr<RandomProjection> proj_;     // m_lsh, s_lsh
    std::unique_ptr<KeyedHashFamily> family_;    // dhe, fdhe
    std::unique_ptr<MicroMlp> net_;              // dhe, fdhe, dnn
    Matrix knn_scan_;                            // knn: IV feature rows, table-row order
    std::size_t knn_k_effective_ = 0;

    bool caching_ = false;
    std::unordered_map<uint64_t, std::vector<uint8_t>> code_cache_;
    std::unordered_map<uint64_t, std::vector<uint32_t>> neighbor_cache_;
    mutable Vec mean_cache_;
    mutable uint64_t mean_cache_version_ = UINT64_MAX;
};

}  // namespace oovrec
