#include "oovrec/embedders.hpp"

#include <cmath>
#include <cstdio>

#include "oovrec/kernels.hpp"

namespace oovrec {

EmbeddingTable::EmbeddingTable(std::string entity_type, const std::vector<uint8_t>& iv_mask,
                               std::size_t d, uint64_t seed)
    : dim(d), entity(std::move(entity_type)) {
    row_of_entity.assign(iv_mask.size(), -1);
    for (std::size_t e = 0; e < iv_mask.size(); ++e) {
        if (!iv_mask[e]) continue;
        row_of_entity[e] = static_cast<int32_t>(entity_of_row.size());
        entity_of_row.push_back(static_cast<uint32_t>(e));
    }
    tensor = Tensor(entity + "/iv_table", entity_of_row.size() * dim);
    Rng rng(mix_seed(seed, entity + "/iv_table"));
    for (double& v : tensor.value) v = rng.normal() * 0.1;
}

EmbedderKind embedder_kind_from_string(const std::string& s) {
    for (EmbedderKind k : all_embedder_kinds()) {
        if (s == embedder_kind_name(k)) return k;
    }
    throw ConfigError("unknown embedder kind '" + s + "'");
}

const char* embedder_kind_name(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::zero: return "zero";
        case EmbedderKind::mean: return "mean";
        case EmbedderKind::rand: return "rand";
        case EmbedderKind::knn: return "knn";
        case EmbedderKind::r_bucket: return "r_bucket";
        case EmbedderKind::dhe: return "dhe";
        case EmbedderKind::fdhe: return "fdhe";
        case EmbedderKind::dnn: return "dnn";
        case EmbedderKind::m_lsh: return "m_lsh";
        case EmbedderKind::s_lsh: return "s_lsh";
    }
    return "?";
}

const std::vector<EmbedderKind>& all_embedder_kinds() {
    static const std::vector<EmbedderKind> kinds = {
        EmbedderKind::zero, EmbedderKind::mean,     EmbedderKind::rand, EmbedderKind::knn,
        EmbedderKind::r_bucket, EmbedderKind::dhe,  EmbedderKind::fdhe, EmbedderKind::dnn,
        EmbedderKind::m_lsh, EmbedderKind::s_lsh};
    return kinds;
}

bool embedder_kind_trainable(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::zero:
        case EmbedderKind::mean:
        case EmbedderKind::rand:
        case EmbedderKind::knn: return false;
        default: return true;
    }
}

bool embedder_kind_needs_features(EmbedderKind k) {
    switch (k) {
        case EmbedderKind::knn:
        case EmbedderKind::fdhe:
        case EmbedderKind::dnn:
        case EmbedderKind::m_lsh:
        case EmbedderKind::s_lsh: return true;
        default: return false;
    }
}

namespace {

bool is_power_of_two(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

std::size_t log2_exact(std::size_t v) {
    std::size_t p = 0;
    while ((std::size_t{1} << p) < v) ++p;
    return p;
}

}  // namespace

OovEmbedder::OovEmbedder(const EmbedderConfig& cfg, std::string entity_type, std::size_t dim,
                         std::size_t feat_dim, uint64_t master_seed)
    : cfg_(cfg), entity_(std::move(entity_type)), dim_(dim), feat_dim_(feat_dim) {
    if (dim_ == 0) throw ConfigError("embedder dimension must be positive");
    if (needs_features() && feat_dim_ == 0) {
        throw ConfigError(std::string(embedder_kind_name(cfg_.kind)) + " embedder for " + entity_ +
                          "s requires a feature table");
    }
    std::vector<std::size_t> hidden = cfg_.hidden;
    if (hidden.empty()) hidden = {2 * dim_, 2 * dim_};

    const uint64_t kind_seed =
        mix_seed(master_seed, entity_ + "/embedder/" + embedder_kind_name(cfg_.kind));

    switch (cfg_.kind) {
        case EmbedderKind::zero:
        case EmbedderKind::mean:
            break;
        case EmbedderKind::rand: {
            if (cfg_.buckets < 1) throw ConfigError("rand embedder needs b >= 1");
            rand_vectors_ = Matrix(cfg_.buckets, dim_);
            Rng rng(kind_seed);
            for (double& v : rand_vectors_.data) v = rng.normal() * 0.1;
            break;
        }
        case EmbedderKind::knn: {
            if (cfg_.knn_k < 1) throw ConfigError("knn embedder needs k >= 1");
            break;
        }
        case EmbedderKind::r_bucket: {
            if (cfg_.buckets < 1) throw ConfigError("r_bucket embedder needs b >= 1");
            oov_table_ = Tensor(entity_ + "/oov_table", cfg_.buckets * dim_);
            Rng rng(kind_seed);
            for (double& v : oov_table_.value) v = rng.normal() * 0.1;
            break;
        }
        case EmbedderKind::dhe:
        case EmbedderKind::fdhe: {
            if (cfg_.num_hashes < 1) throw ConfigError("dhe/fdhe needs K >= 1");
            family_ = std::make_unique<KeyedHashFamily>(
                mix_seed(kind_seed, "keys"), cfg_.num_hashes);
            std::vector<std::size_t> widths;
            widths.push_back(cfg_.kind == EmbedderKind::fdhe ? feat_dim_ + cfg_.num_hashes
                                                             : cfg_.num_hashes);
            widths.insert(widths.end(), hidden.begin(), hidden.end());
            widths.push_back(dim_);
            net_ = std::make_unique<MicroMlp>(widths, kind_seed, entity_ + "/oov_net");
            break;
        }
        case EmbedderKind::dnn: {
            std::vector<std::size_t> widths;
            widths.push_back(feat_dim_);
            widths.insert(widths.end(), hidden.begin(), hidden.end());
            widths.push_back(dim_);
            net_ = std::make_unique<MicroMlp>(widths, kind_seed, entity_ + "/oov_net");
            break;
        }
        case EmbedderKind::m_lsh: {
            if (cfg_.buckets < 1) throw ConfigError("m_lsh embedder needs b >= 1");
            code_bits_ = cfg_.buckets;  // one table row per code bit
            break;
        }
        case EmbedderKind::s_lsh: {
            if (!is_power_of_two(cfg_.buckets)) {
                throw ConfigError("s_lsh bucket count must be a power of two, got " +
                                  std::to_string(cfg_.buckets));
            }
            code_bits_ = log2_exact(cfg_.buckets);
            break;
        }
    }

    if (cfg_.kind == EmbedderKind::m_lsh || cfg_.kind == EmbedderKind::s_lsh) {
        // projection reproducible from (seed, entity type, p, d_feat)
        const uint64_t proj_seed = mix_seed(
            {master_seed, fnv1a64(entity_), static_cast<uint64_t>(code_bits_),
             static_cast<uint64_t>(feat_dim_), fnv1a64(std::string("lsh-projection"))});
        proj_ = std::make_unique<RandomProjection>(proj_seed, code_bits_, feat_dim_);
        oov_table_ = Tensor(entity_ + "/oov_table", cfg_.buckets * dim_);
        Rng rng(kind_seed);
        for (double& v : oov_table_.value) v = rng.normal() * 0.1;
    }
}

void OovEmbedder::bind_iv(const EmbeddingTable* table, const EncodedTable* features) {
    iv_table_ = table;
    iv_features_ = features;
    mean_cache_version_ = UINT64_MAX;

    if (cfg_.kind == EmbedderKind::knn) {
        if (!table) throw ConfigError("knn embedder needs an IV table");
        if (!features) {
            throw MissingFeaturesError("knn embedder for " + entity_ + "s has no feature table");
        }
        knn_scan_ = Matrix(table->num_rows(), features->total_dim());
        for (std::size_t r = 0; r < table->num_rows(); ++r) {
            const uint32_t e = table->entity_of_row[r];
            if (e >= features->present.size() || !features->present[e]) {
                throw MissingFeaturesError("knn embedder: IV " + entity_ + " " + std::to_string(e) +
                                           " has no feature row");
            }
            std::copy(features->rows.row(e), features->rows.row(e) + features->rows.cols,
                      knn_scan_.row(r));
        }
        knn_k_effective_ = cfg_.knn_k;
        if (knn_k_effective_ > table->num_rows()) {
            std::fprintf(stderr, "warning: knn k=%zu exceeds %zu IV %ss, clamping\n", cfg_.knn_k,
                         table->num_rows(), entity_.c_str());
            knn_k_effective_ = table->num_rows();
        }
        if (knn_k_effective_ == 0) throw ConfigError("knn embedder: IV table is empty");
    }
}

void OovEmbedder::require_features(std::span<const double> features, const char* who) const {
    if (features.empty()) {
        throw MissingFeaturesError(std::string(who) + " embedder for " + entity_ +
                                   "s called without features");
    }
    if (features.size() != feat_dim_) {
        throw ConfigError(std::string(who) + " embedder: feature width " +
                          std::to_string(features.size()) + " != " + std::to_string(feat_dim_));
    }
}

std::vector<uint8_t> OovEmbedder::lsh_code_for(uint64_t id,
                                               std::span<const double> features) const {
    if (caching_) {
        auto it = code_cache_.find(id);
        if (it != code_cache_.end()) return it->second;
    }
    require_features(features, embedder_kind_name(cfg_.kind));
    return proj_->code(features);
}

std::vector<uint32_t> OovEmbedder::neighbors_for(uint64_t id,
                                                 std::span<const double> features) const {
    if (caching_) {
        auto it = neighbor_cache_.find(id);
        if (it != neighbor_cache_.end()) return it->second;
    }
    require_features(features, "knn");
    return kernels::topk_dot(knn_scan_, features, knn_k_effective_);
}

Vec OovEmbedder::hash_encoding(uint64_t id) const {
    Vec enc(cfg_.num_hashes);
    for (std::size_t k = 0; k < cfg_.num_hashes; ++k) {
        enc[k] = 2.0 * (static_cast<double>(family_->hash(id, k)) * 0x1.0p-64) - 1.0;
    }
    return enc;
}

Vec OovEmbedder::embed(uint64_t id, std::span<const double> features) const {
    switch (cfg_.kind) {
        case EmbedderKind::zero:
            return Vec(dim_, 0.0);

        case EmbedderKind::mean: {
            if (!iv_table_ || iv_table_->num_rows() == 0) {
                throw NumericError("mean embedder: empty IV table for " + entity_ + "s");
            }
            if (mean_cache_version_ != iv_table_->version) {
                Vec mean(dim_, 0.0);
                for (std::size_t r = 0; r < iv_table_->num_rows(); ++r) {
                    const auto row = iv_table_->row(r);
                    for (std::size_t j = 0; j < dim_; ++j) mean[j] += row[j];
                }
                for (double& v : mean) v /= static_cast<double>(iv_table_->num_rows());
                mean_cache_ = std::move(mean);
                mean_cache_version_ = iv_table_->version;
            }
            return mean_cache_;
        }

        case EmbedderKind::rand: {
            const std::size_t bucket = int_hash(id) % cfg_.buckets;
            const double* row = rand_vectors_.row(bucket);
            return Vec(row, row + dim_);
        }

        case EmbedderKind::knn: {
            const auto nbrs = neighbors_for(id, features);
            Vec out(dim_, 0.0);
            for (uint32_t r : nbrs) {
                const auto row = iv_table_->row(r);
                for (std::size_t j = 0; j < dim_; ++j) out[j] += row[j];
            }
            for (double& v : out) v /= static_cast<double>(nbrs.size());
            return out;
        }

        case EmbedderKind::r_bucket: {
            const std::size_t bucket = int_hash(id) % cfg_.buckets;
            const double* row = oov_table_.value.data() + bucket * dim_;
            return Vec(row, row + dim_);
        }

        case EmbedderKind::dhe: {
            return net_->forward(hash_encoding(id));
        }

        case EmbedderKind::fdhe: {
            require_features(features, "fdhe");
            Vec input(features.begin(), features.end());
            const Vec enc = hash_encoding(id);
            input.insert(input.end(), enc.begin(), enc.end());
            return net_->forward(input);
        }

        case EmbedderKind::dnn: {
            require_features(features, "dnn");
            return net_->forward(features);
        }

        case EmbedderKind::m_lsh: {
            const auto code = lsh_code_for(id, features);
            Vec out(dim_, 0.0);
            std::size_t set = 0;
            for (std::size_t j = 0; j < code.size(); ++j) {
                if (!code[j]) continue;
                const double* row = oov_table_.value.data() + j * dim_;
                for (std::size_t c = 0; c < dim_; ++c) out[c] += row[c];
                ++set;
            }
            if (set == 0) {
                // unreachable under the >=0 tie rule; fall back to the column mean
                for (std::size_t j = 0; j < cfg_.buckets; ++j) {
                    const double* row = oov_table_.value.data() + j * dim_;
                    for (std::size_t c = 0; c < dim_; ++c) out[c] += row[c];
                }
                set = cfg_.buckets;
            }
            for (double& v : out) v /= static_cast<double>(set);
            return out;
        }

        case EmbedderKind::s_lsh: {
            const auto code = lsh_code_for(id, features);
            std::size_t index = 0;  // code bit 0 is the most significant bit
            for (std::size_t j = 0; j < code.size(); ++j) {
                index = (index << 1) | (code[j] ? 1u : 0u);
            }
            const double* row = oov_table_.value.data() + index * dim_;
            return Vec(row, row + dim_);
        }
    }
    throw ConfigError("unreachable embedder kind");
}

void OovEmbedder::accumulate_grad(uint64_t id, std::span<const double> features,
                                  std::span<const double> grad) {
    if (grad.size() != dim_) throw ConfigError("embedder grad width mismatch");
    switch (cfg_.kind) {
        case EmbedderKind::zero:
        case EmbedderKind::mean:
        case EmbedderKind::rand:
        case EmbedderKind::knn:
            return;  // no trainable parameters

        case EmbedderKind::r_bucket: {
            const std::size_t bucket = int_hash(id) % cfg_.buckets;
            double* g = oov_table_.grad.data() + bucket * dim_;
            for (std::size_t j = 0; j < dim_; ++j) g[j] += grad[j];
            return;
        }

        case EmbedderKind::dhe: {
            std::vector<Vec> acts;
            const Vec enc = hash_encoding(id);
            net_->forward(enc, acts);
            net_->backward(enc, acts, grad);
            return;
        }

        case EmbedderKind::fdhe: {
            require_features(features, "fdhe");
            Vec input(features.begin(), features.end());
            const Vec enc = hash_encoding(id);
            input.insert(input.end(), enc.begin(), enc.end());
            std::vector<Vec> acts;
            net_->forward(input, acts);
            net_->backward(input, acts, grad);
            return;
        }

        case EmbedderKind::dnn: {
            require_features(features, "dnn");
            std::vector<Vec> acts;
            net_->forward(features, acts);
            net_->backward(features, acts, grad);
            return;
        }

        case EmbedderKind::m_lsh: {
            const auto code = lsh_code_for(id, features);
            std::size_t set = 0;
            for (uint8_t bit : code) set += bit;
            if (set == 0) return;  // mean fallback path carries no per-row routing
            const double inv = 1.0 / static_cast<double>(set);
            for (std::size_t j = 0; j < code.size(); ++j) {
                if (!code[j]) continue;
                double* g = oov_table_.grad.data() + j * dim_;
                for (std::size_t c = 0; c < dim_; ++c) g[c] += grad[c] * inv;
            }
            return;
        }

        case EmbedderKind::s_lsh: {
            const auto code = lsh_code_for(id, features);
            std::size_t index = 0;
            for (std::size_t j = 0; j < code.size(); ++j) {
                index = (index << 1) | (code[j] ? 1u : 0u);
            }
            double* g = oov_table_.grad.data() + index * dim_;
            for (std::size_t j = 0; j < dim_; ++j) g[j] += grad[j];
            return;
        }
    }
}

std::vector<Tensor*> OovEmbedder::params() {
    std::vector<Tensor*> out;
    switch (cfg_.kind) {
        case EmbedderKind::r_bucket:
        case EmbedderKind::m_lsh:
        case EmbedderKind::s_lsh:
            out.push_back(&oov_table_);
            break;
        case EmbedderKind::dhe:
        case EmbedderKind::fdhe:
        case EmbedderKind::dnn: {
            auto ps = net_->params();
            out.insert(out.end(), ps.begin(), ps.end());
            break;
        }
        default:
            break;
    }
    return out;
}

void OovEmbedder::warm_cache(uint64_t id, std::span<const double> features) {
    if (!caching_) return;
    switch (cfg_.kind) {
        case EmbedderKind::knn:
            neighbor_cache_[id] = neighbors_for(id, features);
            break;
        case EmbedderKind::m_lsh:
        case EmbedderKind::s_lsh:
            code_cache_[id] = lsh_code_for(id, features);
            break;
        default:
            break;
    }
}

}  // namespace oovrec
