#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "oovrec/common.hpp"
#include "oovrec/embedders.hpp"

namespace oovrec {

enum class ModelKind { bpr, directau, ctx_lite };

ModelKind model_kind_from_string(const std::string& s);
const char* model_kind_name(ModelKind k);

// Base recommendation model. All three kinds score a (user, item) pair by a
// dot product; ctx_lite first lifts each side with its feature map:
// tower = id_embedding + W * features.
struct Model {
    ModelKind kind = ModelKind::bpr;
    std::size_t dim = 0;
    EmbeddingTable users;
    EmbeddingTable items;
    Tensor w_user;  // dim x user_feat_dim, ctx_lite only
    Tensor w_item;  // dim x item_feat_dim, ctx_lite only
    std::size_t user_feat_dim = 0;
    std::size_t item_feat_dim = 0;

    bool context_aware() const { return kind == ModelKind::ctx_lite; }

    std::vector<Tensor*> base_params();
};

Model make_model(ModelKind kind, std::size_t dim, const std::vector<uint8_t>& iv_users,
                 const std::vector<uint8_t>& iv_items, std::size_t user_feat_dim,
                 std::size_t item_feat_dim, uint64_t seed);

// tower = id_emb + W feat; with an empty feature span the W term is dropped
Vec ctx_tower(const Tensor& w, std::size_t dim, std::span<const double> id_emb,
              std::span<const double> feat);

struct BprGrads {
    Vec user, item, item_neg;
};

// loss = -log sigmoid(u.i - u.i')
double bpr_loss_and_grad(std::span<const double> u, std::span<const double> i,
                         std::span<const double> i_neg, BprGrads& grads);

struct DirectAuGrads {
    Matrix users, items;
};

// Alignment + uniformity over a batch of positive pairs; embeddings are
// L2-normalized inside the op and gradients flow through the normalization.
double directau_loss_and_grad(const Matrix& user_batch, const Matrix& item_batch, double gamma,
                              DirectAuGrads& grads);

struct CtxLiteGrads {
    Vec user_emb, item_emb;
    std::vector<double> w_user, w_item;  // same layout as the weight tensors
};

// Binary cross-entropy on the tower dot product.
double ctx_lite_loss_and_grad(std::span<const double> user_emb, std::span<const double> user_feat,
                              std::span<const double> item_emb, std::span<const double> item_feat,
                              const Tensor& w_user, const Tensor& w_item, int label,
                              CtxLiteGrads& grads);

// Items sorted by descending score, equal scores permuted uniformly at
// random (seeded), excluded positions never returned. Returns at most k
// positions into the score vector.
std::vector<uint32_t> recommend_topk(std::span<const double> scores,
                                     const std::vector<uint8_t>& excluded, std::size_t k,
                                     Rng& rng);

}  // namespace oovrec
