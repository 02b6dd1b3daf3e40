#include "oovrec/models.hpp"

#include <algorithm>
#include <cmath>

#include "oovrec/kernels.hpp"

namespace oovrec {

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "bpr") return ModelKind::bpr;
    if (s == "directau") return ModelKind::directau;
    if (s == "ctx_lite") return ModelKind::ctx_lite;
    throw ConfigError("unknown model kind '" + s + "' (expected bpr|directau|ctx_lite)");
}

const char* model_kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::bpr: return "bpr";
        case ModelKind::directau: return "directau";
        case ModelKind::ctx_lite: return "ctx_lite";
    }
    return "?";
}

std::vector<Tensor*> Model::base_params() {
    std::vector<Tensor*> out = {&users.tensor, &items.tensor};
    if (context_aware()) {
        out.push_back(&w_user);
        out.push_back(&w_item);
    }
    return out;
}

Model make_model(ModelKind kind, std::size_t dim, const std::vector<uint8_t>& iv_users,
                 const std::vector<uint8_t>& iv_items, std::size_t user_feat_dim,
                 std::size_t item_feat_dim, uint64_t seed) {
    Model m;
    m.kind = kind;
    m.dim = dim;
    m.users = EmbeddingTable("user", iv_users, dim, seed);
    m.items = EmbeddingTable("item", iv_items, dim, seed);
    if (kind == ModelKind::ctx_lite) {
        if (user_feat_dim == 0 && item_feat_dim == 0) {
            throw ConfigError("ctx_lite model needs user and/or item features");
        }
        m.user_feat_dim = user_feat_dim;
        m.item_feat_dim = item_feat_dim;
        m.w_user = Tensor("w_user", dim * user_feat_dim);
        m.w_item = Tensor("w_item", dim * item_feat_dim);
        Rng rng(mix_seed(seed, "ctx/feature_maps"));
        const double su = user_feat_dim ? std::sqrt(1.0 / static_cast<double>(user_feat_dim)) : 0.0;
        for (double& v : m.w_user.value) v = rng.normal() * su;
        const double si = item_feat_dim ? std::sqrt(1.0 / static_cast<double>(item_feat_dim)) : 0.0;
        for (double& v : m.w_item.value) v = rng.normal() * si;
    }
    return m;
}

Vec ctx_tower(const Tensor& w, std::size_t dim, std::span<const double> id_emb,
              std::span<const double> feat) {
    Vec out(id_emb.begin(), id_emb.end());
    if (feat.empty() || w.value.empty()) return out;
    const std::size_t fdim = w.value.size() / dim;
    if (feat.size() != fdim) throw ConfigError("ctx_tower: feature width mismatch");
    for (std::size_t r = 0; r < dim; ++r) {
        const double* wrow = w.value.data() + r * fdim;
        double s = 0.0;
        for (std::size_t c = 0; c < fdim; ++c) s += wrow[c] * feat[c];
        out[r] += s;
    }
    return out;
}

namespace {

void check_finite(std::span<const double> v, const char* who) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(who) + ": non-finite input");
    }
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// numerically stable -log(sigmoid(x)) = log(1 + exp(-x))
double softplus_neg(double x) {
    if (x > 0.0) return std::log1p(std::exp(-x));
    return -x + std::log1p(std::exp(x));
}

}  // namespace

double bpr_loss_and_grad(std::span<const double> u, std::span<const double> i,
                         std::span<const double> i_neg, BprGrads& grads) {
    check_finite(u, "bpr");
    check_finite(i, "bpr");
    check_finite(i_neg, "bpr");
    const std::size_t d = u.size();
    if (i.size() != d || i_neg.size() != d) throw ConfigError("bpr: vector width mismatch");

    const double s = kernels::dot(u, i) - kernels::dot(u, i_neg);
    const double loss = softplus_neg(s);
    const double dls = sigmoid(s) - 1.0;  // dL/ds

    grads.user.assign(d, 0.0);
    grads.item.assign(d, 0.0);
    grads.item_neg.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        grads.user[j] = dls * (i[j] - i_neg[j]);
        grads.item[j] = dls * u[j];
        grads.item_neg[j] = -dls * u[j];
    }
    return loss;
}

namespace {

// rows normalized to unit L2 norm; returns the norms used
Vec normalize_rows(const Matrix& in, Matrix& out) {
    out = in;
    Vec norms(in.rows);
    for (std::size_t r = 0; r < in.rows; ++r) {
        double ss = 0.0;
        const double* row = in.row(r);
        for (std::size_t c = 0; c < in.cols; ++c) ss += row[c] * row[c];
        double n = std::sqrt(ss);
        if (n < 1e-12) n = 1e-12;
        norms[r] = n;
        double* orow = out.row(r);
        for (std::size_t c = 0; c < in.cols; ++c) orow[c] = row[c] / n;
    }
    return norms;
}

// log mean_{k!=l} exp(-2 ||x_k - x_l||^2) over unit rows; accumulates
// d/dx into grad (rows assumed already normalized)
double uniformity_and_grad(const Matrix& x, double weight, Matrix& grad) {
    const std::size_t n = x.rows;
    const std::size_t d = x.cols;
    Matrix w(n, n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k + 1; l < n; ++l) {
            double dist2 = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                const double diff = x.at(k, c) - x.at(l, c);
                dist2 += diff * diff;
            }
            const double e = std::exp(-2.0 * dist2);
            w.at(k, l) = e;
            w.at(l, k) = e;
            total += e;
        }
    }
    const double pairs = static_cast<double>(n) * (n - 1) / 2.0;
    const double loss = std::log(total / pairs);

    // d loss / dx_k = (-4 / total) * sum_l w_kl (x_k - x_l)
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            if (l == k) continue;
            const double coef = -4.0 * w.at(k, l) / total * weight;
            for (std::size_t c = 0; c < d; ++c) {
                grad.at(k, c) += coef * (x.at(k, c) - x.at(l, c));
            }
        }
    }
    return loss;
}

// pushes a gradient w.r.t. normalized rows back through the normalization
void backprop_normalization(const Matrix& normed, const Vec& norms, const Matrix& g_normed,
                            Matrix& g_raw) {
    g_raw = Matrix(normed.rows, normed.cols);
    for (std::size_t r = 0; r < normed.rows; ++r) {
        const double* xr = normed.row(r);
        const double* gr = g_normed.row(r);
        double proj = 0.0;
        for (std::size_t c = 0; c < normed.cols; ++c) proj += xr[c] * gr[c];
        double* out = g_raw.row(r);
        for (std::size_t c = 0; c < normed.cols; ++c) {
            out[c] = (gr[c] - proj * xr[c]) / norms[r];
        }
    }
}

}  // namespace

double directau_loss_and_grad(const Matrix& user_batch, const Matrix& item_batch, double gamma,
                              DirectAuGrads& grads) {
    if (user_batch.rows != item_batch.rows || user_batch.cols != item_batch.cols) {
        throw ConfigError("directau: batch shape mismatch");
    }
    const std::size_t n = user_batch.rows;
    const std::size_t d = user_batch.cols;
    if (n < 2) throw ConfigError("directau: uniformity needs a batch of at least 2 pairs");
    check_finite(std::span<const double>(user_batch.data), "directau");
    check_finite(std::span<const double>(item_batch.data), "directau");

    Matrix un, in;
    const Vec unorms = normalize_rows(user_batch, un);
    const Vec inorms = normalize_rows(item_batch, in);

    Matrix gu(n, d), gi(n, d);  // gradients w.r.t. normalized rows

    // alignment: mean ||u - i||^2 over pairs
    double align = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double diff = un.at(r, c) - in.at(r, c);
            align += diff * diff;
            gu.at(r, c) += 2.0 * diff * inv_n;
            gi.at(r, c) -= 2.0 * diff * inv_n;
        }
    }
    align *= inv_n;

    const double half_gamma = 0.5 * gamma;
    const double unif_u = uniformity_and_grad(un, half_gamma, gu);
    const double unif_i = uniformity_and_grad(in, half_gamma, gi);

    backprop_normalization(un, unorms, gu, grads.users);
    backprop_normalization(in, inorms, gi, grads.items);

    return align + half_gamma * (unif_u + unif_i);
}

double ctx_lite_loss_and_grad(std::span<const double> user_emb, std::span<const double> user_feat,
                              std::span<const double> item_emb, std::span<const double> item_feat,
                              const Tensor& w_user, const Tensor& w_item, int label,
                              CtxLiteGrads& grads) {
    const std::size_t d = user_emb.size();
    if (item_emb.size() != d) throw ConfigError("ctx_lite: embedding width mismatch");
    check_finite(user_emb, "ctx_lite");
    check_finite(item_emb, "ctx_lite");

    const Vec tu = ctx_tower(w_user, d, user_emb, user_feat);
    const Vec ti = ctx_tower(w_item, d, item_emb, item_feat);
    const double s = kernels::dot(tu, ti);
    const double p = sigmoid(s);
    const double y = label ? 1.0 : 0.0;
    const double loss = label ? softplus_neg(s) : softplus_neg(-s);
    const double dls = p - y;

    grads.user_emb.assign(d, 0.0);
    grads.item_emb.assign(d, 0.0);
    grads.w_user.assign(w_user.value.size(), 0.0);
    grads.w_item.assign(w_item.value.size(), 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        grads.user_emb[j] = dls * ti[j];
        grads.item_emb[j] = dls * tu[j];
    }
    if (!user_feat.empty() && !w_user.value.empty()) {
        const std::size_t f = user_feat.size();
        for (std::size_t r = 0; r < d; ++r) {
            const double gr = dls * ti[r];
            double* row = grads.w_user.data() + r * f;
            for (std::size_t c = 0; c < f; ++c) row[c] = gr * user_feat[c];
        }
    }
    if (!item_feat.empty() && !w_item.value.empty()) {
        const std::size_t f = item_feat.size();
        for (std::size_t r = 0; r < d; ++r) {
            const double gr = dls * tu[r];
            double* row = grads.w_item.data() + r * f;
            for (std::size_t c = 0; c < f; ++c) row[c] = gr * item_feat[c];
        }
    }
    return loss;
}

std::vector<uint32_t> recommend_topk(std::span<const double> scores,
                                     const std::vector<uint8_t>& excluded, std::size_t k,
                                     Rng& rng) {
    if (k < 1) throw ConfigError("recommend_topk: k must be >= 1");
    struct Entry {
        double score;
        uint64_t tiebreak;
        uint32_t index;
    };
    std::vector<Entry> entries;
    entries.reserve(scores.size());
    for (std::size_t idx = 0; idx < scores.size(); ++idx) {
        if (idx < excluded.size() && excluded[idx]) continue;
        entries.push_back({scores[idx], rng.next_u64(), static_cast<uint32_t>(idx)});
    }
    k = std::min(k, entries.size());
    std::partial_sort(entries.begin(), entries.begin() + k, entries.end(),
                      [](const Entry& a, const Entry& b) {
                          if (a.score != b.score) return a.score > b.score;
                          if (a.tiebreak != b.tiebreak) return a.tiebreak < b.tiebreak;
                          return a.index < b.index;
                      });
    std::vector<uint32_t> out(k);
    for (std::size_t j = 0; j < k; ++j) out[j] = entries[j].index;
    return out;
}

}  // namespace oovrec
