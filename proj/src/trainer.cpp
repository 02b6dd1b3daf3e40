#include "oovrec/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace oovrec {

void TrainerConfig::validate() const {
    std::string problems;
    auto add = [&](const std::string& p) {
        if (!problems.empty()) problems += "; ";
        problems += p;
    };
    if (alpha < 0.0 || alpha > 1.0) add("alpha must be in [0,1]");
    if (beta < 0.0 || beta > 1.0) add("beta must be in [0,1]");
    if (lr <= 0.0) add("lr must be positive");
    if (epochs == 0) add("epochs must be positive");
    if (batch_size == 0) add("batch_size must be positive");
    if (gamma < 0.0) add("gamma must be non-negative");
    if (!problems.empty()) throw ConfigError("invalid trainer config: " + problems);
}

std::vector<SyntheticSample> make_synthetic_oov(const InductiveSplit& split,
                                                const EncodedTable* user_features,
                                                const EncodedTable* item_features, double alpha,
                                                double beta, Rng& rng, uint64_t& syn_id_counter) {
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0,1]");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must be in [0,1]");

    const std::size_t n_train = split.parts.train.size();
    const auto count = static_cast<std::size_t>(
        std::ceil(alpha * static_cast<double>(n_train)));
    std::vector<SyntheticSample> out;
    if (count == 0) return out;

    std::vector<uint32_t> order(n_train);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    order.resize(count);

    // Synthetic ids sit far above any dense entity index so they can never
    // collide with IV ids; the counter keeps them unique across epochs.
    constexpr uint64_t kSyntheticBase = uint64_t{1} << 32;

    auto masked_copy = [&](const EncodedTable* table, uint32_t entity) -> Vec {
        if (!table || entity >= table->present.size() || !table->present[entity]) return {};
        const double* row = table->rows.row(entity);
        Vec copy(row, row + table->rows.cols);
        mask_fields(copy, table->offsets, beta, rng);
        return copy;
    };

    out.reserve(count);
    for (uint32_t idx : order) {
        SyntheticSample s;
        s.src = split.parts.train[idx];
        const uint64_t type = rng.below(3);
        s.oov_item = type == 0 || type == 2;
        s.oov_user = type == 1 || type == 2;
        if (s.oov_user) {
            s.syn_user_id = kSyntheticBase + syn_id_counter++;
            s.user_features = masked_copy(user_features, s.src.user);
        }
        if (s.oov_item) {
            s.syn_item_id = kSyntheticBase + syn_id_counter++;
            s.item_features = masked_copy(item_features, s.src.item);
        }
        out.push_back(std::move(s));
    }
    return out;
}

Trainer::Trainer(Model& model, OovEmbedder& user_embedder, OovEmbedder& item_embedder,
                 const InductiveSplit& split, const EncodedTable* user_features,
                 const EncodedTable* item_features, const TrainerConfig& cfg)
    : model_(model),
      user_emb_(user_embedder),
      item_emb_(item_embedder),
      split_(split),
      user_features_(user_features),
      item_features_(item_features),
      cfg_(cfg),
      opt_(cfg.optimizer, cfg.lr, cfg.adam),
      phase1_rng_(mix_seed(cfg.seed, "trainer/phase1")),
      phase2_rng_(mix_seed(cfg.seed, "trainer/phase2")) {
    cfg_.validate();
    if (split_.parts.train.empty()) throw NumericError("trainer: empty training partition");
    if (model_.items.num_rows() == 0) throw NumericError("trainer: no IV items");

    for (Tensor* t : model_.base_params()) opt_.register_tensor(t);
    for (Tensor* t : user_emb_.params()) opt_.register_tensor(t);
    for (Tensor* t : item_emb_.params()) opt_.register_tensor(t);

    user_emb_.bind_iv(&model_.users, user_features_);
    item_emb_.bind_iv(&model_.items, item_features_);

    iv_item_pool_ = model_.items.entity_of_row;
    train_items_.assign(model_.users.row_of_entity.size(), {});
    for (const auto& ev : split_.parts.train) train_items_[ev.user].insert(ev.item);
}

uint32_t Trainer::sample_negative_item(uint32_t user, uint32_t pos_item,
                                       const std::vector<uint32_t>& pool, Rng& rng) const {
    uint32_t candidate = pos_item;
    for (int tries = 0; tries < 100; ++tries) {
        candidate = pool[rng.below(pool.size())];
        if (candidate != pos_item && !train_items_[user].contains(candidate)) return candidate;
    }
    return candidate;  // saturated user; accept the last draw
}

std::span<const double> Trainer::feature_row(const EncodedTable* table, uint32_t entity,
                                             bool warn_missing) const {
    if (!table) return {};
    if (entity >= table->present.size() || !table->present[entity]) {
        if (warn_missing && !warned_missing_features_) {
            warned_missing_features_ = true;
            std::fprintf(stderr, "warning: entity %u has no feature row, using zeros\n", entity);
        }
        return {};
    }
    return table->rows.row_span(entity);
}

Vec Trainer::resolve_user(const SyntheticSample& s) const {
    if (s.oov_user) return user_emb_.embed(s.syn_user_id, s.user_features);
    const auto row = model_.users.row_for_entity(s.src.user);
    return Vec(row.begin(), row.end());
}

Vec Trainer::resolve_item(const SyntheticSample& s) const {
    if (s.oov_item) return item_emb_.embed(s.syn_item_id, s.item_features);
    const auto row = model_.items.row_for_entity(s.src.item);
    return Vec(row.begin(), row.end());
}

void Trainer::route_user_grad(const SyntheticSample& s, std::span<const double> g) {
    if (s.oov_user) user_emb_.accumulate_grad(s.syn_user_id, s.user_features, g);
    // IV side is frozen in phase 2: the gradient is dropped by design
}

void Trainer::route_item_grad(const SyntheticSample& s, std::span<const double> g) {
    if (s.oov_item) item_emb_.accumulate_grad(s.syn_item_id, s.item_features, g);
}

void Trainer::check_loss_finite(double loss, std::size_t epoch, std::size_t batch,
                                const char* phase) {
    if (std::isfinite(loss)) return;
    auto norm = [](const Tensor& t) {
        double ss = 0.0;
        for (double v : t.value) ss += v * v;
        return std::sqrt(ss);
    };
    throw NumericError("non-finite loss in " + std::string(phase) + " at epoch " +
                       std::to_string(epoch) + " batch " + std::to_string(batch) +
                       " (|user table|=" + std::to_string(norm(model_.users.tensor)) +
                       ", |item table|=" + std::to_string(norm(model_.items.tensor)) + ")");
}

namespace {

void axpy_row(Tensor& t, std::size_t dim, std::size_t row, std::span<const double> g,
              double scale) {
    double* dst = t.grad.data() + row * dim;
    for (std::size_t j = 0; j < dim; ++j) dst[j] += g[j] * scale;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch,
                                                              std::size_t min_batch) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = std::min(start + batch, n);
        // fold an undersized tail into the previous batch
        if (n - end > 0 && n - end < min_batch) end = n;
        out.emplace_back(start, end);
        start = end;
    }
    return out;
}

}  // namespace

double Trainer::phase1_epoch(std::size_t epoch) {
    const auto& train = split_.parts.train;
    std::vector<uint32_t> order(train.size());
    std::iota(order.begin(), order.end(), 0u);
    phase1_rng_.shuffle(order);

    const std::size_t d = model_.dim;
    double epoch_loss = 0.0;
    std::size_t loss_terms = 0;

    const std::size_t min_batch = model_.kind == ModelKind::directau ? 2 : 1;
    if (model_.kind == ModelKind::directau && train.size() < 2) {
        throw NumericError("directau needs at least 2 training interactions");
    }
    const auto ranges = batch_ranges(train.size(), cfg_.batch_size, min_batch);

    std::size_t batch_no = 0;
    for (const auto& [start, end] : ranges) {
        const std::size_t bsz = end - start;
        for (Tensor* t : model_.base_params()) t->zero_grad();
        double batch_loss = 0.0;

        switch (model_.kind) {
            case ModelKind::bpr: {
                const double inv = 1.0 / static_cast<double>(bsz);
                BprGrads g;
                for (std::size_t s = start; s < end; ++s) {
                    const auto& ev = train[order[s]];
                    const uint32_t neg =
                        sample_negative_item(ev.user, ev.item, iv_item_pool_, phase1_rng_);
                    const auto urow = static_cast<std::size_t>(model_.users.row_of_entity[ev.user]);
                    const auto irow = static_cast<std::size_t>(model_.items.row_of_entity[ev.item]);
                    const auto nrow = static_cast<std::size_t>(model_.items.row_of_entity[neg]);
                    batch_loss += bpr_loss_and_grad(model_.users.row(urow), model_.items.row(irow),
                                                    model_.items.row(nrow), g);
                    axpy_row(model_.users.tensor, d, urow, g.user, inv);
                    axpy_row(model_.items.tensor, d, irow, g.item, inv);
                    axpy_row(model_.items.tensor, d, nrow, g.item_neg, inv);
                }
                batch_loss /= static_cast<double>(bsz);
                break;
            }
            case ModelKind::directau: {
                Matrix ub(bsz, d), ib(bsz, d);
                for (std::size_t s = start; s < end; ++s) {
                    const auto& ev = train[order[s]];
                    const auto u = model_.users.row_for_entity(ev.user);
                    const auto i = model_.items.row_for_entity(ev.item);
                    std::copy(u.begin(), u.end(), ub.row(s - start));
                    std::copy(i.begin(), i.end(), ib.row(s - start));
                }
                DirectAuGrads g;
                batch_loss = directau_loss_and_grad(ub, ib, cfg_.gamma, g);
                for (std::size_t s = start; s < end; ++s) {
                    const auto& ev = train[order[s]];
                    axpy_row(model_.users.tensor, d,
                             static_cast<std::size_t>(model_.users.row_of_entity[ev.user]),
                             g.users.row_span(s - start), 1.0);
                    axpy_row(model_.items.tensor, d,
                             static_cast<std::size_t>(model_.items.row_of_entity[ev.item]),
                             g.items.row_span(s - start), 1.0);
                }
                break;
            }
            case ModelKind::ctx_lite: {
                const double inv = 1.0 / static_cast<double>(2 * bsz);
                CtxLiteGrads g;
                for (std::size_t s = start; s < end; ++s) {
                    const auto& ev = train[order[s]];
                    const uint32_t neg =
                        sample_negative_item(ev.user, ev.item, iv_item_pool_, phase1_rng_);
                    const auto ufeat = feature_row(user_features_, ev.user, true);
                    const auto urow = static_cast<std::size_t>(model_.users.row_of_entity[ev.user]);
                    for (const auto& [item, label] :
                         {std::pair<uint32_t, int>{ev.item, 1}, {neg, 0}}) {
                        const auto ifeat = feature_row(item_features_, item, true);
                        const auto irow =
                            static_cast<std::size_t>(model_.items.row_of_entity[item]);
                        batch_loss +=
                            ctx_lite_loss_and_grad(model_.users.row(urow), ufeat,
                                                   model_.items.row(irow), ifeat, model_.w_user,
                                                   model_.w_item, label, g);
                        axpy_row(model_.users.tensor, d, urow, g.user_emb, inv);
                        axpy_row(model_.items.tensor, d, irow, g.item_emb, inv);
                        for (std::size_t j = 0; j < g.w_user.size(); ++j) {
                            model_.w_user.grad[j] += g.w_user[j] * inv;
                        }
                        for (std::size_t j = 0; j < g.w_item.size(); ++j) {
                            model_.w_item.grad[j] += g.w_item[j] * inv;
                        }
                    }
                }
                batch_loss /= static_cast<double>(2 * bsz);
                break;
            }
        }

        check_loss_finite(batch_loss, epoch, batch_no, "phase 1");
        epoch_loss += batch_loss;
        ++loss_terms;
        for (Tensor* t : model_.base_params()) opt_.step(t);
        ++batch_no;
    }
    return loss_terms ? epoch_loss / static_cast<double>(loss_terms) : 0.0;
}

double Trainer::phase2_epoch(std::size_t epoch, std::size_t& samples) {
    samples = 0;
    if (cfg_.alpha == 0.0) return 0.0;
    if (!user_emb_.trainable() && !item_emb_.trainable()) return 0.0;

    auto batch = make_synthetic_oov(split_, user_features_, item_features_, cfg_.alpha, cfg_.beta,
                                    phase2_rng_, syn_id_counter_);
    if (batch.empty()) return 0.0;
    samples = batch.size();

    const OptimizerState snapshot = opt_.checkpoint();
    for (Tensor* t : model_.base_params()) t->zero_grad();

    std::vector<Tensor*> oov_params;
    for (Tensor* t : user_emb_.params()) oov_params.push_back(t);
    for (Tensor* t : item_emb_.params()) oov_params.push_back(t);

    // negatives for ctx_lite come from the items visible in this batch
    std::vector<uint32_t> visible_items;
    if (model_.kind == ModelKind::ctx_lite) {
        std::unordered_set<uint32_t> seen;
        for (const auto& s : batch) seen.insert(s.src.item);
        visible_items.assign(seen.begin(), seen.end());
        std::sort(visible_items.begin(), visible_items.end());
        if (visible_items.size() < 2) visible_items = iv_item_pool_;
    }

    const std::size_t d = model_.dim;
    double epoch_loss = 0.0;
    std::size_t loss_terms = 0;

    const std::size_t min_batch = model_.kind == ModelKind::directau ? 2 : 1;
    if (model_.kind == ModelKind::directau && batch.size() < 2) {
        opt_.restore(snapshot);
        return 0.0;
    }
    const auto ranges = batch_ranges(batch.size(), cfg_.batch_size, min_batch);

    std::size_t batch_no = 0;
    for (const auto& [start, end] : ranges) {
        const std::size_t bsz = end - start;
        for (Tensor* t : oov_params) t->zero_grad();
        double batch_loss = 0.0;
        Vec scaled(d);
        auto scale_into = [&](std::span<const double> g, double f) -> std::span<const double> {
            for (std::size_t j = 0; j < d; ++j) scaled[j] = g[j] * f;
            return scaled;
        };

        switch (model_.kind) {
            case ModelKind::bpr: {
                const double inv = 1.0 / static_cast<double>(bsz);
                BprGrads g;
                for (std::size_t s = start; s < end; ++s) {
                    const auto& sample = batch[s];
                    const Vec u = resolve_user(sample);
                    const Vec i = resolve_item(sample);
                    const uint32_t neg = sample_negative_item(sample.src.user, sample.src.item,
                                                              iv_item_pool_, phase2_rng_);
                    batch_loss += bpr_loss_and_grad(
                        u, i, model_.items.row_for_entity(neg), g);
                    route_user_grad(sample, scale_into(g.user, inv));
                    route_item_grad(sample, scale_into(g.item, inv));
                }
                batch_loss /= static_cast<double>(bsz);
                break;
            }
            case ModelKind::directau: {
                Matrix ub(bsz, d), ib(bsz, d);
                for (std::size_t s = start; s < end; ++s) {
                    const Vec u = resolve_user(batch[s]);
                    const Vec i = resolve_item(batch[s]);
                    std::copy(u.begin(), u.end(), ub.row(s - start));
                    std::copy(i.begin(), i.end(), ib.row(s - start));
                }
                DirectAuGrads g;
                batch_loss = directau_loss_and_grad(ub, ib, cfg_.gamma, g);
                for (std::size_t s = start; s < end; ++s) {
                    route_user_grad(batch[s], g.users.row_span(s - start));
                    route_item_grad(batch[s], g.items.row_span(s - start));
                }
                break;
            }
            case ModelKind::ctx_lite: {
                const double inv = 1.0 / static_cast<double>(2 * bsz);
                CtxLiteGrads g;
                for (std::size_t s = start; s < end; ++s) {
                    const auto& sample = batch[s];
                    const Vec u = resolve_user(sample);
                    const std::span<const double> ufeat =
                        sample.oov_user ? std::span<const double>(sample.user_features)
                                        : feature_row(user_features_, sample.src.user, true);

                    // positive side
                    {
                        const Vec i = resolve_item(sample);
                        const std::span<const double> ifeat =
                            sample.oov_item ? std::span<const double>(sample.item_features)
                                            : feature_row(item_features_, sample.src.item, true);
                        batch_loss += ctx_lite_loss_and_grad(u, ufeat, i, ifeat, model_.w_user,
                                                             model_.w_item, 1, g);
                        route_user_grad(sample, scale_into(g.user_emb, inv));
                        route_item_grad(sample, scale_into(g.item_emb, inv));
                    }
                    // sampled negative among batch-visible items (IV, frozen)
                    {
                        const uint32_t neg = sample_negative_item(sample.src.user, sample.src.item,
                                                                  visible_items, phase2_rng_);
                        const auto ifeat = feature_row(item_features_, neg, true);
                        batch_loss += ctx_lite_loss_and_grad(
                            u, ufeat, model_.items.row_for_entity(neg), ifeat, model_.w_user,
                            model_.w_item, 0, g);
                        route_user_grad(sample, scale_into(g.user_emb, inv));
                    }
                }
                batch_loss /= static_cast<double>(2 * bsz);
                break;
            }
        }

        check_loss_finite(batch_loss, epoch, batch_no, "phase 2");
        epoch_loss += batch_loss;
        ++loss_terms;
        for (Tensor* t : oov_params) opt_.step(t);
        ++batch_no;
    }

    // phase 2 must never have produced gradient on the base model
    for (Tensor* t : model_.base_params()) {
        for (double gv : t->grad) {
            if (gv != 0.0) {
                throw std::logic_error("phase 2 leaked gradient into base parameter " + t->name);
            }
        }
    }
    opt_.restore(snapshot);
    return loss_terms ? epoch_loss / static_cast<double>(loss_terms) : 0.0;
}

EpochLoss Trainer::train_epoch_two_phase(std::size_t epoch) {
    EpochLoss out;
    out.phase1 = phase1_epoch(epoch);
    ++model_.users.version;
    ++model_.items.version;
    out.phase2 = phase2_epoch(epoch, out.phase2_samples);
    return out;
}

std::vector<EpochLoss> Trainer::run() {
    std::vector<EpochLoss> losses;
    losses.reserve(cfg_.epochs);
    for (std::size_t e = 0; e < cfg_.epochs; ++e) {
        losses.push_back(train_epoch_two_phase(e));
    }
    return losses;
}

}  // namespace oovrec
