#include "oovrec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "oovrec/kernels.hpp"

namespace oovrec {

using json = nlohmann::json;

EvalSubset subset_from_string(const std::string& s) {
    if (s == "all") return EvalSubset::all;
    if (s == "oov_users") return EvalSubset::oov_users;
    if (s == "oov_items") return EvalSubset::oov_items;
    if (s == "transductive") return EvalSubset::transductive;
    throw ConfigError("unknown eval subset '" + s +
                      "' (expected all|oov_users|oov_items|transductive)");
}

const char* subset_name(EvalSubset s) {
    switch (s) {
        case EvalSubset::all: return "all";
        case EvalSubset::oov_users: return "oov_users";
        case EvalSubset::oov_items: return "oov_items";
        case EvalSubset::transductive: return "transductive";
    }
    return "?";
}

const SubsetMetrics* MetricsReport::find(EvalSubset s) const {
    for (const auto& [name, metrics] : subsets) {
        if (name == subset_name(s)) return &metrics;
    }
    return nullptr;
}

double ndcg_at_k(std::span<const uint32_t> ranked, const std::unordered_set<uint32_t>& relevant,
                 std::size_t k) {
    std::unordered_set<uint32_t> seen;
    for (uint32_t item : ranked) {
        if (!seen.insert(item).second) {
            throw ConfigError("ndcg_at_k: duplicate item " + std::to_string(item) +
                              " in ranked list");
        }
    }
    if (relevant.empty()) return 0.0;
    double dcg = 0.0;
    const std::size_t depth = std::min(k, ranked.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (relevant.contains(ranked[i])) {
            dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, relevant.size());
    for (std::size_t i = 0; i < ideal; ++i) {
        idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ConfigError("auroc: size mismatch");
    std::size_t pos = 0, neg = 0;
    for (int l : labels) {
        if (l == 1) ++pos;
        else if (l == 0) ++neg;
        else throw ConfigError("auroc: labels must be 0 or 1");
    }
    if (pos == 0 || neg == 0) {
        throw NumericError("auroc undefined: labels contain a single class");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tied groups
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t t = i; t <= j; ++t) {
            if (labels[order[t]] == 1) rank_sum_pos += midrank;
        }
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    const double u = rank_sum_pos - p * (p + 1.0) / 2.0;
    return u / (p * static_cast<double>(neg));
}

namespace {

struct UserEval {
    uint32_t user = 0;
    std::vector<uint32_t> positives;  // unique item entity ids, sorted
};

// per-subset eval interactions grouped by user, positives deduplicated
std::vector<UserEval> subset_users(const InductiveSplit& split, EvalSubset subset,
                                   std::size_t* interaction_count) {
    std::vector<const std::vector<Interaction>*> sources;
    switch (subset) {
        case EvalSubset::all:
            sources = {&split.parts.eval_iv_iv, &split.parts.eval_iv_oov,
                       &split.parts.eval_oov_iv, &split.parts.eval_oov_oov};
            break;
        case EvalSubset::transductive:
            sources = {&split.parts.eval_iv_iv};
            break;
        case EvalSubset::oov_users:
            sources = {&split.parts.eval_oov_iv, &split.parts.eval_oov_oov};
            break;
        case EvalSubset::oov_items:
            sources = {&split.parts.eval_iv_oov, &split.parts.eval_oov_oov};
            break;
    }
    std::map<uint32_t, std::unordered_set<uint32_t>> by_user;
    std::size_t count = 0;
    for (const auto* part : sources) {
        for (const auto& ev : *part) {
            if (ev.label == 0) continue;  // explicit observed negatives are not positives
            by_user[ev.user].insert(ev.item);
            ++count;
        }
    }
    if (interaction_count) *interaction_count = count;
    std::vector<UserEval> out;
    out.reserve(by_user.size());
    for (auto& [user, items] : by_user) {
        UserEval ue;
        ue.user = user;
        ue.positives.assign(items.begin(), items.end());
        std::sort(ue.positives.begin(), ue.positives.end());
        out.push_back(std::move(ue));
    }
    return out;
}

std::span<const double> feature_of(const EncodedTable* table, uint32_t entity) {
    if (!table || entity >= table->present.size() || !table->present[entity]) return {};
    return table->rows.row_span(entity);
}

}  // namespace

MetricsReport evaluate(const Model& model, OovEmbedder* user_embedder,
                       OovEmbedder* item_embedder, const InductiveSplit& split,
                       const EncodedTable* user_features, const EncodedTable* item_features,
                       std::span<const EvalSubset> subsets, const EvalOptions& opts) {
    if (!user_embedder || !item_embedder) throw ConfigError("evaluate: embedders required");
    user_embedder->bind_iv(&model.users, user_features);
    item_embedder->bind_iv(&model.items, item_features);

    std::vector<EvalSubset> wanted;
    for (EvalSubset s : subsets) {
        if (std::find(wanted.begin(), wanted.end(), s) == wanted.end()) wanted.push_back(s);
    }
    if (wanted.empty()) throw ConfigError("evaluate: no subsets requested");

    const std::size_t d = model.dim;
    const bool ctx = model.context_aware();

    // ---- catalog: IV items first, then OOV items seen in eval ----
    std::vector<uint32_t> catalog = model.items.entity_of_row;
    const std::size_t n_iv_items = catalog.size();
    const bool need_full =
        !opts.iv_only_catalog &&
        std::any_of(wanted.begin(), wanted.end(),
                    [](EvalSubset s) { return s != EvalSubset::transductive; });
    if (need_full) {
        std::unordered_set<uint32_t> oov_items;
        for (const auto* part : {&split.parts.eval_iv_oov, &split.parts.eval_oov_oov}) {
            for (const auto& ev : *part) oov_items.insert(ev.item);
        }
        std::vector<uint32_t> extra(oov_items.begin(), oov_items.end());
        std::sort(extra.begin(), extra.end());
        catalog.insert(catalog.end(), extra.begin(), extra.end());
    }

    std::vector<int32_t> catalog_pos(split.item_iv.size(), -1);
    for (std::size_t p = 0; p < catalog.size(); ++p) catalog_pos[catalog[p]] = static_cast<int32_t>(p);

    // scoring rows: for ctx_lite these are the full item tower outputs
    Matrix item_rows(catalog.size(), d);
    for (std::size_t p = 0; p < catalog.size(); ++p) {
        const uint32_t e = catalog[p];
        Vec emb;
        if (model.items.has_entity(e)) {
            const auto row = model.items.row_for_entity(e);
            emb.assign(row.begin(), row.end());
        } else {
            emb = item_embedder->embed(e, feature_of(item_features, e));
        }
        if (ctx) emb = ctx_tower(model.w_item, d, emb, feature_of(item_features, e));
        std::copy(emb.begin(), emb.end(), item_rows.row(p));
    }

    // train-time interactions per user, for ranking exclusions and negative sampling
    std::vector<std::unordered_set<uint32_t>> train_items(split.user_iv.size());
    for (const auto& ev : split.parts.train) train_items[ev.user].insert(ev.item);
    std::vector<std::unordered_set<uint32_t>> all_items(split.user_iv.size());
    for (const auto& ev : split.parts.train) all_items[ev.user].insert(ev.item);
    for (const auto* part : {&split.parts.eval_iv_iv, &split.parts.eval_iv_oov,
                             &split.parts.eval_oov_iv, &split.parts.eval_oov_oov}) {
        for (const auto& ev : *part) all_items[ev.user].insert(ev.item);
    }

    auto resolve_user = [&](uint32_t u) -> Vec {
        Vec emb;
        if (model.users.has_entity(u)) {
            const auto row = model.users.row_for_entity(u);
            emb.assign(row.begin(), row.end());
        } else {
            emb = user_embedder->embed(u, feature_of(user_features, u));
        }
        if (ctx) emb = ctx_tower(model.w_user, d, emb, feature_of(user_features, u));
        return emb;
    };

    MetricsReport report;
    report.seed = opts.seed;
    report.config_hash = opts.config_hash;
    report.split_checksum = split.source_checksum;
    report.k = opts.k;

    for (EvalSubset subset : wanted) {
        SubsetMetrics sm;
        std::vector<UserEval> users = subset_users(split, subset, &sm.interactions);
        if (users.empty()) {
            throw ConfigError("evaluate: subset '" + std::string(subset_name(subset)) +
                              "' has no eval interactions");
        }
        const std::size_t ncand =
            subset == EvalSubset::transductive ? n_iv_items : catalog.size();
        sm.catalog_size = ncand;

        // user embeddings materialized serially: embedder caches are not
        // touched inside the parallel region
        std::vector<Vec> user_vecs(users.size());
        for (std::size_t ui = 0; ui < users.size(); ++ui) {
            user_vecs[ui] = resolve_user(users[ui].user);
        }

        struct PerUser {
            double ndcg = 0.0;
            bool skipped = true;
            std::vector<double> scores;  // auroc pool
            std::vector<int> labels;
        };
        std::vector<PerUser> results(users.size());
        const uint64_t subset_tag = fnv1a64(subset_name(subset));

        const auto nusers = static_cast<std::int64_t>(users.size());
#pragma omp parallel for schedule(dynamic, 8)
        for (std::int64_t uidx = 0; uidx < nusers; ++uidx) {
            const auto& ue = users[static_cast<std::size_t>(uidx)];
            PerUser& res = results[static_cast<std::size_t>(uidx)];

            if (ue.positives.empty()) continue;  // stays skipped
            res.skipped = false;

            std::unordered_set<uint32_t> relevant_pos;  // catalog positions
            for (uint32_t item : ue.positives) {
                const int32_t p = catalog_pos[item];
                if (p >= 0 && static_cast<std::size_t>(p) < ncand) {
                    relevant_pos.insert(static_cast<uint32_t>(p));
                }
            }

            Vec scores;
            kernels::dot_scores_prefix(item_rows, ncand, user_vecs[uidx], scores);

            std::vector<uint8_t> excluded(ncand, 0);
            for (uint32_t item : train_items[ue.user]) {
                const int32_t p = catalog_pos[item];
                if (p >= 0 && static_cast<std::size_t>(p) < ncand) excluded[p] = 1;
            }

            Rng tie_rng(mix_seed({opts.seed, subset_tag, ue.user, fnv1a64("tiebreak")}));
            const auto ranked = recommend_topk(scores, excluded, opts.k, tie_rng);
            // IDCG counts all positives, reachable or not, so restricting the
            // catalog depresses the score instead of hiding misses
            double dcg = 0.0;
            for (std::size_t i = 0; i < ranked.size(); ++i) {
                if (relevant_pos.contains(ranked[i])) {
                    dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
                }
            }
            double idcg = 0.0;
            for (std::size_t i = 0; i < std::min(opts.k, ue.positives.size()); ++i) {
                idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
            }
            res.ndcg = idcg > 0.0 ? dcg / idcg : 0.0;

            // ranking path: positive + 1 sampled negative per interaction
            Rng neg_rng(mix_seed({opts.seed, subset_tag, ue.user, fnv1a64("negatives")}));
            for (uint32_t item : ue.positives) {
                const int32_t p = catalog_pos[item];
                if (p < 0 || static_cast<std::size_t>(p) >= ncand) continue;
                res.scores.push_back(scores[p]);
                res.labels.push_back(1);
                uint32_t neg_pos = 0;
                for (int tries = 0; tries < 200; ++tries) {
                    neg_pos = static_cast<uint32_t>(neg_rng.below(ncand));
                    if (!all_items[ue.user].contains(catalog[neg_pos])) break;
                }
                res.scores.push_back(scores[neg_pos]);
                res.labels.push_back(0);
            }
        }

        double ndcg_sum = 0.0;
        std::vector<double> pooled_scores;
        std::vector<int> pooled_labels;
        for (const auto& res : results) {
            if (res.skipped) {
                ++sm.users_skipped;
                continue;
            }
            ++sm.users_evaluated;
            ndcg_sum += res.ndcg;
            pooled_scores.insert(pooled_scores.end(), res.scores.begin(), res.scores.end());
            pooled_labels.insert(pooled_labels.end(), res.labels.begin(), res.labels.end());
        }
        sm.ndcg = sm.users_evaluated ? ndcg_sum / static_cast<double>(sm.users_evaluated) : 0.0;
        sm.auroc = pooled_labels.empty() ? 0.0 : auroc(pooled_scores, pooled_labels);
        report.subsets.emplace_back(subset_name(subset), sm);
    }
    return report;
}

std::string report_to_json(const MetricsReport& report) {
    json doc;
    doc["seed"] = report.seed;
    doc["config_hash"] = report.config_hash;
    doc["split_checksum"] = report.split_checksum;
    doc["k"] = report.k;
    json subsets = json::object();
    for (const auto& [name, sm] : report.subsets) {
        json s;
        s["ndcg"] = sm.ndcg;
        s["auroc"] = sm.auroc;
        s["users_evaluated"] = sm.users_evaluated;
        s["users_skipped"] = sm.users_skipped;
        s["interactions"] = sm.interactions;
        s["catalog_size"] = sm.catalog_size;
        subsets[name] = s;
    }
    doc["subsets"] = subsets;
    return doc.dump(2) + "\n";
}

std::string report_to_text(const MetricsReport& report) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %10s %10s %8s %8s %8s %8s\n", "subset",
                  ("ndcg@" + std::to_string(report.k)).c_str(), "auroc", "users", "skipped",
                  "events", "catalog");
    out << line;
    for (const auto& [name, sm] : report.subsets) {
        std::snprintf(line, sizeof(line), "%-14s %10.5f %10.5f %8zu %8zu %8zu %8zu\n",
                      name.c_str(), sm.ndcg, sm.auroc, sm.users_evaluated, sm.users_skipped,
                      sm.interactions, sm.catalog_size);
        out << line;
    }
    return out.str();
}

TrainedRun train_run(const RunSpec& spec, const InductiveSplit& split,
                     const EncodedTable* user_features, const EncodedTable* item_features) {
    TrainedRun run;
    run.model = std::make_unique<Model>(
        make_model(spec.model, spec.dim, split.user_iv, split.item_iv,
                   user_features ? user_features->total_dim() : 0,
                   item_features ? item_features->total_dim() : 0, spec.trainer.seed));
    run.user_embedder = std::make_unique<OovEmbedder>(
        spec.user_embedder, "user", spec.dim,
        user_features ? user_features->total_dim() : 0, spec.trainer.seed);
    run.item_embedder = std::make_unique<OovEmbedder>(
        spec.item_embedder, "item", spec.dim,
        item_features ? item_features->total_dim() : 0, spec.trainer.seed);

    Trainer trainer(*run.model, *run.user_embedder, *run.item_embedder, split, user_features,
                    item_features, spec.trainer);
    run.losses = trainer.run();
    return run;
}

void apply_sweep_param(RunSpec& spec, const std::string& param, double value) {
    if (param == "alpha") {
        spec.trainer.alpha = value;
    } else if (param == "beta") {
        spec.trainer.beta = value;
    } else if (param == "b_u") {
        spec.user_embedder.buckets = static_cast<std::size_t>(value);
    } else if (param == "b_i") {
        spec.item_embedder.buckets = static_cast<std::size_t>(value);
    } else {
        throw ConfigError("unknown sweep parameter '" + param +
                          "' (expected alpha|beta|b_u|b_i)");
    }
}

std::vector<SweepRow> sweep(const RunSpec& base,
                            const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                            std::span<const uint64_t> seeds, const InductiveSplit& split,
                            const EncodedTable* user_features, const EncodedTable* item_features,
                            std::span<const EvalSubset> subsets, const EvalOptions& opts) {
    if (grid.empty()) throw ConfigError("sweep: empty grid");
    std::vector<SweepRow> rows;
    for (const auto& [param, values] : grid) {
        for (double value : values) {
            for (uint64_t seed : seeds) {
                RunSpec spec = base;
                apply_sweep_param(spec, param, value);
                spec.trainer.seed = seed;
                EvalOptions eopts = opts;
                eopts.seed = seed;
                try {
                    TrainedRun run = train_run(spec, split, user_features, item_features);
                    const MetricsReport report =
                        evaluate(*run.model, run.user_embedder.get(), run.item_embedder.get(),
                                 split, user_features, item_features, subsets, eopts);
                    for (const auto& [sname, sm] : report.subsets) {
                        rows.push_back({param, value, seed, sname, "ndcg", sm.ndcg, false, ""});
                        rows.push_back({param, value, seed, sname, "auroc", sm.auroc, false, ""});
                    }
                } catch (const std::exception& e) {
                    for (EvalSubset s : subsets) {
                        rows.push_back({param, value, seed, subset_name(s), "ndcg", 0.0, true,
                                        e.what()});
                        rows.push_back({param, value, seed, subset_name(s), "auroc", 0.0, true,
                                        e.what()});
                    }
                }
            }
        }
    }
    return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "param,value,seed,subset,metric,score,status\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.value);
        out << r.param << ',' << buf << ',' << r.seed << ',' << r.subset << ',' << r.metric << ',';
        if (r.failed) {
            out << ",failed";
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g", r.score);
            out << buf << ",ok";
        }
        out << '\n';
    }
}

}  // namespace oovrec
