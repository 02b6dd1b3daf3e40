#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "oovrec/embedders.hpp"
#include "oovrec/models.hpp"
#include "oovrec/splitter.hpp"
#include "oovrec/trainer.hpp"

namespace oovrec {

enum class EvalSubset { all, oov_users, oov_items, transductive };

EvalSubset subset_from_string(const std::string& s);
const char* subset_name(EvalSubset s);

struct SubsetMetrics {
    double ndcg = 0.0;
    double auroc = 0.0;
    std::size_t users_evaluated = 0;
    std::size_t users_skipped = 0;
    std::size_t interactions = 0;
    std::size_t catalog_size = 0;
};

struct MetricsReport {
    std::vector<std::pair<std::string, SubsetMetrics>> subsets;  // in request order
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    uint64_t split_checksum = 0;
    std::size_t k = 20;

    const SubsetMetrics* find(EvalSubset s) const;
};

// DCG with binary relevance, IDCG truncated at min(k, |relevant|).
// Returns 0 when relevant is empty.
double ndcg_at_k(std::span<const uint32_t> ranked, const std::unordered_set<uint32_t>& relevant,
                 std::size_t k);

// Mann-Whitney AUROC with ties counted 1/2.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct EvalOptions {
    std::size_t k = 20;
    bool iv_only_catalog = false;  // restrict candidates to IV items everywhere
    uint64_t seed = 1;
    uint64_t config_hash = 0;
};

// Filtered evaluation. Retrieval path: every user in the subset ranks the
// item catalog (train items excluded) and contributes ndcg@k against their
// eval positives; users with no positives are skipped and counted. Ranking
// path: eval positives plus 1:1 sampled negatives, AUROC pooled over
// interactions. The transductive subset always ranks IV items only, so its
// numbers cannot depend on any OOV embedder state.
MetricsReport evaluate(const Model& model, OovEmbedder* user_embedder,
                       OovEmbedder* item_embedder, const InductiveSplit& split,
                       const EncodedTable* user_features, const EncodedTable* item_features,
                       std::span<const EvalSubset> subsets, const EvalOptions& opts);

std::string report_to_json(const MetricsReport& report);
std::string report_to_text(const MetricsReport& report);

// --- trained pipeline helpers ---

struct RunSpec {
    ModelKind model = ModelKind::bpr;
    std::size_t dim = 16;
    EmbedderConfig user_embedder;
    EmbedderConfig item_embedder;
    TrainerConfig trainer;
};

struct TrainedRun {
    std::unique_ptr<Model> model;
    std::unique_ptr<OovEmbedder> user_embedder;
    std::unique_ptr<OovEmbedder> item_embedder;
    std::vector<EpochLoss> losses;
};

TrainedRun train_run(const RunSpec& spec, const InductiveSplit& split,
                     const EncodedTable* user_features, const EncodedTable* item_features);

struct SweepRow {
    std::string param;
    double value = 0.0;
    uint64_t seed = 0;
    std::string subset;
    std::string metric;
    double score = 0.0;
    bool failed = false;
    std::string error;
};

// One-at-a-time sensitivity sweep: for each (param, value) the base spec is
// copied, the parameter applied, and a full train+evaluate run executed per
// seed. Failures become failed rows; the sweep continues.
std::vector<SweepRow> sweep(const RunSpec& base,
                            const std::vector<std::pair<std::string, std::vector<double>>>& grid,
                            std::span<const uint64_t> seeds, const InductiveSplit& split,
                            const EncodedTable* user_features, const EncodedTable* item_features,
                            std::span<const EvalSubset> subsets, const EvalOptions& opts);

void apply_sweep_param(RunSpec& spec, const std::string& param, double value);

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace oovrec
