#pragma once

#include <cstdint>
#include <vector>

#include "oovrec/corpus.hpp"
#include "oovrec/embedders.hpp"
#include "oovrec/models.hpp"
#include "oovrec/optim.hpp"
#include "oovrec/splitter.hpp"

namespace oovrec {

struct TrainerConfig {
    double alpha = 0.5;  // fraction of train interactions cloned per epoch
    double beta = 0.2;   // per-field feature mask probability
    double lr = 1e-3;
    std::size_t epochs = 10;
    std::size_t batch_size = 256;
    OptKind optimizer = OptKind::adam;
    AdamParams adam;
    uint64_t seed = 1;
    double gamma = 1.0;  // DirectAU uniformity weight

    void validate() const;
};

// One cloned interaction. Exactly one of the three OOV interaction types:
// IV user -> OOV item, OOV user -> IV item, OOV user -> OOV item.
struct SyntheticSample {
    Interaction src;
    bool oov_user = false;
    bool oov_item = false;
    uint64_t syn_user_id = 0;
    uint64_t syn_item_id = 0;
    Vec user_features;  // masked copy of the source row; empty if no table
    Vec item_features;
};

// Samples ceil(alpha * |train|) interactions without replacement, draws one
// of the three OOV types uniformly per interaction, assigns fresh synthetic
// ids from the counter and masks feature fields at rate beta.
std::vector<SyntheticSample> make_synthetic_oov(const InductiveSplit& split,
                                                const EncodedTable* user_features,
                                                const EncodedTable* item_features, double alpha,
                                                double beta, Rng& rng, uint64_t& syn_id_counter);

struct EpochLoss {
    double phase1 = 0.0;
    double phase2 = 0.0;
    std::size_t phase2_samples = 0;
};

// Two-phase training: phase 1 is ordinary transductive training of the base
// model; phase 2 checkpoints the optimizer, trains only the OOV embedder
// parameters on synthetic samples and restores the optimizer, leaving the
// base model and its optimizer state bit-identical to their post-phase-1
// values.
class Trainer {
public:
    Trainer(Model& model, OovEmbedder& user_embedder, OovEmbedder& item_embedder,
            const InductiveSplit& split, const EncodedTable* user_features,
            const EncodedTable* item_features, const TrainerConfig& cfg);

    EpochLoss train_epoch_two_phase(std::size_t epoch);
    std::vector<EpochLoss> run();

    Optimizer& opt() { return opt_; }

private:
    double phase1_epoch(std::size_t epoch);
    double phase2_epoch(std::size_t epoch, std::size_t& samples);

    uint32_t sample_negative_item(uint32_t user, uint32_t pos_item,
                                  const std::vector<uint32_t>& pool, Rng& rng) const;
    std::span<const double> feature_row(const EncodedTable* table, uint32_t entity,
                                        bool warn_missing) const;
    Vec resolve_user(const SyntheticSample& s) const;
    Vec resolve_item(const SyntheticSample& s) const;
    void route_user_grad(const SyntheticSample& s, std::span<const double> g);
    void route_item_grad(const SyntheticSample& s, std::span<const double> g);
    void check_loss_finite(double loss, std::size_t epoch, std::size_t batch, const char* phase);

    Model& model_;
    OovEmbedder& user_emb_;
    OovEmbedder& item_emb_;
    const InductiveSplit& split_;
    const EncodedTable* user_features_;
    const EncodedTable* item_features_;
    TrainerConfig cfg_;

    Optimizer opt_;
    Rng phase1_rng_;
    Rng phase2_rng_;
    uint64_t syn_id_counter_ = 0;

    std::vector<uint32_t> iv_item_pool_;                      // IV item entity ids
    std::vector<std::unordered_set<uint32_t>> train_items_;   // per user
    mutable bool warned_missing_features_ = false;
};

}  // namespace oovrec
