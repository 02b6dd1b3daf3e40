#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oovrec/corpus.hpp"

namespace oovrec {

struct SplitPartitions {
    std::vector<Interaction> train;
    std::vector<Interaction> eval_iv_iv;    // IV user -> IV item
    std::vector<Interaction> eval_iv_oov;   // IV user -> OOV item
    std::vector<Interaction> eval_oov_iv;   // OOV user -> IV item
    std::vector<Interaction> eval_oov_oov;  // OOV user -> OOV item
};

struct InductiveSplit {
    int64_t t = 0;
    std::vector<uint8_t> user_iv;  // by dense user index
    std::vector<uint8_t> item_iv;
    SplitPartitions parts;
    uint64_t source_checksum = 0;
    std::size_t k_core = 1;
    double rho = 0.2;

    std::size_t num_iv_users() const;
    std::size_t num_iv_items() const;
};

struct FirstAppearance {
    // INT64_MAX marks an entity with no events (interned but filtered out)
    std::vector<int64_t> user;
    std::vector<int64_t> item;
    static constexpr int64_t kNever = INT64_MAX;
};

FirstAppearance first_appearance(const InteractionLog& log);

// Picks the observed first-appearance timestamp t minimizing
// |#entities first appearing before t - (1-rho) * #entities|,
// ties broken toward smaller t.
int64_t choose_split_time(const InteractionLog& log, double rho = 0.2);

InductiveSplit apply_split(const InteractionLog& log, int64_t t);

// Iteratively removes users/items with fewer than k interactions until
// every remaining entity has at least k. Id maps are left untouched.
InteractionLog k_core_filter(const InteractionLog& log, std::size_t k);

// Manifest (JSON) plus one CSV per partition, written under dir.
void save_split(const InductiveSplit& split, const InteractionLog& log, const std::string& dir);

// Rebuilds the split recorded in dir/manifest.json from the log (reapplies
// k-core and the stored t) and cross-checks checksum and partition counts.
InductiveSplit load_split(const std::string& dir, const InteractionLog& log);

}  // namespace oovrec
