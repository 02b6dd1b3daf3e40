#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "oovrec/common.hpp"

namespace oovrec {

struct CsvFormat {
    char delimiter = ',';
    char inner_delimiter = '|';  // separates values inside list-valued cells
};

enum class FieldKind { dense, categorical, multi_categorical, pretrained_vector };

const char* field_kind_name(FieldKind k);
FieldKind field_kind_from_string(const std::string& s);

struct FeatureField {
    std::string name;
    FieldKind kind = FieldKind::dense;
    std::size_t dim = 1;  // encoded width
    std::vector<std::string> vocab;
    std::unordered_map<std::string, std::size_t> vocab_index;

    bool is_categorical() const {
        return kind == FieldKind::categorical || kind == FieldKind::multi_categorical;
    }
};

// One raw cell. Categorical kinds keep tokens, numeric kinds keep parsed
// numbers. An empty cell in the input marks a missing value.
struct FieldValue {
    std::vector<std::string> tokens;
    std::vector<double> numbers;
    bool missing = true;
};

struct FeatureTable {
    std::vector<FeatureField> schema;
    std::vector<std::vector<FieldValue>> rows;  // entity index -> per-field values
    std::vector<uint8_t> present;               // entity index -> has a row

    std::size_t total_dim() const;
    bool has_row(std::size_t entity) const {
        return entity < present.size() && present[entity];
    }
    std::size_t num_fields() const { return schema.size(); }
};

struct IdMap {
    std::vector<std::string> names;
    std::unordered_map<std::string, uint32_t> index;

    uint32_t intern(const std::string& s);
    const uint32_t* find(const std::string& s) const;
    std::size_t size() const { return names.size(); }
};

struct Interaction {
    uint32_t user = 0;
    uint32_t item = 0;
    int64_t ts = 0;
    int8_t label = -1;  // -1 = no label column
};

struct InteractionLog {
    std::vector<Interaction> events;
    IdMap users;
    IdMap items;
    uint64_t source_checksum = 0;
};

// Encoded feature rows: one dense row per entity, fields concatenated in
// schema order. offsets has num_fields+1 entries into each row.
struct EncodedTable {
    std::vector<std::string> field_names;
    std::vector<std::size_t> offsets;
    Matrix rows;
    std::vector<uint8_t> present;

    std::size_t total_dim() const { return rows.cols; }
    std::size_t num_fields() const { return field_names.size(); }
};

InteractionLog load_interactions(const std::string& path, const CsvFormat& fmt = {});

std::vector<FeatureField> load_feature_schema(const std::string& path);

// Feature rows file: header "id,<field>,...", one row per entity. Rows whose
// id does not occur in `ids` are dropped. Dense/pretrained cells left empty
// are imputed with the field's column mean when mean_impute is set.
FeatureTable load_features(const std::string& schema_path, const std::string& rows_path,
                           const IdMap& ids, const CsvFormat& fmt = {}, bool mean_impute = true);

// One-hot / multi-hot / copy encoding of a single row, unnormalized.
// Multi-hot sub-vectors are pre-scaled by 1/sqrt(#set bits).
Vec concat_features(const FeatureTable& table, std::size_t entity);

EncodedTable encode_all(const FeatureTable& table);

// L2-normalizes each field's sub-vector independently per row. All-zero
// sub-vectors are left as zero.
EncodedTable normalize_per_feature(const EncodedTable& table);

// Zeroes whole encoded fields independently with probability beta.
void mask_fields(std::span<double> row, std::span<const std::size_t> offsets, double beta,
                 Rng& rng);

}  // namespace oovrec
