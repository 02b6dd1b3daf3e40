#include "oovrec/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace oovrec {

using json = nlohmann::json;

const char* field_kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::dense: return "dense";
        case FieldKind::categorical: return "categorical";
        case FieldKind::multi_categorical: return "multi_categorical";
        case FieldKind::pretrained_vector: return "pretrained_vector";
    }
    return "?";
}

FieldKind field_kind_from_string(const std::string& s) {
    if (s == "dense") return FieldKind::dense;
    if (s == "categorical") return FieldKind::categorical;
    if (s == "multi_categorical") return FieldKind::multi_categorical;
    if (s == "pretrained_vector") return FieldKind::pretrained_vector;
    throw ConfigError("unknown field kind '" + s + "'");
}

std::size_t FeatureTable::total_dim() const {
    std::size_t n = 0;
    for (const auto& f : schema) n += f.dim;
    return n;
}

uint32_t IdMap::intern(const std::string& s) {
    auto it = index.find(s);
    if (it != index.end()) return it->second;
    const auto id = static_cast<uint32_t>(names.size());
    names.push_back(s);
    index.emplace(s, id);
    return id;
}

const uint32_t* IdMap::find(const std::string& s) const {
    auto it = index.find(s);
    return it == index.end() ? nullptr : &it->second;
}

namespace {

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

int64_t parse_i64(const std::string& s, const std::string& path, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(path + ":" + std::to_string(lineno) + ": cannot parse integer '" + s + "'");
    }
}

double parse_f64(const std::string& s, const std::string& context) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(context + ": cannot parse number '" + s + "'");
    }
}

}  // namespace

InteractionLog load_interactions(const std::string& path, const CsvFormat& fmt) {
    const std::string bytes = read_file(path);
    InteractionLog log;
    log.source_checksum = fnv1a64(bytes.data(), bytes.size());

    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) {
        return log;  // empty file -> empty log
    }
    strip_cr(line);
    const auto header = split(line, fmt.delimiter);
    int col_user = -1, col_item = -1, col_ts = -1, col_label = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "user") col_user = static_cast<int>(i);
        else if (header[i] == "item") col_item = static_cast<int>(i);
        else if (header[i] == "timestamp") col_ts = static_cast<int>(i);
        else if (header[i] == "label") col_label = static_cast<int>(i);
    }
    if (col_user < 0 || col_item < 0) {
        throw IoError(path + ": header must name 'user' and 'item' columns");
    }
    if (col_ts < 0) {
        throw IoError(path + ": missing 'timestamp' column");
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split(line, fmt.delimiter);
        if (cells.size() != header.size()) {
            throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(header.size()) + " columns, got " +
                          std::to_string(cells.size()));
        }
        Interaction ev;
        ev.user = log.users.intern(cells[col_user]);
        ev.item = log.items.intern(cells[col_item]);
        ev.ts = parse_i64(cells[col_ts], path, lineno);
        if (col_label >= 0 && !cells[col_label].empty()) {
            const int64_t l = parse_i64(cells[col_label], path, lineno);
            if (l != 0 && l != 1) {
                throw IoError(path + ":" + std::to_string(lineno) + ": label must be 0 or 1");
            }
            ev.label = static_cast<int8_t>(l);
        }
        log.events.push_back(ev);
    }
    return log;
}

std::vector<FeatureField> load_feature_schema(const std::string& path) {
    const std::string bytes = read_file(path);
    json doc;
    try {
        doc = json::parse(bytes);
    } catch (const json::exception& e) {
        throw IoError(path + ": invalid JSON: " + e.what());
    }
    if (!doc.contains("fields") || !doc["fields"].is_array()) {
        throw IoError(path + ": schema must contain a 'fields' array");
    }
    std::vector<FeatureField> fields;
    for (const auto& f : doc["fields"]) {
        FeatureField field;
        field.name = f.at("name").get<std::string>();
        field.kind = field_kind_from_string(f.at("kind").get<std::string>());
        if (field.is_categorical()) {
            if (!f.contains("vocab") || !f["vocab"].is_array() || f["vocab"].empty()) {
                throw IoError(path + ": field '" + field.name + "' needs a non-empty vocab");
            }
            for (const auto& v : f["vocab"]) {
                field.vocab.push_back(v.get<std::string>());
            }
            for (std::size_t i = 0; i < field.vocab.size(); ++i) {
                if (!field.vocab_index.emplace(field.vocab[i], i).second) {
                    throw IoError(path + ": field '" + field.name + "' has duplicate vocab entry '" +
                                  field.vocab[i] + "'");
                }
            }
            field.dim = field.vocab.size() + 1;  // +1 reserved unknown slot
        } else {
            if (f.contains("vocab")) {
                throw IoError(path + ": field '" + field.name + "' is " +
                              field_kind_name(field.kind) + " and must not carry a vocab");
            }
            field.dim = f.value("dim", std::size_t{1});
            if (field.dim < 1) throw IoError(path + ": field '" + field.name + "' dim must be >= 1");
        }
        fields.push_back(std::move(field));
    }
    if (fields.empty()) throw IoError(path + ": schema has no fields");
    return fields;
}

FeatureTable load_features(const std::string& schema_path, const std::string& rows_path,
                           const IdMap& ids, const CsvFormat& fmt, bool mean_impute) {
    FeatureTable table;
    table.schema = load_feature_schema(schema_path);
    table.rows.assign(ids.size(), {});
    table.present.assign(ids.size(), 0);

    const std::string bytes = read_file(rows_path);
    std::istringstream in(bytes);
    std::string line;
    if (!std::getline(in, line)) throw IoError(rows_path + ": missing header row");
    strip_cr(line);
    const auto header = split(line, fmt.delimiter);
    if (header.empty() || header[0] != "id") {
        throw IoError(rows_path + ": first header column must be 'id'");
    }
    // map header position -> schema field
    std::vector<int> field_of_col(header.size(), -1);
    std::vector<bool> seen(table.schema.size(), false);
    for (std::size_t c = 1; c < header.size(); ++c) {
        for (std::size_t f = 0; f < table.schema.size(); ++f) {
            if (table.schema[f].name == header[c]) {
                field_of_col[c] = static_cast<int>(f);
                seen[f] = true;
                break;
            }
        }
        if (field_of_col[c] < 0) {
            throw IoError(rows_path + ": column '" + header[c] + "' is not in the schema");
        }
    }
    for (std::size_t f = 0; f < seen.size(); ++f) {
        if (!seen[f]) {
            throw IoError(rows_path + ": schema field '" + table.schema[f].name +
                          "' has no column");
        }
    }

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (line.empty()) continue;
        const auto cells = split(line, fmt.delimiter);
        if (cells.size() != header.size()) {
            throw IoError(rows_path + ":" + std::to_string(lineno) + ": expected " +
                          std::to_string(header.size()) + " columns, got " +
                          std::to_string(cells.size()));
        }
        const uint32_t* idx = ids.find(cells[0]);
        if (!idx) continue;  // entity never appears in the interaction log
        auto& row = table.rows[*idx];
        row.assign(table.schema.size(), {});
        table.present[*idx] = 1;
        for (std::size_t c = 1; c < header.size(); ++c) {
            const auto& field = table.schema[field_of_col[c]];
            FieldValue& fv = row[field_of_col[c]];
            if (cells[c].empty()) continue;  // missing
            fv.missing = false;
            if (field.is_categorical()) {
                fv.tokens = split(cells[c], fmt.inner_delimiter);
            } else {
                for (const auto& tok : split(cells[c], fmt.inner_delimiter)) {
                    fv.numbers.push_back(parse_f64(
                        tok, rows_path + ":" + std::to_string(lineno) + " field " + field.name));
                }
                if (fv.numbers.size() != field.dim) {
                    throw IoError(rows_path + ":" + std::to_string(lineno) + ": field '" +
                                  field.name + "' expects " + std::to_string(field.dim) +
                                  " values, got " + std::to_string(fv.numbers.size()));
                }
            }
        }
    }

    if (mean_impute) {
        for (std::size_t f = 0; f < table.schema.size(); ++f) {
            const auto& field = table.schema[f];
            if (field.is_categorical()) continue;
            Vec mean(field.dim, 0.0);
            std::size_t count = 0;
            for (std::size_t e = 0; e < table.rows.size(); ++e) {
                if (!table.present[e] || table.rows[e][f].missing) continue;
                for (std::size_t j = 0; j < field.dim; ++j) mean[j] += table.rows[e][f].numbers[j];
                ++count;
            }
            if (count == 0) continue;
            for (double& v : mean) v /= static_cast<double>(count);
            for (std::size_t e = 0; e < table.rows.size(); ++e) {
                if (!table.present[e] || !table.rows[e][f].missing) continue;
                table.rows[e][f].numbers = mean;
                table.rows[e][f].missing = false;
            }
        }
    }
    return table;
}

Vec concat_features(const FeatureTable& table, std::size_t entity) {
    if (!table.has_row(entity)) {
        throw MissingFeaturesError("entity " + std::to_string(entity) + " has no feature row");
    }
    Vec out;
    out.reserve(table.total_dim());
    const auto& row = table.rows[entity];
    for (std::size_t f = 0; f < table.schema.size(); ++f) {
        const auto& field = table.schema[f];
        const auto& fv = row[f];
        const std::size_t base = out.size();
        out.resize(base + field.dim, 0.0);
        switch (field.kind) {
            case FieldKind::categorical: {
                if (fv.missing || fv.tokens.empty()) {
                    out[base + field.dim - 1] = 1.0;  // unknown slot
                } else {
                    auto it = field.vocab_index.find(fv.tokens.front());
                    const std::size_t slot =
                        it == field.vocab_index.end() ? field.dim - 1 : it->second;
                    out[base + slot] = 1.0;
                }
                break;
            }
            case FieldKind::multi_categorical: {
                std::size_t set_bits = 0;
                if (fv.missing || fv.tokens.empty()) {
                    out[base + field.dim - 1] = 1.0;
                    set_bits = 1;
                } else {
                    for (const auto& tok : fv.tokens) {
                        auto it = field.vocab_index.find(tok);
                        const std::size_t slot =
                            it == field.vocab_index.end() ? field.dim - 1 : it->second;
                        if (out[base + slot] == 0.0) {
                            out[base + slot] = 1.0;
                            ++set_bits;
                        }
                    }
                }
                const double scale = 1.0 / std::sqrt(static_cast<double>(set_bits));
                for (std::size_t j = 0; j < field.dim; ++j) out[base + j] *= scale;
                break;
            }
            case FieldKind::dense:
            case FieldKind::pretrained_vector: {
                if (!fv.missing) {
                    for (std::size_t j = 0; j < field.dim; ++j) out[base + j] = fv.numbers[j];
                }
                break;
            }
        }
    }
    return out;
}

EncodedTable encode_all(const FeatureTable& table) {
    EncodedTable enc;
    enc.offsets.push_back(0);
    for (const auto& f : table.schema) {
        enc.field_names.push_back(f.name);
        enc.offsets.push_back(enc.offsets.back() + f.dim);
    }
    enc.rows = Matrix(table.present.size(), table.total_dim());
    enc.present = table.present;
    for (std::size_t e = 0; e < table.present.size(); ++e) {
        if (!table.present[e]) continue;
        const Vec row = concat_features(table, e);
        std::copy(row.begin(), row.end(), enc.rows.row(e));
    }
    return enc;
}

EncodedTable normalize_per_feature(const EncodedTable& table) {
    EncodedTable out = table;
    for (std::size_t e = 0; e < out.rows.rows; ++e) {
        if (!out.present[e]) continue;
        double* row = out.rows.row(e);
        for (std::size_t f = 0; f + 1 < out.offsets.size(); ++f) {
            double ss = 0.0;
            for (std::size_t j = out.offsets[f]; j < out.offsets[f + 1]; ++j) {
                if (!std::isfinite(row[j])) {
                    throw NumericError("non-finite feature value at entity " + std::to_string(e) +
                                       " field " + out.field_names[f]);
                }
                ss += row[j] * row[j];
            }
            if (ss == 0.0) continue;  // zero vectors left as zero
            const double inv = 1.0 / std::sqrt(ss);
            for (std::size_t j = out.offsets[f]; j < out.offsets[f + 1]; ++j) row[j] *= inv;
        }
    }
    return out;
}

void mask_fields(std::span<double> row, std::span<const std::size_t> offsets, double beta,
                 Rng& rng) {
    if (beta < 0.0 || beta > 1.0) {
        throw ConfigError("mask rate beta must be in [0,1], got " + std::to_string(beta));
    }
    for (std::size_t f = 0; f + 1 < offsets.size(); ++f) {
        if (rng.bernoulli(beta)) {
            for (std::size_t j = offsets[f]; j < offsets[f + 1]; ++j) row[j] = 0.0;
        }
    }
}

}  // namespace oovrec
