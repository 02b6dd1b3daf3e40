#include "oovrec/splitter.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

namespace oovrec {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::size_t InductiveSplit::num_iv_users() const {
    return static_cast<std::size_t>(std::count(user_iv.begin(), user_iv.end(), 1));
}

std::size_t InductiveSplit::num_iv_items() const {
    return static_cast<std::size_t>(std::count(item_iv.begin(), item_iv.end(), 1));
}

FirstAppearance first_appearance(const InteractionLog& log) {
    if (log.events.empty()) throw NumericError("first_appearance: empty interaction log");
    FirstAppearance fa;
    fa.user.assign(log.users.size(), FirstAppearance::kNever);
    fa.item.assign(log.items.size(), FirstAppearance::kNever);
    for (const auto& ev : log.events) {
        fa.user[ev.user] = std::min(fa.user[ev.user], ev.ts);
        fa.item[ev.item] = std::min(fa.item[ev.item], ev.ts);
    }
    return fa;
}

int64_t choose_split_time(const InteractionLog& log, double rho) {
    if (rho <= 0.0 || rho >= 1.0) {
        throw ConfigError("oov ratio must be in (0,1), got " + std::to_string(rho));
    }
    const FirstAppearance fa = first_appearance(log);

    std::vector<int64_t> appearances;
    appearances.reserve(fa.user.size() + fa.item.size());
    for (int64_t ts : fa.user)
        if (ts != FirstAppearance::kNever) appearances.push_back(ts);
    for (int64_t ts : fa.item)
        if (ts != FirstAppearance::kNever) appearances.push_back(ts);
    std::sort(appearances.begin(), appearances.end());

    std::vector<int64_t> candidates = appearances;
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    if (candidates.size() < 2) {
        throw NumericError("degenerate split: all entities first appear at one timestamp");
    }

    const double target = (1.0 - rho) * static_cast<double>(appearances.size());
    int64_t best_t = candidates.front();
    double best_obj = -1.0;
    for (int64_t t : candidates) {
        // entities strictly before t
        const auto before = static_cast<double>(
            std::lower_bound(appearances.begin(), appearances.end(), t) - appearances.begin());
        const double obj = std::abs(before - target);
        if (best_obj < 0.0 || obj < best_obj) {  // ties keep the smaller (earlier) t
            best_obj = obj;
            best_t = t;
        }
    }
    return best_t;
}

InductiveSplit apply_split(const InteractionLog& log, int64_t t) {
    const FirstAppearance fa = first_appearance(log);
    InductiveSplit split;
    split.t = t;
    split.source_checksum = log.source_checksum;
    split.user_iv.assign(log.users.size(), 0);
    split.item_iv.assign(log.items.size(), 0);
    for (std::size_t u = 0; u < fa.user.size(); ++u) {
        if (fa.user[u] != FirstAppearance::kNever && fa.user[u] < t) split.user_iv[u] = 1;
    }
    for (std::size_t i = 0; i < fa.item.size(); ++i) {
        if (fa.item[i] != FirstAppearance::kNever && fa.item[i] < t) split.item_iv[i] = 1;
    }
    for (const auto& ev : log.events) {
        if (ev.ts < t) {
            // endpoints first appear no later than ev.ts, hence are IV
            split.parts.train.push_back(ev);
        } else {
            const bool u_iv = split.user_iv[ev.user] != 0;
            const bool i_iv = split.item_iv[ev.item] != 0;
            if (u_iv && i_iv) split.parts.eval_iv_iv.push_back(ev);
            else if (u_iv && !i_iv) split.parts.eval_iv_oov.push_back(ev);
            else if (!u_iv && i_iv) split.parts.eval_oov_iv.push_back(ev);
            else split.parts.eval_oov_oov.push_back(ev);
        }
    }
    return split;
}

InteractionLog k_core_filter(const InteractionLog& log, std::size_t k) {
    if (k < 1) throw ConfigError("k-core requires k >= 1");
    InteractionLog out = log;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<std::size_t> udeg(out.users.size(), 0), ideg(out.items.size(), 0);
        for (const auto& ev : out.events) {
            ++udeg[ev.user];
            ++ideg[ev.item];
        }
        std::vector<Interaction> kept;
        kept.reserve(out.events.size());
        for (const auto& ev : out.events) {
            if (udeg[ev.user] >= k && ideg[ev.item] >= k) kept.push_back(ev);
            else changed = true;
        }
        out.events = std::move(kept);
    }
    return out;
}

namespace {

void write_partition(const fs::path& path, const std::vector<Interaction>& events,
                     const InteractionLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "user,item,timestamp,label\n";
    for (const auto& ev : events) {
        out << log.users.names[ev.user] << ',' << log.items.names[ev.item] << ',' << ev.ts << ',';
        if (ev.label >= 0) out << static_cast<int>(ev.label);
        out << '\n';
    }
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

void save_split(const InductiveSplit& split, const InteractionLog& log, const std::string& dir) {
    fs::create_directories(dir);
    const fs::path base(dir);

    json manifest;
    manifest["split_time"] = split.t;
    manifest["source_checksum"] = hex64(split.source_checksum);
    manifest["k_core"] = split.k_core;
    manifest["oov_ratio_target"] = split.rho;
    json counts;
    counts["train"] = split.parts.train.size();
    counts["eval_iv_iv"] = split.parts.eval_iv_iv.size();
    counts["eval_iv_oov"] = split.parts.eval_iv_oov.size();
    counts["eval_oov_iv"] = split.parts.eval_oov_iv.size();
    counts["eval_oov_oov"] = split.parts.eval_oov_oov.size();
    manifest["counts"] = counts;

    std::vector<std::string> iv_users, iv_items;
    std::size_t active_users = 0, active_items = 0;
    const FirstAppearance fa = first_appearance(log);
    for (std::size_t u = 0; u < split.user_iv.size(); ++u) {
        if (fa.user[u] != FirstAppearance::kNever) ++active_users;
        if (split.user_iv[u]) iv_users.push_back(log.users.names[u]);
    }
    for (std::size_t i = 0; i < split.item_iv.size(); ++i) {
        if (fa.item[i] != FirstAppearance::kNever) ++active_items;
        if (split.item_iv[i]) iv_items.push_back(log.items.names[i]);
    }
    manifest["iv_users"] = iv_users;
    manifest["iv_items"] = iv_items;
    manifest["oov_user_fraction"] =
        active_users == 0 ? 0.0 : 1.0 - static_cast<double>(iv_users.size()) / active_users;
    manifest["oov_item_fraction"] =
        active_items == 0 ? 0.0 : 1.0 - static_cast<double>(iv_items.size()) / active_items;
    manifest["oov_joint_fraction"] =
        1.0 - static_cast<double>(iv_users.size() + iv_items.size()) / (active_users + active_items);

    std::ofstream mout(base / "manifest.json", std::ios::binary);
    if (!mout) throw IoError("cannot write " + (base / "manifest.json").string());
    mout << manifest.dump(2) << '\n';

    write_partition(base / "train.csv", split.parts.train, log);
    write_partition(base / "eval_iv_iv.csv", split.parts.eval_iv_iv, log);
    write_partition(base / "eval_iv_oov.csv", split.parts.eval_iv_oov, log);
    write_partition(base / "eval_oov_iv.csv", split.parts.eval_oov_iv, log);
    write_partition(base / "eval_oov_oov.csv", split.parts.eval_oov_oov, log);
}

InductiveSplit load_split(const std::string& dir, const InteractionLog& log) {
    const fs::path path = fs::path(dir) / "manifest.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open split manifest: " + path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError(path.string() + ": invalid JSON: " + e.what());
    }

    const std::string recorded = manifest.at("source_checksum").get<std::string>();
    if (recorded != hex64(log.source_checksum)) {
        throw ConfigError("split manifest checksum " + recorded +
                          " does not match interaction log checksum " +
                          hex64(log.source_checksum));
    }

    const auto k = manifest.value("k_core", std::size_t{1});
    InteractionLog working = k > 1 ? k_core_filter(log, k) : log;
    InductiveSplit split = apply_split(working, manifest.at("split_time").get<int64_t>());
    split.k_core = k;
    split.rho = manifest.value("oov_ratio_target", 0.2);
    split.source_checksum = log.source_checksum;

    const auto& counts = manifest.at("counts");
    auto check = [&](const char* key, std::size_t actual) {
        if (counts.at(key).get<std::size_t>() != actual) {
            throw IoError("split manifest partition '" + std::string(key) +
                          "' count mismatch; the log does not reproduce the recorded split");
        }
    };
    check("train", split.parts.train.size());
    check("eval_iv_iv", split.parts.eval_iv_iv.size());
    check("eval_iv_oov", split.parts.eval_iv_oov.size());
    check("eval_oov_iv", split.parts.eval_oov_iv.size());
    check("eval_oov_oov", split.parts.eval_oov_oov.size());
    return split;
}

}  // namespace oovrec
