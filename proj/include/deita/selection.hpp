#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "deita/corpus.hpp"
#include "deita/embedding.hpp"
#include "deita/rng.hpp"
#include "deita/scoring.hpp"

namespace deita {

enum class Comparator { AdmitIfLess, AdmitIfGreater };

inline std::string to_string(Comparator c) {
    return c == Comparator::AdmitIfLess ? "less" : "greater";
}

inline Comparator comparator_from_string(const std::string& s) {
    if (s == "less") return Comparator::AdmitIfLess;
    if (s == "greater") return Comparator::AdmitIfGreater;
    throw DataError("unknown comparator '" + s + "' (use less|greater)");
}

struct SelectionConfig {
    std::size_t budget = 1;
    std::optional<double> tau;               // required by the Repr Filter strategies
    Comparator comparator = Comparator::AdmitIfLess;
    std::uint64_t seed = 0;                  // random strategy only
    double score_match_max_dev = 2.0;        // controlled mode only
    bool band_on_product_of_means = false;   // alternate controlled-mode reading
};

enum class RejectReason { DistanceFilter, BudgetExhausted, ScoreMatch };

inline std::string to_string(RejectReason r) {
    switch (r) {
        case RejectReason::DistanceFilter: return "distance-filter";
        case RejectReason::BudgetExhausted: return "budget-exhausted";
        case RejectReason::ScoreMatch: return "score-match";
    }
    throw Error("unreachable");
}

struct Rejection {
    std::string id;
    RejectReason reason;
    std::optional<double> nearest_distance;
    std::optional<std::string> nearest_id;
};

struct SelectionResult {
    std::string strategy;
    std::vector<std::string> admitted; // admission order
    std::vector<Rejection> rejected;
    std::size_t examined = 0;
    std::size_t pool_size = 0;
    json config = json::object();
    std::map<std::string, std::string> fingerprints;

    std::size_t unexamined() const {
        return pool_size - admitted.size() - rejected.size();
    }
};

using TagSet = std::unordered_map<std::string, std::set<std::string>>;

namespace detail {

enum class ScoreKey { Complexity, Quality, Evol };

inline ScoreKey score_key_from_string(const std::string& s) {
    if (s == "complexity") return ScoreKey::Complexity;
    if (s == "quality") return ScoreKey::Quality;
    if (s == "evol") return ScoreKey::Evol;
    throw DataError("unknown score key '" + s + "' (use complexity|quality|evol)");
}

// Sample-level key: per-turn values summed over the conversation.
inline double sample_key(const SampleScore& row, ScoreKey key) {
    if (key == ScoreKey::Evol) {
        if (row.evol) return *row.evol;
        return evol_score(row.turns);
    }
    if (row.turns.empty()) throw DataError("no turn scores for id '" + row.id + "'");
    double sum = 0;
    for (const auto& t : row.turns) {
        const auto& v = key == ScoreKey::Complexity ? t.complexity : t.quality;
        if (!v) throw DataError("missing " +
                                std::string(key == ScoreKey::Complexity ? "complexity" : "quality") +
                                " score for id '" + row.id + "'");
        sum += *v;
    }
    return sum;
}

inline bool admits(Comparator c, double distance, double tau) {
    return c == Comparator::AdmitIfLess ? distance < tau : distance > tau;
}

} // namespace detail

inline SelectionResult select_random(const DataPool& pool, std::size_t m, std::uint64_t seed) {
    SelectionResult res;
    res.strategy = "random";
    res.pool_size = pool.size();
    res.config = {{"budget", m}, {"seed", seed}};
    res.fingerprints["pool"] = pool_fingerprint(pool);
    const std::size_t n = std::min(m, pool.size());
    const auto idx = sample_without_replacement(pool.size(), n, seed);
    std::vector<bool> taken(pool.size(), false);
    for (std::size_t i : idx) {
        res.admitted.push_back(pool.samples()[i].id);
        taken[i] = true;
    }
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (!taken[i])
            res.rejected.push_back(
                {pool.samples()[i].id, RejectReason::BudgetExhausted, std::nullopt, std::nullopt});
    res.examined = pool.size();
    return res;
}

/// The m highest by key, ties broken by original pool index (earlier wins).
/// Admission order is descending key.
inline SelectionResult select_top(const DataPool& pool, const ScoreTable& scores, std::size_t m,
                                  const std::string& key_name) {
    const auto key = detail::score_key_from_string(key_name);
    SelectionResult res;
    res.strategy = "top";
    res.pool_size = pool.size();
    res.config = {{"budget", m}, {"key", key_name}};
    res.fingerprints["pool"] = pool_fingerprint(pool);
    res.fingerprints["scores"] = scores_fingerprint(scores);

    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& id = pool.samples()[i].id;
        if (!scores.contains(id)) throw DataError("unscored id '" + id + "'");
        keyed.emplace_back(detail::sample_key(scores.by_id(id), key), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (const auto& [s, i] : keyed) {
        (void)s;
        if (res.admitted.size() < m)
            res.admitted.push_back(pool.samples()[i].id);
        else
            res.rejected.push_back(
                {pool.samples()[i].id, RejectReason::BudgetExhausted, std::nullopt, std::nullopt});
    }
    res.examined = pool.size();
    return res;
}

/// Score-first, diversity-aware selection: iterate the pool in descending
/// evol score; admit the first sample unconditionally, then admit x iff
/// comparator(nearest_distance(x, S), tau) until the budget is reached.
inline SelectionResult select_deita(const DataPool& pool, const ScoreTable& scores,
                                    const EmbeddingStore& store, const SelectionConfig& config) {
    if (!config.tau) throw DataError("select_deita: tau is required");
    if (config.budget < 1) throw DataError("select_deita: budget must be >= 1");

    // Full coverage is checked before any admission.
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& id = pool.samples()[i].id;
        if (!scores.contains(id)) throw DataError("missing evol score for id '" + id + "'");
        if (!store.contains(id)) throw DataError("missing embedding for id '" + id + "'");
        keyed.emplace_back(detail::sample_key(scores.by_id(id), detail::ScoreKey::Evol), i);
    }
    std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });

    SelectionResult res;
    res.strategy = "deita";
    res.pool_size = pool.size();
    res.config = {{"budget", config.budget},
                  {"tau", *config.tau},
                  {"comparator", to_string(config.comparator)}};
    res.fingerprints["pool"] = pool_fingerprint(pool);
    res.fingerprints["scores"] = scores_fingerprint(scores);
    res.fingerprints["embeddings"] = embeddings_fingerprint(store);

    for (const auto& [s, i] : keyed) {
        (void)s;
        if (res.admitted.size() == config.budget) break;
        const auto& id = pool.samples()[i].id;
        ++res.examined;
        if (res.admitted.empty()) {
            res.admitted.push_back(id); // top-scored sample, unconditional
            continue;
        }
        const NearestResult near = nearest_distance(store.by_id(id), store, res.admitted);
        if (detail::admits(config.comparator, near.distance, *config.tau))
            res.admitted.push_back(id);
        else
            res.rejected.push_back({id, RejectReason::DistanceFilter, near.distance, near.id});
    }
    return res;
}

/// Diversity-control variant: restrict the pool to samples whose evol score
/// lies within score_match_max_dev of the full-pool mean, then run the Repr
/// Filter admission loop over the restricted pool in original pool order.
inline SelectionResult select_repr_filter_controlled(const DataPool& pool,
                                                     const ScoreTable& scores,
                                                     const EmbeddingStore& store,
                                                     const SelectionConfig& config) {
    if (!config.tau) throw DataError("select_repr_filter_controlled: tau is required");
    if (config.score_match_max_dev < 0)
        throw DataError("select_repr_filter_controlled: max deviation must be >= 0");

    std::vector<double> s_values(pool.size());
    std::vector<double> c_values(pool.size()), q_values(pool.size());
    double pool_mean = 0, pool_c_mean = 0, pool_q_mean = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto& id = pool.samples()[i].id;
        if (!scores.contains(id)) throw DataError("missing evol score for id '" + id + "'");
        if (!store.contains(id)) throw DataError("missing embedding for id '" + id + "'");
        const auto& row = scores.by_id(id);
        s_values[i] = detail::sample_key(row, detail::ScoreKey::Evol);
        c_values[i] = detail::sample_key(row, detail::ScoreKey::Complexity);
        q_values[i] = detail::sample_key(row, detail::ScoreKey::Quality);
        pool_mean += s_values[i];
        pool_c_mean += c_values[i];
        pool_q_mean += q_values[i];
    }
    pool_mean /= static_cast<double>(pool.size());
    pool_c_mean /= static_cast<double>(pool.size());
    pool_q_mean /= static_cast<double>(pool.size());

    SelectionResult res;
    res.strategy = "repr-filter-controlled";
    res.pool_size = pool.size();
    res.config = {{"budget", config.budget},
                  {"tau", *config.tau},
                  {"comparator", to_string(config.comparator)},
                  {"score_match_max_dev", config.score_match_max_dev},
                  {"band_on_product_of_means", config.band_on_product_of_means}};
    res.fingerprints["pool"] = pool_fingerprint(pool);
    res.fingerprints["scores"] = scores_fingerprint(scores);
    res.fingerprints["embeddings"] = embeddings_fingerprint(store);

    std::vector<std::size_t> band;
    if (config.band_on_product_of_means) {
        band.resize(pool.size());
        std::iota(band.begin(), band.end(), std::size_t{0});
    } else {
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (std::abs(s_values[i] - pool_mean) <= config.score_match_max_dev)
                band.push_back(i);
            else
                res.rejected.push_back({pool.samples()[i].id, RejectReason::ScoreMatch,
                                        std::nullopt, std::nullopt});
        }
        if (band.empty())
            throw DataError("score-match band [" +
                            std::to_string(pool_mean - config.score_match_max_dev) + ", " +
                            std::to_string(pool_mean + config.score_match_max_dev) +
                            "] excludes every sample");
        res.examined = res.rejected.size(); // band rejections count as examined
    }

    double sel_c_sum = 0, sel_q_sum = 0;
    const double pool_product = pool_c_mean * pool_q_mean;
    for (std::size_t i : band) {
        if (res.admitted.size() == config.budget) break;
        const auto& id = pool.samples()[i].id;
        ++res.examined;
        if (config.band_on_product_of_means) {
            const double k = static_cast<double>(res.admitted.size()) + 1.0;
            const double prod =
                ((sel_c_sum + c_values[i]) / k) * ((sel_q_sum + q_values[i]) / k);
            if (std::abs(prod - pool_product) > config.score_match_max_dev) {
                res.rejected.push_back({id, RejectReason::ScoreMatch, std::nullopt, std::nullopt});
                continue;
            }
        }
        if (res.admitted.empty()) {
            res.admitted.push_back(id);
            sel_c_sum += c_values[i];
            sel_q_sum += q_values[i];
            continue;
        }
        const NearestResult near = nearest_distance(store.by_id(id), store, res.admitted);
        if (detail::admits(config.comparator, near.distance, *config.tau)) {
            res.admitted.push_back(id);
            sel_c_sum += c_values[i];
            sel_q_sum += q_values[i];
        } else {
            res.rejected.push_back({id, RejectReason::DistanceFilter, near.distance, near.id});
        }
    }
    return res;
}

/// Instag-style diversity: pool order, admit iff the sample's tags strictly
/// grow the accumulated tag union.
inline SelectionResult select_instag_diversity(const DataPool& pool, const TagSet& tags,
                                               std::size_t m) {
    SelectionResult res;
    res.strategy = "instag";
    res.pool_size = pool.size();
    res.config = {{"budget", m}};
    res.fingerprints["pool"] = pool_fingerprint(pool);

    for (const auto& s : pool.samples()) {
        auto it = tags.find(s.id);
        if (it == tags.end()) throw DataError("missing tags for id '" + s.id + "'");
        for (const auto& t : it->second)
            if (t.empty()) throw DataError("empty tag for id '" + s.id + "'");
    }

    std::set<std::string> accumulated;
    for (const auto& s : pool.samples()) {
        if (res.admitted.size() == m) break;
        ++res.examined;
        const auto& sample_tags = tags.at(s.id);
        bool grows = false;
        for (const auto& t : sample_tags)
            if (!accumulated.count(t)) {
                grows = true;
                break;
            }
        if (grows) {
            accumulated.insert(sample_tags.begin(), sample_tags.end());
            res.admitted.push_back(s.id);
        } else {
            res.rejected.push_back({s.id, RejectReason::DistanceFilter, std::nullopt, std::nullopt});
        }
    }
    return res;
}

inline json selection_result_to_json(const SelectionResult& res) {
    json rejected = json::array();
    for (const auto& r : res.rejected) {
        json rj = {{"id", r.id}, {"reason", to_string(r.reason)}};
        rj["nearest_distance"] = r.nearest_distance ? json(*r.nearest_distance) : json(nullptr);
        rj["nearest_id"] = r.nearest_id ? json(*r.nearest_id) : json(nullptr);
        rejected.push_back(std::move(rj));
    }
    return {{"strategy", res.strategy},
            {"config", res.config},
            {"fingerprints", res.fingerprints},
            {"pool_size", res.pool_size},
            {"examined", res.examined},
            {"unexamined", res.unexamined()},
            {"admitted", res.admitted},
            {"rejected", std::move(rejected)}};
}

inline void save_selection_result(const SelectionResult& res, const std::string& path) {
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (path != "-") {
        file.open(path, std::ios::trunc);
        if (!file) throw DataError("cannot open result output '" + path + "'");
        out = &file;
    }
    *out << selection_result_to_json(res).dump(2) << '\n';
    if (!*out) throw DataError("write failed for '" + path + "'");
}

inline TagSet load_tags(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tag file '" + path + "'");
    TagSet tags;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("tag file line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("tags") || !rec["tags"].is_array())
            throw DataError("tag file line " + std::to_string(line_no) +
                            ": need id and tags array");
        auto& set = tags[rec["id"].get<std::string>()];
        for (const auto& t : rec["tags"]) set.insert(t.get<std::string>());
    }
    return tags;
}

} // namespace deita
