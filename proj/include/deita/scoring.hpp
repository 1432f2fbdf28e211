#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "deita/corpus.hpp"
#include "deita/hash.hpp"
#include "deita/prompts.hpp"

namespace deita {

enum class MetricKind {
    Complexity,
    Quality,
    InstructionLength,
    ResponseLength,
    Perplexity,
    Ifd,
    InstagTagCount,
    DirectScore,
};

inline std::string to_string(MetricKind k) {
    switch (k) {
        case MetricKind::Complexity: return "complexity";
        case MetricKind::Quality: return "quality";
        case MetricKind::InstructionLength: return "instruction_length";
        case MetricKind::ResponseLength: return "response_length";
        case MetricKind::Perplexity: return "perplexity";
        case MetricKind::Ifd: return "ifd";
        case MetricKind::InstagTagCount: return "instag_tag_count";
        case MetricKind::DirectScore: return "direct_score";
    }
    throw Error("unreachable");
}

inline MetricKind metric_kind_from_string(const std::string& s) {
    for (MetricKind k : {MetricKind::Complexity, MetricKind::Quality,
                         MetricKind::InstructionLength, MetricKind::ResponseLength,
                         MetricKind::Perplexity, MetricKind::Ifd, MetricKind::InstagTagCount,
                         MetricKind::DirectScore})
        if (to_string(k) == s) return k;
    throw DataError("unknown metric kind '" + s + "'");
}

/// External-only kinds require a model forward pass or annotation call and
/// can only be attached from files, never computed here.
inline bool is_external_only(MetricKind k) {
    return k == MetricKind::Perplexity || k == MetricKind::Ifd ||
           k == MetricKind::InstagTagCount || k == MetricKind::DirectScore;
}

// Complexity-like metrics land in the complexity slot, quality-like in the
// quality slot; the other slot stays absent unless a heuristic fills it.
inline bool is_quality_like(MetricKind k) {
    return k == MetricKind::Quality || k == MetricKind::ResponseLength;
}

struct TurnScore {
    std::optional<double> complexity;
    std::optional<double> quality;
};

struct SampleScore {
    std::string id;
    std::vector<TurnScore> turns;
    std::optional<double> evol;
};

/// Per-turn complexity x quality, summed over the conversation.
inline double evol_score(const std::vector<TurnScore>& turns) {
    if (turns.empty()) throw DataError("evol_score: empty turn-score list");
    double sum = 0;
    for (const auto& t : turns) {
        if (!t.complexity) throw DataError("evol_score: missing complexity score");
        if (!t.quality) throw DataError("evol_score: missing quality score");
        if (!std::isfinite(*t.complexity) || !std::isfinite(*t.quality))
            throw DataError("evol_score: non-finite turn score");
        if (*t.complexity < 0 || *t.quality < 0)
            throw DataError("evol_score: negative turn score");
        sum += *t.complexity * *t.quality;
    }
    return sum;
}

/// Id-keyed score container preserving insertion order for exports.
class ScoreTable {
public:
    struct Metadata {
        std::string provider;
        std::string unit;
        std::vector<std::string> kinds;
    };

    SampleScore& upsert(const std::string& id) {
        auto it = index_.find(id);
        if (it != index_.end()) return rows_[it->second];
        index_.emplace(id, rows_.size());
        rows_.push_back(SampleScore{id, {}, std::nullopt});
        return rows_.back();
    }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const SampleScore& by_id(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw DataError("no scores for id '" + id + "'");
        return rows_[it->second];
    }

    const std::vector<SampleScore>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }

    /// Computes the combined evol score for every row; errors if either the
    /// complexity or quality side is missing anywhere.
    void finalize_evol() {
        for (auto& r : rows_) r.evol = evol_score(r.turns);
    }

    Metadata metadata;

private:
    std::vector<SampleScore> rows_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline std::size_t turn_field_length(const Turn& t, MetricKind metric, bool words) {
    const std::string& s =
        metric == MetricKind::InstructionLength ? t.instruction : t.response;
    return words ? detail::word_count(s) : s.size();
}

enum class LengthUnit { Chars, Words };

inline LengthUnit length_unit_from_string(const std::string& s) {
    if (s == "chars") return LengthUnit::Chars;
    if (s == "words") return LengthUnit::Words;
    throw DataError("unknown length unit '" + s + "' (use chars|words)");
}

/// Local length baselines. The measured side gets the length, the other
/// slot is set to 1 so the evol product degenerates to the length itself.
inline ScoreTable heuristic_score(const DataPool& pool, MetricKind metric, LengthUnit unit) {
    if (pool.empty()) throw DataError("heuristic_score: empty pool");
    if (metric != MetricKind::InstructionLength && metric != MetricKind::ResponseLength)
        throw DataError("heuristic_score supports instruction_length|response_length only");
    ScoreTable table;
    table.metadata.provider = "heuristic";
    table.metadata.unit = unit == LengthUnit::Words ? "words" : "chars";
    table.metadata.kinds = {to_string(metric)};
    const bool words = unit == LengthUnit::Words;
    for (const auto& s : pool.samples()) {
        SampleScore& row = table.upsert(s.id);
        for (const auto& t : s.turns) {
            const double len = static_cast<double>(turn_field_length(t, metric, words));
            TurnScore ts;
            if (is_quality_like(metric)) {
                ts.quality = len;
                ts.complexity = 1.0;
            } else {
                ts.complexity = len;
                ts.quality = 1.0;
            }
            row.turns.push_back(ts);
        }
    }
    table.finalize_evol();
    return table;
}

struct AttachStats {
    std::size_t attached = 0;
    std::size_t skipped = 0; // permissive mode only
};

/// Joins an external score file onto the pool by id. Per-turn vectors must
/// match turn counts; scalar records broadcast to a single pseudo-turn.
inline ScoreTable attach_external_scores(const DataPool& pool, const std::string& path,
                                         MetricKind kind, LoadMode mode = LoadMode::Strict,
                                         AttachStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file '" + path + "'");
    ScoreTable table;
    table.metadata.provider = "external:" + path;
    table.metadata.kinds = {to_string(kind)};
    const bool quality_side = is_quality_like(kind);
    std::string line;
    std::size_t line_no = 0;
    AttachStats local;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("score file line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
            !rec.contains("scores"))
            throw DataError("score file line " + std::to_string(line_no) +
                            ": need fields id (string) and scores");
        const std::string id = rec["id"].get<std::string>();
        if (!pool.contains(id)) {
            if (mode == LoadMode::Strict)
                throw DataError("score file line " + std::to_string(line_no) + ": id '" + id +
                                "' not in pool");
            ++local.skipped;
            continue;
        }
        std::vector<double> values;
        if (rec["scores"].is_number()) {
            values.push_back(rec["scores"].get<double>());
        } else if (rec["scores"].is_array()) {
            for (const auto& v : rec["scores"]) {
                if (!v.is_number())
                    throw DataError("score file line " + std::to_string(line_no) +
                                    ": non-numeric score");
                values.push_back(v.get<double>());
            }
        } else {
            throw DataError("score file line " + std::to_string(line_no) +
                            ": scores must be a number or array");
        }
        for (double v : values)
            if (!std::isfinite(v))
                throw DataError("score file line " + std::to_string(line_no) +
                                ": non-finite score");
        const std::size_t turn_count = pool.by_id(id).turns.size();
        if (values.size() != 1 && values.size() != turn_count) {
            if (mode == LoadMode::Strict)
                throw DataError("score file line " + std::to_string(line_no) + ": " +
                                std::to_string(values.size()) + " scores for a " +
                                std::to_string(turn_count) + "-turn sample");
            ++local.skipped;
            continue;
        }
        SampleScore& row = table.upsert(id);
        if (row.turns.size() < values.size()) row.turns.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (quality_side)
                row.turns[i].quality = values[i];
            else
                row.turns[i].complexity = values[i];
        }
        ++local.attached;
    }
    if (stats) *stats = local;
    return table;
}

/// Scorer provider contract: one finite number per (instruction, response,
/// kind). Implementations may go through the gateway or be in-process stubs.
struct ScorerProvider {
    virtual ~ScorerProvider() = default;
    virtual double score(const std::string& instruction, const std::string& response,
                         MetricKind kind) = 0;
};

struct ScorePoolResult {
    ScoreTable table;
    std::map<std::string, std::string> failures; // id -> first failure message
};

/// One provider call per (sample, turn), concurrent up to `parallelism`.
/// Failed samples are recorded and dropped; total failure throws.
inline ScorePoolResult score_pool(const DataPool& pool, ScorerProvider& provider,
                                  MetricKind kind, std::size_t parallelism = 1) {
    if (pool.empty()) throw DataError("score_pool: empty pool");
    if (kind != MetricKind::Complexity && kind != MetricKind::Quality)
        throw DataError("score_pool computes complexity|quality only");
    if (parallelism < 1) throw DataError("score_pool: parallelism must be >= 1");

    const auto& samples = pool.samples();
    std::vector<std::optional<std::vector<double>>> results(samples.size());
    std::vector<std::string> errors(samples.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= samples.size()) return;
            std::vector<double> vals;
            try {
                for (const auto& t : samples[i].turns) {
                    const double v = provider.score(t.instruction, t.response, kind);
                    if (!std::isfinite(v))
                        throw GatewayError("provider returned non-finite score");
                    vals.push_back(v);
                }
                results[i] = std::move(vals);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    std::vector<std::thread> threads;
    const std::size_t n_threads = std::min(parallelism, samples.size());
    for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    ScorePoolResult out;
    out.table.metadata.provider = "provider";
    out.table.metadata.kinds = {to_string(kind)};
    const bool quality_side = is_quality_like(kind);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!results[i]) {
            out.failures.emplace(samples[i].id, errors[i]);
            continue;
        }
        SampleScore& row = out.table.upsert(samples[i].id);
        for (double v : *results[i]) {
            TurnScore ts;
            if (quality_side)
                ts.quality = v;
            else
                ts.complexity = v;
            row.turns.push_back(ts);
        }
    }
    if (out.table.size() == 0) {
        std::string msg = "score_pool: every provider call failed;";
        for (const auto& [id, err] : out.failures) msg += " " + id + ": " + err + ";";
        throw GatewayError(msg);
    }
    return out;
}

// --- score file persistence -------------------------------------------------
// Line format: {"id": ..., "kind": ..., "scores": [per-turn]}. A table with
// both sides populated emits one complexity line and one quality line per id.

inline void save_scores(const ScoreTable& table, const std::string& path) {
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (path != "-") {
        file.open(path, std::ios::trunc);
        if (!file) throw DataError("cannot open score output '" + path + "'");
        out = &file;
    }
    for (const auto& row : table.rows()) {
        std::vector<double> c, q;
        bool has_c = true, has_q = true;
        for (const auto& t : row.turns) {
            if (t.complexity) c.push_back(*t.complexity); else has_c = false;
            if (t.quality) q.push_back(*t.quality); else has_q = false;
        }
        if (has_c && !c.empty())
            *out << json{{"id", row.id}, {"kind", "complexity"}, {"scores", c}}.dump() << '\n';
        if (has_q && !q.empty())
            *out << json{{"id", row.id}, {"kind", "quality"}, {"scores", q}}.dump() << '\n';
    }
    if (!*out) throw DataError("write failed for '" + path + "'");
}

/// Loads a score file, merging lines of different kinds by id. Complexity-like
/// kinds fill the complexity slot, quality-like the quality slot.
inline ScoreTable load_scores(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file '" + path + "'");
    ScoreTable table;
    table.metadata.provider = "file:" + path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("score file line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.contains("id") || !rec.contains("kind") || !rec.contains("scores"))
            throw DataError("score file line " + std::to_string(line_no) +
                            ": need id, kind, scores");
        const MetricKind kind = metric_kind_from_string(rec["kind"].get<std::string>());
        std::vector<double> values;
        if (rec["scores"].is_number())
            values.push_back(rec["scores"].get<double>());
        else
            values = rec["scores"].get<std::vector<double>>();
        SampleScore& row = table.upsert(rec["id"].get<std::string>());
        if (row.turns.size() < values.size()) row.turns.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (is_quality_like(kind))
                row.turns[i].quality = values[i];
            else
                row.turns[i].complexity = values[i];
        }
    }
    return table;
}

inline std::string scores_fingerprint(const ScoreTable& table) {
    std::string buf;
    for (const auto& row : table.rows()) {
        buf += row.id;
        for (const auto& t : row.turns) {
            buf += '|';
            buf += t.complexity ? json(*t.complexity).dump() : "_";
            buf += ',';
            buf += t.quality ? json(*t.quality).dump() : "_";
        }
        buf += '\n';
    }
    return sha256_hex(buf);
}

} // namespace deita
