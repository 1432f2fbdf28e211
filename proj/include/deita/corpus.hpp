#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "deita/errors.hpp"
#include "deita/hash.hpp"

namespace deita {

using json = nlohmann::json;

/// One instruction/response exchange.
struct Turn {
    std::string instruction;
    std::string response;
};

/// One multi-turn conversation with stable identity and source tag.
struct Sample {
    std::string id;
    std::string source;
    std::vector<Turn> turns;
};

enum class LoadMode { Strict, Permissive };

namespace detail {

inline bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c) != 0; });
}

inline std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            in_word = false;
        } else if (!in_word) {
            in_word = true;
            ++n;
        }
    }
    return n;
}

} // namespace detail

/// Ordered, id-unique collection of samples. Immutable once loaded.
class DataPool {
public:
    DataPool() = default;

    void add(Sample s) {
        if (index_.count(s.id))
            throw DataError("duplicate sample id '" + s.id + "'");
        index_.emplace(s.id, samples_.size());
        samples_.push_back(std::move(s));
    }

    const std::vector<Sample>& samples() const { return samples_; }
    std::size_t size() const { return samples_.size(); }
    bool empty() const { return samples_.empty(); }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }

    const Sample& by_id(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw DataError("unknown sample id '" + id + "'");
        return samples_[it->second];
    }

    std::size_t index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw DataError("unknown sample id '" + id + "'");
        return it->second;
    }

    std::map<std::string, std::size_t> provenance() const {
        std::map<std::string, std::size_t> p;
        for (const auto& s : samples_) ++p[s.source];
        return p;
    }

private:
    std::vector<Sample> samples_;
    std::unordered_map<std::string, std::size_t> index_;
};

inline json sample_to_json(const Sample& s) {
    json turns = json::array();
    for (const auto& t : s.turns)
        turns.push_back({{"instruction", t.instruction}, {"response", t.response}});
    return {{"id", s.id}, {"source", s.source}, {"turns", std::move(turns)}};
}

inline std::string sample_to_line(const Sample& s) { return sample_to_json(s).dump(); }

/// Parses one pool record. `line_no` is 1-based and used for diagnostics and
/// for the permissive-mode fallback id "line-<n>".
inline Sample parse_sample_record(const std::string& line, std::size_t line_no, LoadMode mode) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::exception& e) {
        throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    if (!rec.is_object())
        throw DataError("line " + std::to_string(line_no) + ": record is not an object");

    const auto fail = [&](const std::string& why) -> DataError {
        return DataError("line " + std::to_string(line_no) + ": " + why);
    };

    if (mode == LoadMode::Strict) {
        for (auto it = rec.begin(); it != rec.end(); ++it) {
            const std::string& k = it.key();
            if (k != "id" && k != "source" && k != "turns")
                throw fail("unknown field '" + k + "'");
        }
    }

    Sample s;
    if (rec.contains("id")) {
        if (!rec["id"].is_string()) throw fail("field 'id' must be a string");
        s.id = rec["id"].get<std::string>();
    } else if (mode == LoadMode::Strict) {
        throw fail("missing field 'id'");
    } else {
        s.id = "line-" + std::to_string(line_no);
    }
    if (rec.contains("source")) {
        if (!rec["source"].is_string()) throw fail("field 'source' must be a string");
        s.source = rec["source"].get<std::string>();
    } else if (mode == LoadMode::Strict) {
        throw fail("missing field 'source'");
    }

    if (!rec.contains("turns") || !rec["turns"].is_array() || rec["turns"].empty())
        throw fail("field 'turns' must be a non-empty array");
    for (const auto& tj : rec["turns"]) {
        if (!tj.is_object() || !tj.contains("instruction") || !tj.contains("response") ||
            !tj["instruction"].is_string() || !tj["response"].is_string())
            throw fail("each turn needs string fields 'instruction' and 'response'");
        Turn t{tj["instruction"].get<std::string>(), tj["response"].get<std::string>()};
        if (detail::is_blank(t.instruction))
            throw fail("turn instruction is empty");
        if (t.response.empty() && mode == LoadMode::Strict)
            throw fail("turn response is empty (permissive mode allows this)");
        s.turns.push_back(std::move(t));
    }
    return s;
}

inline DataPool load_pool_stream(std::istream& in, LoadMode mode) {
    DataPool pool;
    std::unordered_map<std::string, std::size_t> first_line;
    std::string line;
    std::size_t line_no = 0;
    std::size_t records = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        Sample s = parse_sample_record(line, line_no, mode);
        auto it = first_line.find(s.id);
        if (it != first_line.end()) {
            if (mode == LoadMode::Strict)
                throw DataError("duplicate id '" + s.id + "' on lines " +
                                std::to_string(it->second) + " and " + std::to_string(line_no));
            continue; // permissive: keep first occurrence
        }
        first_line.emplace(s.id, line_no);
        pool.add(std::move(s));
        ++records;
    }
    if (records == 0) throw DataError("pool file contains no records");
    return pool;
}

inline DataPool load_pool(const std::string& path, LoadMode mode = LoadMode::Strict) {
    if (path == "-") return load_pool_stream(std::cin, mode);
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pool file '" + path + "'");
    return load_pool_stream(in, mode);
}

/// Writes records in `ids` order (pool order when absent). Returns count.
inline std::size_t write_pool(const DataPool& pool,
                              const std::optional<std::vector<std::string>>& ids,
                              const std::string& path) {
    std::ofstream file;
    std::ostream* out = &std::cout;
    if (path != "-") {
        file.open(path, std::ios::trunc);
        if (!file) throw DataError("cannot open output file '" + path + "'");
        out = &file;
    }
    std::size_t n = 0;
    if (ids) {
        for (const auto& id : *ids) {
            *out << sample_to_line(pool.by_id(id)) << '\n';
            ++n;
        }
    } else {
        for (const auto& s : pool.samples()) {
            *out << sample_to_line(s) << '\n';
            ++n;
        }
    }
    if (!*out) throw DataError("write failed for '" + path + "'");
    return n;
}

/// Five-number-ish summary of a length distribution. Quartiles use linear
/// interpolation between closest ranks.
struct LengthSummary {
    double min = 0, max = 0, mean = 0, q1 = 0, median = 0, q3 = 0;
};

inline LengthSummary summarize(std::vector<double> values) {
    if (values.empty()) throw DataError("summarize: empty value list");
    std::sort(values.begin(), values.end());
    const auto quantile = [&](double p) {
        const double pos = p * static_cast<double>(values.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
        const double frac = pos - static_cast<double>(lo);
        return values[lo] + frac * (values[hi] - values[lo]);
    };
    LengthSummary s;
    s.min = values.front();
    s.max = values.back();
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    return s;
}

struct PoolStats {
    std::size_t sample_count = 0;
    std::size_t turn_count = 0;
    std::map<std::string, std::size_t> per_source;
    LengthSummary instruction_chars, instruction_words;
    LengthSummary response_chars, response_words;
};

inline PoolStats pool_stats(const DataPool& pool) {
    if (pool.empty()) throw DataError("pool_stats: empty pool");
    PoolStats st;
    st.sample_count = pool.size();
    st.per_source = pool.provenance();
    std::vector<double> ic, iw, rc, rw;
    for (const auto& s : pool.samples()) {
        for (const auto& t : s.turns) {
            ++st.turn_count;
            ic.push_back(static_cast<double>(t.instruction.size()));
            iw.push_back(static_cast<double>(detail::word_count(t.instruction)));
            rc.push_back(static_cast<double>(t.response.size()));
            rw.push_back(static_cast<double>(detail::word_count(t.response)));
        }
    }
    st.instruction_chars = summarize(ic);
    st.instruction_words = summarize(iw);
    st.response_chars = summarize(rc);
    st.response_words = summarize(rw);
    return st;
}

inline json summary_to_json(const LengthSummary& s) {
    return {{"min", s.min}, {"max", s.max},       {"mean", s.mean},
            {"q1", s.q1},   {"median", s.median}, {"q3", s.q3}};
}

inline json pool_stats_to_json(const PoolStats& st) {
    return {{"sample_count", st.sample_count},
            {"turn_count", st.turn_count},
            {"per_source", st.per_source},
            {"instruction_chars", summary_to_json(st.instruction_chars)},
            {"instruction_words", summary_to_json(st.instruction_words)},
            {"response_chars", summary_to_json(st.response_chars)},
            {"response_words", summary_to_json(st.response_words)}};
}

/// Content hash over the canonical record serialization, in pool order.
inline std::string pool_fingerprint(const DataPool& pool) {
    std::string buf;
    for (const auto& s : pool.samples()) {
        buf += sample_to_line(s);
        buf += '\n';
    }
    return sha256_hex(buf);
}

} // namespace deita
