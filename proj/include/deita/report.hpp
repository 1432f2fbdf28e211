#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deita/corpus.hpp"
#include "deita/scoring.hpp"
#include "deita/selection.hpp"

namespace deita {

/// Per-run accounting written next to a command's outputs.
struct RunReport {
    std::string command;
    std::map<std::string, std::string> fingerprints;
    json counts = json::object();
    json score_summary = json::object();
    double elapsed_ms = 0;
    std::optional<std::size_t> gateway_calls;
    std::optional<std::size_t> gateway_cache_hits;

    void fill_counts(const SelectionResult& res) {
        std::map<std::string, std::size_t> per_reason;
        for (const auto& r : res.rejected) ++per_reason[to_string(r.reason)];
        counts = {{"pool_size", res.pool_size},
                  {"examined", res.examined},
                  {"admitted", res.admitted.size()},
                  {"rejected", res.rejected.size()},
                  {"rejected_per_reason", per_reason},
                  {"unexamined", res.unexamined()}};
        fingerprints = res.fingerprints;
    }

    void fill_score_summary(const SelectionResult& res, const ScoreTable& scores) {
        std::vector<double> admitted_s, pool_s;
        for (const auto& row : scores.rows()) {
            const double s = row.evol ? *row.evol : evol_score(row.turns);
            pool_s.push_back(s);
        }
        for (const auto& id : res.admitted) {
            const auto& row = scores.by_id(id);
            admitted_s.push_back(row.evol ? *row.evol : evol_score(row.turns));
        }
        if (!pool_s.empty()) score_summary["pool"] = summary_to_json(summarize(pool_s));
        if (!admitted_s.empty())
            score_summary["admitted"] = summary_to_json(summarize(admitted_s));
    }

    json to_json() const {
        json j = {{"command", command},
                  {"fingerprints", fingerprints},
                  {"counts", counts},
                  {"score_summary", score_summary},
                  {"elapsed_ms", elapsed_ms}};
        if (gateway_calls) j["gateway_calls"] = *gateway_calls;
        if (gateway_cache_hits) j["gateway_cache_hits"] = *gateway_cache_hits;
        return j;
    }
};

inline void write_report(const RunReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot open report output '" + path + "'");
    out << report.to_json().dump(2) << '\n';
    if (!out) throw DataError("write failed for '" + path + "'");
}

} // namespace deita
