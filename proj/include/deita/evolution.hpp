#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deita/corpus.hpp"
#include "deita/prompts.hpp"
#include "deita/rng.hpp"

namespace deita {

/// Minimal completion surface used by evolution and scoring. Backed by the
/// gateway in production and by stubs in tests.
struct CompletionClient {
    virtual ~CompletionClient() = default;
    virtual std::string complete_text(const std::string& prompt) = 0;
};

/// One seed plus its M evolved variants. variants[0] is the original text
/// (instruction for complexity, response for quality).
struct VariantChain {
    std::string seed_id;
    EvolveKind kind = EvolveKind::Complexity;
    std::vector<std::string> variants;
    std::vector<EvolveMethod> methods_used;
    std::optional<std::vector<int>> scores;
    bool complete = true;        // false when the gateway failed mid-chain
    std::string diagnostic;      // why scores are absent or the chain is partial
    bool multi_turn_seed = false;
};

struct MethodPolicy {
    enum class Mode { Fixed, RoundRobin, RandomWithSeed };
    Mode mode = Mode::RandomWithSeed;
    std::string fixed_method; // Mode::Fixed only
    std::uint64_t seed = 0;   // Mode::RandomWithSeed only

    static MethodPolicy fixed(std::string name) {
        return MethodPolicy{Mode::Fixed, std::move(name), 0};
    }
    static MethodPolicy round_robin() { return MethodPolicy{Mode::RoundRobin, {}, 0}; }
    static MethodPolicy random_with_seed(std::uint64_t seed) {
        return MethodPolicy{Mode::RandomWithSeed, {}, seed};
    }
};

namespace detail {

class MethodPicker {
public:
    MethodPicker(EvolveKind kind, const MethodPolicy& policy)
        : kind_(kind), policy_(policy), rng_(policy.seed) {
        const auto& names = kind == EvolveKind::Complexity ? complexity_method_names()
                                                           : quality_method_names();
        names_ = &names;
        if (policy.mode == MethodPolicy::Mode::Fixed)
            make_method(kind, policy.fixed_method); // validates
    }

    EvolveMethod next() {
        switch (policy_.mode) {
            case MethodPolicy::Mode::Fixed:
                return make_method(kind_, policy_.fixed_method);
            case MethodPolicy::Mode::RoundRobin:
                return make_method(kind_, (*names_)[counter_++ % names_->size()]);
            case MethodPolicy::Mode::RandomWithSeed:
            default:
                return make_method(
                    kind_, (*names_)[static_cast<std::size_t>(bounded_rand(rng_, names_->size()))]);
        }
    }

private:
    EvolveKind kind_;
    MethodPolicy policy_;
    std::mt19937_64 rng_;
    const std::vector<std::string>* names_ = nullptr;
    std::size_t counter_ = 0;
};

} // namespace detail

/// Evolves turn 0 of `sample` through M dependent rewrites, then issues one
/// rank-and-score request over all M+1 variants. Gateway failure yields a
/// partial chain (complete=false); a scoring parse failure yields a full
/// chain with scores absent and a diagnostic.
inline VariantChain evolve_chain(const Sample& sample, EvolveKind kind, std::size_t m,
                                 CompletionClient& client, const MethodPolicy& policy) {
    if (m < 1) throw DataError("evolve_chain: M must be >= 1");
    if (m > 5)
        throw DataError("evolve_chain: M > 5 would exceed the 6-item rank-and-score limit");
    if (sample.turns.empty()) throw DataError("evolve_chain: sample has no turns");
    const Turn& turn = sample.turns.front();
    if (kind == EvolveKind::Quality && turn.response.empty())
        throw DataError("evolve_chain: quality evolution needs a non-empty response for seed '" +
                        sample.id + "'");

    VariantChain chain;
    chain.seed_id = sample.id;
    chain.kind = kind;
    chain.multi_turn_seed = sample.turns.size() > 1;
    chain.variants.push_back(kind == EvolveKind::Complexity ? turn.instruction : turn.response);

    detail::MethodPicker picker(kind, policy);
    for (std::size_t step = 0; step < m; ++step) {
        const EvolveMethod method = picker.next();
        const std::string& current = chain.variants.back();
        const std::string prompt =
            kind == EvolveKind::Complexity
                ? build_evolve_prompt(method, current)
                : build_evolve_prompt(method, turn.instruction, current);
        std::string rewritten;
        try {
            rewritten = client.complete_text(prompt);
        } catch (const std::exception& e) {
            chain.complete = false;
            chain.diagnostic = "gateway failure at step " + std::to_string(step + 1) + ": " +
                               e.what();
            return chain;
        }
        chain.methods_used.push_back(method);
        chain.variants.push_back(std::move(rewritten));
    }

    const std::string rank_prompt =
        kind == EvolveKind::Complexity
            ? build_rank_score_prompt(kind, chain.variants)
            : build_rank_score_prompt(kind, chain.variants, turn.instruction);
    std::string reply;
    try {
        reply = client.complete_text(rank_prompt);
    } catch (const std::exception& e) {
        chain.diagnostic = std::string("gateway failure on rank-and-score: ") + e.what();
        return chain;
    }
    try {
        chain.scores = parse_rank_score_response(reply, chain.variants.size());
    } catch (const DataError& e) {
        chain.diagnostic = std::string("rank-and-score parse failure: ") + e.what();
    }
    return chain;
}

/// Uniform without-replacement draw of n seed ids, deterministic under seed.
inline std::vector<std::string> build_seed_dataset(const DataPool& pool, std::size_t n,
                                                   std::uint64_t seed) {
    const auto idx = sample_without_replacement(pool.size(), n, seed);
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::size_t i : idx) ids.push_back(pool.samples()[i].id);
    return ids;
}

inline json chain_to_json(const VariantChain& c) {
    json methods = json::array();
    for (const auto& m : c.methods_used) methods.push_back(m.name);
    json j = {{"seed_id", c.seed_id},
              {"kind", to_string(c.kind)},
              {"variants", c.variants},
              {"methods", std::move(methods)},
              {"scores", c.scores ? json(*c.scores) : json(nullptr)}};
    if (!c.complete) j["complete"] = false;
    if (!c.diagnostic.empty()) j["diagnostic"] = c.diagnostic;
    if (c.multi_turn_seed) j["multi_turn_seed"] = true;
    return j;
}

/// Records for external scorer training: one {input_text, score, capped}
/// line per scored variant. Scores of 6 are flagged so consumers may cap or
/// drop them.
inline std::vector<json> seed_score_records(const VariantChain& c,
                                            const std::string& instruction) {
    std::vector<json> out;
    if (!c.scores) return out;
    for (std::size_t i = 0; i < c.variants.size(); ++i) {
        const std::string input = c.kind == EvolveKind::Complexity
                                      ? c.variants[i]
                                      : instruction + "\n" + c.variants[i];
        out.push_back({{"input_text", input},
                       {"score", (*c.scores)[i]},
                       {"capped", (*c.scores)[i] == 6}});
    }
    return out;
}

} // namespace deita
