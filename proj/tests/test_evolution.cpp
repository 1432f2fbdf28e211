#include <doctest.h>

#include <algorithm>
#include <set>

#include "deita/evolution.hpp"

using namespace deita;

namespace {

Sample make_sample(std::string id, std::string instruction, std::string response) {
    Sample s;
    s.id = std::move(id);
    s.turns.push_back(Turn{std::move(instruction), std::move(response)});
    return s;
}

// Extracts the text under '#Given Prompt#:' (complexity) or the response slot
// (quality) and echoes it with '!' appended, so chains are fully predictable.
struct AppendBangClient : CompletionClient {
    std::string complete_text(const std::string& prompt) override {
        prompts_seen.push_back(prompt);
        const bool quality_rank = prompt.find("#Response List#:") != std::string::npos;
        if (quality_rank || prompt.rfind("Ranking the following questions", 0) == 0) {
            // rank-and-score request: count items, emit ascending scores.
            std::size_t n = 0;
            while (prompt.find("[" + std::to_string(n + 1) + "]") != std::string::npos ||
                   prompt.find("[Response " + std::to_string(n + 1) + "]") !=
                       std::string::npos)
                ++n;
            std::string out;
            for (std::size_t i = 1; i <= n; ++i)
                out += "[" + std::to_string(i) + "] Score: " +
                       std::to_string(std::min<std::size_t>(i, 6)) + "\n";
            return out;
        }
        // Quality prompts contain both markers; the response slot wins.
        const std::string ropen = "#Given Response#:\n";
        auto a = prompt.find(ropen);
        std::string tail;
        if (a != std::string::npos) {
            a += ropen.size();
            tail = prompt.substr(a, prompt.find("\n#Rewritten Response#:", a) - a);
        } else {
            const std::string open = "#Given Prompt#:\n";
            a = prompt.find(open);
            REQUIRE(a != std::string::npos);
            a += open.size();
            tail = prompt.substr(a, prompt.find("\n#Rewritten Prompt#:", a) - a);
        }
        return tail + "!";
    }
    std::vector<std::string> prompts_seen;
};

struct ThrowAtCallClient : CompletionClient {
    explicit ThrowAtCallClient(int fail_at) : fail_at(fail_at) {}
    std::string complete_text(const std::string& prompt) override {
        if (++calls == fail_at) throw GatewayError("injected outage");
        AppendBangClient inner;
        return inner.complete_text(prompt);
    }
    int fail_at;
    int calls = 0;
};

struct GarbageScorerClient : AppendBangClient {
    std::string complete_text(const std::string& prompt) override {
        if (prompt.rfind("Ranking the following questions", 0) == 0)
            return "I would rather not rank these.";
        return AppendBangClient::complete_text(prompt);
    }
};

} // namespace

TEST_CASE("M=1 complexity chain has two variants, one method, two scores") {
    AppendBangClient client;
    const auto chain = evolve_chain(make_sample("s1", "Sort a list.", "Use std::sort."),
                                    EvolveKind::Complexity, 1, client,
                                    MethodPolicy::fixed("deepening"));
    CHECK(chain.complete);
    REQUIRE(chain.variants.size() == 2);
    CHECK(chain.variants[0] == "Sort a list.");
    CHECK(chain.variants[1] == "Sort a list.!");
    REQUIRE(chain.methods_used.size() == 1);
    CHECK(chain.methods_used[0].name == "deepening");
    REQUIRE(chain.scores.has_value());
    CHECK(*chain.scores == std::vector<int>{1, 2});
    // M evolve calls plus exactly one rank-and-score call.
    CHECK(client.prompts_seen.size() == 2);
}

TEST_CASE("quality chains evolve the response against a fixed instruction") {
    AppendBangClient client;
    const auto chain = evolve_chain(make_sample("s2", "Explain DNS.", "DNS maps names."),
                                    EvolveKind::Quality, 2, client,
                                    MethodPolicy::round_robin());
    CHECK(chain.complete);
    REQUIRE(chain.variants.size() == 3);
    CHECK(chain.variants[0] == "DNS maps names.");
    CHECK(chain.variants[2] == "DNS maps names.!!");
    CHECK(chain.methods_used[0].name == quality_method_names()[0]);
    CHECK(chain.methods_used[1].name == quality_method_names()[1]);
    // Every evolve prompt must carry the original instruction, never a rewrite.
    for (std::size_t i = 0; i < 2; ++i)
        CHECK(client.prompts_seen[i].find("Explain DNS.") != std::string::npos);
    REQUIRE(chain.scores.has_value());
    CHECK(chain.scores->size() == chain.variants.size());
}

TEST_CASE("random method policy is reproducible under a fixed seed") {
    auto run = [] {
        AppendBangClient client;
        return evolve_chain(make_sample("s3", "Name a prime.", "Seven."),
                            EvolveKind::Complexity, 5, client,
                            MethodPolicy::random_with_seed(99));
    };
    const auto a = run();
    const auto b = run();
    REQUIRE(a.methods_used.size() == 5);
    std::vector<std::string> names_a, names_b;
    for (const auto& m : a.methods_used) names_a.push_back(m.name);
    for (const auto& m : b.methods_used) names_b.push_back(m.name);
    CHECK(names_a == names_b);
    CHECK(a.variants == b.variants);

    AppendBangClient client;
    const auto c = evolve_chain(make_sample("s3", "Name a prime.", "Seven."),
                                EvolveKind::Complexity, 5, client,
                                MethodPolicy::random_with_seed(100));
    // Different seeds are allowed to coincide, but across 5 draws from 4
    // methods seed 99 vs 100 diverging is the expected outcome; assert only
    // that the policy draws valid names.
    for (const auto& m : c.methods_used) CHECK_NOTHROW(make_method(c.kind, m.name));
}

TEST_CASE("mid-chain gateway failure yields a partial, honest chain") {
    ThrowAtCallClient client(2); // first rewrite succeeds, second throws
    const auto chain = evolve_chain(make_sample("s4", "Count to ten.", "1..10"),
                                    EvolveKind::Complexity, 3, client,
                                    MethodPolicy::fixed("add_constraints"));
    CHECK_FALSE(chain.complete);
    CHECK(chain.variants.size() == 2); // seed + first successful rewrite
    CHECK_FALSE(chain.scores.has_value());
    CHECK(chain.diagnostic.find("step 2") != std::string::npos);
}

TEST_CASE("rank-and-score parse failure keeps the chain but drops scores") {
    GarbageScorerClient client;
    const auto chain = evolve_chain(make_sample("s5", "Define entropy.", "A measure."),
                                    EvolveKind::Complexity, 2, client,
                                    MethodPolicy::fixed("concretizing"));
    CHECK(chain.complete);
    CHECK(chain.variants.size() == 3);
    CHECK_FALSE(chain.scores.has_value());
    CHECK(chain.diagnostic.find("parse failure") != std::string::npos);
}

TEST_CASE("argument validation") {
    AppendBangClient client;
    const auto s = make_sample("s6", "Hi.", "Hello.");
    CHECK_THROWS_AS(evolve_chain(s, EvolveKind::Complexity, 0, client,
                                 MethodPolicy::round_robin()),
                    DataError);
    CHECK_THROWS_AS(evolve_chain(s, EvolveKind::Complexity, 6, client,
                                 MethodPolicy::round_robin()),
                    DataError);
    Sample no_resp = make_sample("s7", "Hi.", "");
    CHECK_THROWS_AS(evolve_chain(no_resp, EvolveKind::Quality, 1, client,
                                 MethodPolicy::round_robin()),
                    DataError);
}

TEST_CASE("seed dataset draws are deterministic, distinct, and within range") {
    DataPool pool;
    for (int i = 0; i < 50; ++i)
        pool.add(make_sample("id-" + std::to_string(i), "q" + std::to_string(i), "a"));
    const auto a = build_seed_dataset(pool, 10, 7);
    const auto b = build_seed_dataset(pool, 10, 7);
    CHECK(a == b);
    CHECK(a.size() == 10);
    std::set<std::string> uniq(a.begin(), a.end());
    CHECK(uniq.size() == 10);
    for (const auto& id : a) CHECK(pool.contains(id));
    const auto c = build_seed_dataset(pool, 10, 8);
    CHECK(c != a); // 50 choose 10 collision under a different seed is ~impossible
    CHECK_THROWS_AS(build_seed_dataset(pool, 51, 1), DataError);
}

TEST_CASE("seed score records flag capped sixes and pair quality text") {
    AppendBangClient client;
    auto chain = evolve_chain(make_sample("s8", "Ask me.", "Told you."), EvolveKind::Quality,
                              5, client, MethodPolicy::round_robin());
    REQUIRE(chain.scores.has_value());
    const auto recs = seed_score_records(chain, "Ask me.");
    REQUIRE(recs.size() == 6);
    CHECK(recs[5]["capped"].get<bool>());
    CHECK_FALSE(recs[0]["capped"].get<bool>());
    CHECK(recs[0]["input_text"].get<std::string>() == "Ask me.\nTold you.");

    VariantChain unscored;
    unscored.variants = {"x"};
    CHECK(seed_score_records(unscored, "q").empty());
}

TEST_CASE("chain serialization carries variants, methods and scores") {
    AppendBangClient client;
    const auto chain = evolve_chain(make_sample("s9", "Q.", "A."), EvolveKind::Complexity, 2,
                                    client, MethodPolicy::fixed("increase_reasoning"));
    const json j = chain_to_json(chain);
    CHECK(j["seed_id"] == "s9");
    CHECK(j["kind"] == "complexity");
    CHECK(j["variants"].size() == 3);
    CHECK(j["methods"] == json::array({"increase_reasoning", "increase_reasoning"}));
    CHECK(j["scores"].size() == 3);
}
