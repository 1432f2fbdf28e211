#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "deita/corpus.hpp"

using namespace deita;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    static const auto dir = [] {
        auto d = std::filesystem::temp_directory_path() / "deita-corpus-tests";
        std::filesystem::create_directories(d);
        return d;
    }();
    return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::trunc | std::ios::binary);
    out << content;
}

DataPool pool_from_lines(const std::string& lines, LoadMode mode = LoadMode::Strict) {
    std::istringstream in(lines);
    return load_pool_stream(in, mode);
}

// Generator for round-trip property tests: printable strings with spaces,
// newlines, quotes, and non-ASCII bytes.
std::string random_text(std::mt19937_64& rng, std::size_t max_len) {
    // Tokens, not bytes, so multi-byte UTF-8 characters stay intact.
    static const std::vector<std::string> alphabet = {
        "a", "b",  "c",  "X",  "Y", "Z", "0", "7", " ", " ", "\"", "\\",
        "\n", "\t", "{", "}", "[", "]", "#", ":", ",", "é", "ß",  "日"};
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
    std::string s;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[pick(rng)];
    if (detail::is_blank(s)) s = "x" + s;
    return s;
}

DataPool random_pool(std::mt19937_64& rng, std::size_t n) {
    DataPool pool;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.source = (i % 3 == 0) ? "alpaca" : (i % 3 == 1 ? "dolly" : "flan");
        std::uniform_int_distribution<std::size_t> turns(1, 3);
        const std::size_t t = turns(rng);
        for (std::size_t j = 0; j < t; ++j)
            s.turns.push_back({random_text(rng, 40), random_text(rng, 60)});
        pool.add(std::move(s));
    }
    return pool;
}

} // namespace

TEST_CASE("load_pool parses a single record") {
    const auto pool = pool_from_lines(
        R"({"id":"a","source":"alpaca","turns":[{"instruction":"Hi","response":"Hello"}]})"
        "\n");
    CHECK(pool.size() == 1);
    CHECK(pool.by_id("a").turns.size() == 1);
    CHECK(pool.by_id("a").turns[0].instruction == "Hi");
    CHECK(pool.by_id("a").source == "alpaca");
}

TEST_CASE("duplicate id in strict mode names both lines") {
    const std::string rec =
        R"({"id":"a","source":"x","turns":[{"instruction":"q","response":"r"}]})";
    try {
        pool_from_lines(rec + "\n" + rec + "\n");
        FAIL("expected duplicate-id error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("lines 1 and 2") != std::string::npos);
    }
}

TEST_CASE("duplicate id in permissive mode keeps the first record") {
    const std::string a =
        R"({"id":"a","source":"x","turns":[{"instruction":"first","response":"r"}]})";
    const std::string b =
        R"({"id":"a","source":"x","turns":[{"instruction":"second","response":"r"}]})";
    const auto pool = pool_from_lines(a + "\n" + b + "\n", LoadMode::Permissive);
    CHECK(pool.size() == 1);
    CHECK(pool.by_id("a").turns[0].instruction == "first");
}

TEST_CASE("empty file is an error") {
    CHECK_THROWS_AS(pool_from_lines(""), DataError);
}

TEST_CASE("malformed record error names the line") {
    try {
        pool_from_lines(
            R"({"id":"a","source":"x","turns":[{"instruction":"q","response":"r"}]})"
            "\nnot json\n");
        FAIL("expected parse error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("strict mode rejects unknown fields, permissive ignores them") {
    const std::string rec =
        R"({"id":"a","source":"x","extra":1,"turns":[{"instruction":"q","response":"r"}]})";
    CHECK_THROWS_AS(pool_from_lines(rec + "\n"), DataError);
    CHECK(pool_from_lines(rec + "\n", LoadMode::Permissive).size() == 1);
}

TEST_CASE("permissive mode assigns line-<n> ids, strict errors") {
    const std::string rec =
        R"({"source":"x","turns":[{"instruction":"q","response":"r"}]})";
    CHECK_THROWS_AS(pool_from_lines(rec + "\n"), DataError);
    const auto pool = pool_from_lines(rec + "\n", LoadMode::Permissive);
    CHECK(pool.contains("line-1"));
}

TEST_CASE("empty response allowed only in permissive mode") {
    const std::string rec =
        R"({"id":"a","source":"x","turns":[{"instruction":"q","response":""}]})";
    CHECK_THROWS_AS(pool_from_lines(rec + "\n"), DataError);
    CHECK(pool_from_lines(rec + "\n", LoadMode::Permissive).size() == 1);
}

TEST_CASE("blank instruction rejected in both modes") {
    const std::string rec =
        R"({"id":"a","source":"x","turns":[{"instruction":"  ","response":"r"}]})";
    CHECK_THROWS_AS(pool_from_lines(rec + "\n"), DataError);
    CHECK_THROWS_AS(pool_from_lines(rec + "\n", LoadMode::Permissive), DataError);
}

TEST_CASE("provenance matches per-source counts") {
    std::string lines;
    const auto add = [&](const std::string& source, int count) {
        for (int i = 0; i < count; ++i)
            lines += R"({"id":")" + source + std::to_string(i) + R"(","source":")" + source +
                     R"(","turns":[{"instruction":"q","response":"r"}]})" + "\n";
    };
    add("alpaca", 52);
    add("dolly", 15);
    add("oassit", 10);
    add("flan", 23);
    const auto pool = pool_from_lines(lines);
    const auto prov = pool.provenance();
    CHECK(pool.size() == 100);
    CHECK(prov.at("alpaca") == 52);
    CHECK(prov.at("dolly") == 15);
    CHECK(prov.at("oassit") == 10);
    CHECK(prov.at("flan") == 23);
}

TEST_CASE("write_pool round-trips content and order (property)") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const DataPool pool = random_pool(rng, 1 + static_cast<std::size_t>(rng() % 30));
        const auto path = temp_file("roundtrip.jsonl");
        write_pool(pool, std::nullopt, path.string());
        const DataPool back = load_pool(path.string(), LoadMode::Permissive);
        REQUIRE(back.size() == pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const auto& a = pool.samples()[i];
            const auto& b = back.samples()[i];
            CHECK(a.id == b.id);
            CHECK(a.source == b.source);
            REQUIRE(a.turns.size() == b.turns.size());
            for (std::size_t j = 0; j < a.turns.size(); ++j) {
                CHECK(a.turns[j].instruction == b.turns[j].instruction);
                CHECK(a.turns[j].response == b.turns[j].response);
            }
        }
    }
}

TEST_CASE("write_pool with explicit ids preserves the given order") {
    std::mt19937_64 rng(11);
    const DataPool pool = random_pool(rng, 10);
    std::vector<std::string> order = {"s7", "s2", "s9", "s0"};
    const auto path = temp_file("ordered.jsonl");
    CHECK(write_pool(pool, order, path.string()) == 4);
    const DataPool back = load_pool(path.string(), LoadMode::Permissive);
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < order.size(); ++i)
        CHECK(back.samples()[i].id == order[i]);
}

TEST_CASE("write_pool rejects unknown ids; empty id list writes nothing") {
    std::mt19937_64 rng(13);
    const DataPool pool = random_pool(rng, 3);
    const auto path = temp_file("empty.jsonl");
    CHECK_THROWS_AS(write_pool(pool, std::vector<std::string>{"nope"}, path.string()),
                    DataError);
    CHECK(write_pool(pool, std::vector<std::string>{}, path.string()) == 0);
    CHECK_THROWS_AS(load_pool(path.string()), DataError); // empty file refused
}

TEST_CASE("pool_stats trivial counts") {
    const auto pool = pool_from_lines(
        R"({"id":"a","source":"x","turns":[{"instruction":"q1","response":"r1"},{"instruction":"q2","response":"r2"}]})"
        "\n");
    const auto st = pool_stats(pool);
    CHECK(st.sample_count == 1);
    CHECK(st.turn_count == 2);
}

TEST_CASE("pool_stats word-length mean") {
    const auto pool = pool_from_lines(
        R"({"id":"a","source":"x","turns":[{"instruction":"a b","response":"r"}]})"
        "\n"
        R"({"id":"b","source":"x","turns":[{"instruction":"c","response":"r"}]})"
        "\n");
    const auto st = pool_stats(pool);
    CHECK(st.instruction_words.mean == doctest::Approx(1.5));
    CHECK(st.sample_count == pool.size());
}

TEST_CASE("pool_stats matches an independent recount on a synthetic pool") {
    std::mt19937_64 rng(17);
    const DataPool pool = random_pool(rng, 1000);
    const auto st = pool_stats(pool);

    // Independent recount with its own word counter and mean.
    std::size_t turns = 0;
    double char_sum = 0, word_sum = 0;
    double char_max = 0, char_min = 1e18;
    for (const auto& s : pool.samples()) {
        for (const auto& t : s.turns) {
            ++turns;
            char_sum += static_cast<double>(t.instruction.size());
            char_max = std::max(char_max, static_cast<double>(t.instruction.size()));
            char_min = std::min(char_min, static_cast<double>(t.instruction.size()));
            std::istringstream words(t.instruction);
            std::string w;
            while (words >> w) word_sum += 1;
        }
    }
    CHECK(st.turn_count == turns);
    CHECK(st.instruction_chars.mean ==
          doctest::Approx(char_sum / static_cast<double>(turns)));
    CHECK(st.instruction_words.mean ==
          doctest::Approx(word_sum / static_cast<double>(turns)));
    CHECK(st.instruction_chars.max == char_max);
    CHECK(st.instruction_chars.min == char_min);
    std::size_t per_source_total = 0;
    for (const auto& [src, n] : st.per_source) per_source_total += n;
    CHECK(per_source_total == st.sample_count);
}
