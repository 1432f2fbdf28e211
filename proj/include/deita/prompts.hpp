#pragma once

#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "deita/errors.hpp"

namespace deita {

enum class EvolveKind { Complexity, Quality };

inline std::string to_string(EvolveKind k) {
    return k == EvolveKind::Complexity ? "complexity" : "quality";
}

inline EvolveKind evolve_kind_from_string(const std::string& s) {
    if (s == "complexity") return EvolveKind::Complexity;
    if (s == "quality") return EvolveKind::Quality;
    throw DataError("unknown evolve kind '" + s + "'");
}

/// One rewriting technique. Complexity methods evolve the instruction,
/// quality methods evolve the response.
struct EvolveMethod {
    EvolveKind kind;
    std::string name;
};

inline const std::vector<std::string>& complexity_method_names() {
    static const std::vector<std::string> names = {
        "add_constraints", "deepening", "concretizing", "increase_reasoning"};
    return names;
}

inline const std::vector<std::string>& quality_method_names() {
    static const std::vector<std::string> names = {
        "helpfulness", "relevance", "depth", "creativity", "detail"};
    return names;
}

inline EvolveMethod make_method(EvolveKind kind, const std::string& name) {
    const auto& valid =
        kind == EvolveKind::Complexity ? complexity_method_names() : quality_method_names();
    for (const auto& v : valid)
        if (v == name) return EvolveMethod{kind, name};
    throw DataError("method '" + name + "' is not valid for kind '" + to_string(kind) + "'");
}

namespace prompts {

// Rewriting prompt templates. Kept as prefix/method/suffix pieces so that
// substitution is positional: an instruction containing the literal text
// "#Given Prompt#" cannot disturb the template.

inline constexpr std::string_view kComplexityHead =
    "I want you act as a Prompt Rewriter.\n"
    "Your objective is to rewrite a given prompt into a more complex version to make those "
    "famous AI systems (e.g., ChatGPT and GPT4) a bit harder to handle.\n"
    "But the rewritten prompt must be reasonable and must be understood and responded by "
    "humans.\n"
    "Your rewriting cannot omit the non-text parts such as the table and code in #Given "
    "Prompt#:. Also, please do not omit the input in #Given Prompt#.\n"
    "You SHOULD complicate the given prompt using the following method:\n";

inline constexpr std::string_view kComplexityTail =
    "You should try your best not to make the #Rewritten Prompt# become verbose, #Rewritten "
    "Prompt# can only add 10 to 20 words into #Given Prompt#.\n"
    "'#Given Prompt#', '#Rewritten Prompt#', 'given prompt' and 'rewritten prompt' are not "
    "allowed to appear in #Rewritten Prompt#\n"
    "#Given Prompt#:\n";

inline constexpr std::string_view kComplexityEnd = "\n#Rewritten Prompt#:";

inline const std::map<std::string, std::string>& complexity_method_lines() {
    static const std::map<std::string, std::string> lines = {
        {"add_constraints",
         "Please add one more constraints/requirements into #Given Prompt#\n"},
        {"deepening",
         "If #Given Prompt# contains inquiries about certain issues, the depth and breadth of "
         "the inquiry can be increased. or\n"},
        {"concretizing", "Please replace general concepts with more specific concepts. or\n"},
        {"increase_reasoning",
         "If #Given Prompt# can be solved with just a few simple thinking processes, you can "
         "rewrite it to explicitly request multiple-step reasoning.\n"}};
    return lines;
}

inline constexpr std::string_view kQualityHead =
    "I want you to act as a Response Rewriter\n"
    "Your goal is to enhance the quality of the response given by an AI assistant to the "
    "#Given Prompt# through rewriting.\n"
    "But the rewritten response must be reasonable and must be understood by humans.\n"
    "Your rewriting cannot omit the non-text parts such as the table and code in #Given "
    "Prompt# and #Given Response#. Also, please do not omit the input in #Given Prompt#.\n"
    "You Should enhance the quality of the response using the following method:\n";

inline constexpr std::string_view kQualityTail =
    "You should try your best not to make the #Rewritten Response# become verbose, #Rewritten "
    "Response# can only add 10 to 20 words into #Given Response#.\n"
    "'#Given Response#', '#Rewritten Response#', 'given response' and 'rewritten response' "
    "are not allowed to appear in #Rewritten Response#\n"
    "#Given Prompt#:\n";

inline constexpr std::string_view kQualityMid = "\n#Given Response#:\n";
inline constexpr std::string_view kQualityEnd = "\n#Rewritten Response#:";

inline const std::map<std::string, std::string>& quality_method_lines() {
    // "the  Response" (double space) and the unterminated method sentences
    // are frozen into the golden files; do not "fix" them.
    static const std::map<std::string, std::string> lines = {
        {"helpfulness", "Please make the Response more helpful to the user.\n"},
        {"relevance", "Please make the Response more relevant to #Given Prompt#.\n"},
        {"depth", "Please make the  Response more in-depth\n"},
        {"creativity", "Please increase the creativity of the response\n"},
        {"detail", "Please increase the detail level of Response\n"}};
    return lines;
}

inline constexpr std::string_view kComplexityRankScoreHead =
    "Ranking the following questions according to the difficulty and complexity. Score 1-5. "
    "You can give a score of 6 if the question is too complex for you to answer it. You "
    "should respond with the format:\n"
    "[1] Score: 1\n"
    "[2] Score: 2\n";

inline constexpr std::string_view kQualityRankScoreHead =
    "Rank the following responses provided by different AI assistants to the user's question "
    "according to the quality of their response. Score each response from 1 to 5, with 6 "
    "reserved for responses that are already very well written and cannot be improved "
    "further. Your evaluation should consider  factors such as helpfulness, relevance, "
    "accuracy, depth, creativity, and level of detail of the response.\n"
    "Use the following format:\n"
    "[Response 1] Score:\n"
    "[Response 2] Score:\n";

} // namespace prompts

/// Renders the rewriting prompt for one evolution step. Quality methods
/// require the response being evolved.
inline std::string build_evolve_prompt(const EvolveMethod& method, const std::string& instruction,
                                       const std::optional<std::string>& response = std::nullopt) {
    std::string out;
    if (method.kind == EvolveKind::Complexity) {
        out += prompts::kComplexityHead;
        out += prompts::complexity_method_lines().at(method.name);
        out += prompts::kComplexityTail;
        out += instruction;
        out += prompts::kComplexityEnd;
    } else {
        if (!response)
            throw DataError("quality method '" + method.name + "' requires a response");
        out += prompts::kQualityHead;
        out += prompts::quality_method_lines().at(method.name);
        out += prompts::kQualityTail;
        out += instruction;
        out += prompts::kQualityMid;
        out += *response;
        out += prompts::kQualityEnd;
    }
    return out;
}

/// Renders the single-prompt ranking request over all variants of one seed.
/// Complexity lists items as "[i] <item>", quality as "[Response i] <item>"
/// under a "#Question#:" header carrying the shared instruction.
inline std::string build_rank_score_prompt(EvolveKind kind, const std::vector<std::string>& items,
                                           const std::optional<std::string>& context_instruction =
                                               std::nullopt) {
    if (items.size() < 2) throw DataError("rank-and-score needs at least 2 items");
    if (items.size() > 6)
        throw DataError("rank-and-score compares variants of one seed; at most 6 items");
    std::string out;
    if (kind == EvolveKind::Complexity) {
        out += prompts::kComplexityRankScoreHead;
        for (std::size_t i = 0; i < items.size(); ++i)
            out += "[" + std::to_string(i + 1) + "] " + items[i] + "\n";
    } else {
        if (!context_instruction)
            throw DataError("quality rank-and-score requires the shared question");
        out += prompts::kQualityRankScoreHead;
        out += "#Question#: " + *context_instruction + "\n";
        out += "#Response List#:\n";
        for (std::size_t i = 0; i < items.size(); ++i)
            out += "[Response " + std::to_string(i + 1) + "] " + items[i] + "\n";
    }
    out.pop_back(); // no trailing newline
    return out;
}

/// Extracts exactly n "[i] Score: k" pairs (the "Response" label form is also
/// accepted). Surrounding prose and reordered lines are fine; missing,
/// duplicate, or out-of-range entries are errors, never repaired.
inline std::vector<int> parse_rank_score_response(const std::string& text, std::size_t n) {
    if (n < 1) throw DataError("parse_rank_score_response: n must be >= 1");
    static const std::regex pat(R"(\[\s*(?:Response\s+)?(\d+)\s*\]\s*Score\s*:\s*(-?\d+))",
                                std::regex::icase);
    std::vector<int> scores(n, 0);
    std::vector<bool> seen(n, false);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), pat);
         it != std::sregex_iterator(); ++it) {
        const long idx = std::stol((*it)[1].str());
        const long score = std::stol((*it)[2].str());
        if (idx < 1 || static_cast<std::size_t>(idx) > n)
            throw DataError("rank-and-score index " + std::to_string(idx) +
                            " outside 1.." + std::to_string(n));
        if (seen[idx - 1])
            throw DataError("duplicate rank-and-score index " + std::to_string(idx));
        if (score < 1 || score > 6)
            throw DataError("score " + std::to_string(score) + " for item " +
                            std::to_string(idx) + " outside 1..6");
        seen[idx - 1] = true;
        scores[idx - 1] = static_cast<int>(score);
    }
    std::string missing;
    for (std::size_t i = 0; i < n; ++i) {
        if (!seen[i]) missing += (missing.empty() ? "" : ", ") + std::to_string(i + 1);
    }
    if (!missing.empty())
        throw DataError("rank-and-score response missing indices: " + missing);
    return scores;
}

} // namespace deita
