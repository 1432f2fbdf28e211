// deita - instruction-tuning data selection pipeline CLI.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deita/corpus.hpp"
#include "deita/embedding.hpp"
#include "deita/evolution.hpp"
#include "deita/llmgate.hpp"
#include "deita/prompts.hpp"
#include "deita/report.hpp"
#include "deita/scoring.hpp"
#include "deita/selection.hpp"

namespace {

using namespace deita;

std::string read_text_file(const std::string& path) {
    if (path == "-") {
        std::ostringstream buf;
        buf << std::cin.rdbuf();
        return buf.str();
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::vector<std::string> lines;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

void write_text(const std::string& path, const std::string& text) {
    if (path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot open output '" + path + "'");
    out << text;
    if (!out) throw DataError("write failed for '" + path + "'");
}

/// Ids from either a plain id-per-line file or a selection result JSON
/// (admitted list).
std::vector<std::string> read_id_list(const std::string& path) {
    const std::string text = read_text_file(path);
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j = json::parse(text);
        if (!j.contains("admitted"))
            throw DataError("'" + path + "' looks like JSON but has no 'admitted' list");
        return j["admitted"].get<std::vector<std::string>>();
    }
    std::vector<std::string> ids;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    return ids;
}

Gateway make_gateway(const std::string& cache_dir, std::size_t parallelism) {
    const char* base_url = std::getenv("GATEWAY_BASE_URL");
    if (!base_url || !*base_url)
        throw GatewayError("GATEWAY_BASE_URL is not set; no completion endpoint configured");
    const char* api_key = std::getenv("GATEWAY_API_KEY");
    GatewayConfig cfg = GatewayConfig::from_env();
    if (cfg.model.empty()) cfg.model = "gpt-3.5-turbo-0613";
    cfg.cache_dir = cache_dir;
    cfg.parallelism = parallelism;
    return Gateway(std::make_unique<HttpTransport>(base_url, api_key ? api_key : ""), cfg);
}

/// Refuses incomplete coverage up front, listing the first 10 missing ids.
template <typename HasFn>
void require_coverage(const DataPool& pool, const std::string& what, HasFn has) {
    std::vector<std::string> missing;
    for (const auto& s : pool.samples()) {
        if (!has(s.id)) {
            missing.push_back(s.id);
            if (missing.size() == 10) break;
        }
    }
    if (!missing.empty()) {
        std::string msg = what + " coverage of the pool is incomplete; first missing ids:";
        for (const auto& id : missing) msg += " " + id;
        throw DataError(msg);
    }
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
            .count();
    }
};

std::string join_argv(int argc, char** argv) {
    std::string s;
    for (int i = 0; i < argc; ++i) {
        if (i) s += ' ';
        s += argv[i];
    }
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deita - evolution scoring and diversity-aware data selection"};
    app.require_subcommand(1);

    const std::string command_echo = join_argv(argc, argv);

    // --- pool ---------------------------------------------------------
    auto* pool_cmd = app.add_subcommand("pool", "pool inspection and subsetting");
    pool_cmd->require_subcommand(1);

    std::string ps_in, ps_report;
    bool ps_permissive = false;
    auto* pool_stats_cmd = pool_cmd->add_subcommand("stats", "summary statistics of a pool");
    pool_stats_cmd->add_option("--in", ps_in, "pool file (jsonl)")->required();
    pool_stats_cmd->add_flag("--permissive", ps_permissive, "permissive parsing");
    pool_stats_cmd->add_option("--report", ps_report, "run report path");
    pool_stats_cmd->callback([&] {
        Timer timer;
        const DataPool pool =
            load_pool(ps_in, ps_permissive ? LoadMode::Permissive : LoadMode::Strict);
        const PoolStats st = pool_stats(pool);
        std::cout << pool_stats_to_json(st).dump() << '\n';
        if (!ps_report.empty()) {
            RunReport rep;
            rep.command = command_echo;
            rep.fingerprints["pool"] = pool_fingerprint(pool);
            rep.counts = {{"sample_count", st.sample_count}, {"turn_count", st.turn_count}};
            rep.elapsed_ms = timer.ms();
            write_report(rep, ps_report);
        }
    });

    std::string pw_in, pw_out, pw_ids;
    bool pw_permissive = false;
    auto* pool_write_cmd = pool_cmd->add_subcommand("write", "write a pool or subset");
    pool_write_cmd->add_option("--in", pw_in, "pool file")->required();
    pool_write_cmd->add_option("--out", pw_out, "output file ('-' for stdout)")->required();
    pool_write_cmd->add_option("--ids", pw_ids,
                               "id list (plain lines or a selection result JSON)");
    pool_write_cmd->add_flag("--permissive", pw_permissive, "permissive parsing");
    pool_write_cmd->callback([&] {
        const DataPool pool =
            load_pool(pw_in, pw_permissive ? LoadMode::Permissive : LoadMode::Strict);
        std::optional<std::vector<std::string>> ids;
        if (!pw_ids.empty()) ids = read_id_list(pw_ids);
        const std::size_t n = write_pool(pool, ids, pw_out);
        std::cerr << "wrote " << n << " records\n";
    });

    // --- evolve -------------------------------------------------------
    std::string ev_in, ev_kind = "complexity", ev_policy = "random", ev_out, ev_export,
                ev_cache, ev_report;
    std::size_t ev_m = 5, ev_parallelism = 4;
    std::uint64_t ev_seed = 0;
    std::optional<std::size_t> ev_sample;
    auto* evolve_cmd = app.add_subcommand("evolve", "evolve seeds into scored variant chains");
    evolve_cmd->add_option("--in", ev_in, "pool file")->required();
    evolve_cmd->add_option("--kind", ev_kind, "complexity|quality")->required();
    evolve_cmd->add_option("--m", ev_m, "evolution steps (default 5)");
    evolve_cmd->add_option("--method-policy", ev_policy, "random|round-robin|fixed:<name>");
    evolve_cmd->add_option("--seed", ev_seed, "seed for sampling and method choice");
    evolve_cmd->add_option("--sample", ev_sample, "evolve a random seed subset of this size");
    evolve_cmd->add_option("--out", ev_out, "variant chain output (jsonl)")->required();
    evolve_cmd->add_option("--export-scores", ev_export, "seed-scoring dataset output (jsonl)");
    evolve_cmd->add_option("--parallelism", ev_parallelism, "concurrent chains");
    evolve_cmd->add_option("--cache-dir", ev_cache, "gateway response cache directory");
    evolve_cmd->add_option("--report", ev_report, "run report path");
    evolve_cmd->callback([&] {
        Timer timer;
        const EvolveKind kind = evolve_kind_from_string(ev_kind);
        const DataPool pool = load_pool(ev_in, LoadMode::Permissive);
        std::vector<std::string> ids;
        if (ev_sample)
            ids = build_seed_dataset(pool, *ev_sample, ev_seed);
        else
            for (const auto& s : pool.samples()) ids.push_back(s.id);

        MethodPolicy policy;
        if (ev_policy == "random")
            policy = MethodPolicy::random_with_seed(ev_seed);
        else if (ev_policy == "round-robin")
            policy = MethodPolicy::round_robin();
        else if (ev_policy.rfind("fixed:", 0) == 0)
            policy = MethodPolicy::fixed(ev_policy.substr(6));
        else
            throw DataError("unknown method policy '" + ev_policy + "'");

        Gateway gateway = make_gateway(ev_cache, ev_parallelism);
        GatewayCompletionClient client(gateway, "evolve:" + ev_kind);

        std::vector<VariantChain> chains(ids.size());
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= ids.size()) return;
                chains[i] = evolve_chain(pool.by_id(ids[i]), kind, ev_m, client, policy);
            }
        };
        std::vector<std::thread> threads;
        for (std::size_t i = 0; i < std::min(ev_parallelism, ids.size()); ++i)
            threads.emplace_back(worker);
        for (auto& t : threads) t.join();

        std::ofstream out(ev_out, std::ios::trunc);
        if (!out) throw DataError("cannot open output '" + ev_out + "'");
        for (const auto& c : chains) out << chain_to_json(c).dump() << '\n';

        if (!ev_export.empty()) {
            std::ofstream ex(ev_export, std::ios::trunc);
            if (!ex) throw DataError("cannot open output '" + ev_export + "'");
            for (std::size_t i = 0; i < chains.size(); ++i) {
                const auto& instr = pool.by_id(ids[i]).turns.front().instruction;
                for (const auto& rec : seed_score_records(chains[i], instr))
                    ex << rec.dump() << '\n';
            }
        }
        if (!ev_report.empty()) {
            RunReport rep;
            rep.command = command_echo;
            rep.fingerprints["pool"] = pool_fingerprint(pool);
            std::size_t incomplete = 0, unscored = 0;
            for (const auto& c : chains) {
                if (!c.complete) ++incomplete;
                if (!c.scores) ++unscored;
            }
            rep.counts = {{"chains", chains.size()},
                          {"incomplete", incomplete},
                          {"unscored", unscored}};
            rep.gateway_calls = gateway.network_calls();
            rep.gateway_cache_hits = gateway.cache_hits();
            rep.elapsed_ms = timer.ms();
            write_report(rep, ev_report);
        }
    });

    // --- rankscore ----------------------------------------------------
    auto* rankscore_cmd = app.add_subcommand("rankscore", "rank-and-score prompt tooling");
    rankscore_cmd->require_subcommand(1);

    std::string rb_kind = "complexity", rb_items, rb_question, rb_out = "-";
    auto* rs_build = rankscore_cmd->add_subcommand("build", "build a rank-and-score prompt");
    rs_build->add_option("--kind", rb_kind, "complexity|quality")->required();
    rs_build->add_option("--items", rb_items, "item file, one per line")->required();
    rs_build->add_option("--question", rb_question, "shared question (quality kind)");
    rs_build->add_option("--out", rb_out, "output path ('-' for stdout)");
    rs_build->callback([&] {
        const EvolveKind kind = evolve_kind_from_string(rb_kind);
        const std::vector<std::string> items = read_lines(rb_items);
        std::optional<std::string> question;
        if (!rb_question.empty()) question = rb_question;
        write_text(rb_out, build_rank_score_prompt(kind, items, question) + "\n");
    });

    std::string rp_in, rp_out = "-";
    std::size_t rp_n = 0;
    auto* rs_parse = rankscore_cmd->add_subcommand("parse", "parse a scored response");
    rs_parse->add_option("--in", rp_in, "response text file ('-' for stdin)")->required();
    rs_parse->add_option("--n", rp_n, "expected item count")->required();
    rs_parse->add_option("--out", rp_out, "output path ('-' for stdout)");
    rs_parse->callback([&] {
        const auto scores = parse_rank_score_response(read_text_file(rp_in), rp_n);
        write_text(rp_out, json(scores).dump() + "\n");
    });

    // --- score --------------------------------------------------------
    auto* score_cmd = app.add_subcommand("score", "compute or ingest sample scores");
    score_cmd->require_subcommand(1);

    std::string sh_in, sh_metric, sh_unit, sh_out, sh_report;
    auto* score_heuristic = score_cmd->add_subcommand("heuristic", "local length baselines");
    score_heuristic->add_option("--in", sh_in, "pool file")->required();
    score_heuristic->add_option("--metric", sh_metric, "instruction_length|response_length")
        ->required();
    score_heuristic->add_option("--unit", sh_unit, "chars|words")->required();
    score_heuristic->add_option("--out", sh_out, "score file output")->required();
    score_heuristic->add_option("--report", sh_report, "run report path");
    score_heuristic->callback([&] {
        Timer timer;
        const DataPool pool = load_pool(sh_in, LoadMode::Permissive);
        const ScoreTable table =
            heuristic_score(pool, metric_kind_from_string(sh_metric),
                            length_unit_from_string(sh_unit));
        save_scores(table, sh_out);
        if (!sh_report.empty()) {
            RunReport rep;
            rep.command = command_echo;
            rep.fingerprints["pool"] = pool_fingerprint(pool);
            rep.fingerprints["scores"] = scores_fingerprint(table);
            rep.counts = {{"scored", table.size()}};
            rep.elapsed_ms = timer.ms();
            write_report(rep, sh_report);
        }
    });

    std::string sa_in, sa_kind, sa_scores, sa_out;
    bool sa_permissive = false;
    auto* score_attach = score_cmd->add_subcommand("attach", "ingest externally computed metrics");
    score_attach->add_option("--in", sa_in, "pool file")->required();
    score_attach->add_option("--kind", sa_kind, "metric kind")->required();
    score_attach->add_option("--scores", sa_scores, "external score file")->required();
    score_attach->add_option("--out", sa_out, "score file output")->required();
    score_attach->add_flag("--permissive", sa_permissive, "skip unknown ids with a warning");
    score_attach->callback([&] {
        const DataPool pool = load_pool(sa_in, LoadMode::Permissive);
        AttachStats stats;
        const ScoreTable table = attach_external_scores(
            pool, sa_scores, metric_kind_from_string(sa_kind),
            sa_permissive ? LoadMode::Permissive : LoadMode::Strict, &stats);
        save_scores(table, sa_out);
        if (stats.skipped > 0)
            std::cerr << "warning: skipped " << stats.skipped << " records\n";
    });

    std::string sp_in, sp_kind, sp_out, sp_cache;
    std::size_t sp_parallelism = 4;
    auto* score_provider = score_cmd->add_subcommand("provider", "score via the gateway");
    score_provider->add_option("--in", sp_in, "pool file")->required();
    score_provider->add_option("--kind", sp_kind, "complexity|quality")->required();
    score_provider->add_option("--out", sp_out, "score file output")->required();
    score_provider->add_option("--parallelism", sp_parallelism, "concurrent provider calls");
    score_provider->add_option("--cache-dir", sp_cache, "gateway response cache directory");
    score_provider->callback([&] {
        const DataPool pool = load_pool(sp_in, LoadMode::Permissive);
        Gateway gateway = make_gateway(sp_cache, sp_parallelism);
        GatewayScorerProvider provider(gateway);
        const ScorePoolResult res =
            score_pool(pool, provider, metric_kind_from_string(sp_kind), sp_parallelism);
        save_scores(res.table, sp_out);
        for (const auto& [id, err] : res.failures)
            std::cerr << "warning: scoring failed for " << id << ": " << err << '\n';
    });

    // --- embed --------------------------------------------------------
    auto* embed_cmd = app.add_subcommand("embed", "embedding store conversion");
    embed_cmd->require_subcommand(1);

    std::string ec_in, ec_out, ec_to;
    auto* embed_convert = embed_cmd->add_subcommand("convert", "convert textual<->packed");
    embed_convert->add_option("--in", ec_in, "input store (format auto-detected)")->required();
    embed_convert->add_option("--out", ec_out, "output store")->required();
    embed_convert->add_option("--to", ec_to, "textual|packed")->required();
    embed_convert->callback([&] {
        const EmbeddingStore store = load_embeddings(ec_in);
        if (ec_to == "textual")
            save_embeddings(store, ec_out, EmbeddingFormat::Textual);
        else if (ec_to == "packed")
            save_embeddings(store, ec_out, EmbeddingFormat::Packed);
        else
            throw DataError("unknown target format '" + ec_to + "' (use textual|packed)");
    });

    // --- select -------------------------------------------------------
    std::string sel_in, sel_strategy, sel_scores, sel_embeddings, sel_tags, sel_out,
        sel_result, sel_report, sel_key = "evol", sel_comparator = "less";
    std::size_t sel_budget = 6000;
    double sel_tau = 0.9, sel_max_dev = 2.0;
    std::uint64_t sel_seed = 0;
    bool sel_band_product = false;
    auto* select_cmd = app.add_subcommand("select", "select a subset under a budget");
    select_cmd->add_option("--in", sel_in, "pool file")->required();
    select_cmd->add_option("--strategy", sel_strategy, "random|top|deita|controlled|instag")
        ->required();
    select_cmd->add_option("--budget", sel_budget, "data budget m (default 6000)");
    select_cmd->add_option("--tau", sel_tau, "Repr Filter threshold (default 0.9)");
    select_cmd->add_option("--comparator", sel_comparator, "less|greater (default less)");
    select_cmd->add_option("--seed", sel_seed, "seed (random strategy)");
    select_cmd->add_option("--key", sel_key, "top strategy sort key (default evol)");
    select_cmd->add_option("--score-match-max-dev", sel_max_dev,
                           "controlled-mode max deviation (default 2)");
    select_cmd->add_flag("--band-on-product-of-means", sel_band_product,
                         "controlled mode: constrain the product of mean c and mean q");
    select_cmd->add_option("--scores", sel_scores, "score file");
    select_cmd->add_option("--embeddings", sel_embeddings, "embedding store");
    select_cmd->add_option("--tags", sel_tags, "tag file (instag strategy)");
    select_cmd->add_option("--out", sel_out, "selected pool output (jsonl)");
    select_cmd->add_option("--result", sel_result, "selection result output (json)");
    select_cmd->add_option("--report", sel_report, "run report path");
    select_cmd->callback([&] {
        Timer timer;
        const DataPool pool = load_pool(sel_in, LoadMode::Permissive);

        ScoreTable scores;
        const bool needs_scores =
            sel_strategy == "top" || sel_strategy == "deita" || sel_strategy == "controlled";
        if (needs_scores) {
            if (sel_scores.empty()) throw DataError("--scores is required for this strategy");
            scores = load_scores(sel_scores);
            require_coverage(pool, "score", [&](const std::string& id) {
                return scores.contains(id);
            });
        }
        EmbeddingStore store;
        const bool needs_embeddings = sel_strategy == "deita" || sel_strategy == "controlled";
        if (needs_embeddings) {
            if (sel_embeddings.empty())
                throw DataError("--embeddings is required for this strategy");
            store = load_embeddings(sel_embeddings);
            require_coverage(pool, "embedding", [&](const std::string& id) {
                return store.contains(id);
            });
        }

        SelectionConfig config;
        config.budget = sel_budget;
        config.tau = sel_tau;
        config.comparator = comparator_from_string(sel_comparator);
        config.seed = sel_seed;
        config.score_match_max_dev = sel_max_dev;
        config.band_on_product_of_means = sel_band_product;

        SelectionResult res;
        if (sel_strategy == "random") {
            res = select_random(pool, sel_budget, sel_seed);
        } else if (sel_strategy == "top") {
            res = select_top(pool, scores, sel_budget, sel_key);
        } else if (sel_strategy == "deita") {
            res = select_deita(pool, scores, store, config);
        } else if (sel_strategy == "controlled") {
            res = select_repr_filter_controlled(pool, scores, store, config);
        } else if (sel_strategy == "instag") {
            if (sel_tags.empty()) throw DataError("--tags is required for instag strategy");
            const TagSet tags = load_tags(sel_tags);
            require_coverage(pool, "tag", [&](const std::string& id) {
                return tags.count(id) != 0;
            });
            res = select_instag_diversity(pool, tags, sel_budget);
        } else {
            throw DataError("unknown strategy '" + sel_strategy + "'");
        }

        if (!sel_out.empty()) write_pool(pool, res.admitted, sel_out);
        if (!sel_result.empty()) save_selection_result(res, sel_result);
        if (sel_out.empty() && sel_result.empty())
            save_selection_result(res, "-");
        if (!sel_report.empty()) {
            RunReport rep;
            rep.command = command_echo;
            rep.fill_counts(res);
            if (needs_scores) rep.fill_score_summary(res, scores);
            rep.elapsed_ms = timer.ms();
            write_report(rep, sel_report);
        }
        std::cerr << "admitted " << res.admitted.size() << " of " << pool.size() << '\n';
    });

    // --- report -------------------------------------------------------
    std::string rr_in;
    auto* report_cmd = app.add_subcommand("report", "summarize a selection result");
    report_cmd->add_option("--in", rr_in, "selection result JSON")->required();
    report_cmd->callback([&] {
        const json j = json::parse(read_text_file(rr_in));
        for (const auto& field : {"strategy", "pool_size", "examined", "unexamined"})
            if (!j.contains(field))
                throw DataError(std::string("result file missing field '") + field + "'");
        std::map<std::string, std::size_t> per_reason;
        for (const auto& r : j["rejected"]) ++per_reason[r["reason"].get<std::string>()];
        const std::size_t admitted = j["admitted"].size();
        const std::size_t rejected = j["rejected"].size();
        const std::size_t unexamined = j["unexamined"].get<std::size_t>();
        if (admitted + rejected + unexamined != j["pool_size"].get<std::size_t>())
            throw DataError("result counts do not reconcile with pool size");
        json out = {{"strategy", j["strategy"]},
                    {"pool_size", j["pool_size"]},
                    {"admitted", admitted},
                    {"rejected", rejected},
                    {"rejected_per_reason", per_reason},
                    {"unexamined", unexamined},
                    {"config", j.value("config", json::object())}};
        std::cout << out.dump(2) << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const GatewayError& e) {
        std::cerr << "gateway error: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
