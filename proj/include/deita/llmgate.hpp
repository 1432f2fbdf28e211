#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "deita/errors.hpp"
#include "deita/evolution.hpp"
#include "deita/hash.hpp"
#include "deita/scoring.hpp"

namespace deita {

struct CompletionRequest {
    std::string prompt;
    std::string model;
    double temperature = 0.0;
    int max_output_length = 1024;
    std::string request_tag;
};

struct CompletionResult {
    std::string text;
    bool from_cache = false;
    int attempts = 0;
    std::chrono::milliseconds latency{0};
};

/// Content address of a completion: any field change yields a new key.
inline std::string cache_key(const CompletionRequest& req, const std::string& salt = "") {
    json canonical = {{"prompt", req.prompt},
                      {"model", req.model},
                      {"temperature", req.temperature},
                      {"max_output_length", req.max_output_length}};
    if (!salt.empty()) canonical["salt"] = salt;
    return sha256_hex(canonical.dump());
}

struct TransportReply {
    int status = 0;
    std::string body;
    bool transport_error = false; // connection failure, timeout
    std::string error;
};

/// Wire transport. The production implementation speaks the configured
/// endpoint's chat-completion schema; tests plug in stubs and fixture servers.
struct Transport {
    virtual ~Transport() = default;
    virtual TransportReply send(const std::string& body) = 0;
};

// The endpoint's published field names live in this encoder/decoder pair
// and nowhere else.
inline std::string encode_chat_request(const CompletionRequest& req) {
    return json{{"model", req.model},
                {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                {"temperature", req.temperature},
                {"max_tokens", req.max_output_length}}
        .dump();
}

inline std::string decode_chat_response(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw GatewayError(std::string("malformed completion response: ") + e.what());
    }
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw GatewayError(std::string("unexpected completion response shape: ") + e.what());
    }
}

class HttpTransport : public Transport {
public:
    HttpTransport(std::string base_url, std::string api_key,
                  std::string path = "/v1/chat/completions")
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), path_(std::move(path)) {}

    TransportReply send(const std::string& body) override {
        httplib::Client client(base_url_);
        client.set_connection_timeout(30);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            TransportReply r;
            r.transport_error = true;
            r.error = httplib::to_string(res.error());
            return r;
        }
        return TransportReply{res->status, res->body, false, ""};
    }

private:
    std::string base_url_;
    std::string api_key_;
    std::string path_;
};

struct GatewayConfig {
    std::string model;
    int max_attempts = 3;
    std::size_t parallelism = 4;
    std::string cache_dir;     // empty disables the cache
    std::string cache_salt;    // mixed into keys when fresh sampling is wanted
    double backoff_base_ms = 200.0;

    /// GATEWAY_BASE_URL, GATEWAY_API_KEY, GATEWAY_MODEL.
    static GatewayConfig from_env() {
        GatewayConfig cfg;
        const char* model = std::getenv("GATEWAY_MODEL");
        if (model) cfg.model = model;
        return cfg;
    }
};

struct BatchResult {
    std::optional<CompletionResult> result;
    std::string error;
    bool ok() const { return result.has_value(); }
};

/// Retrying, caching completion gateway. Shareable across concurrent
/// callers; cache writes are serialized.
class Gateway {
public:
    Gateway(std::unique_ptr<Transport> transport, GatewayConfig config)
        : transport_(std::move(transport)), config_(std::move(config)) {
        if (!config_.cache_dir.empty())
            std::filesystem::create_directories(config_.cache_dir);
    }

    CompletionResult complete(const CompletionRequest& req) {
        if (req.prompt.empty()) throw DataError("completion request has an empty prompt");
        if (req.max_output_length < 1)
            throw DataError("completion request needs max_output_length >= 1");

        const std::string key = cache_key(req, config_.cache_salt);
        if (auto cached = cache_read(key)) {
            ++cache_hits_;
            CompletionResult r;
            r.text = std::move(*cached);
            r.from_cache = true;
            return r;
        }

        const auto start = std::chrono::steady_clock::now();
        std::string last_failure;
        for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
            ++network_calls_;
            const TransportReply reply = transport_->send(encode_chat_request(req));
            if (!reply.transport_error && reply.status == 200) {
                CompletionResult r;
                r.text = decode_chat_response(reply.body);
                r.attempts = attempt;
                r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - start);
                cache_write(key, req, r.text);
                return r;
            }
            if (reply.transport_error) {
                last_failure = "transport: " + reply.error;
            } else if (reply.status == 429 || reply.status >= 500) {
                last_failure = "status " + std::to_string(reply.status);
            } else {
                throw GatewayError("request rejected with status " +
                                   std::to_string(reply.status) + ": " + reply.body);
            }
            if (attempt < config_.max_attempts) backoff(attempt);
        }
        throw GatewayError("retries exhausted after " + std::to_string(config_.max_attempts) +
                           " attempts; last failure: " + last_failure);
    }

    /// Positionally aligned results; duplicate requests are issued once and
    /// fanned out; per-request errors never abort the batch.
    std::vector<BatchResult> complete_batch(const std::vector<CompletionRequest>& reqs,
                                            std::size_t parallelism) {
        if (parallelism < 1) throw DataError("complete_batch: parallelism must be >= 1");
        std::vector<BatchResult> results(reqs.size());

        // Deduplicate by cache key; each group is executed once.
        std::unordered_map<std::string, std::vector<std::size_t>> groups;
        std::vector<std::string> group_order;
        for (std::size_t i = 0; i < reqs.size(); ++i) {
            const std::string key = cache_key(reqs[i], config_.cache_salt);
            auto [it, inserted] = groups.try_emplace(key);
            if (inserted) group_order.push_back(key);
            it->second.push_back(i);
        }

        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                const std::size_t g = next.fetch_add(1);
                if (g >= group_order.size()) return;
                const auto& indices = groups[group_order[g]];
                BatchResult br;
                try {
                    br.result = complete(reqs[indices.front()]);
                } catch (const std::exception& e) {
                    br.error = e.what();
                }
                for (std::size_t i : indices) results[i] = br;
            }
        };
        std::vector<std::thread> threads;
        const std::size_t n_threads = std::min(parallelism, group_order.size());
        for (std::size_t i = 0; i < n_threads; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
        return results;
    }

    std::size_t network_calls() const { return network_calls_; }
    std::size_t cache_hits() const { return cache_hits_; }
    const GatewayConfig& config() const { return config_; }

private:
    void backoff(int attempt) {
        thread_local std::mt19937_64 rng{std::random_device{}()};
        const double jitter = 0.5 + static_cast<double>(rng() % 1000) / 1000.0;
        const double ms = config_.backoff_base_ms * static_cast<double>(1 << (attempt - 1)) * jitter;
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
    }

    std::filesystem::path cache_path(const std::string& key) const {
        return std::filesystem::path(config_.cache_dir) / key;
    }

    std::optional<std::string> cache_read(const std::string& key) {
        if (config_.cache_dir.empty()) return std::nullopt;
        std::ifstream in(cache_path(key), std::ios::binary);
        if (!in) return std::nullopt;
        std::string header;
        if (!std::getline(in, header)) return std::nullopt;
        std::ostringstream body;
        body << in.rdbuf();
        return body.str();
    }

    void cache_write(const std::string& key, const CompletionRequest& req,
                     const std::string& text) {
        if (config_.cache_dir.empty()) return;
        std::lock_guard<std::mutex> lock(cache_mutex_);
        std::ofstream out(cache_path(key), std::ios::trunc | std::ios::binary);
        if (!out) throw DataError("cannot write cache entry '" + cache_path(key).string() + "'");
        out << json{{"model", req.model},
                    {"temperature", req.temperature},
                    {"max_output_length", req.max_output_length},
                    {"request_tag", req.request_tag}}
                   .dump()
            << '\n'
            << text;
    }

    std::unique_ptr<Transport> transport_;
    GatewayConfig config_;
    std::mutex cache_mutex_;
    std::atomic<std::size_t> network_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

/// Gateway-backed completion client for evolution chains.
class GatewayCompletionClient : public CompletionClient {
public:
    GatewayCompletionClient(Gateway& gateway, std::string request_tag = "",
                            int max_output_length = 2048)
        : gateway_(gateway), tag_(std::move(request_tag)), max_len_(max_output_length) {}

    std::string complete_text(const std::string& prompt) override {
        CompletionRequest req;
        req.prompt = prompt;
        req.model = gateway_.config().model;
        req.max_output_length = max_len_;
        req.request_tag = tag_;
        return gateway_.complete(req).text;
    }

private:
    Gateway& gateway_;
    std::string tag_;
    int max_len_;
};

/// Gateway-backed scorer provider: sends the turn text with a one-line
/// numeric-score request and parses the first number in the reply.
class GatewayScorerProvider : public ScorerProvider {
public:
    explicit GatewayScorerProvider(Gateway& gateway) : gateway_(gateway) {}

    double score(const std::string& instruction, const std::string& response,
                 MetricKind kind) override {
        CompletionRequest req;
        req.model = gateway_.config().model;
        req.request_tag = "score:" + to_string(kind);
        req.max_output_length = 16;
        if (kind == MetricKind::Quality) {
            req.prompt = "Output only a numeric quality score for this response.\nInstruction:\n" +
                         instruction + "\nResponse:\n" + response + "\nScore:";
        } else {
            req.prompt = "Output only a numeric complexity score for this instruction.\n"
                         "Instruction:\n" +
                         instruction + "\nScore:";
        }
        const std::string text = gateway_.complete(req).text;
        return parse_leading_number(text);
    }

private:
    static double parse_leading_number(const std::string& text) {
        std::size_t i = 0;
        while (i < text.size() && !(std::isdigit(static_cast<unsigned char>(text[i])) ||
                                    text[i] == '-' || text[i] == '+'))
            ++i;
        if (i == text.size())
            throw GatewayError("scorer reply contains no number: '" + text + "'");
        std::size_t consumed = 0;
        const double v = std::stod(text.substr(i), &consumed);
        if (consumed == 0) throw GatewayError("scorer reply contains no number: '" + text + "'");
        return v;
    }

    Gateway& gateway_;
};

} // namespace deita
