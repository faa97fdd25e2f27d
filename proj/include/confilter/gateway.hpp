#pragma once

// Client for OpenAI-compatible model endpoints: /embeddings for vectors,
// /chat/completions for ratings and relevance judgments. Every model the
// pipeline needs is servable behind this wire shape, so backend choice is
// pure configuration. API keys are read from an environment variable named in
// the config and never appear in config files or serialized records.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "confilter/errors.hpp"
#include "confilter/types.hpp"

namespace confilter {

struct GatewayConfig {
    std::string base_url;     // e.g. "http://127.0.0.1:8080/v1"
    std::string api_key_env;  // name of the env var holding the key; may be empty
    std::string embed_model;
    std::string chat_model;
    int max_batch = 64;
    int max_retries = 2;
    std::chrono::milliseconds timeout{30000};
    int parallelism = 4;
    std::chrono::milliseconds backoff{100};  // initial retry delay, doubled per attempt
};

inline void validate(const GatewayConfig& cfg) {
    if (cfg.base_url.empty()) throw ConfigError("gateway base_url must be set");
    if (cfg.max_batch < 1) throw ConfigError("gateway max_batch must be >= 1");
    if (cfg.max_retries < 0) throw ConfigError("gateway max_retries must be >= 0");
    if (cfg.timeout.count() <= 0) throw ConfigError("gateway timeout must be > 0");
    if (cfg.parallelism < 1) throw ConfigError("gateway parallelism must be >= 1");
}

// Binary relevance verdict with the raw model response kept for audit; no
// label enters a dataset without its raw_response stored alongside.
struct JudgeVerdict {
    std::string query_id;
    std::string snippet_id;
    bool relevant = false;
    std::string raw_response;
};

// Decision grammar for the judge: the leading word after stripping
// punctuation, case-insensitive. "yes"/"relevant" affirm, "no"/"irrelevant"
// deny, anything else is undecided.
inline std::optional<bool> parse_decision(std::string_view response) {
    std::size_t i = 0;
    while (i < response.size() && !std::isalnum(static_cast<unsigned char>(response[i]))) ++i;
    std::string word;
    while (i < response.size() && std::isalpha(static_cast<unsigned char>(response[i]))) {
        word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(response[i]))));
        ++i;
    }
    if (word == "yes" || word == "relevant") return true;
    if (word == "no" || word == "irrelevant") return false;
    return std::nullopt;
}

class Gateway {
public:
    explicit Gateway(GatewayConfig config) : config_(std::move(config)) {
        validate(config_);
        split_base_url();
    }

    const GatewayConfig& config() const { return config_; }

    // Total HTTP attempts issued, retries included.
    std::uint64_t requests_sent() const { return requests_.load(); }

    // One vector per text, in input order. Requests are batched at most
    // max_batch texts at a time; all returned vectors must share one
    // dimension. Transient failures are retried with exponential backoff, at
    // most max_retries + 1 attempts per request.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) {
        if (texts.empty()) {
            throw DomainError("embed requires a non-empty text list");
        }
        for (const auto& t : texts) {
            if (t.empty()) throw DomainError("embed requires non-empty texts");
        }
        std::vector<EmbeddingVector> vectors(texts.size());
        std::size_t dim = 0;
        const auto batch_size = static_cast<std::size_t>(config_.max_batch);
        int batch_index = 0;
        for (std::size_t begin = 0; begin < texts.size(); begin += batch_size, ++batch_index) {
            const std::size_t end = std::min(begin + batch_size, texts.size());
            nlohmann::json input = nlohmann::json::array();
            for (std::size_t i = begin; i < end; ++i) input.push_back(texts[i]);
            const nlohmann::json body = {{"model", config_.embed_model},
                                         {"input", std::move(input)},
                                         {"encoding_format", "float"}};
            const nlohmann::json reply = post_json("/embeddings", body, batch_index);

            auto data = reply.find("data");
            if (data == reply.end() || !data->is_array() || data->size() != end - begin) {
                throw GatewayError("embeddings batch " + std::to_string(batch_index) +
                                   ": response data does not match batch size");
            }
            std::size_t position = begin;
            for (const auto& item : *data) {
                std::size_t slot = position++;
                if (item.contains("index") && item.at("index").is_number_integer()) {
                    slot = begin + item.at("index").get<std::size_t>();
                }
                if (slot < begin || slot >= end) {
                    throw GatewayError("embeddings batch " + std::to_string(batch_index) +
                                       ": index out of range in response");
                }
                auto emb = item.find("embedding");
                if (emb == item.end() || !emb->is_array()) {
                    throw GatewayError("embeddings batch " + std::to_string(batch_index) +
                                       ": item lacks an embedding array");
                }
                vectors[slot].values = emb->get<std::vector<double>>();
                if (dim == 0) dim = vectors[slot].dim();
                if (vectors[slot].dim() != dim || dim == 0) {
                    throw GatewayError("embeddings batch " + std::to_string(batch_index) +
                                       ": dimension mismatch (" +
                                       std::to_string(vectors[slot].dim()) + " vs " +
                                       std::to_string(dim) + ")");
                }
            }
        }
        return vectors;
    }

    // Chat completion with temperature pinned to 0, so labeling runs are as
    // repeatable as the backend allows.
    std::string complete(const std::string& prompt) {
        if (prompt.empty()) {
            throw DomainError("complete requires a non-empty prompt");
        }
        const nlohmann::json body = {
            {"model", config_.chat_model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"temperature", 0}};
        const nlohmann::json reply = post_json("/chat/completions", body, -1);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw GatewayError("chat completion response lacks choices[0].message.content");
        }
    }

    // Asks the rubric question once, re-asks once on an undecided response,
    // then fails with the raw response attached.
    JudgeVerdict judge_relevance(const Query& query, const Snippet& snippet,
                                 const PromptTemplate& rubric) {
        if (!rubric.has_placeholders()) {
            throw ConfigError("judge rubric must contain {query} and {snippet} placeholders");
        }
        const std::string prompt = rubric.render(query.text, snippet.text);
        std::string response;
        for (int ask = 0; ask < 2; ++ask) {
            response = complete(prompt);
            if (auto decision = parse_decision(response)) {
                return {query.id, snippet.id, *decision, response};
            }
        }
        throw LabelingError("judge response matched neither decision class for (" + query.id +
                            ", " + snippet.id + "); raw response: " + response);
    }

private:
    void split_base_url() {
        const auto scheme_end = config_.base_url.find("://");
        if (scheme_end == std::string::npos) {
            throw ConfigError("gateway base_url must include a scheme: " + config_.base_url);
        }
        const auto path_start = config_.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = config_.base_url;
            path_prefix_.clear();
        } else {
            host_ = config_.base_url.substr(0, path_start);
            path_prefix_ = config_.base_url.substr(path_start);
        }
        while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
    }

    std::string api_key() const {
        if (config_.api_key_env.empty()) return {};
        const char* value = std::getenv(config_.api_key_env.c_str());
        return value ? std::string(value) : std::string();
    }

    nlohmann::json post_json(const std::string& route, const nlohmann::json& body,
                             int batch_index) {
        const std::string path = path_prefix_ + route;
        const std::string payload = body.dump();
        const std::string key = api_key();

        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
            }
            requests_.fetch_add(1);
            httplib::Client client(host_);
            client.set_connection_timeout(config_.timeout);
            client.set_read_timeout(config_.timeout);
            client.set_write_timeout(config_.timeout);
            httplib::Headers headers;
            if (!key.empty()) headers.emplace("Authorization", "Bearer " + key);
            auto res = client.Post(path, headers, payload, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::parse_error& e) {
                last_error = std::string("unparseable response body: ") + e.what();
                continue;
            }
        }
        std::string msg = "request to " + host_ + path + " failed after " +
                          std::to_string(config_.max_retries + 1) + " attempt(s): " + last_error;
        if (batch_index >= 0) msg += " (batch " + std::to_string(batch_index) + ")";
        throw GatewayError(msg);
    }

    GatewayConfig config_;
    std::string host_;
    std::string path_prefix_;
    std::atomic<std::uint64_t> requests_{0};
};

}  // namespace confilter
