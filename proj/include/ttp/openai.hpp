#pragma once

// Remote backends over HTTP(S): an OpenAI-compatible chat client, an
// embeddings provider and a live page fetcher. Only the CLI and the tests
// that exercise them include this header.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ttp/chat.hpp"
#include "ttp/embedding.hpp"
#include "ttp/error.hpp"
#include "ttp/page_cache.hpp"
#include "ttp/remote.hpp"

namespace ttp {

inline constexpr std::string_view kDefaultApiBase = "https://api.openai.com/v1";
inline constexpr std::string_view kDefaultEmbeddingModel = "text-embedding-ada-002";
inline constexpr std::string_view kApiKeyEnv = "OPENAI_API_KEY";
inline constexpr std::string_view kApiBaseEnv = "OPENAI_BASE_URL";

namespace detail {

/// "https://host:port/prefix" -> {"https://host:port", "/prefix"}.
inline std::pair<std::string, std::string> split_url(std::string_view url) {
    auto scheme = url.find("://");
    if (scheme == std::string_view::npos) throw ContractError("URL lacks a scheme: " + std::string(url));
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string_view::npos) return {std::string(url), "/"};
    return {std::string(url.substr(0, slash)), std::string(url.substr(slash))};
}

inline std::optional<std::chrono::milliseconds> parse_retry_after(const httplib::Result& res) {
    if (!res || !res->has_header("Retry-After")) return std::nullopt;
    try {
        return std::chrono::milliseconds(static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
    } catch (const std::exception&) {
        return std::nullopt;  // HTTP-date form; fall back to the policy
    }
}

inline Attempt to_attempt(const httplib::Result& res) {
    Attempt a;
    if (!res) {
        a.error = httplib::to_string(res.error());
        return a;
    }
    a.status = res->status;
    a.body = res->body;
    a.retry_after = parse_retry_after(res);
    return a;
}

inline std::unique_ptr<httplib::Client> make_client(const std::string& origin, std::chrono::seconds timeout) {
    auto cli = std::make_unique<httplib::Client>(origin);
    cli->set_connection_timeout(timeout);
    cli->set_read_timeout(timeout);
    cli->set_write_timeout(timeout);
    cli->set_follow_location(true);
    return cli;
}

inline std::string env_or(std::string_view name, std::string_view fallback) {
    const char* v = std::getenv(std::string(name).c_str());
    return v && *v ? std::string(v) : std::string(fallback);
}

}  // namespace detail

struct RemoteOptions {
    std::string api_base = detail::env_or(kApiBaseEnv, kDefaultApiBase);
    std::string api_key = detail::env_or(kApiKeyEnv, "");
    RetryPolicy retry;
    std::chrono::seconds timeout{120};
    RequestBudget* budget = nullptr;  // shared across clients; null means unbounded
};

/// POST /chat/completions with the whole prompt as one user message.
class OpenAiChatBackend final : public ChatBackend {
public:
    explicit OpenAiChatBackend(RemoteOptions options) : opt_(std::move(options)) {
        if (opt_.api_key.empty())
            throw ContractError("remote chat backend needs an API key in $" + std::string(kApiKeyEnv));
        std::tie(origin_, prefix_) = detail::split_url(opt_.api_base);
        if (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    std::string name() const override { return "openai"; }
    bool remote() const override { return true; }

    static nlohmann::json request_body(const LlmRequest& r) {
        return {{"model", r.model_id},
                {"messages", nlohmann::json::array({{{"role", "user"}, {"content", r.prompt_text}}})},
                {"temperature", r.temperature},
                {"seed", r.seed},
                {"max_tokens", r.max_response_tokens}};
    }

    LlmResponse complete(const LlmRequest& request) override {
        const std::string body = request_body(request).dump();
        const std::string path = prefix_ + "/chat/completions";
        Attempt a = with_retries(opt_.retry, opt_.budget, "chat completion", [&] {
            auto cli = detail::make_client(origin_, opt_.timeout);
            cli->set_bearer_token_auth(opt_.api_key);
            return detail::to_attempt(cli->Post(path, body, "application/json"));
        });
        return parse_response(a.body);
    }

    static LlmResponse parse_response(const std::string& body) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError("chat completion returned malformed JSON: " + std::string(e.what()), 1, false);
        }
        LlmResponse r;
        const auto& choices = j.value("choices", nlohmann::json::array());
        if (!choices.empty()) {
            const auto& msg = choices.at(0).value("message", nlohmann::json::object());
            if (msg.contains("content") && msg["content"].is_string()) r.text = msg["content"].get<std::string>();
            if (msg.contains("refusal") && msg["refusal"].is_string()) {
                r.refused = true;
                if (r.text.empty()) r.text = msg["refusal"].get<std::string>();
            }
        }
        if (j.contains("system_fingerprint") && j["system_fingerprint"].is_string())
            r.backend_fingerprint = j["system_fingerprint"].get<std::string>();
        if (j.contains("usage") && j["usage"].is_object()) {
            r.input_tokens = j["usage"].value("prompt_tokens", std::size_t{0});
            r.output_tokens = j["usage"].value("completion_tokens", std::size_t{0});
        }
        return r;
    }

private:
    RemoteOptions opt_;
    std::string origin_;
    std::string prefix_;
};

/// POST /embeddings. Returned vectors are re-normalized; empty text gets the
/// zero vector without a request.
class OpenAiEmbedder final : public EmbeddingProvider {
public:
    OpenAiEmbedder(RemoteOptions options, std::string model = std::string(kDefaultEmbeddingModel),
                   std::size_t dimension = 1536)
        : opt_(std::move(options)), model_(std::move(model)), dimension_(dimension) {
        if (opt_.api_key.empty())
            throw ContractError("remote embedder needs an API key in $" + std::string(kApiKeyEnv));
        std::tie(origin_, prefix_) = detail::split_url(opt_.api_base);
        if (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    std::string id() const override { return "openai-" + model_; }
    std::size_t dimension() const override { return dimension_; }

    EmbeddingVector embed(std::string_view s) const override {
        std::vector<std::string> one{std::string(s)};
        return embed_batch(one).front();
    }

    std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const override {
        std::vector<EmbeddingVector> out(texts.size());
        std::vector<std::size_t> pending;
        nlohmann::json input = nlohmann::json::array();
        for (std::size_t i = 0; i < texts.size(); ++i) {
            if (text::tokenize(texts[i]).empty()) {
                out[i].values.assign(dimension_, 0.0);
                out[i].zero = true;
                continue;
            }
            pending.push_back(i);
            input.push_back(texts[i]);
        }
        if (pending.empty()) return out;
        const std::string body = nlohmann::json{{"model", model_}, {"input", input}}.dump();
        Attempt a = with_retries(opt_.retry, opt_.budget, "embedding request", [&] {
            auto cli = detail::make_client(origin_, opt_.timeout);
            cli->set_bearer_token_auth(opt_.api_key);
            return detail::to_attempt(cli->Post(prefix_ + "/embeddings", body, "application/json"));
        });
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(a.body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError("embedding response is not JSON: " + std::string(e.what()), 1, false);
        }
        const auto& data = j.at("data");
        if (data.size() != pending.size()) throw TransportError("embedding response has wrong item count", 1, false);
        for (const auto& item : data) {
            std::size_t idx = item.value("index", std::size_t{0});
            if (idx >= pending.size()) throw TransportError("embedding response index out of range", 1, false);
            auto& v = out[pending[idx]];
            v.values = item.at("embedding").get<std::vector<double>>();
            if (v.values.size() != dimension_)
                throw ContractError("embedding dimension " + std::to_string(v.values.size()) + " != configured " +
                                    std::to_string(dimension_));
            v.zero = !normalize(v.values);
        }
        return out;
    }

private:
    RemoteOptions opt_;
    std::string model_;
    std::size_t dimension_;
    std::string origin_;
    std::string prefix_;
};

/// Live GET for technique pages, under the same retry policy and budget.
class HttpPageFetcher final : public PageFetcher {
public:
    explicit HttpPageFetcher(RetryPolicy retry = {}, RequestBudget* budget = nullptr,
                             std::chrono::seconds timeout = std::chrono::seconds(60))
        : retry_(retry), budget_(budget), timeout_(timeout) {}

    std::string fetch(const std::string& url) override {
        try {
            auto [origin, path] = detail::split_url(url);
            Attempt a = with_retries(retry_, budget_, "GET " + url, [&] {
                auto cli = detail::make_client(origin, timeout_);
                return detail::to_attempt(cli->Get(path));
            });
            return a.body;
        } catch (const TransportError& e) {
            throw FetchError(url, e.what());
        } catch (const ContractError& e) {
            throw FetchError(url, e.what());
        }
    }

private:
    RetryPolicy retry_;
    RequestBudget* budget_;
    std::chrono::seconds timeout_;
};

}  // namespace ttp
