#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttp/error.hpp"
#include "ttp/prompt.hpp"
#include "ttp/tactic.hpp"
#include "ttp/text.hpp"

namespace ttp {

inline constexpr double kTemperature = 0.0;
inline constexpr std::int64_t kSeed = 1106;
inline constexpr std::string_view kDefaultChatModel = "gpt-3.5-turbo-1106";
inline constexpr std::size_t kDefaultMaxResponseTokens = 512;
inline constexpr std::size_t kDefaultContextWindowTokens = 16385;

struct LlmRequest {
    std::string prompt_text;
    double temperature = kTemperature;
    std::int64_t seed = kSeed;
    std::string model_id = std::string(kDefaultChatModel);
    std::size_t max_response_tokens = kDefaultMaxResponseTokens;
};

struct LlmResponse {
    std::string text;
    std::string backend_fingerprint;
    std::chrono::milliseconds latency{0};
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    bool refused = false;
};

/// Conservative token estimate used for the pre-dispatch size check: one
/// token per three bytes, rounded up.
inline std::size_t estimate_prompt_tokens(std::string_view prompt) { return (prompt.size() + 2) / 3; }

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string name() const = 0;
    virtual bool remote() const { return false; }
    virtual LlmResponse complete(const LlmRequest& request) = 0;
};

/// Answers with the canonical names of the tactics named inside the prompt's
/// Relevant Context block, or "Unknown." when there are none.
class EchoTacticsMock final : public ChatBackend {
public:
    static constexpr std::string_view kPrefix = "The adversary achieves: ";

    std::string name() const override { return "mock-echo-tactics"; }

    LlmResponse complete(const LlmRequest& request) override {
        LlmResponse r;
        r.backend_fingerprint = name();
        TacticSet found;
        if (auto block = relevant_context_block(request.prompt_text)) found = tactic_names_in(*block);
        r.text = found.empty() ? std::string("Unknown.") : std::string(kPrefix) + join_names(found);
        r.input_tokens = estimate_prompt_tokens(request.prompt_text);
        r.output_tokens = estimate_prompt_tokens(r.text);
        return r;
    }
};

struct JournalRecord {
    std::string procedure_id;
    std::string mode;
    std::string variant;
    std::string prompt_digest;
    std::string response_text;
    bool refused = false;
    bool url_matched = false;
    std::string backend;
    std::string backend_fingerprint;
    std::string model_id;
    std::string requested_at;
    std::string completed_at;
    std::int64_t latency_ms = 0;
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
};

inline void to_json(nlohmann::json& j, const JournalRecord& r) {
    j = {{"procedure_id", r.procedure_id},   {"mode", r.mode},
         {"variant", r.variant},             {"prompt_digest", r.prompt_digest},
         {"response_text", r.response_text}, {"refused", r.refused},
         {"url_matched", r.url_matched},     {"backend", r.backend},
         {"backend_fingerprint", r.backend_fingerprint}, {"model_id", r.model_id},
         {"requested_at", r.requested_at},   {"completed_at", r.completed_at},
         {"latency_ms", r.latency_ms},       {"input_tokens", r.input_tokens},
         {"output_tokens", r.output_tokens}};
}

inline void from_json(const nlohmann::json& j, JournalRecord& r) {
    r.procedure_id = j.at("procedure_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.variant = j.value("variant", "");
    r.prompt_digest = j.at("prompt_digest").get<std::string>();
    r.response_text = j.at("response_text").get<std::string>();
    r.refused = j.value("refused", false);
    r.url_matched = j.value("url_matched", false);
    r.backend = j.value("backend", "");
    r.backend_fingerprint = j.value("backend_fingerprint", "");
    r.model_id = j.value("model_id", "");
    r.requested_at = j.value("requested_at", "");
    r.completed_at = j.value("completed_at", "");
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    r.input_tokens = j.value("input_tokens", std::size_t{0});
    r.output_tokens = j.value("output_tokens", std::size_t{0});
}

/// Append-only JSONL audit log of every dispatched request. Appends are
/// serialized and flushed per record.
class Journal {
public:
    explicit Journal(std::filesystem::path path) : path_(std::move(path)) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        drop_torn_tail();
        out_.open(path_, std::ios::binary | std::ios::app);
        if (!out_) throw Error("cannot open journal " + path_.string());
    }

    void append(const JournalRecord& record) {
        std::string line = nlohmann::json(record).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        std::lock_guard lock(mu_);
        out_ << line << '\n';
        out_.flush();
    }

    const std::filesystem::path& path() const noexcept { return path_; }

    /// Records of an existing journal; a truncated final line is ignored.
    static std::vector<JournalRecord> read(const std::filesystem::path& path) {
        std::vector<JournalRecord> out;
        if (!std::filesystem::exists(path)) return out;
        std::ifstream in(path, std::ios::binary);
        std::string line;
        while (std::getline(in, line)) {
            if (text::normalize_whitespace(line).empty()) continue;
            try {
                out.push_back(nlohmann::json::parse(line).get<JournalRecord>());
            } catch (const nlohmann::json::exception&) {
                if (in.peek() == std::char_traits<char>::eof()) break;  // torn tail from an interrupted run
                throw ParseError("corrupt journal record in " + path.string());
            }
        }
        return out;
    }

private:
    // An interrupted run can leave a partial last line; appending after it
    // would glue the next record onto it.
    void drop_torn_tail() const {
        if (!std::filesystem::exists(path_)) return;
        const std::string bytes = text::read_file(path_);
        if (bytes.empty() || bytes.back() == '\n') return;
        const auto cut = bytes.find_last_of('\n');
        std::filesystem::resize_file(path_, cut == std::string::npos ? 0 : cut + 1);
    }

    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

/// Serves responses from a recorded journal by prompt digest. Never touches
/// the network.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(const std::vector<JournalRecord>& records) {
        for (const auto& r : records) by_digest_.insert_or_assign(r.prompt_digest, r);
    }
    static ReplayBackend from_file(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) throw Error("replay journal not found: " + path.string());
        return ReplayBackend(Journal::read(path));
    }

    std::string name() const override { return "replay"; }

    LlmResponse complete(const LlmRequest& request) override {
        auto digest = text::sha256_hex(request.prompt_text);
        auto it = by_digest_.find(digest);
        if (it == by_digest_.end()) throw Error("replay journal has no record for prompt digest " + digest);
        LlmResponse r;
        r.text = it->second.response_text;
        r.refused = it->second.refused;
        r.backend_fingerprint = it->second.backend_fingerprint;
        r.input_tokens = it->second.input_tokens;
        r.output_tokens = it->second.output_tokens;
        return r;
    }

private:
    std::unordered_map<std::string, JournalRecord> by_digest_;
};

struct QueryOptions {
    std::size_t context_window_tokens = kDefaultContextWindowTokens;
};

/// Validates size, dispatches, and measures latency.
inline LlmResponse query(const LlmRequest& request, ChatBackend& backend, const QueryOptions& options = {}) {
    auto estimate = estimate_prompt_tokens(request.prompt_text);
    if (estimate + request.max_response_tokens > options.context_window_tokens) {
        throw ContractError("prompt of ~" + std::to_string(estimate) + " tokens plus " +
                            std::to_string(request.max_response_tokens) + " response tokens exceeds the " +
                            std::to_string(options.context_window_tokens) + "-token context window");
    }
    auto start = std::chrono::steady_clock::now();
    LlmResponse r = backend.complete(request);
    r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    if (r.text.empty()) r.refused = true;
    return r;
}

}  // namespace ttp
