#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttp/corpus_io.hpp"
#include "ttp/prompt.hpp"
#include "ttp/retrieval.hpp"
#include "ttp/tactic.hpp"

namespace ttp {

/// Keyword search over a model response: canonical names as whole phrases
/// (spaces and hyphens interchangeable) plus registered aliases as whole
/// words. Paraphrases are not matched.
inline TacticSet extract_tactics(std::string_view response) {
    TacticSet out = tactic_names_in(response);
    for (Tactic t : kAllTactics)
        for (auto alias : shorthand_aliases(t))
            if (contains_phrase(response, alias)) out.insert(t);
    return out;
}

/// Where a prediction came from: one of the retrieval modes, or the
/// baseline classifier.
enum class PredictionMode { PromptOnly, ExactUrl, SimilarProcedures, Baseline };

inline PredictionMode to_prediction_mode(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::PromptOnly: return PredictionMode::PromptOnly;
        case RetrievalMode::ExactUrl: return PredictionMode::ExactUrl;
        case RetrievalMode::SimilarProcedures: return PredictionMode::SimilarProcedures;
    }
    return PredictionMode::PromptOnly;
}

inline std::string_view to_string(PredictionMode m) {
    switch (m) {
        case PredictionMode::PromptOnly: return "prompt-only";
        case PredictionMode::ExactUrl: return "exact-url";
        case PredictionMode::SimilarProcedures: return "similar-procedures";
        case PredictionMode::Baseline: return "baseline";
    }
    return "?";
}

inline PredictionMode prediction_mode_from_string(std::string_view s) {
    if (s == "baseline") return PredictionMode::Baseline;
    return to_prediction_mode(retrieval_mode_from_string(s));
}

enum class PredictionStatus { Ok, ContextUnavailable, BackendError };

inline std::string_view to_string(PredictionStatus s) {
    switch (s) {
        case PredictionStatus::Ok: return "ok";
        case PredictionStatus::ContextUnavailable: return "context-unavailable";
        case PredictionStatus::BackendError: return "backend-error";
    }
    return "?";
}

inline PredictionStatus prediction_status_from_string(std::string_view s) {
    for (auto v : {PredictionStatus::Ok, PredictionStatus::ContextUnavailable, PredictionStatus::BackendError})
        if (to_string(v) == s) return v;
    throw ParseError("unknown prediction status '" + std::string(s) + "'");
}

struct Prediction {
    std::string procedure_id;
    PredictionMode mode = PredictionMode::PromptOnly;
    std::optional<PromptVariant> prompt_variant;  // empty for the baseline
    TacticSet predicted;
    std::string raw_response;
    bool url_matched = false;
    PredictionStatus status = PredictionStatus::Ok;

    /// True when the procedure actually received a prediction to score.
    bool scored() const noexcept { return status == PredictionStatus::Ok; }
    bool operator==(const Prediction&) const = default;
};

inline void to_json(nlohmann::json& j, const Prediction& p) {
    j = {{"procedure_id", p.procedure_id},
         {"mode", to_string(p.mode)},
         {"prompt_variant", p.prompt_variant ? nlohmann::json(to_string(*p.prompt_variant)) : nlohmann::json()},
         {"predicted", tactics_to_json(p.predicted)},
         {"raw_response", p.raw_response},
         {"url_matched", p.url_matched},
         {"status", to_string(p.status)}};
}

inline void from_json(const nlohmann::json& j, Prediction& p) {
    p.procedure_id = j.at("procedure_id").get<std::string>();
    p.mode = prediction_mode_from_string(j.at("mode").get<std::string>());
    const auto& v = j.at("prompt_variant");
    p.prompt_variant = v.is_null() ? std::nullopt : std::optional(prompt_variant_from_string(v.get<std::string>()));
    p.predicted = tactics_from_json(j.at("predicted"));
    p.raw_response = j.at("raw_response").get<std::string>();
    p.url_matched = j.at("url_matched").get<bool>();
    p.status = prediction_status_from_string(j.value("status", "ok"));
}

}  // namespace ttp
