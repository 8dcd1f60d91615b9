#pragma once

#include <string>
#include <string_view>

#include "ttp/error.hpp"
#include "ttp/retrieval.hpp"

namespace ttp {

enum class PromptVariant { SpecificNoContext, SpecificWithContext, GenericWithContext };

inline std::string_view to_string(PromptVariant v) {
    switch (v) {
        case PromptVariant::SpecificNoContext: return "specific-no-context";
        case PromptVariant::SpecificWithContext: return "specific-with-context";
        case PromptVariant::GenericWithContext: return "generic-with-context";
    }
    return "?";
}

inline PromptVariant prompt_variant_from_string(std::string_view s) {
    for (auto v : {PromptVariant::SpecificNoContext, PromptVariant::SpecificWithContext,
                   PromptVariant::GenericWithContext})
        if (to_string(v) == s) return v;
    throw ContractError("unknown prompt variant '" + std::string(s) + "'");
}

inline bool needs_context(PromptVariant v) { return v != PromptVariant::SpecificNoContext; }

/// The variant a retrieval mode uses when none is requested.
inline PromptVariant default_variant(RetrievalMode m) {
    return m == RetrievalMode::PromptOnly ? PromptVariant::SpecificNoContext : PromptVariant::SpecificWithContext;
}

namespace prompt_text {
inline constexpr std::string_view kPersona = "You are a cybersecurity expert.";
inline constexpr std::string_view kConsider = " Consider the relevant context provided below and answer the question.";
inline constexpr std::string_view kContextLabel = "Relevant Context: ";
inline constexpr std::string_view kQuestionLabel = "Question: ";
inline constexpr std::string_view kSpecificQuestion =
    "what MITRE ATT&CK tactics will a cyber adversary achieve with this technique?";
inline constexpr std::string_view kGenericQuestion = "what will a cyber adversary achieve with this technique?";
inline constexpr std::string_view kCertainty = "Please only respond with the MITRE ATT&CK tactics you are certain about.";
}  // namespace prompt_text

/// Chunk texts in rank order separated by a blank line.
inline std::string join_context(const AssembledContext& ctx) {
    std::string out;
    for (std::size_t i = 0; i < ctx.chunks.size(); ++i) {
        if (i) out += "\n\n";
        out += ctx.chunks[i].text;
    }
    return out;
}

/// Renders one of the three prompt templates. Context variants require an
/// available retrieval context from a RAG mode.
inline std::string build_prompt(PromptVariant variant, std::string_view procedure_text,
                                const AssembledContext* context = nullptr) {
    using namespace prompt_text;
    std::string knowing = "Knowing that <<" + std::string(procedure_text) + ">>, ";
    if (variant == PromptVariant::SpecificNoContext) {
        return std::string(kPersona) + "\n\n" + knowing + std::string(kSpecificQuestion) + "\n\n" +
               std::string(kCertainty);
    }
    if (!context) throw ContractError(std::string(to_string(variant)) + " prompt requires a retrieval context");
    if (context->mode == RetrievalMode::PromptOnly)
        throw ContractError(std::string(to_string(variant)) + " prompt cannot use a prompt-only context");
    if (!context->available()) throw ContractError("retrieval context is unavailable");
    std::string out = std::string(kPersona) + std::string(kConsider) + "\n\n" + std::string(kContextLabel) +
                      join_context(*context) + "\n\n" + std::string(kQuestionLabel) + knowing;
    if (variant == PromptVariant::SpecificWithContext)
        out += std::string(kSpecificQuestion) + "\n\n" + std::string(kCertainty);
    else
        out += std::string(kGenericQuestion);
    return out;
}

inline std::string build_prompt(PromptVariant variant, const ProcedureExample& procedure,
                                const AssembledContext* context = nullptr) {
    return build_prompt(variant, procedure.text, context);
}

/// The text between "Relevant Context: " and the "Question: " line, if the
/// prompt has a context block.
inline std::optional<std::string_view> relevant_context_block(std::string_view prompt) {
    using namespace prompt_text;
    auto start = prompt.find(std::string("\n\n") + std::string(kContextLabel));
    if (start == std::string_view::npos) return std::nullopt;
    start += 2 + kContextLabel.size();
    auto end = prompt.rfind(std::string("\n\n") + std::string(kQuestionLabel));
    if (end == std::string_view::npos || end < start) return std::nullopt;
    return prompt.substr(start, end - start);
}

}  // namespace ttp
