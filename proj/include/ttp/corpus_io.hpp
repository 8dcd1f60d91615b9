#pragma once

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttp/corpus.hpp"
#include "ttp/error.hpp"
#include "ttp/text.hpp"

namespace ttp {

inline nlohmann::json tactics_to_json(TacticSet s) { return s.names(); }

inline TacticSet tactics_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ParseError("tactic list is not an array");
    TacticSet s;
    for (const auto& v : j) {
        if (!v.is_string()) throw ParseError("tactic name is not a string");
        auto t = tactic_from_name(v.get<std::string>());
        if (!t) throw ParseError("unknown tactic '" + v.get<std::string>() + "'");
        s.insert(*t);
    }
    return s;
}

inline void to_json(nlohmann::json& j, const LabeledDescription& d) {
    j = {{"attack_id", d.attack_id},     {"name", d.name},
         {"kind", to_string(d.kind)},    {"description_text", d.description_text},
         {"tactic_labels", tactics_to_json(d.tactic_labels)}, {"url", d.url}};
}

inline void from_json(const nlohmann::json& j, LabeledDescription& d) {
    d.attack_id = j.at("attack_id").get<std::string>();
    d.name = j.at("name").get<std::string>();
    d.kind = description_kind_from_string(j.at("kind").get<std::string>());
    d.description_text = j.at("description_text").get<std::string>();
    d.tactic_labels = tactics_from_json(j.at("tactic_labels"));
    d.url = j.at("url").get<std::string>();
}

inline void to_json(nlohmann::json& j, const ProcedureExample& p) {
    j = {{"procedure_id", p.procedure_id}, {"actor_name", p.actor_name},
         {"text", p.text},                 {"technique_attack_id", p.technique_attack_id},
         {"gold_tactics", tactics_to_json(p.gold_tactics)}, {"url", p.url}};
}

inline void from_json(const nlohmann::json& j, ProcedureExample& p) {
    p.procedure_id = j.at("procedure_id").get<std::string>();
    p.actor_name = j.at("actor_name").get<std::string>();
    p.text = j.at("text").get<std::string>();
    p.technique_attack_id = j.at("technique_attack_id").get<std::string>();
    p.gold_tactics = tactics_from_json(j.at("gold_tactics"));
    p.url = j.at("url").get<std::string>();
}

inline std::string dump_line(const nlohmann::json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

template <typename T>
std::string to_jsonl(const std::vector<T>& records) {
    std::string out;
    for (const auto& r : records) {
        out += dump_line(nlohmann::json(r));
        out += '\n';
    }
    return out;
}

template <typename T>
std::vector<T> from_jsonl(std::string_view bytes, const std::string& source = "jsonl") {
    std::vector<T> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        auto end = bytes.find('\n', pos);
        if (end == std::string_view::npos) end = bytes.size();
        auto line = bytes.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (text::normalize_whitespace(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<T>());
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(source + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
std::vector<T> load_jsonl(const std::filesystem::path& path) {
    return from_jsonl<T>(text::read_file(path), path.string());
}

inline std::string overlap_csv(const OverlapMatrix& m) {
    std::ostringstream out;
    for (std::size_t i = 0; i < kTacticCount; ++i) out << (i ? "," : "") << slug(kAllTactics[i]);
    out << '\n';
    for (const auto& row : m) {
        for (std::size_t j = 0; j < kTacticCount; ++j) out << (j ? "," : "") << row[j];
        out << '\n';
    }
    return out.str();
}

inline nlohmann::json stats_to_json(const CorpusStats& s) {
    nlohmann::json per = nlohmann::json::object();
    for (Tactic t : kAllTactics) per[std::string(canonical_name(t))] = s.per_tactic_support[index_of(t)];
    return {{"n_descriptions", s.n_descriptions},
            {"n_procedures", s.n_procedures},
            {"support_total", s.support_total},
            {"per_tactic_support", per}};
}

}  // namespace ttp
