#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttp/error.hpp"
#include "ttp/tactic.hpp"
#include "ttp/text.hpp"

namespace ttp {

enum class DescriptionKind { Tactic, Technique, Subtechnique };

inline std::string_view to_string(DescriptionKind k) {
    switch (k) {
        case DescriptionKind::Tactic: return "tactic";
        case DescriptionKind::Technique: return "technique";
        case DescriptionKind::Subtechnique: return "subtechnique";
    }
    return "?";
}

inline DescriptionKind description_kind_from_string(std::string_view s) {
    if (s == "tactic") return DescriptionKind::Tactic;
    if (s == "technique") return DescriptionKind::Technique;
    if (s == "subtechnique") return DescriptionKind::Subtechnique;
    throw ParseError("unknown description kind '" + std::string(s) + "'");
}

struct LabeledDescription {
    std::string attack_id;
    std::string name;
    DescriptionKind kind = DescriptionKind::Technique;
    std::string description_text;
    TacticSet tactic_labels;
    std::string url;

    bool operator==(const LabeledDescription&) const = default;
};

struct ProcedureExample {
    std::string procedure_id;
    std::string actor_name;
    std::string text;
    std::string technique_attack_id;
    TacticSet gold_tactics;
    std::string url;

    bool operator==(const ProcedureExample&) const = default;
};

struct CorpusStats {
    std::size_t n_descriptions = 0;
    std::size_t n_procedures = 0;
    std::size_t support_total = 0;
    std::array<std::size_t, kTacticCount> per_tactic_support{};
};

using OverlapMatrix = std::array<std::array<std::size_t, kTacticCount>, kTacticCount>;

/// Parsed enterprise knowledge snapshot. Revoked and deprecated objects are
/// already removed. Immutable after parse_snapshot returns.
struct Corpus {
    struct TacticEntry {
        std::string stix_id;
        std::string attack_id;
        Tactic tactic;
        std::string description;
        std::string url;
    };
    struct Technique {
        std::string stix_id;
        std::string attack_id;
        std::string name;
        bool is_subtechnique = false;
        std::string description;
        std::string url;
        TacticSet tactics;
    };
    struct ProcedureRelation {
        std::string relationship_id;
        std::string actor_name;
        std::size_t technique = 0;  // index into techniques
        std::string description;
    };

    std::string version_tag;
    std::vector<TacticEntry> tactics;
    std::vector<Technique> techniques;
    std::vector<ProcedureRelation> procedures;
};

namespace detail {

inline bool flag(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    return it != obj.end() && it->is_boolean() && it->get<bool>();
}

inline const std::string* string_field(const nlohmann::json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) return nullptr;
    return it->get_ptr<const std::string*>();
}

inline std::string required_string(const nlohmann::json& obj, const char* key, const std::string& id) {
    const auto* v = string_field(obj, key);
    if (!v) throw ParseError(std::string("missing or non-string field '") + key + "'", id);
    return *v;
}

/// (external_id, url) from the "mitre-attack" external reference.
inline std::pair<std::string, std::string> attack_reference(const nlohmann::json& obj, const std::string& id) {
    auto refs = obj.find("external_references");
    if (refs != obj.end() && refs->is_array()) {
        for (const auto& ref : *refs) {
            const auto* source = string_field(ref, "source_name");
            if (!source || *source != "mitre-attack") continue;
            const auto* ext = string_field(ref, "external_id");
            const auto* url = string_field(ref, "url");
            if (!ext || !url) throw ParseError("mitre-attack reference lacks external_id or url", id);
            return {*ext, *url};
        }
    }
    throw ParseError("no mitre-attack external reference", id);
}

inline bool is_actor_type(std::string_view type) {
    return type == "intrusion-set" || type == "malware" || type == "tool" || type == "campaign";
}

}  // namespace detail

/// Parses a STIX 2.x ATT&CK enterprise bundle.
inline Corpus parse_snapshot(std::string_view raw_bundle, std::string version_tag) {
    using nlohmann::json;
    if (raw_bundle.empty()) throw ParseError("empty bundle");
    json bundle;
    try {
        bundle = json::parse(raw_bundle);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("bundle is not valid JSON: ") + e.what());
    }
    if (!bundle.is_object()) throw ParseError("bundle root is not an object");
    const auto* type = detail::string_field(bundle, "type");
    std::string bundle_id = detail::string_field(bundle, "id") ? *detail::string_field(bundle, "id") : "";
    if (!type || *type != "bundle") throw ParseError("root object is not a STIX bundle", bundle_id);
    auto objects = bundle.find("objects");
    if (objects == bundle.end() || !objects->is_array()) throw ParseError("bundle has no objects array", bundle_id);
    if (objects->empty()) throw ParseError("bundle contains no objects", bundle_id);

    Corpus corpus;
    corpus.version_tag = std::move(version_tag);

    std::unordered_map<std::string, std::size_t> technique_by_id;
    std::unordered_map<std::string, std::string> actor_names;
    std::unordered_set<std::string> excluded;  // revoked or deprecated ids
    std::vector<const json*> relationships;
    std::array<bool, kTacticCount> tactic_seen{};

    for (std::size_t i = 0; i < objects->size(); ++i) {
        const json& obj = (*objects)[i];
        if (!obj.is_object()) throw ParseError("object #" + std::to_string(i) + " is not a JSON object");
        const auto* id_ptr = detail::string_field(obj, "id");
        if (!id_ptr) throw ParseError("object #" + std::to_string(i) + " has no id");
        const std::string& id = *id_ptr;
        const std::string obj_type = detail::required_string(obj, "type", id);
        const bool dropped = detail::flag(obj, "revoked") || detail::flag(obj, "x_mitre_deprecated");

        if (obj_type == "relationship") {
            if (dropped) continue;
            relationships.push_back(&obj);
            continue;
        }
        if (dropped) {
            excluded.insert(id);
            continue;
        }
        if (obj_type == "x-mitre-tactic") {
            std::string name = detail::required_string(obj, "name", id);
            auto tactic = tactic_from_name(name);
            if (!tactic) throw ParseError("unknown tactic '" + name + "'", id);
            if (tactic_seen[index_of(*tactic)]) throw ParseError("duplicate tactic '" + name + "'", id);
            tactic_seen[index_of(*tactic)] = true;
            auto [ext, url] = detail::attack_reference(obj, id);
            corpus.tactics.push_back({id, ext, *tactic, detail::required_string(obj, "description", id), url});
        } else if (obj_type == "attack-pattern") {
            Corpus::Technique tech;
            tech.stix_id = id;
            tech.name = detail::required_string(obj, "name", id);
            tech.description = detail::required_string(obj, "description", id);
            std::tie(tech.attack_id, tech.url) = detail::attack_reference(obj, id);
            tech.is_subtechnique = detail::flag(obj, "x_mitre_is_subtechnique");
            if (auto phases = obj.find("kill_chain_phases"); phases != obj.end()) {
                if (!phases->is_array()) throw ParseError("kill_chain_phases is not an array", id);
                for (const auto& phase : *phases) {
                    std::string phase_name = detail::required_string(phase, "phase_name", id);
                    auto t = tactic_from_slug(phase_name);
                    if (!t) throw ParseError("unknown kill-chain phase '" + phase_name + "'", id);
                    tech.tactics.insert(*t);
                }
            }
            if (technique_by_id.contains(id)) throw ParseError("duplicate attack-pattern id", id);
            technique_by_id.emplace(id, corpus.techniques.size());
            corpus.techniques.push_back(std::move(tech));
        } else if (detail::is_actor_type(obj_type)) {
            actor_names.emplace(id, detail::required_string(obj, "name", id));
        }
    }

    for (const json* rel_ptr : relationships) {
        const json& rel = *rel_ptr;
        const std::string id = *detail::string_field(rel, "id");
        if (detail::required_string(rel, "relationship_type", id) != "uses") continue;
        const std::string source = detail::required_string(rel, "source_ref", id);
        const std::string target = detail::required_string(rel, "target_ref", id);
        if (!target.starts_with("attack-pattern--")) continue;
        auto source_type = std::string_view(source).substr(0, source.find("--"));
        if (!detail::is_actor_type(source_type)) continue;
        if (excluded.contains(source) || excluded.contains(target)) continue;
        auto tech = technique_by_id.find(target);
        if (tech == technique_by_id.end()) throw ParseError("relationship targets unknown technique " + target, id);
        auto actor = actor_names.find(source);
        if (actor == actor_names.end()) throw ParseError("relationship source " + source + " not in bundle", id);
        const auto* description = detail::string_field(rel, "description");
        if (!description) continue;
        corpus.procedures.push_back({id, actor->second, tech->second, *description});
    }
    return corpus;
}

inline std::string clean_description(std::string_view raw) { return text::strip_citations(raw); }

/// Tactics, techniques and sub-techniques as multi-label training records,
/// ordered by attack_id.
inline std::vector<LabeledDescription> curate_finetune_set(const Corpus& corpus) {
    std::vector<LabeledDescription> out;
    std::vector<std::string> unmapped;
    for (const auto& t : corpus.tactics) {
        out.push_back({t.attack_id, std::string(canonical_name(t.tactic)), DescriptionKind::Tactic,
                       clean_description(t.description), TacticSet{t.tactic}, t.url});
    }
    for (const auto& tech : corpus.techniques) {
        if (tech.tactics.empty()) {
            unmapped.push_back(tech.attack_id);
            continue;
        }
        out.push_back({tech.attack_id, tech.name,
                       tech.is_subtechnique ? DescriptionKind::Subtechnique : DescriptionKind::Technique,
                       clean_description(tech.description), tech.tactics, tech.url});
    }
    if (!unmapped.empty()) {
        std::sort(unmapped.begin(), unmapped.end());
        std::string ids;
        for (const auto& id : unmapped) ids += (ids.empty() ? "" : ", ") + id;
        throw ContractError("techniques without tactic mappings: " + ids);
    }
    for (const auto& d : out)
        if (d.description_text.empty()) throw ParseError("empty description", d.attack_id);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.attack_id < b.attack_id; });
    return out;
}

inline std::string procedure_id_for(std::string_view relationship_id) {
    return text::to_hex(text::fnv1a64(relationship_id));
}

/// Procedure examples whose cleaned sentence names no tactic, ordered by
/// procedure_id.
inline std::vector<ProcedureExample> curate_procedures(const Corpus& corpus) {
    std::vector<ProcedureExample> out;
    out.reserve(corpus.procedures.size());
    for (const auto& rel : corpus.procedures) {
        const auto& tech = corpus.techniques.at(rel.technique);
        if (tech.tactics.empty()) continue;
        std::string sentence = clean_description(rel.description);
        if (sentence.empty() || contains_tactic_name(sentence)) continue;
        out.push_back({procedure_id_for(rel.relationship_id), rel.actor_name, std::move(sentence), tech.attack_id,
                       tech.tactics, tech.url});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.procedure_id < b.procedure_id; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].procedure_id == out[i - 1].procedure_id)
            throw Error("procedure id collision on " + out[i].procedure_id);
    return out;
}

inline CorpusStats corpus_stats(std::size_t n_descriptions, const std::vector<ProcedureExample>& procedures) {
    CorpusStats s;
    s.n_descriptions = n_descriptions;
    s.n_procedures = procedures.size();
    for (const auto& p : procedures)
        for (Tactic t : p.gold_tactics.members()) {
            ++s.per_tactic_support[index_of(t)];
            ++s.support_total;
        }
    return s;
}

/// Symmetric co-occurrence counts; the diagonal holds per-tactic support.
inline OverlapMatrix tactic_overlap_matrix(const std::vector<ProcedureExample>& procedures) {
    OverlapMatrix m{};
    for (const auto& p : procedures) {
        auto members = p.gold_tactics.members();
        for (Tactic a : members)
            for (Tactic b : members) ++m[index_of(a)][index_of(b)];
    }
    return m;
}

}  // namespace ttp
