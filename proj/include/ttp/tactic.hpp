#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ttp/text.hpp"

namespace ttp {

/// The 14 enterprise ATT&CK tactics, in alphabetical order of canonical name
/// (which is also the row order of the per-tactic report tables).
enum class Tactic : std::uint8_t {
    Collection,
    CommandAndControl,
    CredentialAccess,
    DefenseEvasion,
    Discovery,
    Execution,
    Exfiltration,
    Impact,
    InitialAccess,
    LateralMovement,
    Persistence,
    PrivilegeEscalation,
    Reconnaissance,
    ResourceDevelopment,
};

inline constexpr std::size_t kTacticCount = 14;

inline constexpr std::array<Tactic, kTacticCount> kAllTactics = {
    Tactic::Collection,      Tactic::CommandAndControl,  Tactic::CredentialAccess,
    Tactic::DefenseEvasion,  Tactic::Discovery,          Tactic::Execution,
    Tactic::Exfiltration,    Tactic::Impact,             Tactic::InitialAccess,
    Tactic::LateralMovement, Tactic::Persistence,        Tactic::PrivilegeEscalation,
    Tactic::Reconnaissance,  Tactic::ResourceDevelopment,
};

namespace detail {

inline constexpr std::array<std::string_view, kTacticCount> kCanonicalNames = {
    "Collection",      "Command and Control",  "Credential Access",
    "Defense Evasion", "Discovery",            "Execution",
    "Exfiltration",    "Impact",               "Initial Access",
    "Lateral Movement", "Persistence",         "Privilege Escalation",
    "Reconnaissance",  "Resource Development",
};

// Row labels used by the published per-tactic tables.
inline constexpr std::array<std::string_view, kTacticCount> kTableLabels = {
    "Collection",      "C2",          "Credential Access", "Defense Evasion", "Discovery",
    "Execution",       "Exfiltration", "Impact",           "Initial Access",  "Lateral Movement",
    "Persistence",     "Privilege Escalation", "Reconnaissance", "Res. Development",
};

}  // namespace detail

constexpr std::size_t index_of(Tactic t) noexcept { return static_cast<std::size_t>(t); }

constexpr std::string_view canonical_name(Tactic t) noexcept { return detail::kCanonicalNames[index_of(t)]; }

constexpr std::string_view table_label(Tactic t) noexcept { return detail::kTableLabels[index_of(t)]; }

/// Lowercase, spaces to hyphens: "Command and Control" -> "command-and-control".
inline std::string slug(Tactic t) {
    std::string out;
    for (char c : canonical_name(t)) out.push_back(c == ' ' ? '-' : text::ascii_lower(c));
    return out;
}

/// Whole-word shorthand aliases recognized when reading model output.
inline std::vector<std::string_view> shorthand_aliases(Tactic t) {
    if (t == Tactic::CommandAndControl) return {"C2"};
    return {};
}

inline std::optional<Tactic> tactic_from_name(std::string_view name) {
    for (Tactic t : kAllTactics)
        if (text::to_lower(canonical_name(t)) == text::to_lower(name)) return t;
    return std::nullopt;
}

inline std::optional<Tactic> tactic_from_slug(std::string_view s) {
    for (Tactic t : kAllTactics)
        if (slug(t) == s) return t;
    return std::nullopt;
}

/// Value-type set of tactics backed by a 14-bit mask. Iterates in enum order.
class TacticSet {
public:
    constexpr TacticSet() = default;
    constexpr TacticSet(std::initializer_list<Tactic> ts) {
        for (Tactic t : ts) insert(t);
    }

    static constexpr TacticSet from_bits(std::uint16_t bits) noexcept {
        TacticSet s;
        s.bits_ = bits & kMask;
        return s;
    }

    constexpr void insert(Tactic t) noexcept { bits_ |= bit(t); }
    constexpr void erase(Tactic t) noexcept { bits_ &= static_cast<std::uint16_t>(~bit(t)); }
    constexpr bool contains(Tactic t) const noexcept { return (bits_ & bit(t)) != 0; }
    constexpr bool empty() const noexcept { return bits_ == 0; }
    constexpr std::size_t size() const noexcept { return static_cast<std::size_t>(std::popcount(bits_)); }
    constexpr std::uint16_t bits() const noexcept { return bits_; }

    constexpr TacticSet operator&(TacticSet o) const noexcept { return from_bits(bits_ & o.bits_); }
    constexpr TacticSet operator|(TacticSet o) const noexcept { return from_bits(bits_ | o.bits_); }
    constexpr TacticSet& operator|=(TacticSet o) noexcept {
        bits_ |= o.bits_;
        return *this;
    }
    constexpr bool operator==(const TacticSet&) const = default;

    std::vector<Tactic> members() const {
        std::vector<Tactic> out;
        for (Tactic t : kAllTactics)
            if (contains(t)) out.push_back(t);
        return out;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (Tactic t : members()) out.emplace_back(canonical_name(t));
        return out;
    }

private:
    static constexpr std::uint16_t kMask = (1u << kTacticCount) - 1;
    static constexpr std::uint16_t bit(Tactic t) noexcept {
        return static_cast<std::uint16_t>(1u << index_of(t));
    }
    std::uint16_t bits_ = 0;
};

/// Joins canonical names with ", " in enum order.
inline std::string join_names(TacticSet s) {
    std::string out;
    for (Tactic t : s.members()) {
        if (!out.empty()) out += ", ";
        out += canonical_name(t);
    }
    return out;
}

/// Case-insensitive phrase search. Words of `phrase` must appear in order,
/// separated in `haystack` by one or more spaces or hyphens, with a
/// non-alphanumeric character (or string edge) on both outer ends.
inline bool contains_phrase(std::string_view haystack, std::string_view phrase) {
    auto words = text::tokenize(phrase);
    if (words.empty()) return false;
    const std::size_t n = haystack.size();
    auto word_at = [&](std::size_t pos, const std::string& w) {
        if (pos + w.size() > n) return false;
        for (std::size_t k = 0; k < w.size(); ++k)
            if (text::ascii_lower(haystack[pos + k]) != w[k]) return false;
        return true;
    };
    auto is_sep = [](char c) { return text::is_space(c) || c == '-'; };
    for (std::size_t start = 0; start < n; ++start) {
        if (start > 0 && text::is_ascii_alnum(haystack[start - 1])) continue;
        std::size_t pos = start;
        bool ok = true;
        for (std::size_t w = 0; w < words.size() && ok; ++w) {
            if (w > 0) {
                std::size_t sep_start = pos;
                while (pos < n && is_sep(haystack[pos])) ++pos;
                if (pos == sep_start) ok = false;
            }
            if (ok && word_at(pos, words[w])) pos += words[w].size();
            else ok = false;
        }
        if (ok && (pos == n || !text::is_ascii_alnum(haystack[pos]))) return true;
    }
    return false;
}

/// True iff any canonical tactic name occurs in `text` as a whole phrase.
/// Aliases are not consulted.
inline bool contains_tactic_name(std::string_view text) {
    for (Tactic t : kAllTactics)
        if (contains_phrase(text, canonical_name(t))) return true;
    return false;
}

/// Every tactic whose canonical name occurs as a whole phrase.
inline TacticSet tactic_names_in(std::string_view text) {
    TacticSet out;
    for (Tactic t : kAllTactics)
        if (contains_phrase(text, canonical_name(t))) out.insert(t);
    return out;
}

}  // namespace ttp
