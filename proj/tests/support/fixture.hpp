#pragma once

// Synthetic ATT&CK-shaped STIX bundles and technique pages for tests.

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/rng.hpp"
#include "ttp/corpus.hpp"
#include "ttp/page_cache.hpp"
#include "ttp/tactic.hpp"

namespace ttp::testing {

namespace fs = std::filesystem;

inline std::string stix_id(std::string_view type, std::uint64_t n) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%08llx-0000-4000-8000-%012llx", static_cast<unsigned long long>(n >> 16),
                  static_cast<unsigned long long>(n & 0xFFFFFFFFFFFFull));
    return std::string(type) + "--" + buf;
}

inline std::string technique_url(const std::string& attack_id) {
    auto dot = attack_id.find('.');
    if (dot == std::string::npos) return "https://attack.mitre.org/techniques/" + attack_id + "/";
    return "https://attack.mitre.org/techniques/" + attack_id.substr(0, dot) + "/" + attack_id.substr(dot + 1) + "/";
}

inline std::string tactic_attack_id(Tactic t) {
    static const char* ids[] = {"TA0009", "TA0011", "TA0006", "TA0005", "TA0007", "TA0002", "TA0010",
                                "TA0040", "TA0001", "TA0008", "TA0003", "TA0004", "TA0043", "TA0042"};
    return ids[index_of(t)];
}

/// Builds a STIX 2.1 bundle object by object.
class BundleBuilder {
public:
    BundleBuilder() = default;

    BundleBuilder& add_tactics(const std::string& description_suffix = "") {
        for (Tactic t : kAllTactics) add_tactic(t, "The adversary is trying to reach the goal known as " +
                                                       std::string(canonical_name(t)) + "." + description_suffix);
        return *this;
    }

    std::string add_tactic(Tactic t, const std::string& description) {
        auto id = stix_id("x-mitre-tactic", ++counter_);
        objects_.push_back({{"type", "x-mitre-tactic"},
                            {"id", id},
                            {"name", canonical_name(t)},
                            {"x_mitre_shortname", slug(t)},
                            {"description", description},
                            {"external_references",
                             {{{"source_name", "mitre-attack"},
                               {"external_id", tactic_attack_id(t)},
                               {"url", "https://attack.mitre.org/tactics/" + tactic_attack_id(t) + "/"}}}}});
        return id;
    }

    std::string add_technique(const std::string& attack_id, const std::string& name, TacticSet tactics,
                              const std::string& description, bool revoked = false, bool deprecated = false) {
        auto id = stix_id("attack-pattern", ++counter_);
        nlohmann::json phases = nlohmann::json::array();
        for (Tactic t : tactics.members())
            phases.push_back({{"kill_chain_name", "mitre-attack"}, {"phase_name", slug(t)}});
        nlohmann::json obj = {{"type", "attack-pattern"},
                              {"id", id},
                              {"name", name},
                              {"description", description},
                              {"kill_chain_phases", phases},
                              {"x_mitre_is_subtechnique", attack_id.find('.') != std::string::npos},
                              {"external_references",
                               {{{"source_name", "mitre-attack"},
                                 {"external_id", attack_id},
                                 {"url", technique_url(attack_id)}},
                                {{"source_name", "Example Vendor"}, {"description", "reference"}}}}};
        if (revoked) obj["revoked"] = true;
        if (deprecated) obj["x_mitre_deprecated"] = true;
        objects_.push_back(obj);
        return id;
    }

    std::string add_actor(const std::string& type, const std::string& name, bool revoked = false) {
        auto id = stix_id(type, ++counter_);
        nlohmann::json obj = {{"type", type}, {"id", id}, {"name", name}};
        if (revoked) obj["revoked"] = true;
        objects_.push_back(obj);
        return id;
    }

    std::string add_use(const std::string& source, const std::string& target, const std::string& description) {
        auto id = stix_id("relationship", ++counter_);
        objects_.push_back({{"type", "relationship"},
                            {"id", id},
                            {"relationship_type", "uses"},
                            {"source_ref", source},
                            {"target_ref", target},
                            {"description", description}});
        return id;
    }

    void add_raw(nlohmann::json obj) { objects_.push_back(std::move(obj)); }

    nlohmann::json json() const {
        return {{"type", "bundle"}, {"id", "bundle--00000000-0000-4000-8000-000000000000"}, {"objects", objects_}};
    }
    std::string str() const { return json().dump(); }

private:
    std::uint64_t counter_ = 0;
    nlohmann::json objects_ = nlohmann::json::array();
};

/// Tokens that never form a tactic name, alone or next to each other.
inline const std::vector<std::string>& neutral_words() {
    static const std::vector<std::string> w = {
        "registry", "payload",  "beacon",    "loader",    "dropper",   "implant",  "scheduled", "service",
        "token",    "kernel",   "driver",    "archive",   "cipher",    "socket",   "proxy",     "tunnel",
        "script",   "macro",    "document",  "browser",   "cookie",    "keylogger", "screenshot", "clipboard",
        "mailbox",  "share",    "domain",    "account",   "password",  "hash",     "ticket",    "certificate",
        "firewall", "sandbox",  "debugger",  "process",   "thread",    "module",   "library",   "binary",
        "shellcode", "hollowing", "webshell", "backdoor", "rootkit",   "bootkit",  "firmware",  "cloud",
        "bucket",   "container", "cluster",  "pipeline",  "repository", "package", "installer", "updater",
        "certutil", "rundll32", "regsvr32",  "mshta",     "wmic",      "schtasks", "netsh",     "bitsadmin",
        "dns",      "http",     "smb",       "rdp",       "ssh",       "vpn",      "ldap",      "kerberos",
        "ntlm",     "lsass",    "sam",       "ntds",      "vault",     "keychain", "wallet",    "miner",
        "ransom",   "wiper",    "botnet",    "phish",     "lure",      "attachment", "link",    "portal"};
    return w;
}

inline std::string sentence(Rng& rng, const std::string& actor, std::size_t words) {
    std::string s = actor + " has used";
    for (std::size_t i = 0; i < words; ++i) s += " " + rng.pick(neutral_words());
    return s + ".";
}

inline std::string filler(Rng& rng, std::size_t chars) {
    std::string s;
    while (s.size() < chars) {
        s += rng.pick(neutral_words());
        s += (rng.chance(0.08) ? ".\n" : " ");
    }
    return s;
}

struct FixtureTechnique {
    std::string attack_id;
    std::string name;
    std::string url;
    TacticSet tactics;      // kill-chain mapping (gold)
    TacticSet page_listed;  // every tactic name that survives on the page
    std::string html;
};

struct FixtureProcedure {
    std::string relationship_id;
    std::string actor;
    std::string technique_attack_id;
    std::string raw_description;
    bool expect_kept = true;
};

/// A deterministic, self-consistent world: bundle bytes, raw HTML per
/// technique URL, and the ground truth the bundle was built from.
struct Fixture {
    std::string bundle;
    std::vector<FixtureTechnique> techniques;
    std::vector<FixtureProcedure> procedures;
    std::size_t expected_descriptions = 0;

    const FixtureTechnique& technique(const std::string& attack_id) const {
        for (const auto& t : techniques)
            if (t.attack_id == attack_id) return t;
        throw std::out_of_range(attack_id);
    }

    std::map<std::string, std::string> pages() const {
        std::map<std::string, std::string> m;
        for (const auto& t : techniques) m[t.url] = t.html;
        return m;
    }

    /// Seeds a page cache with the normalized text of every page.
    void fill_cache(PageCache& cache) const {
        for (const auto& t : techniques) cache.put(t.url, html_to_text(t.html), "2024-01-01T00:00:00.000Z");
    }
};

struct FixtureOptions {
    std::uint64_t seed = 7;
    std::size_t techniques = 12;
    std::size_t subtechniques = 6;
    std::size_t kept_procedures = 50;
    std::size_t filtered_procedures = 4;  // sentences naming a tactic
    double co_listing_rate = 0.5;         // chance a page also names a non-gold tactic
    std::size_t page_chars = 3000;        // body filler; keep under 3 chunks
};

/// Page in the shape of an ATT&CK technique page: navigation menu naming
/// every tactic (removed by normalization), a body, a "Tactics:" line, and
/// optionally a related-tactic mention that survives normalization.
inline std::string technique_html(Rng& rng, const std::string& name, const std::string& attack_id, TacticSet tactics,
                                  std::optional<Tactic> co_listed, std::size_t chars) {
    std::string nav;
    for (Tactic t : kAllTactics) nav += "<li><a href=\"#\">" + std::string(canonical_name(t)) + "</a></li>";
    std::string html = "<!DOCTYPE html><html><head><title>" + name +
                       "</title><style>.x{color:red}</style><script>var tactics=['Impact'];</script></head><body>";
    html += "<nav><ul>" + nav + "</ul></nav>";
    html += "<h1>" + name + "</h1><div class=\"card\">ID: " + attack_id + "</div>";
    html += "<div class=\"card\">Tactics: " + join_names(tactics) + "</div>";
    html += "<p>" + filler(rng, chars / 2) + "</p>";
    if (co_listed)
        html += "<p>Adversaries often follow this with steps toward " + std::string(canonical_name(*co_listed)) +
                ".</p>";
    html += "<p>" + filler(rng, chars / 2) + "</p>";
    html += "<footer><script>track('Exfiltration')</script></footer></body></html>";
    return html;
}

inline Fixture make_fixture(const FixtureOptions& opt = {}) {
    Rng rng(opt.seed);
    Fixture fx;
    BundleBuilder b;
    b.add_tactics();

    std::vector<std::string> technique_stix;
    auto add = [&](const std::string& attack_id) {
        TacticSet tactics;
        std::size_t k = rng.chance(0.3) ? rng.between(2, 3) : 1;
        while (tactics.size() < k) tactics.insert(kAllTactics[rng.below(kTacticCount)]);
        std::optional<Tactic> co;
        if (rng.chance(opt.co_listing_rate)) {
            Tactic t;
            do t = kAllTactics[rng.below(kTacticCount)];
            while (tactics.contains(t));
            co = t;
        }
        std::string name = "Synthetic " + rng.pick(neutral_words()) + " " + attack_id;
        FixtureTechnique ft{attack_id, name, technique_url(attack_id), tactics, tactics, {}};
        if (co) ft.page_listed.insert(*co);
        ft.html = technique_html(rng, name, attack_id, tactics, co, opt.page_chars);
        std::string desc = "Adversaries may abuse " + rng.pick(neutral_words()) + " and " +
                           rng.pick(neutral_words()) + " components.(Citation: Vendor " + attack_id + ")";
        technique_stix.push_back(b.add_technique(attack_id, name, tactics, desc));
        fx.techniques.push_back(std::move(ft));
    };
    for (std::size_t i = 0; i < opt.techniques; ++i) add("T" + std::to_string(1001 + i));
    for (std::size_t i = 0; i < opt.subtechniques; ++i)
        add("T" + std::to_string(1001 + i % opt.techniques) + "." + (i < 9 ? "00" : "0") + std::to_string(i + 1));
    fx.expected_descriptions = kTacticCount + fx.techniques.size();

    // Excluded objects: never counted, never targeted by kept procedures.
    auto revoked = b.add_technique("T1900", "Old Revoked", TacticSet{Tactic::Discovery}, "Revoked.", true);
    b.add_technique("T1901", "Old Deprecated", TacticSet{Tactic::Discovery}, "Deprecated.", false, true);

    std::vector<std::string> actors, actor_ids;
    const char* types[] = {"intrusion-set", "malware", "tool", "campaign"};
    const char* prefixes[] = {"APT", "Loader", "Kit", "C00"};
    for (int i = 0; i < 8; ++i) {
        actors.push_back(prefixes[i % 4] + std::to_string(10 + i));
        actor_ids.push_back(b.add_actor(types[i % 4], actors.back()));
    }
    for (std::size_t i = 0; i < opt.kept_procedures; ++i) {
        std::size_t t = rng.below(fx.techniques.size());
        std::size_t a = rng.below(actor_ids.size());
        const std::string& actor = actors[a];
        std::string raw = sentence(rng, actor, rng.between(4, 9)) + "(Citation: Report " + std::to_string(i) +
                          ")[" + std::to_string(i % 9 + 1) + "]";
        auto rel = b.add_use(actor_ids[a], technique_stix[t], raw);
        fx.procedures.push_back({rel, actor, fx.techniques[t].attack_id, raw, true});
    }
    for (std::size_t i = 0; i < opt.filtered_procedures; ++i) {
        std::size_t t = rng.below(fx.techniques.size());
        Tactic named = kAllTactics[rng.below(kTacticCount)];
        std::string raw = actors[0] + " has achieved " + text::to_lower(canonical_name(named)) + " with " +
                          rng.pick(neutral_words()) + ".";
        auto rel = b.add_use(actor_ids[0], technique_stix[t], raw);
        fx.procedures.push_back({rel, actors[0], fx.techniques[t].attack_id, raw, false});
    }
    // Relationships that must be ignored.
    b.add_use(actor_ids[1], revoked, "Targets a revoked technique.");
    b.add_raw({{"type", "relationship"},
               {"id", stix_id("relationship", 999999)},
               {"relationship_type", "mitigates"},
               {"source_ref", stix_id("course-of-action", 1)},
               {"target_ref", technique_stix[0]},
               {"description", "A mitigation."}});
    b.add_raw({{"type", "relationship"},
               {"id", stix_id("relationship", 999998)},
               {"relationship_type", "uses"},
               {"source_ref", actor_ids[2]},
               {"target_ref", technique_stix[0]}});  // no description
    fx.bundle = b.str();
    return fx;
}

}  // namespace ttp::testing
