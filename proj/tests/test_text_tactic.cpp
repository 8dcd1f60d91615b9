#include <regex>
#include <set>

#include <gtest/gtest.h>

#include "support/rng.hpp"
#include "ttp/tactic.hpp"
#include "ttp/text.hpp"

using namespace ttp;
using ttp::testing::Rng;

TEST(Text, TokenizeLowercasesAlnumRuns) {
    EXPECT_EQ(text::tokenize("Hello, World-42!x"), (std::vector<std::string>{"hello", "world", "42", "x"}));
    EXPECT_TRUE(text::tokenize("  ...  ").empty());
    EXPECT_EQ(text::tokenize("procdump64.exe"), (std::vector<std::string>{"procdump64", "exe"}));
}

TEST(Text, Fnv1aKnownVectors) {
    // published FNV-1a 64 test vectors
    EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
    EXPECT_EQ(text::fnv1a64("foobar"), 0x85944171f73967e8ull);
    EXPECT_EQ(text::to_hex(0xaf63dc4c8601ec8cull), "af63dc4c8601ec8c");
}

TEST(Text, Sha256KnownVector) {
    EXPECT_EQ(text::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, StripCitations) {
    EXPECT_EQ(text::strip_citations("[APT39](https://attack.mitre.org/groups/G0087) has used "
                                    "[Mimikatz](https://attack.mitre.org/software/S0002) to dump credentials."
                                    "(Citation: FireEye APT39 Jan 2019)(Citation: BitDefender Chafer May 2020)"),
              "APT39 has used Mimikatz to dump credentials.");
    EXPECT_EQ(text::strip_citations("It runs <code>whoami</code>  twice. [1][2]"), "It runs whoami twice.");
    EXPECT_EQ(text::strip_citations("Keeps [brackets] and [3] mid-sentence."), "Keeps [brackets] and [3] mid-sentence.");
    EXPECT_EQ(text::strip_citations(""), "");
}

TEST(Text, CodepointOffsets) {
    auto o = text::codepoint_offsets("a\xC3\xA9z");  // a é z
    EXPECT_EQ(o, (std::vector<std::size_t>{0, 1, 3, 4}));
}

TEST(Tactic, FourteenDistinctNamesAndSlugs) {
    std::set<std::string> names, slugs;
    for (Tactic t : kAllTactics) {
        names.emplace(canonical_name(t));
        slugs.insert(slug(t));
        EXPECT_EQ(tactic_from_name(canonical_name(t)), t);
        EXPECT_EQ(tactic_from_slug(slug(t)), t);
    }
    EXPECT_EQ(names.size(), 14u);
    EXPECT_EQ(slugs.size(), 14u);
    EXPECT_EQ(slug(Tactic::CommandAndControl), "command-and-control");
    EXPECT_EQ(slug(Tactic::ResourceDevelopment), "resource-development");
}

TEST(Tactic, RowOrderIsAlphabetical) {
    for (std::size_t i = 1; i < kTacticCount; ++i)
        EXPECT_LT(canonical_name(kAllTactics[i - 1]), canonical_name(kAllTactics[i]));
    EXPECT_EQ(table_label(Tactic::CommandAndControl), "C2");
    EXPECT_EQ(table_label(Tactic::ResourceDevelopment), "Res. Development");
}

TEST(Tactic, AliasTableHasOnlyC2) {
    std::size_t n = 0;
    for (Tactic t : kAllTactics) n += shorthand_aliases(t).size();
    EXPECT_EQ(n, 1u);
    ASSERT_EQ(shorthand_aliases(Tactic::CommandAndControl).size(), 1u);
    EXPECT_EQ(shorthand_aliases(Tactic::CommandAndControl)[0], "C2");
}

TEST(TacticFilter, SpecExamples) {
    EXPECT_TRUE(contains_tactic_name("maintains persistence via registry keys"));
    EXPECT_FALSE(contains_tactic_name(
        "Threat Group-3390 has performed DLL search order hijacking to execute their payload."));
    EXPECT_FALSE(contains_tactic_name("used C2 channels"));
}

TEST(TacticFilter, Boundaries) {
    EXPECT_TRUE(contains_tactic_name("Defense Evasion"));
    EXPECT_TRUE(contains_tactic_name("(privilege-escalation)"));
    EXPECT_TRUE(contains_tactic_name("command  and\tcontrol"));
    EXPECT_FALSE(contains_tactic_name("discoverys"));
    EXPECT_FALSE(contains_tactic_name("prediscovery"));
    EXPECT_FALSE(contains_tactic_name("impactful"));
    EXPECT_FALSE(contains_tactic_name("initial_access"));  // underscore is not a separator
    EXPECT_FALSE(contains_tactic_name("initialaccess"));
}

namespace {

// Oracle: the same whole-phrase rule written as a regular expression.
bool regex_contains(const std::string& hay, std::string_view phrase) {
    std::string pattern = "(^|[^A-Za-z0-9])";
    auto words = text::tokenize(phrase);
    for (std::size_t i = 0; i < words.size(); ++i) pattern += (i ? "[ \\t\\n\\r\\f\\v-]+" : "") + words[i];
    pattern += "($|[^A-Za-z0-9])";
    return std::regex_search(hay, std::regex(pattern, std::regex::icase));
}

}  // namespace

TEST(TacticFilter, MatchesRegexOracleOnRandomText) {
    Rng rng(20240101);
    const std::vector<std::string> parts = {"lateral", "Movement", "LATERAL", "movement", "-", " ", "  ",  "x",
                                            "command", "and",      "control", "C2",       ",", "discovery", "9",
                                            "Access",  "initial",  "credential", "_",     ".", "defense", "evasion"};
    for (int iter = 0; iter < 3000; ++iter) {
        std::string s;
        std::size_t n = rng.between(1, 12);
        for (std::size_t i = 0; i < n; ++i) s += rng.pick(parts);
        for (Tactic t : kAllTactics)
            ASSERT_EQ(contains_phrase(s, canonical_name(t)), regex_contains(s, canonical_name(t)))
                << "text: '" << s << "' tactic: " << canonical_name(t);
    }
}

TEST(TacticSet, SetAlgebraMatchesStdSet) {
    Rng rng(99);
    for (int iter = 0; iter < 500; ++iter) {
        TacticSet a, b;
        std::set<std::string> sa, sb;
        for (Tactic t : kAllTactics) {
            if (rng.chance(0.4)) a.insert(t), sa.emplace(canonical_name(t));
            if (rng.chance(0.4)) b.insert(t), sb.emplace(canonical_name(t));
        }
        std::set<std::string> inter, uni;
        std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(inter, inter.end()));
        std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::inserter(uni, uni.end()));
        EXPECT_EQ((a & b).size(), inter.size());
        EXPECT_EQ((a | b).size(), uni.size());
        auto names = (a | b).names();
        EXPECT_EQ(std::set<std::string>(names.begin(), names.end()), uni);
    }
}
