#include <fstream>
#include <map>
#include <tuple>
#include <set>

#include <gtest/gtest.h>

#include "support/rng.hpp"
#include "support/tempdir.hpp"
#include "ttp/chat.hpp"
#include "ttp/prompt.hpp"

using namespace ttp;
using namespace ttp::testing;

namespace {

AssembledContext context_of(std::vector<std::string> texts, RetrievalMode mode = RetrievalMode::SimilarProcedures) {
    AssembledContext c;
    c.mode = mode;
    for (std::size_t i = 0; i < texts.size(); ++i) c.chunks.push_back({"u", i * 100, texts[i], 1.0 - 0.1 * i});
    return c;
}

class CountingBackend final : public ChatBackend {
public:
    std::string name() const override { return "counting"; }
    LlmResponse complete(const LlmRequest&) override {
        ++calls;
        LlmResponse r;
        r.text = reply;
        return r;
    }
    int calls = 0;
    std::string reply = "Discovery";
};

}  // namespace

TEST(BuildPrompt, SpecificNoContextIsTheFirstBox) {
    EXPECT_EQ(build_prompt(PromptVariant::SpecificNoContext, "APT1 ran whoami."),
              "You are a cybersecurity expert.\n\n"
              "Knowing that <<APT1 ran whoami.>>, what MITRE ATT&CK tactics will a cyber adversary achieve with "
              "this technique?\n\n"
              "Please only respond with the MITRE ATT&CK tactics you are certain about.");
}

TEST(BuildPrompt, SpecificWithContextIsTheSecondBox) {
    auto ctx = context_of({"chunk one", "chunk two"});
    EXPECT_EQ(build_prompt(PromptVariant::SpecificWithContext, "P", &ctx),
              "You are a cybersecurity expert. Consider the relevant context provided below and answer the "
              "question.\n\n"
              "Relevant Context: chunk one\n\nchunk two\n\n"
              "Question: Knowing that <<P>>, what MITRE ATT&CK tactics will a cyber adversary achieve with this "
              "technique?\n\n"
              "Please only respond with the MITRE ATT&CK tactics you are certain about.");
}

TEST(BuildPrompt, GenericWithContextIsTheCaseStudyBox) {
    auto ctx = context_of({"c"});
    auto p = build_prompt(PromptVariant::GenericWithContext, "P", &ctx);
    EXPECT_EQ(p,
              "You are a cybersecurity expert. Consider the relevant context provided below and answer the "
              "question.\n\n"
              "Relevant Context: c\n\n"
              "Question: Knowing that <<P>>, what will a cyber adversary achieve with this technique?");
    EXPECT_EQ(p.find("certain"), std::string::npos);
    EXPECT_EQ(p.find("tactics"), std::string::npos);
}

TEST(BuildPrompt, ContextContract) {
    auto prompt_only = context_of({}, RetrievalMode::PromptOnly);
    EXPECT_THROW(build_prompt(PromptVariant::SpecificWithContext, "P", &prompt_only), ContractError);
    EXPECT_THROW(build_prompt(PromptVariant::SpecificWithContext, "P"), ContractError);
    EXPECT_THROW(build_prompt(PromptVariant::GenericWithContext, "P"), ContractError);
    auto gone = context_of({});
    gone.status = ContextStatus::Unavailable;
    EXPECT_THROW(build_prompt(PromptVariant::SpecificWithContext, "P", &gone), ContractError);
    EXPECT_NO_THROW(build_prompt(PromptVariant::SpecificNoContext, "P", &prompt_only));
}

TEST(BuildPrompt, NoUnfilledPlaceholders) {
    auto ctx = context_of({"x"});
    for (auto v : {PromptVariant::SpecificNoContext, PromptVariant::SpecificWithContext,
                   PromptVariant::GenericWithContext}) {
        auto p = build_prompt(v, "proc", &ctx);
        EXPECT_EQ(p.find("{procedure}"), std::string::npos);
        EXPECT_EQ(p.find("{context}"), std::string::npos);
        EXPECT_EQ(prompt_variant_from_string(to_string(v)), v);
    }
}

TEST(BuildPrompt, InjectiveOnDelimiterFreeInputs) {
    Rng rng(1106);
    const std::vector<std::string> atoms = {"a", "b", " ", "x y", "\n", ".", "<", ">"};
    auto gen = [&](std::size_t max) {
        std::string s;
        std::size_t n = rng.between(0, max);
        for (std::size_t i = 0; i < n; ++i) s += rng.pick(atoms);
        return s;
    };
    auto clean = [](const std::string& s) {
        return s.find("<<") == std::string::npos && s.find(">>") == std::string::npos &&
               s.find("\n\n") == std::string::npos && (s.empty() || (s.front() != '\n' && s.back() != '\n')) &&
               (s.empty() || (s.front() != '<' && s.back() != '>'));
    };
    struct Input {
        PromptVariant v;
        std::string proc;
        std::vector<std::string> chunks;
        bool operator<(const Input& o) const {
            return std::tie(v, proc, chunks) < std::tie(o.v, o.proc, o.chunks);
        }
    };
    std::map<std::string, Input> seen;
    int checked = 0;
    while (checked < 3000) {
        Input in{static_cast<PromptVariant>(rng.below(3)), gen(4), {}};
        if (in.v != PromptVariant::SpecificNoContext) {
            std::size_t k = rng.between(1, 3);
            for (std::size_t i = 0; i < k; ++i) in.chunks.push_back(gen(3));
        }
        if (!clean(in.proc)) continue;
        bool ok = true;
        for (auto& c : in.chunks) ok = ok && clean(c) && !c.empty();
        if (!ok) continue;
        ++checked;
        auto ctx = context_of(in.chunks);
        auto p = build_prompt(in.v, in.proc, &ctx);
        auto [it, inserted] = seen.emplace(p, in);
        if (!inserted) {
            EXPECT_FALSE(it->second < in || in < it->second) << "collision on: " << p;
        }
    }
    EXPECT_GT(seen.size(), 200u);
}

TEST(RelevantContextBlock, RoundTrips) {
    auto ctx = context_of({"alpha", "beta"});
    auto p = build_prompt(PromptVariant::SpecificWithContext, "P", &ctx);
    ASSERT_TRUE(relevant_context_block(p));
    EXPECT_EQ(*relevant_context_block(p), "alpha\n\nbeta");
    EXPECT_FALSE(relevant_context_block(build_prompt(PromptVariant::SpecificNoContext, "P")));
}

TEST(EchoMock, NamesTacticsInContextOnly) {
    EchoTacticsMock mock;
    LlmRequest r;
    r.prompt_text = build_prompt(PromptVariant::SpecificNoContext, "APT1 did Discovery");
    EXPECT_EQ(mock.complete(r).text, "Unknown.");
    auto ctx = context_of({"moves via lateral movement", "then DEFENSE-EVASION; no impactful stuff"});
    r.prompt_text = build_prompt(PromptVariant::SpecificWithContext, "APT1 did Discovery", &ctx);
    EXPECT_EQ(mock.complete(r).text, "The adversary achieves: Defense Evasion, Lateral Movement");
    auto none = context_of({"nothing relevant here"});
    r.prompt_text = build_prompt(PromptVariant::GenericWithContext, "x", &none);
    EXPECT_EQ(mock.complete(r).text, "Unknown.");
}

TEST(EchoMock, Deterministic) {
    EchoTacticsMock mock;
    auto ctx = context_of({"Exfiltration and Collection"});
    LlmRequest r{build_prompt(PromptVariant::SpecificWithContext, "p", &ctx)};
    auto a = query(r, mock), b = query(r, mock);
    EXPECT_EQ(a.text, b.text);
    EXPECT_EQ(a.backend_fingerprint, b.backend_fingerprint);
    EXPECT_EQ(a.input_tokens, b.input_tokens);
}

TEST(Query, RequestDefaults) {
    LlmRequest r;
    EXPECT_EQ(r.temperature, 0.0);
    EXPECT_EQ(r.seed, 1106);
    EXPECT_EQ(r.model_id, "gpt-3.5-turbo-1106");
    EXPECT_EQ(r.max_response_tokens, 512u);
}

TEST(Query, OversizedPromptFailsBeforeDispatch) {
    CountingBackend b;
    LlmRequest r;
    r.prompt_text = std::string(3 * 16000, 'a');
    EXPECT_THROW(query(r, b), ContractError);
    EXPECT_EQ(b.calls, 0);
    r.prompt_text = std::string(3 * 1000, 'a');
    EXPECT_NO_THROW(query(r, b));
    EXPECT_EQ(b.calls, 1);
    QueryOptions tight;
    tight.context_window_tokens = 1000;
    EXPECT_THROW(query(r, b, tight), ContractError);
    EXPECT_EQ(b.calls, 1);
}

TEST(Query, MaximumContextFitsTheWindow) {
    // three full chunks plus the template stay inside the default window
    auto ctx = context_of({std::string(8000, 'c'), std::string(8000, 'c'), std::string(8000, 'c')});
    LlmRequest r{build_prompt(PromptVariant::SpecificWithContext, std::string(600, 'p'), &ctx)};
    CountingBackend b;
    EXPECT_NO_THROW(query(r, b));
}

TEST(Query, EmptyTextIsARecordedRefusal) {
    CountingBackend b;
    b.reply = "";
    auto r = query(LlmRequest{"hi"}, b);
    EXPECT_TRUE(r.refused);
    EXPECT_EQ(r.text, "");
}

namespace {

JournalRecord record(std::string id, std::string prompt, std::string response) {
    JournalRecord j;
    j.procedure_id = std::move(id);
    j.mode = "exact-url";
    j.variant = "specific-with-context";
    j.prompt_digest = text::sha256_hex(prompt);
    j.response_text = std::move(response);
    j.requested_at = j.completed_at = "2024-01-01T00:00:00.000Z";
    j.backend = "mock";
    return j;
}

}  // namespace

TEST(Journal, AppendReadAndReplay) {
    TempDir dir;
    auto path = dir / "journal.jsonl";
    {
        Journal j(path);
        j.append(record("p1", "prompt one", "Discovery"));
        j.append(record("p2", "prompt two", "Impact and C2"));
    }
    auto recs = Journal::read(path);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[1].procedure_id, "p2");
    EXPECT_EQ(recs[1].response_text, "Impact and C2");
    auto replay = ReplayBackend::from_file(path);
    EXPECT_FALSE(replay.remote());
    EXPECT_EQ(replay.complete(LlmRequest{"prompt one"}).text, "Discovery");
    EXPECT_EQ(replay.complete(LlmRequest{"prompt two"}).text, "Impact and C2");
    EXPECT_THROW(replay.complete(LlmRequest{"never recorded"}), Error);
    // one line per record, with the audit fields
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    auto j = nlohmann::json::parse(line);
    for (const char* k : {"procedure_id", "mode", "prompt_digest", "response_text", "requested_at", "completed_at"})
        EXPECT_TRUE(j.contains(k)) << k;
}

TEST(Journal, TornTailIgnoredCorruptMiddleRejected) {
    TempDir dir;
    auto path = dir / "j.jsonl";
    {
        Journal j(path);
        j.append(record("p1", "a", "x"));
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"procedure_id\": \"p2\", \"mo";
    }
    EXPECT_EQ(Journal::read(path).size(), 1u);
    {
        std::ofstream out(path, std::ios::app);
        out << "\n" << nlohmann::json(record("p3", "c", "z")).dump() << "\n";
    }
    EXPECT_THROW(Journal::read(path), ParseError);
    EXPECT_TRUE(Journal::read(dir / "missing.jsonl").empty());
    EXPECT_THROW(ReplayBackend::from_file(dir / "missing.jsonl"), Error);
}

TEST(Journal, LaterRecordWinsForSameDigest) {
    ReplayBackend r({record("p", "same", "first"), record("p", "same", "second")});
    EXPECT_EQ(r.complete(LlmRequest{"same"}).text, "second");
}

TEST(Journal, ReopeningDropsTornTailBeforeAppending) {
    TempDir dir;
    auto path = dir / "j.jsonl";
    {
        Journal j(path);
        j.append(record("p1", "a", "x"));
    }
    {
        std::ofstream out(path, std::ios::app);
        out << "{\"procedure_id\": \"p2\", \"mo";
    }
    {
        Journal j(path);
        j.append(record("p3", "c", "z"));
    }
    auto recs = Journal::read(path);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_EQ(recs[0].procedure_id, "p1");
    EXPECT_EQ(recs[1].procedure_id, "p3");
}
