#pragma once

#include <atomic>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttp/chat.hpp"
#include "ttp/classifier.hpp"
#include "ttp/corpus.hpp"
#include "ttp/corpus_io.hpp"
#include "ttp/embedding.hpp"
#include "ttp/evaluation.hpp"
#include "ttp/extraction.hpp"
#include "ttp/flat_index.hpp"
#include "ttp/page_cache.hpp"
#include "ttp/prompt.hpp"
#include "ttp/retrieval.hpp"

namespace ttp {

namespace fs = std::filesystem;

/// Everything one run needs. Loaded from a JSON file, overlaid with CLI
/// flags, and echoed into the output directory.
struct RunConfig {
    std::string snapshot;  // ATT&CK enterprise bundle
    std::string version_tag = "v14.1";
    std::string out_dir = "out";
    std::string cache_dir = "page-cache";
    bool live_fetch = false;

    std::string embedding_provider = "hashing";  // hashing | openai
    std::size_t embedding_dimension = 1024;
    std::string embedding_model;  // remote provider only

    RetrievalMode mode = RetrievalMode::PromptOnly;
    std::optional<PromptVariant> variant;  // default follows the mode

    std::string backend = "mock";  // mock | openai | replay
    std::string model_id = std::string(kDefaultChatModel);
    std::string replay_journal;
    std::size_t budget = 4;
    std::size_t max_response_tokens = kDefaultMaxResponseTokens;
    std::size_t context_window_tokens = kDefaultContextWindowTokens;

    // Inputs that default to files inside out_dir.
    std::string procedures;
    std::string descriptions;
    std::string index;
    std::string predictions;
    std::string model;

    std::uint64_t seed = 1106;
    TrainConfig train;

    fs::path out() const { return fs::path(out_dir); }
    fs::path procedures_path() const { return procedures.empty() ? out() / "procedures.jsonl" : fs::path(procedures); }
    fs::path descriptions_path() const {
        return descriptions.empty() ? out() / "descriptions.jsonl" : fs::path(descriptions);
    }
    fs::path index_path() const { return index.empty() ? out() / "procedures.idx" : fs::path(index); }
    fs::path predictions_path() const {
        return predictions.empty() ? out() / "predictions.jsonl" : fs::path(predictions);
    }
    fs::path model_path() const { return model.empty() ? out() / "baseline.model" : fs::path(model); }
    fs::path journal_path() const { return out() / "journal.jsonl"; }

    PromptVariant effective_variant() const { return variant.value_or(default_variant(mode)); }

    void validate() const {
        if (backend != "mock" && backend != "openai" && backend != "replay")
            throw ContractError("unknown backend '" + backend + "' (mock, openai, replay)");
        if (embedding_provider != "hashing" && embedding_provider != "openai")
            throw ContractError("unknown embedding provider '" + embedding_provider + "' (hashing, openai)");
        if (backend == "replay") {
            if (replay_journal.empty()) throw ContractError("replay backend needs a journal path");
            if (live_fetch) throw ContractError("replay mode forbids live fetching");
            if (embedding_provider != "hashing") throw ContractError("replay mode forbids remote embeddings");
        }
        if (budget < 1) throw ContractError("budget must be >= 1");
        if (variant && needs_context(*variant) && mode == RetrievalMode::PromptOnly)
            throw ContractError(std::string(to_string(*variant)) + " prompt needs a RAG mode");
        if (variant && !needs_context(*variant) && mode != RetrievalMode::PromptOnly)
            throw ContractError("specific-no-context prompt cannot use retrieved context");
        train.validate();
    }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"snapshot", c.snapshot},
         {"version_tag", c.version_tag},
         {"out_dir", c.out_dir},
         {"cache_dir", c.cache_dir},
         {"live_fetch", c.live_fetch},
         {"embedding", {{"provider", c.embedding_provider},
                        {"dimension", c.embedding_dimension},
                        {"model", c.embedding_model}}},
         {"mode", to_string(c.mode)},
         {"variant", to_string(c.effective_variant())},
         {"backend", c.backend},
         {"model_id", c.model_id},
         {"replay_journal", c.replay_journal},
         {"budget", c.budget},
         {"max_response_tokens", c.max_response_tokens},
         {"context_window_tokens", c.context_window_tokens},
         {"procedures", c.procedures},
         {"descriptions", c.descriptions},
         {"index", c.index},
         {"predictions", c.predictions},
         {"model", c.model},
         {"seed", c.seed},
         {"train", {{"batch_size", c.train.batch_size},
                    {"epochs", c.train.epochs},
                    {"learning_rate", c.train.learning_rate},
                    {"seed", c.train.seed}}},
         {"temperature", kTemperature},
         {"request_seed", kSeed}};
}

/// Keys absent from `j` keep their current values.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key) && !j[key].is_null()) j[key].get_to(field);
    };
    get("snapshot", c.snapshot);
    get("version_tag", c.version_tag);
    get("out_dir", c.out_dir);
    get("cache_dir", c.cache_dir);
    get("live_fetch", c.live_fetch);
    if (j.contains("embedding")) {
        const auto& e = j["embedding"];
        if (e.contains("provider")) e["provider"].get_to(c.embedding_provider);
        if (e.contains("dimension")) e["dimension"].get_to(c.embedding_dimension);
        if (e.contains("model")) e["model"].get_to(c.embedding_model);
    }
    if (j.contains("mode")) c.mode = retrieval_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("variant") && !j["variant"].is_null())
        c.variant = prompt_variant_from_string(j["variant"].get<std::string>());
    get("backend", c.backend);
    get("model_id", c.model_id);
    get("replay_journal", c.replay_journal);
    get("budget", c.budget);
    get("max_response_tokens", c.max_response_tokens);
    get("context_window_tokens", c.context_window_tokens);
    get("procedures", c.procedures);
    get("descriptions", c.descriptions);
    get("index", c.index);
    get("predictions", c.predictions);
    get("model", c.model);
    get("seed", c.seed);
    if (j.contains("train")) {
        const auto& t = j["train"];
        if (t.contains("batch_size")) t["batch_size"].get_to(c.train.batch_size);
        if (t.contains("epochs")) t["epochs"].get_to(c.train.epochs);
        if (t.contains("learning_rate")) t["learning_rate"].get_to(c.train.learning_rate);
        if (t.contains("seed")) t["seed"].get_to(c.train.seed);
    }
}

inline RunConfig load_run_config(const fs::path& path) {
    RunConfig c;
    try {
        nlohmann::json::parse(text::read_file(path)).get_to(c);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("bad config " + path.string() + ": " + e.what());
    }
    return c;
}

inline void write_config_echo(const RunConfig& c, std::string_view stage) {
    nlohmann::json j = c;
    j["stage"] = stage;
    text::write_file_atomic(c.out() / ("config." + std::string(stage) + ".json"), j.dump(2) + "\n");
}

/// Collaborators that may talk to the network. The CLI builds them; tests
/// pass offline ones.
struct Services {
    const EmbeddingProvider* similarity = nullptr;
    const EmbeddingProvider* chunks = nullptr;  // defaults to `similarity`
    ChatBackend* backend = nullptr;
    PageFetcher* fetcher = nullptr;  // null: cache only
    std::ostream* log = nullptr;
};

namespace detail {

inline std::ostream& log_of(const Services& s) {
    static std::ostream null_stream(nullptr);
    return s.log ? *s.log : null_stream;
}

inline nlohmann::json index_sidecar(const EmbeddingProvider& p, std::size_t count) {
    return {{"provider", p.id()}, {"dimension", p.dimension()}, {"entries", count}};
}

}  // namespace detail

// ---- ingest ----------------------------------------------------------------

struct IngestResult {
    std::vector<LabeledDescription> descriptions;
    std::vector<ProcedureExample> procedures;
    CorpusStats stats;
};

inline IngestResult run_ingest(const RunConfig& cfg, std::ostream* log = nullptr) {
    if (cfg.snapshot.empty()) throw ContractError("ingest needs a snapshot path");
    if (!fs::exists(cfg.snapshot)) throw ContractError("snapshot not found: " + cfg.snapshot);
    Corpus corpus = parse_snapshot(text::read_file(cfg.snapshot), cfg.version_tag);
    IngestResult r;
    r.descriptions = curate_finetune_set(corpus);
    r.procedures = curate_procedures(corpus);
    r.stats = corpus_stats(r.descriptions.size(), r.procedures);

    fs::create_directories(cfg.out());
    text::write_file_atomic(cfg.out() / "descriptions.jsonl", to_jsonl(r.descriptions));
    text::write_file_atomic(cfg.out() / "procedures.jsonl", to_jsonl(r.procedures));
    text::write_file_atomic(cfg.out() / "overlap.csv", overlap_csv(tactic_overlap_matrix(r.procedures)));
    text::write_file_atomic(cfg.out() / "stats.json", stats_to_json(r.stats).dump(2) + "\n");
    write_config_echo(cfg, "ingest");
    if (log) {
        *log << "ingest " << cfg.version_tag << ": " << r.stats.n_descriptions << " descriptions, "
             << r.stats.n_procedures << " procedures, support total " << r.stats.support_total << '\n';
    }
    return r;
}

// ---- index -----------------------------------------------------------------

inline std::size_t run_index(const RunConfig& cfg, const EmbeddingProvider& provider, std::ostream* log = nullptr) {
    auto procedures = load_jsonl<ProcedureExample>(cfg.procedures_path());
    FlatIndex index = build_procedure_index(procedures, provider);
    fs::create_directories(cfg.out());
    index.save(cfg.index_path());
    text::write_file_atomic(cfg.index_path().string() + ".json",
                            detail::index_sidecar(provider, index.size()).dump(2) + "\n");
    write_config_echo(cfg, "index");
    if (log) *log << "index: " << index.size() << " entries, provider " << provider.id() << '\n';
    return index.size();
}

inline FlatIndex load_procedure_index(const RunConfig& cfg, const EmbeddingProvider& provider) {
    FlatIndex index = FlatIndex::load(cfg.index_path());
    if (index.dimension() != provider.dimension())
        throw ContractError("index dimension " + std::to_string(index.dimension()) + " does not match provider " +
                            provider.id());
    auto sidecar = fs::path(cfg.index_path().string() + ".json");
    if (fs::exists(sidecar)) {
        auto meta = nlohmann::json::parse(text::read_file(sidecar));
        if (meta.value("provider", "") != provider.id())
            throw ContractError("index was built with provider " + meta.value("provider", "?") + ", not " +
                                provider.id());
    }
    return index;
}

// ---- predict ---------------------------------------------------------------

struct PredictSummary {
    std::size_t total = 0;
    std::size_t dispatched = 0;
    std::size_t resumed = 0;
    std::size_t context_unavailable = 0;
    std::size_t backend_errors = 0;
    std::vector<Prediction> predictions;

    bool complete() const { return context_unavailable == 0 && backend_errors == 0; }
};

inline Prediction prediction_from_record(const JournalRecord& r, PredictionMode mode, PromptVariant variant) {
    Prediction p;
    p.procedure_id = r.procedure_id;
    p.mode = mode;
    p.prompt_variant = variant;
    p.raw_response = r.response_text;
    p.predicted = extract_tactics(r.response_text);
    p.url_matched = r.url_matched;
    return p;
}

/// For each procedure: assemble context, render the prompt, query, extract.
/// Procedures already journaled for this mode and variant are not sent
/// again. Failures are recorded per procedure and the batch carries on.
inline PredictSummary run_predict(const RunConfig& cfg, const Services& svc) {
    cfg.validate();
    if (!svc.backend) throw ContractError("predict needs a chat backend");
    auto& log = detail::log_of(svc);
    const PromptVariant variant = cfg.effective_variant();
    const PredictionMode pmode = to_prediction_mode(cfg.mode);
    const std::string mode_name(to_string(cfg.mode));
    const std::string variant_name(to_string(variant));

    auto procedures = load_jsonl<ProcedureExample>(cfg.procedures_path());
    ProcedureCatalog catalog(procedures);

    std::optional<FlatIndex> index;
    std::unique_ptr<PageCache> cache;
    RetrievalDeps deps;
    if (cfg.mode != RetrievalMode::PromptOnly) {
        if (!svc.similarity) throw ContractError("RAG modes need an embedding provider");
        cache = std::make_unique<PageCache>(cfg.cache_dir);
        deps.cache = cache.get();
        deps.fetcher = cfg.live_fetch ? svc.fetcher : nullptr;
        deps.chunk_provider = svc.chunks ? svc.chunks : svc.similarity;
        if (cfg.mode == RetrievalMode::SimilarProcedures) {
            index = load_procedure_index(cfg, *svc.similarity);
            deps.procedure_index = &*index;
            deps.catalog = &catalog;
            deps.similarity_provider = svc.similarity;
        }
    }

    fs::create_directories(cfg.out());
    std::map<std::string, JournalRecord> done;
    for (auto& r : Journal::read(cfg.journal_path()))
        if (r.mode == mode_name && r.variant == variant_name) done.insert_or_assign(r.procedure_id, std::move(r));
    Journal journal(cfg.journal_path());

    PredictSummary summary;
    summary.total = procedures.size();
    std::vector<Prediction> results(procedures.size());
    std::atomic<std::size_t> next{0}, dispatched{0}, resumed{0};
    std::mutex log_mu;

    auto work = [&] {
        for (std::size_t i = next++; i < procedures.size(); i = next++) {
            const auto& proc = procedures[i];
            Prediction& out = results[i];
            out.procedure_id = proc.procedure_id;
            out.mode = pmode;
            out.prompt_variant = variant;
            if (auto it = done.find(proc.procedure_id); it != done.end()) {
                out = prediction_from_record(it->second, pmode, variant);
                ++resumed;
                continue;
            }
            AssembledContext ctx = assemble_context(proc, cfg.mode, deps);
            out.url_matched = ctx.url_matched;
            if (!ctx.available()) {
                out.status = PredictionStatus::ContextUnavailable;
                std::lock_guard lock(log_mu);
                log << "context unavailable for " << proc.procedure_id << " (" << ctx.failed_urls.size()
                    << " page(s) unfetchable)\n";
                continue;
            }
            LlmRequest req;
            req.prompt_text = build_prompt(variant, proc, cfg.mode == RetrievalMode::PromptOnly ? nullptr : &ctx);
            req.model_id = cfg.model_id;
            req.max_response_tokens = cfg.max_response_tokens;
            const std::string requested_at = text::utc_timestamp();
            LlmResponse resp;
            try {
                resp = query(req, *svc.backend, {cfg.context_window_tokens});
            } catch (const Error& e) {
                out.status = PredictionStatus::BackendError;
                out.raw_response = e.what();
                std::lock_guard lock(log_mu);
                log << "procedure " << proc.procedure_id << ": " << e.what() << '\n';
                continue;
            }
            ++dispatched;
            JournalRecord rec;
            rec.procedure_id = proc.procedure_id;
            rec.mode = mode_name;
            rec.variant = variant_name;
            rec.prompt_digest = text::sha256_hex(req.prompt_text);
            rec.response_text = resp.text;
            rec.refused = resp.refused;
            rec.url_matched = ctx.url_matched;
            rec.backend = svc.backend->name();
            rec.backend_fingerprint = resp.backend_fingerprint;
            rec.model_id = req.model_id;
            rec.requested_at = requested_at;
            rec.completed_at = text::utc_timestamp();
            rec.latency_ms = resp.latency.count();
            rec.input_tokens = resp.input_tokens;
            rec.output_tokens = resp.output_tokens;
            journal.append(rec);
            out = prediction_from_record(rec, pmode, variant);
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.budget, procedures.size()));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    for (const auto& p : results) {
        if (p.status == PredictionStatus::ContextUnavailable) ++summary.context_unavailable;
        if (p.status == PredictionStatus::BackendError) ++summary.backend_errors;
    }
    summary.dispatched = dispatched;
    summary.resumed = resumed;
    summary.predictions = std::move(results);
    text::write_file_atomic(cfg.predictions_path(), to_jsonl(summary.predictions));
    write_config_echo(cfg, "predict");
    log << "predict " << mode_name << '/' << variant_name << ": " << summary.total << " procedures, "
        << summary.dispatched << " dispatched, " << summary.resumed << " resumed, " << summary.context_unavailable
        << " context-unavailable, " << summary.backend_errors << " backend errors\n";
    return summary;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateSummary {
    std::size_t procedures = 0;
    std::size_t scored = 0;
    std::size_t missing = 0;
    std::vector<EvalReport> reports;  // combined first, then matched/unmatched when split

    bool complete() const { return missing == 0; }
};

namespace detail {

inline void write_report_files(const fs::path& out_dir, const std::string& stem, const EvalReport& r) {
    text::write_file_atomic(out_dir / (stem + ".csv"), render_report(r, ReportFormat::Csv));
    text::write_file_atomic(out_dir / (stem + ".md"), render_report(r, ReportFormat::Markdown));
    text::write_file_atomic(out_dir / (stem + "_f1.md"), render_report(r, ReportFormat::MarkdownF1Only));
}

}  // namespace detail

/// Scores predictions against the gold sets in the procedures file. Any
/// procedure without a scorable prediction counts as missing.
inline EvaluateSummary run_evaluate(const RunConfig& cfg, bool split_by_url, std::ostream* log = nullptr) {
    auto procedures = load_jsonl<ProcedureExample>(cfg.procedures_path());
    auto predictions = load_jsonl<Prediction>(cfg.predictions_path());
    ProcedureCatalog catalog(procedures);

    std::map<std::string, const Prediction*> by_id;
    for (const auto& p : predictions) {
        if (!catalog.find(p.procedure_id)) throw ContractError("prediction for unknown procedure " + p.procedure_id);
        if (!by_id.emplace(p.procedure_id, &p).second)
            throw ContractError("duplicate prediction for procedure " + p.procedure_id);
    }

    EvaluateSummary s;
    s.procedures = procedures.size();
    std::vector<SampleResult> all, matched, unmatched;
    for (const auto& proc : procedures) {
        auto it = by_id.find(proc.procedure_id);
        if (it == by_id.end() || !it->second->scored()) {
            ++s.missing;
            continue;
        }
        auto r = score_sample(proc.procedure_id, proc.gold_tactics, it->second->predicted);
        (it->second->url_matched ? matched : unmatched).push_back(r);
        all.push_back(std::move(r));
    }
    s.scored = all.size();
    if (all.empty()) throw ContractError("no scorable predictions in " + cfg.predictions_path().string());

    fs::create_directories(cfg.out());
    s.reports.push_back(build_report(all, Subgroup::All));
    detail::write_report_files(cfg.out(), "report", s.reports.back());
    if (split_by_url) {
        std::vector<ReportColumn> cols;
        for (auto [group, rows] : {std::pair{Subgroup::MatchedUrl, &matched}, std::pair{Subgroup::UnmatchedUrl, &unmatched}}) {
            if (rows->empty()) {
                if (log) *log << "subgroup " << to_string(group) << " is empty; no report written\n";
                continue;
            }
            s.reports.push_back(build_report(*rows, group));
            detail::write_report_files(cfg.out(), "report_" + std::string(to_string(group)), s.reports.back());
            cols.push_back({group == Subgroup::MatchedUrl ? "w/ Matched URLs" : "w/o Matched URLs", s.reports.back()});
        }
        if (!cols.empty())
            text::write_file_atomic(cfg.out() / "report_subgroups.md",
                                    render_side_by_side(cols, ReportFormat::Markdown));
    }
    write_config_echo(cfg, "evaluate");
    if (log) {
        const auto& r = s.reports.front();
        *log << "evaluate: " << s.scored << '/' << s.procedures << " scored, samples-average P/R/F1 "
             << detail::two_decimals(r.samples_avg.precision) << '/' << detail::two_decimals(r.samples_avg.recall)
             << '/' << detail::two_decimals(r.samples_avg.f1) << ", support " << r.total_support << '\n';
        if (split_by_url)
            *log << "subgroups: " << matched.size() << " matched + " << unmatched.size() << " unmatched = "
                 << matched.size() + unmatched.size() << '\n';
        if (s.missing) *log << s.missing << " procedure(s) lack a prediction\n";
    }
    return s;
}

// ---- baseline --------------------------------------------------------------

inline MultiLabelModel run_train(const RunConfig& cfg, std::ostream* log = nullptr) {
    auto descriptions = load_jsonl<LabeledDescription>(cfg.descriptions_path());
    auto model = train(descriptions, cfg.train, [&](std::size_t epoch, double loss) {
        if (log) *log << "epoch " << epoch << " mean BCE " << loss << '\n';
    });
    fs::create_directories(cfg.out());
    save_model(model, cfg.model_path());
    write_config_echo(cfg, "train");
    if (log)
        *log << "train: " << descriptions.size() << " descriptions, vocabulary " << model.vocab.size() << " terms\n";
    return model;
}

inline std::vector<Prediction> run_classify(const RunConfig& cfg, std::ostream* log = nullptr) {
    auto model = load_model(cfg.model_path());
    auto procedures = load_jsonl<ProcedureExample>(cfg.procedures_path());
    std::vector<Prediction> out;
    out.reserve(procedures.size());
    for (const auto& proc : procedures) {
        Prediction p;
        p.procedure_id = proc.procedure_id;
        p.mode = PredictionMode::Baseline;
        p.predicted = predict(model, proc.text);
        p.raw_response = join_names(p.predicted);
        out.push_back(std::move(p));
    }
    fs::create_directories(cfg.out());
    text::write_file_atomic(cfg.predictions_path(), to_jsonl(out));
    write_config_echo(cfg, "classify");
    if (log) *log << "classify: " << out.size() << " procedures\n";
    return out;
}

}  // namespace ttp
