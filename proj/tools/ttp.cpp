// ttp: command-line driver for ingest -> index -> predict -> evaluate, plus
// the baseline classifier (train, classify) and side-by-side tables (compare).

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttp/openai.hpp"
#include "ttp/ttp.hpp"

namespace {

constexpr int kUsageError = 2;
constexpr int kIncomplete = 3;

/// Flags shared by the subcommands. Each one overrides the config file only
/// when given.
struct Flags {
    std::string config, out, bundle, version_tag, procedures, descriptions, index, predictions, model, cache;
    std::string mode, variant, backend, replay, model_id, provider, embedding_model;
    std::size_t budget = 0, dimension = 0, epochs = 0, batch_size = 0, max_response_tokens = 0;
    double lr = 0;
    std::uint64_t seed = 0;
    bool live_fetch = false;
    std::vector<std::pair<CLI::Option*, std::function<void(ttp::RunConfig&)>>> bindings;

    template <typename T, typename Apply>
    void bind(CLI::App* app, const std::string& name, T& target, const std::string& help, Apply apply) {
        bindings.emplace_back(app->add_option(name, target, help), apply);
    }
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration");
    f.bind(sub, "--out", f.out, "output directory", [&f](auto& c) { c.out_dir = f.out; });
}

void add_procedures(CLI::App* sub, Flags& f) {
    f.bind(sub, "--procedures", f.procedures, "procedures.jsonl (default: <out>/procedures.jsonl)",
           [&f](auto& c) { c.procedures = f.procedures; });
}

void add_embedding(CLI::App* sub, Flags& f) {
    f.bind(sub, "--provider", f.provider, "embedding provider: hashing | openai",
           [&f](auto& c) { c.embedding_provider = f.provider; });
    f.bind(sub, "--dimension", f.dimension, "embedding dimension",
           [&f](auto& c) { c.embedding_dimension = f.dimension; });
    f.bind(sub, "--embedding-model", f.embedding_model, "remote embedding model",
           [&f](auto& c) { c.embedding_model = f.embedding_model; });
    f.bind(sub, "--index", f.index, "procedure index file (default: <out>/procedures.idx)",
           [&f](auto& c) { c.index = f.index; });
}

ttp::RunConfig resolve(const Flags& f) {
    ttp::RunConfig cfg = f.config.empty() ? ttp::RunConfig{} : ttp::load_run_config(f.config);
    for (const auto& [opt, apply] : f.bindings)
        if (opt->count()) apply(cfg);
    if (f.live_fetch) cfg.live_fetch = true;
    return cfg;
}

std::unique_ptr<ttp::EmbeddingProvider> make_provider(const ttp::RunConfig& cfg, ttp::RequestBudget& budget) {
    if (cfg.embedding_provider == "hashing") return std::make_unique<ttp::HashingEmbedder>(cfg.embedding_dimension);
    ttp::RemoteOptions opt;
    opt.budget = &budget;
    std::string model = cfg.embedding_model.empty() ? std::string(ttp::kDefaultEmbeddingModel) : cfg.embedding_model;
    // 1024 is the offline default; remote models report their own size
    std::size_t dim = cfg.embedding_dimension == 1024 ? 1536 : cfg.embedding_dimension;
    return std::make_unique<ttp::OpenAiEmbedder>(opt, model, dim);
}

std::unique_ptr<ttp::ChatBackend> make_backend(const ttp::RunConfig& cfg, ttp::RequestBudget& budget) {
    if (cfg.backend == "mock") return std::make_unique<ttp::EchoTacticsMock>();
    if (cfg.backend == "replay")
        return std::make_unique<ttp::ReplayBackend>(ttp::ReplayBackend::from_file(cfg.replay_journal));
    ttp::RemoteOptions opt;
    opt.budget = &budget;
    return std::make_unique<ttp::OpenAiChatBackend>(opt);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Map ATT&CK procedure descriptions to tactics with retrieval-augmented prompting"};
    app.require_subcommand(1);
    Flags f;
    std::vector<std::string> compare_inputs, compare_labels;
    bool split_by_url = false;
    bool f1_only = false;

    auto* ingest = app.add_subcommand("ingest", "parse an ATT&CK bundle and write the curated corpus");
    add_common(ingest, f);
    f.bind(ingest, "--bundle", f.bundle, "ATT&CK enterprise STIX bundle", [&f](auto& c) { c.snapshot = f.bundle; });
    f.bind(ingest, "--version-tag", f.version_tag, "release tag recorded with the corpus",
           [&f](auto& c) { c.version_tag = f.version_tag; });

    auto* index = app.add_subcommand("index", "embed procedures and write the similarity index");
    add_common(index, f);
    add_procedures(index, f);
    add_embedding(index, f);

    auto* predict = app.add_subcommand("predict", "query the chat backend for every procedure");
    add_common(predict, f);
    add_procedures(predict, f);
    add_embedding(predict, f);
    f.bind(predict, "--mode", f.mode, "prompt-only | exact-url | similar-procedures",
           [&f](auto& c) { c.mode = ttp::retrieval_mode_from_string(f.mode); });
    f.bind(predict, "--variant", f.variant, "specific-no-context | specific-with-context | generic-with-context",
           [&f](auto& c) { c.variant = ttp::prompt_variant_from_string(f.variant); });
    f.bind(predict, "--backend", f.backend, "mock | openai | replay", [&f](auto& c) { c.backend = f.backend; });
    f.bind(predict, "--replay", f.replay, "journal to replay (implies --backend replay)", [&f](auto& c) {
        c.replay_journal = f.replay;
        c.backend = "replay";
    });
    f.bind(predict, "--model-id", f.model_id, "remote chat model", [&f](auto& c) { c.model_id = f.model_id; });
    f.bind(predict, "--budget", f.budget, "concurrent request budget", [&f](auto& c) { c.budget = f.budget; });
    f.bind(predict, "--max-response-tokens", f.max_response_tokens, "response token limit",
           [&f](auto& c) { c.max_response_tokens = f.max_response_tokens; });
    f.bind(predict, "--cache", f.cache, "page cache directory", [&f](auto& c) { c.cache_dir = f.cache; });
    predict->add_flag("--live-fetch", f.live_fetch, "fetch uncached pages over HTTP");
    f.bind(predict, "--predictions", f.predictions, "output file (default: <out>/predictions.jsonl)",
           [&f](auto& c) { c.predictions = f.predictions; });

    auto* evaluate = app.add_subcommand("evaluate", "score a predictions file and render reports");
    add_common(evaluate, f);
    add_procedures(evaluate, f);
    f.bind(evaluate, "--predictions", f.predictions, "predictions.jsonl (default: <out>/predictions.jsonl)",
           [&f](auto& c) { c.predictions = f.predictions; });
    evaluate->add_flag("--split-by-url", split_by_url, "also report matched and unmatched URL subgroups");

    auto* train_cmd = app.add_subcommand("train", "train the baseline classifier on the descriptions");
    add_common(train_cmd, f);
    f.bind(train_cmd, "--descriptions", f.descriptions, "descriptions.jsonl (default: <out>/descriptions.jsonl)",
           [&f](auto& c) { c.descriptions = f.descriptions; });
    f.bind(train_cmd, "--model", f.model, "model file (default: <out>/baseline.model)",
           [&f](auto& c) { c.model = f.model; });
    f.bind(train_cmd, "--epochs", f.epochs, "training epochs", [&f](auto& c) { c.train.epochs = f.epochs; });
    f.bind(train_cmd, "--batch-size", f.batch_size, "mini-batch size",
           [&f](auto& c) { c.train.batch_size = f.batch_size; });
    f.bind(train_cmd, "--lr", f.lr, "learning rate", [&f](auto& c) { c.train.learning_rate = f.lr; });
    f.bind(train_cmd, "--seed", f.seed, "shuffle seed", [&f](auto& c) { c.train.seed = f.seed; });

    auto* classify = app.add_subcommand("classify", "predict procedure tactics with the baseline model");
    add_common(classify, f);
    add_procedures(classify, f);
    f.bind(classify, "--model", f.model, "model file (default: <out>/baseline.model)",
           [&f](auto& c) { c.model = f.model; });
    f.bind(classify, "--predictions", f.predictions, "output file (default: <out>/predictions.jsonl)",
           [&f](auto& c) { c.predictions = f.predictions; });

    auto* compare = app.add_subcommand("compare", "put report.csv files side by side as one Markdown table");
    compare->add_option("reports", compare_inputs, "report CSV files")->required();
    compare->add_option("--label", compare_labels, "column label per report (in order)");
    compare->add_flag("--f1-only", f1_only, "one F1 column per report with a shared support column");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*compare) {
            if (!compare_labels.empty() && compare_labels.size() != compare_inputs.size()) {
                std::cerr << "error: give one --label per report\n";
                return kUsageError;
            }
            std::vector<ttp::ReportColumn> cols;
            for (std::size_t i = 0; i < compare_inputs.size(); ++i) {
                cols.push_back({compare_labels.empty() ? compare_inputs[i] : compare_labels[i],
                                ttp::parse_report_csv(ttp::text::read_file(compare_inputs[i]))});
            }
            std::cout << ttp::render_side_by_side(
                cols, f1_only ? ttp::ReportFormat::MarkdownF1Only : ttp::ReportFormat::Markdown);
            return 0;
        }

        ttp::RunConfig cfg;
        try {
            cfg = resolve(f);
            cfg.validate();
        } catch (const ttp::ContractError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kUsageError;
        } catch (const ttp::ParseError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return kUsageError;
        }

        if (*ingest) {
            if (cfg.snapshot.empty() || !std::filesystem::exists(cfg.snapshot)) {
                std::cerr << "error: "
                          << (cfg.snapshot.empty() ? "no snapshot given (use --bundle or the config's snapshot)"
                                                   : "snapshot not found: " + cfg.snapshot)
                          << '\n';
                return kUsageError;
            }
            ttp::run_ingest(cfg, &std::cout);
            return 0;
        }

        ttp::RequestBudget budget(cfg.budget);
        if (*index) {
            auto provider = make_provider(cfg, budget);
            ttp::run_index(cfg, *provider, &std::cout);
            return 0;
        }
        if (*predict) {
            std::unique_ptr<ttp::EmbeddingProvider> provider;
            if (cfg.mode != ttp::RetrievalMode::PromptOnly) provider = make_provider(cfg, budget);
            auto backend = make_backend(cfg, budget);
            std::unique_ptr<ttp::PageFetcher> fetcher;
            if (cfg.live_fetch) fetcher = std::make_unique<ttp::HttpPageFetcher>(ttp::RetryPolicy{}, &budget);
            ttp::Services svc{provider.get(), provider.get(), backend.get(), fetcher.get(), &std::cout};
            auto summary = ttp::run_predict(cfg, svc);
            return summary.complete() ? 0 : kIncomplete;
        }
        if (*evaluate) {
            auto summary = ttp::run_evaluate(cfg, split_by_url, &std::cout);
            return summary.complete() ? 0 : kIncomplete;
        }
        if (*train_cmd) {
            ttp::run_train(cfg, &std::cout);
            return 0;
        }
        if (*classify) {
            ttp::run_classify(cfg, &std::cout);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
