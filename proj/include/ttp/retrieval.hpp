#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ttp/corpus.hpp"
#include "ttp/embedding.hpp"
#include "ttp/error.hpp"
#include "ttp/flat_index.hpp"
#include "ttp/page_cache.hpp"
#include "ttp/text.hpp"

namespace ttp {

enum class RetrievalMode { PromptOnly, ExactUrl, SimilarProcedures };

inline std::string_view to_string(RetrievalMode m) {
    switch (m) {
        case RetrievalMode::PromptOnly: return "prompt-only";
        case RetrievalMode::ExactUrl: return "exact-url";
        case RetrievalMode::SimilarProcedures: return "similar-procedures";
    }
    return "?";
}

inline RetrievalMode retrieval_mode_from_string(std::string_view s) {
    for (auto m : {RetrievalMode::PromptOnly, RetrievalMode::ExactUrl, RetrievalMode::SimilarProcedures})
        if (to_string(m) == s) return m;
    throw ContractError("unknown retrieval mode '" + std::string(s) + "'");
}

struct ContextChunk {
    std::string source_url;
    std::size_t start_offset = 0;  // in characters (UTF-8 code points)
    std::string text;
    double rank_score = 0.0;

    bool operator==(const ContextChunk&) const = default;
};

enum class ContextStatus { Ok, Unavailable };

struct AssembledContext {
    RetrievalMode mode = RetrievalMode::PromptOnly;
    std::vector<ContextChunk> chunks;
    std::vector<std::string> candidate_urls;
    bool url_matched = false;
    ContextStatus status = ContextStatus::Ok;
    std::vector<std::string> failed_urls;

    bool available() const noexcept { return status == ContextStatus::Ok; }
    bool operator==(const AssembledContext&) const = default;
};

inline constexpr std::size_t kChunkSize = 8000;
inline constexpr std::size_t kChunkOverlap = 500;
inline constexpr std::size_t kTopChunks = 3;
inline constexpr std::size_t kTopProcedures = 3;

/// Procedures keyed by procedure_id.
class ProcedureCatalog {
public:
    ProcedureCatalog() = default;
    explicit ProcedureCatalog(std::vector<ProcedureExample> procedures) : procedures_(std::move(procedures)) {
        for (std::size_t i = 0; i < procedures_.size(); ++i) {
            if (!by_id_.emplace(procedures_[i].procedure_id, i).second)
                throw ContractError("duplicate procedure id " + procedures_[i].procedure_id);
        }
    }

    const std::vector<ProcedureExample>& all() const noexcept { return procedures_; }
    std::size_t size() const noexcept { return procedures_.size(); }

    const ProcedureExample* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &procedures_[it->second];
    }
    const ProcedureExample& at(const std::string& id) const {
        if (const auto* p = find(id)) return *p;
        throw ContractError("unknown procedure id " + id);
    }

private:
    std::vector<ProcedureExample> procedures_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

inline FlatIndex build_procedure_index(const std::vector<ProcedureExample>& procedures,
                                       const EmbeddingProvider& provider) {
    std::vector<std::pair<std::string, std::string>> entries;
    entries.reserve(procedures.size());
    for (const auto& p : procedures) entries.emplace_back(p.procedure_id, p.text);
    return build_index(entries, provider);
}

/// Nearest procedures by cosine, never the query itself. Neighbors on the
/// query's own technique page are allowed.
inline std::vector<ProcedureExample> similar_procedures(const ProcedureExample& query, const FlatIndex& index,
                                                        const ProcedureCatalog& catalog,
                                                        const EmbeddingProvider& provider,
                                                        std::size_t k = kTopProcedures) {
    auto q = provider.embed(query.text);
    auto hits = index.top_k(q, k, {query.procedure_id});
    std::vector<ProcedureExample> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(catalog.at(h.key));
    return out;
}

/// Neighbor URLs in rank order, first occurrence kept, at most three.
inline std::vector<std::string> collect_urls(const std::vector<ProcedureExample>& neighbors) {
    std::vector<std::string> urls;
    for (const auto& n : neighbors) {
        if (urls.size() == kTopProcedures) break;
        if (std::find(urls.begin(), urls.end(), n.url) == urls.end()) urls.push_back(n.url);
    }
    return urls;
}

/// Fixed windows of `size` characters stepping by size - overlap. The last
/// window is emitted only if it reaches past the previous one.
inline std::vector<ContextChunk> chunk_text(std::string_view page, std::size_t size = kChunkSize,
                                            std::size_t overlap = kChunkOverlap, const std::string& source_url = {}) {
    if (size == 0 || overlap >= size) throw ContractError("chunking requires 0 <= overlap < size");
    auto offsets = text::codepoint_offsets(page);
    const std::size_t n = offsets.size() - 1;
    std::vector<ContextChunk> chunks;
    const std::size_t step = size - overlap;
    for (std::size_t start = 0; start < n; start += step) {
        std::size_t len = std::min(size, n - start);
        std::size_t b0 = offsets[start], b1 = offsets[start + len];
        chunks.push_back({source_url, start, std::string(page.substr(b0, b1 - b0)), 0.0});
        if (start + len >= n) break;
    }
    return chunks;
}

/// Top-k chunks by cosine to the question; ties by (source_url, start_offset).
inline std::vector<ContextChunk> select_top_chunks(std::string_view question, std::vector<ContextChunk> chunks,
                                                   const EmbeddingProvider& provider, std::size_t k = kTopChunks) {
    auto q = provider.embed(question);
    std::vector<std::string> texts;
    texts.reserve(chunks.size());
    for (const auto& c : chunks) texts.push_back(c.text);
    auto vectors = provider.embed_batch(texts);
    for (std::size_t i = 0; i < chunks.size(); ++i) chunks[i].rank_score = cosine(q, vectors[i]);
    std::sort(chunks.begin(), chunks.end(), [](const ContextChunk& a, const ContextChunk& b) {
        if (a.rank_score != b.rank_score) return a.rank_score > b.rank_score;
        if (a.source_url != b.source_url) return a.source_url < b.source_url;
        return a.start_offset < b.start_offset;
    });
    if (chunks.size() > k) chunks.resize(k);
    return chunks;
}

/// Everything retrieval needs besides the procedure. Pointers may be null
/// for modes that do not use them.
struct RetrievalDeps {
    const FlatIndex* procedure_index = nullptr;
    const ProcedureCatalog* catalog = nullptr;
    const EmbeddingProvider* similarity_provider = nullptr;
    const EmbeddingProvider* chunk_provider = nullptr;
    PageCache* cache = nullptr;
    PageFetcher* fetcher = nullptr;  // null: cache only
    std::size_t chunk_size = kChunkSize;
    std::size_t chunk_overlap = kChunkOverlap;
    std::size_t top_chunks = kTopChunks;
    std::size_t top_procedures = kTopProcedures;
};

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw ContractError(std::string("retrieval dependency missing: ") + what);
}

inline AssembledContext context_from_urls(const ProcedureExample& procedure, RetrievalMode mode,
                                          std::vector<std::string> urls, const RetrievalDeps& deps) {
    AssembledContext ctx;
    ctx.mode = mode;
    ctx.candidate_urls = std::move(urls);
    ctx.url_matched = std::find(ctx.candidate_urls.begin(), ctx.candidate_urls.end(), procedure.url) !=
                      ctx.candidate_urls.end();
    std::vector<ContextChunk> pool;
    std::size_t fetched = 0;
    for (const auto& url : ctx.candidate_urls) {
        std::string page;
        try {
            page = fetch_page_text(url, *deps.cache, deps.fetcher);
        } catch (const FetchError&) {
            ctx.failed_urls.push_back(url);
            continue;
        }
        ++fetched;
        auto chunks = chunk_text(page, deps.chunk_size, deps.chunk_overlap, url);
        pool.insert(pool.end(), std::make_move_iterator(chunks.begin()), std::make_move_iterator(chunks.end()));
    }
    if (fetched == 0) {
        ctx.status = ContextStatus::Unavailable;
        return ctx;
    }
    ctx.chunks = select_top_chunks(procedure.text, std::move(pool), *deps.chunk_provider, deps.top_chunks);
    return ctx;
}

}  // namespace detail

/// Builds the "Relevant Context" for one procedure under `mode`. The chunk
/// ranking question is the procedure sentence.
inline AssembledContext assemble_context(const ProcedureExample& procedure, RetrievalMode mode,
                                         const RetrievalDeps& deps) {
    switch (mode) {
        case RetrievalMode::PromptOnly: {
            AssembledContext ctx;
            ctx.mode = mode;
            return ctx;
        }
        case RetrievalMode::ExactUrl:
            detail::require(deps.cache && deps.chunk_provider, "page cache and chunk provider");
            return detail::context_from_urls(procedure, mode, {procedure.url}, deps);
        case RetrievalMode::SimilarProcedures: {
            detail::require(deps.cache && deps.chunk_provider && deps.procedure_index && deps.catalog &&
                                deps.similarity_provider,
                            "procedure index, catalog, providers and page cache");
            auto neighbors = similar_procedures(procedure, *deps.procedure_index, *deps.catalog,
                                                *deps.similarity_provider, deps.top_procedures);
            return detail::context_from_urls(procedure, mode, collect_urls(neighbors), deps);
        }
    }
    throw ContractError("unhandled retrieval mode");
}

}  // namespace ttp
