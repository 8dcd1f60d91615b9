#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttp/error.hpp"
#include "ttp/text.hpp"

namespace ttp {

/// L2-normalized embedding. The zero vector (empty text) carries `zero = true`.
struct EmbeddingVector {
    std::vector<double> values;
    bool zero = false;

    std::size_t dimension() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

inline double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Scales to unit length in place; returns false for an all-zero input.
inline bool normalize(std::vector<double>& v) {
    double n = l2_norm(v);
    if (n == 0.0) return false;
    for (double& x : v) x /= n;
    return true;
}

/// Cosine similarity with the same evaluation order for (a,b) and (b,a).
/// Zero-norm operands give 0.
template <typename A, typename B>
double cosine(std::span<const A> a, std::span<const B> b) {
    if (a.size() != b.size()) throw ContractError("cosine of vectors with different dimensions");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]);
        const double y = static_cast<double>(b[i]);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine(std::span<const double>(a.values), std::span<const double>(b.values));
}

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    /// Identifier recorded in config echoes and index files.
    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    virtual std::vector<EmbeddingVector> embed_batch(std::span<const std::string> texts) const {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed(t));
        return out;
    }
};

/// Offline bag-of-words embedder: lowercase alphanumeric tokens hashed with
/// FNV-1a 64 into `dimension` buckets, counts L2-normalized.
class HashingEmbedder final : public EmbeddingProvider {
public:
    explicit HashingEmbedder(std::size_t dimension = 1024) : dimension_(dimension) {
        if (dimension_ == 0) throw ContractError("embedding dimension must be positive");
    }

    std::string id() const override { return "hashing-fnv1a-" + std::to_string(dimension_); }
    std::size_t dimension() const override { return dimension_; }

    std::size_t bucket(std::string_view token) const { return text::fnv1a64(token) % dimension_; }

    EmbeddingVector embed(std::string_view s) const override {
        EmbeddingVector v;
        v.values.assign(dimension_, 0.0);
        for (const auto& tok : text::tokenize(s)) v.values[bucket(tok)] += 1.0;
        v.zero = !normalize(v.values);
        return v;
    }

private:
    std::size_t dimension_;
};

inline EmbeddingVector embed(std::string_view s, const EmbeddingProvider& provider) { return provider.embed(s); }

}  // namespace ttp
