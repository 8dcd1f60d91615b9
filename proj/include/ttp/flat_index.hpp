#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ttp/embedding.hpp"
#include "ttp/error.hpp"
#include "ttp/text.hpp"

namespace ttp {

struct SearchHit {
    std::string key;
    double similarity = 0.0;

    bool operator==(const SearchHit&) const = default;
};

/// Exact cosine top-k over float32 vectors. Build is exclusive; a built index
/// is immutable and safe to query from many threads.
class FlatIndex {
public:
    static constexpr std::uint32_t kFormatVersion = 1;
    static constexpr char kMagic[4] = {'T', 'T', 'P', 'X'};

    explicit FlatIndex(std::size_t dimension) : dimension_(dimension) {
        if (dimension_ == 0) throw ContractError("index dimension must be positive");
    }

    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return keys_.size(); }
    bool empty() const noexcept { return keys_.empty(); }

    const std::string& key(std::size_t row) const { return keys_.at(row); }
    std::span<const float> vector(std::size_t row) const {
        return {data_.data() + row * dimension_, dimension_};
    }
    /// Caller-defined handle (e.g. position in the source text list).
    std::size_t payload_ref(std::size_t row) const { return payload_.at(row); }

    std::optional<std::size_t> find(const std::string& k) const {
        auto it = row_of_.find(k);
        if (it == row_of_.end()) return std::nullopt;
        return it->second;
    }

    void add(std::string k, const EmbeddingVector& v, std::size_t payload_ref = 0) {
        if (v.dimension() != dimension_) throw ContractError("vector dimension mismatch for key " + k);
        std::vector<float> row(v.values.begin(), v.values.end());
        add_raw(std::move(k), row, payload_ref);
    }

    void add_raw(std::string k, std::span<const float> row, std::size_t payload_ref = 0) {
        if (row.size() != dimension_) throw ContractError("vector dimension mismatch for key " + k);
        for (float x : row)
            if (!std::isfinite(x)) throw ContractError("non-finite vector entry for key " + k);
        if (row_of_.contains(k)) throw ContractError("duplicate index key " + k);
        row_of_.emplace(k, keys_.size());
        keys_.push_back(std::move(k));
        data_.insert(data_.end(), row.begin(), row.end());
        payload_.push_back(payload_ref);
    }

    /// Descending cosine, ties by ascending key; excluded keys never appear.
    std::vector<SearchHit> top_k(const EmbeddingVector& query, std::size_t k,
                                 const std::set<std::string>& exclude = {}) const {
        if (k < 1) throw ContractError("top_k requires k >= 1");
        if (query.zero || l2_norm(query.values) == 0.0)
            throw ContractError("similarity undefined for a zero query vector");
        if (query.dimension() != dimension_) throw ContractError("query dimension mismatch");
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(keys_.size());
        std::span<const double> q(query.values);
        for (std::size_t row = 0; row < keys_.size(); ++row) {
            if (!exclude.empty() && exclude.contains(keys_[row])) continue;
            scored.emplace_back(cosine(q, vector(row)), row);
        }
        auto better = [this](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return keys_[a.second] < keys_[b.second];
        };
        std::size_t take = std::min(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);
        std::vector<SearchHit> out;
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i) out.push_back({keys_[scored[i].second], scored[i].first});
        return out;
    }

    /// Layout: "TTPX", u32 version, u32 D, u64 count, then per entry u32 key
    /// length, key bytes, D float32; trailer u64 FNV-1a of all prior bytes.
    /// Integers and floats little-endian.
    std::string serialize() const {
        std::string out(kMagic, 4);
        put_u32(out, kFormatVersion);
        put_u32(out, static_cast<std::uint32_t>(dimension_));
        put_u64(out, keys_.size());
        for (std::size_t row = 0; row < keys_.size(); ++row) {
            put_u32(out, static_cast<std::uint32_t>(keys_[row].size()));
            out += keys_[row];
            for (float x : vector(row)) put_u32(out, std::bit_cast<std::uint32_t>(x));
        }
        put_u64(out, text::fnv1a64(out));
        return out;
    }

    /// payload_ref of loaded rows is the row number.
    static FlatIndex deserialize(std::string_view bytes) {
        if (bytes.size() < 28) throw ParseError("index file truncated");
        std::string_view body = bytes.substr(0, bytes.size() - 8);
        std::size_t trailer_pos = bytes.size() - 8;
        if (get_u64(bytes, trailer_pos) != text::fnv1a64(body)) throw ChecksumError("index checksum mismatch");
        if (std::memcmp(body.data(), kMagic, 4) != 0) throw ParseError("not an index file (bad magic)");
        std::size_t pos = 4;
        auto version = get_u32(body, pos);
        if (version != kFormatVersion) throw ParseError("unsupported index version " + std::to_string(version));
        auto dim = get_u32(body, pos);
        auto count = get_u64(body, pos);
        FlatIndex index(dim);
        std::vector<float> row(dim);
        for (std::uint64_t e = 0; e < count; ++e) {
            auto len = get_u32(body, pos);
            if (pos + len > body.size()) throw ParseError("index entry overruns file");
            std::string k(body.substr(pos, len));
            pos += len;
            for (auto& x : row) x = std::bit_cast<float>(get_u32(body, pos));
            index.add_raw(std::move(k), row, static_cast<std::size_t>(e));
        }
        if (pos != body.size()) throw ParseError("trailing bytes in index file");
        return index;
    }

    void save(const std::filesystem::path& path) const { text::write_file_atomic(path, serialize()); }
    static FlatIndex load(const std::filesystem::path& path) { return deserialize(text::read_file(path)); }

private:
    static void put_u32(std::string& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    static void put_u64(std::string& out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    static std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
        if (pos + 4 > in.size()) throw ParseError("index file truncated");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    static std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
        if (pos + 8 > in.size()) throw ParseError("index file truncated");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }

    std::size_t dimension_;
    std::vector<std::string> keys_;
    std::vector<float> data_;
    std::vector<std::size_t> payload_;
    std::unordered_map<std::string, std::size_t> row_of_;
};

/// Embeds every (key, text) pair; payload_ref is the entry's position.
inline FlatIndex build_index(std::span<const std::pair<std::string, std::string>> entries,
                             const EmbeddingProvider& provider) {
    FlatIndex index(provider.dimension());
    std::set<std::string_view> seen;
    for (const auto& [k, t] : entries)
        if (!seen.insert(k).second) throw ContractError("duplicate index key " + k);
    std::vector<std::string> texts;
    texts.reserve(entries.size());
    for (const auto& [k, t] : entries) texts.push_back(t);
    auto vectors = provider.embed_batch(texts);
    for (std::size_t i = 0; i < entries.size(); ++i) index.add(entries[i].first, vectors[i], i);
    return index;
}

}  // namespace ttp
