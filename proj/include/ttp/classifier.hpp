#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ttp/corpus.hpp"
#include "ttp/error.hpp"
#include "ttp/tactic.hpp"
#include "ttp/text.hpp"

namespace ttp {

/// (term index, weight) pairs sorted by index.
using SparseVector = std::vector<std::pair<std::uint32_t, double>>;

/// Lexicographically ordered term list with smoothed inverse document
/// frequencies: idf = ln((1 + N) / (1 + df)) + 1.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(std::vector<std::string> terms, std::vector<double> idf) : terms_(std::move(terms)), idf_(std::move(idf)) {
        if (terms_.size() != idf_.size()) throw ContractError("vocabulary terms and idf differ in length");
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            if (i && !(terms_[i - 1] < terms_[i])) throw ContractError("vocabulary terms must be strictly sorted");
            index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
        }
    }

    std::size_t size() const noexcept { return terms_.size(); }
    const std::vector<std::string>& terms() const noexcept { return terms_; }
    const std::vector<double>& idf() const noexcept { return idf_; }

    std::optional<std::uint32_t> find(std::string_view term) const {
        auto it = index_.find(std::string(term));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// TF-IDF, L2-normalized. Terms outside the vocabulary are ignored.
    SparseVector featurize(std::string_view s) const {
        std::map<std::uint32_t, double> counts;
        for (const auto& tok : text::tokenize(s))
            if (auto i = find(tok)) counts[*i] += 1.0;
        SparseVector out;
        out.reserve(counts.size());
        double norm = 0.0;
        for (auto [i, c] : counts) {
            double w = c * idf_[i];
            out.emplace_back(i, w);
            norm += w * w;
        }
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (auto& [i, w] : out) w /= norm;
        }
        return out;
    }

    bool operator==(const Vocabulary& o) const { return terms_ == o.terms_ && idf_ == o.idf_; }

private:
    std::vector<std::string> terms_;
    std::vector<double> idf_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

inline Vocabulary fit_vocabulary(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ContractError("cannot fit a vocabulary on an empty corpus");
    std::map<std::string, std::size_t> df;
    for (const auto& t : texts) {
        auto toks = text::tokenize(t);
        std::sort(toks.begin(), toks.end());
        toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
        for (auto& tok : toks) ++df[tok];
    }
    if (df.empty()) throw ContractError("corpus contains no tokens");
    std::vector<std::string> terms;
    std::vector<double> idf;
    const double n = static_cast<double>(texts.size());
    for (const auto& [term, count] : df) {
        terms.push_back(term);
        idf.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
    }
    return Vocabulary(std::move(terms), std::move(idf));
}

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t epochs = 30;
    double learning_rate = 5e-5;
    std::uint64_t seed = 1106;

    void validate() const {
        if (batch_size < 1) throw ContractError("batch_size must be >= 1");
        if (epochs < 1) throw ContractError("epochs must be >= 1");
        if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ContractError("learning_rate must be positive");
    }
    bool operator==(const TrainConfig&) const = default;
};

/// 14 independent logistic heads over a shared vocabulary. A tactic is
/// predicted when its sigmoid output is strictly above the threshold.
struct MultiLabelModel {
    static constexpr double kThreshold = 0.5;

    Vocabulary vocab;
    std::vector<double> weights;  // kTacticCount rows of vocab.size(), row-major
    std::array<double, kTacticCount> bias{};
    TrainConfig config;

    static MultiLabelModel zeros(Vocabulary v, TrainConfig c = {}) {
        MultiLabelModel m;
        m.weights.assign(kTacticCount * v.size(), 0.0);
        m.vocab = std::move(v);
        m.config = c;
        return m;
    }

    std::span<double> head(std::size_t h) { return {weights.data() + h * vocab.size(), vocab.size()}; }
    std::span<const double> head(std::size_t h) const { return {weights.data() + h * vocab.size(), vocab.size()}; }

    std::array<double, kTacticCount> logits(const SparseVector& x) const {
        std::array<double, kTacticCount> z = bias;
        for (std::size_t h = 0; h < kTacticCount; ++h) {
            auto w = head(h);
            for (auto [i, v] : x) z[h] += w[i] * v;
        }
        return z;
    }

    bool operator==(const MultiLabelModel&) const = default;
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline std::array<double, kTacticCount> predict_proba(const MultiLabelModel& model, std::string_view s) {
    auto z = model.logits(model.vocab.featurize(s));
    for (double& v : z) v = sigmoid(v);
    return z;
}

inline TacticSet predict(const MultiLabelModel& model, std::string_view s) {
    auto p = predict_proba(model, s);
    TacticSet out;
    for (Tactic t : kAllTactics)
        if (p[index_of(t)] > MultiLabelModel::kThreshold) out.insert(t);
    return out;
}

struct Gradient {
    std::vector<double> weights;
    std::array<double, kTacticCount> bias{};
};

/// Mean binary cross-entropy over every (sample, head) pair.
inline double bce_loss(const MultiLabelModel& model, std::span<const SparseVector> x, std::span<const TacticSet> y) {
    if (x.size() != y.size() || x.empty()) throw ContractError("bce_loss needs matching, nonempty batches");
    double total = 0.0;
    for (std::size_t b = 0; b < x.size(); ++b) {
        auto z = model.logits(x[b]);
        for (std::size_t h = 0; h < kTacticCount; ++h) {
            const double target = y[b].contains(kAllTactics[h]) ? 1.0 : 0.0;
            // softplus(z) - target * z, evaluated without overflow
            total += std::max(z[h], 0.0) + std::log1p(std::exp(-std::abs(z[h]))) - target * z[h];
        }
    }
    return total / static_cast<double>(x.size() * kTacticCount);
}

inline Gradient bce_gradient(const MultiLabelModel& model, std::span<const SparseVector> x,
                             std::span<const TacticSet> y) {
    if (x.size() != y.size() || x.empty()) throw ContractError("bce_gradient needs matching, nonempty batches");
    Gradient g;
    g.weights.assign(model.weights.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(x.size() * kTacticCount);
    const std::size_t v = model.vocab.size();
    for (std::size_t b = 0; b < x.size(); ++b) {
        auto z = model.logits(x[b]);
        for (std::size_t h = 0; h < kTacticCount; ++h) {
            const double target = y[b].contains(kAllTactics[h]) ? 1.0 : 0.0;
            const double dz = (sigmoid(z[h]) - target) * scale;
            g.bias[h] += dz;
            for (auto [i, val] : x[b]) g.weights[h * v + i] += dz * val;
        }
    }
    return g;
}

namespace detail {

/// Unbiased draw in [0, bound] from the raw 64-bit engine output, so the
/// shuffle is identical across standard library implementations.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t range = bound + 1;
    if (range == 0) return rng();
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t r;
    do r = rng();
    while (r >= limit);
    return r % range;
}

inline void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i - 1)]);
}

}  // namespace detail

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Mini-batch gradient descent on mean BCE. Weights start at zero; the seed
/// only drives the per-epoch shuffle, so training is fully deterministic.
inline MultiLabelModel train(const std::vector<LabeledDescription>& descriptions, const TrainConfig& config,
                             const EpochCallback& on_epoch = {}) {
    config.validate();
    if (descriptions.empty()) throw ContractError("no training descriptions");
    std::vector<std::string> texts;
    std::vector<TacticSet> labels;
    for (const auto& d : descriptions) {
        if (d.tactic_labels.empty()) throw ContractError("description " + d.attack_id + " has no tactic label");
        texts.push_back(d.description_text);
        labels.push_back(d.tactic_labels);
    }
    MultiLabelModel model = MultiLabelModel::zeros(fit_vocabulary(texts), config);
    std::vector<SparseVector> features;
    features.reserve(texts.size());
    for (const auto& t : texts) features.push_back(model.vocab.featurize(t));

    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(features.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t v = model.vocab.size();

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        detail::shuffle(order, rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<SparseVector> bx;
            std::vector<TacticSet> by;
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(features[order[i]]);
                by.push_back(labels[order[i]]);
            }
            const double loss = bce_loss(model, bx, by);
            if (!std::isfinite(loss)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batches + 1) + " (learning_rate " +
                                    std::to_string(config.learning_rate) + ", batch_size " +
                                    std::to_string(config.batch_size) + ")");
            }
            epoch_loss += loss;
            ++batches;
            // Sparse update: only features present in the batch move.
            const double scale = 1.0 / static_cast<double>(bx.size() * kTacticCount);
            std::vector<std::array<double, kTacticCount>> dz(bx.size());
            for (std::size_t b = 0; b < bx.size(); ++b) {
                auto z = model.logits(bx[b]);
                for (std::size_t h = 0; h < kTacticCount; ++h) {
                    const double target = by[b].contains(kAllTactics[h]) ? 1.0 : 0.0;
                    dz[b][h] = (sigmoid(z[h]) - target) * scale;
                }
            }
            for (std::size_t b = 0; b < bx.size(); ++b) {
                for (std::size_t h = 0; h < kTacticCount; ++h) {
                    const double step = config.learning_rate * dz[b][h];
                    model.bias[h] -= step;
                    for (auto [i, val] : bx[b]) model.weights[h * v + i] -= step * val;
                }
            }
        }
        if (on_epoch) on_epoch(epoch, epoch_loss / static_cast<double>(batches));
    }
    return model;
}

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }
inline std::uint64_t get_u64(std::string_view in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw ParseError("model file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 8;
    return v;
}
inline double get_f64(std::string_view in, std::size_t& pos) { return std::bit_cast<double>(get_u64(in, pos)); }

inline constexpr char kModelMagic[4] = {'T', 'T', 'P', 'M'};
inline constexpr std::uint64_t kModelVersion = 1;

}  // namespace detail

/// "TTPM", u64 version, config echo (batch, epochs, lr, seed), u64 vocab
/// size, per term (u64 length, bytes, f64 idf), 14 f64 biases, 14 x V f64
/// weights, u64 FNV-1a trailer. Little-endian.
inline std::string serialize_model(const MultiLabelModel& m) {
    using namespace detail;
    std::string out(kModelMagic, 4);
    put_u64(out, kModelVersion);
    put_u64(out, m.config.batch_size);
    put_u64(out, m.config.epochs);
    put_f64(out, m.config.learning_rate);
    put_u64(out, m.config.seed);
    put_u64(out, m.vocab.size());
    for (std::size_t i = 0; i < m.vocab.size(); ++i) {
        put_u64(out, m.vocab.terms()[i].size());
        out += m.vocab.terms()[i];
        put_f64(out, m.vocab.idf()[i]);
    }
    for (double b : m.bias) put_f64(out, b);
    for (double w : m.weights) put_f64(out, w);
    put_u64(out, text::fnv1a64(out));
    return out;
}

inline MultiLabelModel deserialize_model(std::string_view bytes) {
    using namespace detail;
    if (bytes.size() < 4 + 8 * 7) throw ParseError("model file truncated");
    std::string_view body = bytes.substr(0, bytes.size() - 8);
    std::size_t tpos = bytes.size() - 8;
    if (get_u64(bytes, tpos) != text::fnv1a64(body)) throw ChecksumError("model checksum mismatch");
    if (std::memcmp(body.data(), kModelMagic, 4) != 0) throw ParseError("not a model file (bad magic)");
    std::size_t pos = 4;
    if (auto v = get_u64(body, pos); v != kModelVersion) throw ParseError("unsupported model version " + std::to_string(v));
    TrainConfig c;
    c.batch_size = get_u64(body, pos);
    c.epochs = get_u64(body, pos);
    c.learning_rate = get_f64(body, pos);
    c.seed = get_u64(body, pos);
    const std::uint64_t n = get_u64(body, pos);
    std::vector<std::string> terms;
    std::vector<double> idf;
    for (std::uint64_t i = 0; i < n; ++i) {
        auto len = get_u64(body, pos);
        if (pos + len > body.size()) throw ParseError("model term overruns file");
        terms.emplace_back(body.substr(pos, len));
        pos += len;
        idf.push_back(get_f64(body, pos));
    }
    MultiLabelModel m = MultiLabelModel::zeros(Vocabulary(std::move(terms), std::move(idf)), c);
    for (double& b : m.bias) b = get_f64(body, pos);
    for (double& w : m.weights) w = get_f64(body, pos);
    if (pos != body.size()) throw ParseError("trailing bytes in model file");
    return m;
}

inline void save_model(const MultiLabelModel& m, const std::filesystem::path& path) {
    text::write_file_atomic(path, serialize_model(m));
}

inline MultiLabelModel load_model(const std::filesystem::path& path) { return deserialize_model(text::read_file(path)); }

}  // namespace ttp
