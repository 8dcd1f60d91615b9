#include <cmath>

#include <gtest/gtest.h>

#include "support/rng.hpp"
#include "ttp/classifier.hpp"

using namespace ttp;
using namespace ttp::testing;

namespace {

LabeledDescription desc(std::string id, std::string text, TacticSet labels) {
    LabeledDescription d;
    d.attack_id = std::move(id);
    d.name = d.attack_id;
    d.kind = DescriptionKind::Technique;
    d.description_text = std::move(text);
    d.tactic_labels = labels;
    d.url = "u";
    return d;
}

}  // namespace

TEST(Vocabulary, SmallExample) {
    auto v = fit_vocabulary({"a b", "b c"});
    EXPECT_EQ(v.terms(), (std::vector<std::string>{"a", "b", "c"}));
    // smoothed idf: ln(3/2)+1 for a and c, ln(3/3)+1 = 1 for b
    EXPECT_NEAR(v.idf()[0], std::log(1.5) + 1.0, 1e-15);
    EXPECT_NEAR(v.idf()[1], 1.0, 1e-15);
}

TEST(Vocabulary, RepeatedDocumentsMatchOneCopy) {
    EXPECT_EQ(fit_vocabulary({"x y z", "x y z", "x y z"}), fit_vocabulary({"x y z"}));
}

TEST(Vocabulary, Errors) {
    EXPECT_THROW(fit_vocabulary({}), ContractError);
    EXPECT_THROW(fit_vocabulary({"", "..."}), ContractError);
    EXPECT_THROW(Vocabulary({"b", "a"}, {1, 1}), ContractError);
}

TEST(Vocabulary, FeaturizeIsUnitNormAndIgnoresUnseen) {
    auto v = fit_vocabulary({"alpha beta", "beta gamma"});
    auto x = v.featurize("Alpha ALPHA beta omega");
    double n = 0;
    for (auto [i, w] : x) n += w * w;
    EXPECT_NEAR(n, 1.0, 1e-12);
    ASSERT_EQ(x.size(), 2u);
    EXPECT_EQ(v.terms()[x[0].first], "alpha");
    // weights proportional to count * idf
    EXPECT_NEAR(x[0].second / x[1].second, 2.0 * v.idf()[0] / v.idf()[1], 1e-12);
    EXPECT_TRUE(v.featurize("omega psi").empty());
}

TEST(Predict, ZeroModelPredictsNothing) {
    auto m = MultiLabelModel::zeros(fit_vocabulary({"a"}));
    for (double p : predict_proba(m, "a")) EXPECT_EQ(p, 0.5);
    EXPECT_TRUE(predict(m, "a").empty());
}

TEST(Predict, PositiveBiasAlwaysPredicts) {
    auto m = MultiLabelModel::zeros(fit_vocabulary({"a"}));
    m.bias[index_of(Tactic::Exfiltration)] = 10.0;
    EXPECT_EQ(predict(m, "a"), TacticSet{Tactic::Exfiltration});
    EXPECT_EQ(predict(m, ""), TacticSet{Tactic::Exfiltration});
    EXPECT_EQ(predict(m, "never seen words"), TacticSet{Tactic::Exfiltration});
}

TEST(Train, SeparableToySetReachesFullAccuracy) {
    std::vector<LabeledDescription> d;
    const char* a[] = {"registry run key autostart", "autostart service registry", "run key boot logon",
                       "logon script boot autostart"};
    const char* b[] = {"encrypt files ransom note", "wipe disk ransom", "files encrypt wipe", "note ransom disk"};
    for (int i = 0; i < 4; ++i) {
        d.push_back(desc("A" + std::to_string(i), a[i], {Tactic::Persistence}));
        d.push_back(desc("B" + std::to_string(i), b[i], {Tactic::Impact}));
    }
    std::vector<double> losses;
    auto m = train(d, TrainConfig{}, [&](std::size_t, double loss) { losses.push_back(loss); });
    ASSERT_EQ(losses.size(), 30u);
    EXPECT_LT(losses.back(), losses.front());
    for (const auto& x : d) EXPECT_EQ(predict(m, x.description_text), x.tactic_labels) << x.description_text;
}

TEST(Train, MemorizesASingleExample) {
    auto m = train({desc("T1", "enumerate domain trust relationships", {Tactic::Discovery})}, TrainConfig{});
    auto p = predict(m, "enumerate domain trust relationships");
    EXPECT_TRUE(p.contains(Tactic::Discovery));
    EXPECT_EQ(p, TacticSet{Tactic::Discovery});
}

TEST(Train, DeterministicGivenSeed) {
    std::vector<LabeledDescription> d;
    Rng rng(3);
    const std::vector<std::string> words = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int i = 0; i < 40; ++i) {
        std::string t;
        for (int k = 0; k < 6; ++k) t += rng.pick(words) + " ";
        d.push_back(desc("T" + std::to_string(i), t, {kAllTactics[rng.below(kTacticCount)]}));
    }
    TrainConfig c;
    c.learning_rate = 0.5;
    EXPECT_EQ(train(d, c), train(d, c));
    auto other = c;
    other.seed = 7;
    EXPECT_NE(train(d, c).weights, train(d, other).weights);  // the shuffle matters
}

TEST(Train, HeadsAreIndependentUnderTacticPermutation) {
    Rng rng(4);
    std::array<std::size_t, kTacticCount> perm{};
    for (std::size_t i = 0; i < kTacticCount; ++i) perm[i] = i;
    for (std::size_t i = kTacticCount; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const std::vector<std::string> words = {"p", "q", "r", "s", "t", "u"};
    std::vector<LabeledDescription> d, dp;
    for (int i = 0; i < 30; ++i) {
        std::string t;
        for (int k = 0; k < 5; ++k) t += rng.pick(words) + " ";
        TacticSet s, sp;
        for (Tactic x : kAllTactics)
            if (rng.chance(0.25)) s.insert(x), sp.insert(kAllTactics[perm[index_of(x)]]);
        if (s.empty()) s.insert(Tactic::Impact), sp.insert(kAllTactics[perm[index_of(Tactic::Impact)]]);
        d.push_back(desc("T" + std::to_string(i), t, s));
        dp.push_back(desc("T" + std::to_string(i), t, sp));
    }
    TrainConfig c;
    c.learning_rate = 1.0;
    c.epochs = 5;
    auto m = train(d, c), mp = train(dp, c);
    for (std::size_t h = 0; h < kTacticCount; ++h) {
        auto a = m.head(h), b = mp.head(perm[h]);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end()));
        EXPECT_EQ(m.bias[h], mp.bias[perm[h]]);
    }
    for (const auto& x : d) {
        auto p = predict_proba(m, x.description_text), pp = predict_proba(mp, x.description_text);
        for (std::size_t h = 0; h < kTacticCount; ++h) EXPECT_EQ(p[h], pp[perm[h]]);
    }
}

TEST(Train, GradientMatchesCentralDifferences) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::string> terms = {"a", "b", "c", "d", "e"};
        auto m = MultiLabelModel::zeros(Vocabulary(terms, std::vector<double>(5, 1.0)));
        for (double& w : m.weights) w = rng.uniform(-2, 2);
        for (double& b : m.bias) b = rng.uniform(-1, 1);
        std::vector<SparseVector> x;
        std::vector<TacticSet> y;
        const std::size_t batch = rng.between(1, 4);
        for (std::size_t b = 0; b < batch; ++b) {
            SparseVector v;
            for (std::uint32_t i = 0; i < 5; ++i)
                if (rng.chance(0.6)) v.emplace_back(i, rng.uniform(-1, 1));
            x.push_back(v);
            TacticSet s;
            for (Tactic t : kAllTactics)
                if (rng.chance(0.3)) s.insert(t);
            y.push_back(s);
        }
        auto g = bce_gradient(m, x, y);
        const double eps = 1e-6;
        auto check = [&](double& param, double analytic) {
            const double saved = param;
            param = saved + eps;
            const double up = bce_loss(m, x, y);
            param = saved - eps;
            const double down = bce_loss(m, x, y);
            param = saved;
            const double numeric = (up - down) / (2 * eps);
            // floor keeps round-off in the difference quotient from dominating zero gradients
            const double denom = std::max(1e-5, std::abs(analytic) + std::abs(numeric));
            EXPECT_LT(std::abs(analytic - numeric) / denom, 1e-4) << analytic << " vs " << numeric;
        };
        for (std::size_t i = 0; i < m.weights.size(); ++i) check(m.weights[i], g.weights[i]);
        for (std::size_t h = 0; h < kTacticCount; ++h) check(m.bias[h], g.bias[h]);
    }
}

TEST(Train, ExtremeLearningRateStaysFinite) {
    // bounded per-step gradients plus saturation keep every weight finite,
    // even with conflicting labels on identical text
    std::vector<LabeledDescription> d = {desc("T1", "aa bb", {Tactic::Impact}), desc("T2", "aa bb", {Tactic::Discovery}),
                                         desc("T3", "cc dd", {Tactic::Discovery})};
    TrainConfig c;
    c.learning_rate = 1e308;
    c.batch_size = 1;
    c.epochs = 200;
    std::vector<double> losses;
    auto m = train(d, c, [&](std::size_t, double loss) { losses.push_back(loss); });
    for (double w : m.weights) EXPECT_TRUE(std::isfinite(w));
    for (double b : m.bias) EXPECT_TRUE(std::isfinite(b));
    for (double l : losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Train, ConfigValidation) {
    TrainConfig c;
    c.batch_size = 0;
    EXPECT_THROW(train({desc("T", "x", {Tactic::Impact})}, c), ContractError);
    c = {};
    c.epochs = 0;
    EXPECT_THROW(c.validate(), ContractError);
    EXPECT_THROW(train({}, TrainConfig{}), ContractError);
    EXPECT_THROW(train({desc("T", "x", {})}, TrainConfig{}), ContractError);
}

TEST(ModelFile, RoundTripAndIntegrity) {
    std::vector<LabeledDescription> d = {desc("T1", "dump lsass memory", {Tactic::CredentialAccess}),
                                         desc("T2", "scan network shares", {Tactic::Discovery})};
    TrainConfig c;
    c.learning_rate = 0.3;
    c.epochs = 4;
    auto m = train(d, c);
    auto bytes = serialize_model(m);
    EXPECT_EQ(bytes.substr(0, 4), "TTPM");
    auto back = deserialize_model(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.config, c);
    EXPECT_EQ(serialize_model(back), bytes);
    auto bad = bytes;
    bad[bytes.size() / 2] ^= 1;
    EXPECT_THROW(deserialize_model(bad), ChecksumError);
    EXPECT_THROW(deserialize_model(bytes.substr(0, 20)), ParseError);
}
