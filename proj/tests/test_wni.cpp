#include <gtest/gtest.h>

#include <cmath>

#include "trajgen/wni.hpp"

using namespace trajgen;

namespace {

double flatten_distance(const WniFeature& a, const WniFeature& b) {
    const Vec fa = a.flatten(), fb = b.flatten();
    double d = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) d += (fa[i] - fb[i]) * (fa[i] - fb[i]);
    return std::sqrt(d);
}

}  // namespace

TEST(EmbeddingTable, UnitNormAndDeterministic) {
    EmbeddingTable table;
    table.seed = 5;
    const Vec a = table.embed("noise");
    const Vec b = table.embed("noise");
    double norm = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_DOUBLE_EQ(a[i], b[i]);
        norm += a[i] * a[i];
    }
    EXPECT_NEAR(std::sqrt(norm), 1.0, 1e-12);
}

TEST(EmbeddingTable, VocabularyTokensAreDistinguishable) {
    EmbeddingTable table;
    table.seed = 9001;
    std::vector<Vec> vecs;
    for (const auto& tok : table.vocabulary) vecs.push_back(table.embed(tok));
    for (std::size_t i = 0; i < vecs.size(); ++i)
        for (std::size_t j = i + 1; j < vecs.size(); ++j) {
            double cos = 0.0;
            for (std::size_t d = 0; d < vecs[i].size(); ++d) cos += vecs[i][d] * vecs[j][d];
            EXPECT_LT(std::abs(cos), 0.99);
        }
}

TEST(EmbeddingTable, RecreatedFromSeedReproducesFeatures) {
    EnvConfig config;
    const auto intents = default_intents();
    EmbeddingTable t1, t2;
    t1.seed = t2.seed = 1234;
    const WniFeature f1 = encode_intent(intent_tuples(intents[2], config), t1);
    const WniFeature f2 = encode_intent(intent_tuples(intents[2], config), t2);
    EXPECT_NEAR(flatten_distance(f1, f2), 0.0, 1e-15);
}

TEST(EncodeIntent, ShapeArithmetic) {
    EmbeddingTable table;
    const WniFeature f = encode_intent({{"BS", "noise", "1.0"}}, table);
    EXPECT_EQ(f.matrix.rows, 1u);
    EXPECT_EQ(f.matrix.cols, 32u);
    EXPECT_EQ(f.flatten().size(), 32u);
}

TEST(EncodeIntent, OrderingIsCanonical) {
    EmbeddingTable table;
    const std::vector<EavTuple> fwd = {{"BS", "noise", "1.0"}, {"BS", "user scale", "16"}};
    const std::vector<EavTuple> rev = {{"BS", "user scale", "16"}, {"BS", "noise", "1.0"}};
    const WniFeature a = encode_intent(fwd, table);
    const WniFeature b = encode_intent(rev, table);
    EXPECT_NEAR(flatten_distance(a, b), 0.0, 1e-15);
}

TEST(EncodeIntent, MixedEntitiesRejected) {
    EmbeddingTable table;
    EXPECT_THROW(encode_intent({{"BS", "noise", "1.0"}, {"UAV", "noise", "2.0"}}, table), ConfigError);
}

TEST(EncodeIntent, UnknownAttributeRejected) {
    EmbeddingTable table;
    EXPECT_THROW(encode_intent({{"BS", "flux capacitance", "1.21"}}, table), LookupError);
}

TEST(EncodeIntent, EmptyInputRejected) {
    EmbeddingTable table;
    EXPECT_THROW(encode_intent({}, table), ConfigError);
}

TEST(EncodeIntent, ExperimentIntentsDifferAndAreInjective) {
    EnvConfig config;
    const auto intents = default_intents();
    EmbeddingTable table;
    table.seed = 9001;
    std::vector<WniFeature> feats;
    for (const auto& spec : intents) feats.push_back(encode_intent(intent_tuples(spec, config), table));
    for (std::size_t i = 0; i < feats.size(); ++i) {
        for (double x : feats[i].flatten()) EXPECT_TRUE(std::isfinite(x));
        for (std::size_t j = i + 1; j < feats.size(); ++j)
            EXPECT_GT(flatten_distance(feats[i], feats[j]), 0.1);
    }
}
