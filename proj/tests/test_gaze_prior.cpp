#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gzrl/gaze_prior.hpp"
#include "gzrl/rng.hpp"

using namespace gzrl;

namespace {

GazeHeatmap make_map(std::size_t h, std::size_t w, std::vector<double> values) {
    return GazeHeatmap{h, w, std::move(values)};
}

GazeHeatmap constant_map(std::size_t h, std::size_t w, double v) {
    return GazeHeatmap{h, w, std::vector<double>(h * w, v)};
}

// Literal two-pass reference: normalize the raw map (uniform fallback), sum
// per patch with the double loop, re-normalize (uniform fallback again).
// Independent of project_to_patches.
std::vector<double> projection_oracle(const GazeHeatmap& h, int p) {
    const std::size_t hp = h.height / static_cast<std::size_t>(p);
    const std::size_t wp = h.width / static_cast<std::size_t>(p);
    std::vector<double> norm(h.values);
    double z = 0.0;
    for (double v : norm) z += v;
    if (z == 0.0)
        std::fill(norm.begin(), norm.end(), 1.0 / static_cast<double>(h.height * h.width));
    else
        for (double& v : norm) v /= z;
    std::vector<double> g(static_cast<std::size_t>(p) * p, 0.0);
    for (int u = 0; u < p; ++u)
        for (int v = 0; v < p; ++v) {
            double acc = 0.0;
            for (std::size_t y = u * hp; y < (u + 1) * hp; ++y)
                for (std::size_t x = v * wp; x < (v + 1) * wp; ++x)
                    acc += norm[y * h.width + x];
            g[static_cast<std::size_t>(u * p + v)] = acc;
        }
    double zg = 0.0;
    for (double v : g) zg += v;
    if (zg == 0.0)
        std::fill(g.begin(), g.end(), 1.0 / static_cast<double>(g.size()));
    else
        for (double& v : g) v /= zg;
    return g;
}

} // namespace

TEST(Project, UniformInUniformOut) {
    const auto d = project_to_patches(constant_map(8, 8, 1.0), 2);
    ASSERT_EQ(d.probs.size(), 4u);
    for (double p : d.probs.probs) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Project, ZeroMassFallsBackToUniform) {
    for (int p : {1, 2, 4}) {
        const auto d = project_to_patches(constant_map(8, 8, 0.0), p);
        for (double v : d.probs.probs)
            EXPECT_DOUBLE_EQ(v, 1.0 / static_cast<double>(p * p));
    }
}

TEST(Project, OneHotPatch) {
    auto m = constant_map(4, 4, 0.0);
    m.at(0, 0) = 7.0;
    const auto d = project_to_patches(m, 2);
    EXPECT_DOUBLE_EQ(d.probs[0], 1.0);
    EXPECT_DOUBLE_EQ(d.probs[1], 0.0);
    EXPECT_DOUBLE_EQ(d.probs[2], 0.0);
    EXPECT_DOUBLE_EQ(d.probs[3], 0.0);
}

TEST(Project, BlockValuesClosedForm) {
    // patch sums 4, 8, 12, 16; total Z = 40
    const auto m = make_map(4, 4,
                            {1, 1, 2, 2,
                             1, 1, 2, 2,
                             3, 3, 4, 4,
                             3, 3, 4, 4});
    const auto d = project_to_patches(m, 2);
    EXPECT_NEAR(d.probs[0], 0.1, 1e-15);
    EXPECT_NEAR(d.probs[1], 0.2, 1e-15);
    EXPECT_NEAR(d.probs[2], 0.3, 1e-15);
    EXPECT_NEAR(d.probs[3], 0.4, 1e-15);
}

TEST(Project, NonDivisibleDimensionsRejectedWithMultiple) {
    try {
        project_to_patches(constant_map(9, 8, 1.0), 2);
        FAIL() << "expected InvalidInputError";
    } catch (const InvalidInputError& e) {
        EXPECT_NE(std::string(e.what()).find("multiple of P=2"), std::string::npos);
    }
    EXPECT_THROW(project_to_patches(constant_map(8, 6, 1.0), 4), InvalidInputError);
}

TEST(Project, NegativeValuesRejected) {
    auto m = constant_map(4, 4, 1.0);
    m.at(2, 2) = -0.5;
    EXPECT_THROW(project_to_patches(m, 2), InvalidInputError);
}

TEST(Project, MassConservedOnRandomInputs) {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t dim = 4 * (1 + rng.below(4));
        GazeHeatmap m = constant_map(dim, dim, 0.0);
        for (double& v : m.values) v = rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 5.0);
        const auto d = project_to_patches(m, 4);
        double sum = 0.0;
        for (double v : d.probs.probs) sum += v;
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(Project, MatchesBruteForceOracleExhaustively) {
    // random heatmaps up to 16x16, every valid P, exact to 1e-12
    Rng rng(22);
    for (std::size_t h = 1; h <= 16; ++h) {
        for (std::size_t w = 1; w <= 16; ++w) {
            GazeHeatmap m = constant_map(h, w, 0.0);
            for (double& v : m.values) v = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.0, 3.0);
            for (int p = 1; p <= static_cast<int>(std::min(h, w)); ++p) {
                if (h % static_cast<std::size_t>(p) != 0 || w % static_cast<std::size_t>(p) != 0)
                    continue;
                const auto got = project_to_patches(m, p);
                const auto want = projection_oracle(m, p);
                ASSERT_EQ(got.probs.size(), want.size());
                for (std::size_t j = 0; j < want.size(); ++j)
                    EXPECT_NEAR(got.probs[j], want[j], 1e-12);
            }
        }
    }
}

TEST(Aggregate, IdentityWindow) {
    const auto m = make_map(2, 2, {1.0, 2.0, 3.0, 4.0});
    const auto out = aggregate_temporal({m}, AggregationWeights{0, {1.0}});
    EXPECT_EQ(out.values, m.values);
}

TEST(Aggregate, ConvexityFixedPoint) {
    const auto m = make_map(2, 2, {1.0, 2.0, 3.0, 4.0});
    const auto w = make_weights(1, 0.7);
    const auto out = aggregate_temporal({m, m, m}, w);
    for (std::size_t i = 0; i < m.values.size(); ++i) EXPECT_NEAR(out.values[i], m.values[i], 1e-12);
}

TEST(Aggregate, ScalarWeightedAverage) {
    const auto out = aggregate_temporal(
        {constant_map(3, 3, 0.0), constant_map(3, 3, 4.0), constant_map(3, 3, 8.0)},
        AggregationWeights{1, {0.25, 0.5, 0.25}});
    for (double v : out.values) EXPECT_DOUBLE_EQ(v, 4.0);
}

TEST(Aggregate, MismatchesRejected) {
    EXPECT_THROW(aggregate_temporal({constant_map(2, 2, 1.0), constant_map(3, 3, 1.0),
                                     constant_map(2, 2, 1.0)},
                                    AggregationWeights{1, {0.25, 0.5, 0.25}}),
                 ShapeError);
    EXPECT_THROW(aggregate_temporal({constant_map(2, 2, 1.0)},
                                    AggregationWeights{1, {0.25, 0.5, 0.25}}),
                 ShapeError);
}

TEST(Aggregate, LinearInInputs) {
    Rng rng(23);
    const auto w = make_weights(1, 1.3);
    std::vector<GazeHeatmap> maps;
    for (int i = 0; i < 3; ++i) {
        GazeHeatmap m = constant_map(4, 4, 0.0);
        for (double& v : m.values) v = rng.uniform(0.0, 2.0);
        maps.push_back(m);
    }
    const double a = 2.5;
    std::vector<GazeHeatmap> scaled = maps;
    for (auto& m : scaled)
        for (double& v : m.values) v *= a;
    const auto base = aggregate_temporal(maps, w);
    const auto big = aggregate_temporal(scaled, w);
    for (std::size_t i = 0; i < base.values.size(); ++i)
        EXPECT_NEAR(big.values[i], a * base.values[i], 1e-12);
}

TEST(Aggregate, UnitMassPreserved) {
    Rng rng(24);
    const auto w = make_weights(2, 1.0);
    std::vector<GazeHeatmap> maps;
    for (int i = 0; i < 5; ++i) {
        GazeHeatmap m = constant_map(4, 4, 0.0);
        for (double& v : m.values) v = rng.uniform(0.01, 2.0);
        const double total = m.total();
        for (double& v : m.values) v /= total;
        maps.push_back(m);
    }
    EXPECT_NEAR(aggregate_temporal(maps, w).total(), 1.0, 1e-9);
}

TEST(Aggregate, CommutesWithProjectionAtEqualMass) {
    // project(aggregate(maps)) equals the weighted combination of per-map
    // projections when all maps share the same total mass.
    Rng rng(25);
    const auto w = make_weights(1, 1.0);
    std::vector<GazeHeatmap> maps;
    for (int i = 0; i < 3; ++i) {
        GazeHeatmap m = constant_map(8, 8, 0.0);
        for (double& v : m.values) v = rng.uniform(0.01, 2.0);
        const double total = m.total();
        for (double& v : m.values) v /= total; // equal unit mass
        maps.push_back(m);
    }
    const auto direct = project_to_patches(aggregate_temporal(maps, w), 4);
    std::vector<double> combo(16, 0.0);
    for (std::size_t k = 0; k < maps.size(); ++k) {
        const auto proj = project_to_patches(maps[k], 4);
        for (std::size_t j = 0; j < combo.size(); ++j)
            combo[j] += w.weights[k] * proj.probs[j];
    }
    double sum = 0.0;
    for (double v : combo) sum += v;
    for (double& v : combo) v /= sum;
    for (std::size_t j = 0; j < combo.size(); ++j) EXPECT_NEAR(direct.probs[j], combo[j], 1e-12);
}

TEST(Weights, DegenerateWindow) {
    const auto w = make_weights(0, 1.0);
    ASSERT_EQ(w.weights.size(), 1u);
    EXPECT_DOUBLE_EQ(w.weights[0], 1.0);
}

TEST(Weights, FlatLimit) {
    const auto w = make_weights(1, 1e9);
    for (double v : w.weights) EXPECT_NEAR(v, 1.0 / 3.0, 1e-6);
}

TEST(Weights, ClosedFormSigmaOne) {
    const auto w = make_weights(1, 1.0);
    EXPECT_NEAR(w.weights[0], 0.21194155761708544, 1e-15);
    EXPECT_NEAR(w.weights[1], 0.57611688476582911, 1e-15);
    EXPECT_NEAR(w.weights[2], 0.21194155761708544, 1e-15);
}

TEST(Weights, CenterIsPeak) {
    for (double sigma : {0.3, 1.0, 5.0}) {
        const auto w = make_weights(3, sigma);
        w.validate();
        for (double v : w.weights) EXPECT_LE(v, w.at(0));
    }
}

TEST(Weights, NonPositiveSigmaRejected) {
    EXPECT_THROW(make_weights(1, 0.0), InvalidInputError);
    EXPECT_THROW(make_weights(1, -2.0), InvalidInputError);
    EXPECT_THROW(make_weights(-1, 1.0), InvalidInputError);
}

TEST(Variant, StructuredIsIdentity) {
    const PatchDistribution g{2, Simplex::checked({0.1, 0.2, 0.3, 0.4})};
    const PatchDistribution c{2, Simplex::checked({0.4, 0.3, 0.2, 0.1})};
    const auto out = make_variant(g, c, VariantKind::kStructured, 7);
    EXPECT_EQ(out.probs.probs, g.probs.probs);
}

TEST(Variant, Uniform) {
    const PatchDistribution g{2, Simplex::checked({0.1, 0.2, 0.3, 0.4})};
    const auto out = make_variant(g, g, VariantKind::kUniform, 7);
    for (double v : out.probs.probs) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Variant, ShuffledIsSeededPermutation) {
    const PatchDistribution g{2, Simplex::checked({0.1, 0.2, 0.3, 0.4})};
    const auto a = make_variant(g, g, VariantKind::kShuffled, 7);
    const auto b = make_variant(g, g, VariantKind::kShuffled, 7);
    EXPECT_EQ(a.probs.probs, b.probs.probs); // deterministic in the seed

    auto sorted_in = g.probs.probs;
    auto sorted_out = a.probs.probs;
    std::sort(sorted_in.begin(), sorted_in.end());
    std::sort(sorted_out.begin(), sorted_out.end());
    EXPECT_EQ(sorted_in, sorted_out); // same multiset
    double sum = 0.0;
    for (double v : a.probs.probs) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);

    const auto c = make_variant(g, g, VariantKind::kShuffled, 8);
    EXPECT_NE(c.probs.probs, a.probs.probs); // different seed, different order (whp)
}

TEST(Variant, SingleFrameReturnsCenterProjection) {
    const PatchDistribution g{2, Simplex::checked({0.1, 0.2, 0.3, 0.4})};
    const PatchDistribution c{2, Simplex::checked({0.4, 0.3, 0.2, 0.1})};
    const auto out = make_variant(g, c, VariantKind::kSingleFrame, 7);
    EXPECT_EQ(out.probs.probs, c.probs.probs);
}

TEST(Variant, UnknownKindStringRejected) {
    EXPECT_THROW(variant_from_string("banana"), InvalidInputError);
    EXPECT_EQ(variant_from_string("single-frame"), VariantKind::kSingleFrame);
}
