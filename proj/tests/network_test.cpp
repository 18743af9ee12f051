#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "larp/lrpe.hpp"
#include "larp/network.hpp"
#include "support.hpp"

namespace larp {
namespace {

using test::random_map;

ModelConfig tiny_config(std::uint64_t seed = 3) {
    ModelConfig c;
    c.layers = {{2, 9, {}}, {3, 9, {}}};
    c.num_classes = 3;
    c.seed = seed;
    c.input_height = c.input_width = 8;
    return c;
}

TEST(BuildModel, PaperDefaultCounts) {
    const Model m = build_model(paper_default_config());
    EXPECT_EQ(m.projection_parameter_count(), 4096u);
    EXPECT_EQ(m.classifier_parameter_count(), 10u * 1025u);
    EXPECT_EQ(m.trainable_parameter_count(), 4096u + 10250u);
    EXPECT_EQ(m.feature_dim(), 1024u);
}

TEST(BuildModel, SingleLayerCount) {
    ModelConfig c;
    c.layers = {{4, 25, {}}};
    c.num_classes = 10;
    c.input_height = c.input_width = 28;
    EXPECT_EQ(build_model(c).projection_parameter_count(), 8u);
}

TEST(BuildModel, Initialization) {
    const Model m = build_model(tiny_config());
    for (const auto& layer : m.distributions) {
        for (const auto& d : layer) {
            EXPECT_EQ(d.midpoint, 0.0);
            EXPECT_NEAR(std::exp(d.log_halfwidth), 1.0 / 3.0, 1e-15);
        }
    }
    for (double w : m.classifier_weights) EXPECT_EQ(w, 0.0);
    for (double b : m.classifier_bias) EXPECT_EQ(b, 0.0);
    EXPECT_EQ(m.classifier_weights.size(), 3u * 3u);
    // wiring: layer 1 reads the image, layer 2 reads one of two maps
    for (std::size_t k : m.config.layers[0].wiring) EXPECT_EQ(k, 0u);
    for (std::size_t k : m.config.layers[1].wiring) EXPECT_LT(k, 2u);
}

TEST(BuildModel, SameSeedSameModel) {
    const Model a = build_model(paper_default_config(10, 9));
    const Model b = build_model(paper_default_config(10, 9));
    EXPECT_TRUE(a == b);
    const Model c = build_model(paper_default_config(10, 10));
    EXPECT_NE(a.kernels[0][0].noise, c.kernels[0][0].noise);
}

TEST(BuildModel, WiringUsesEveryInputEventually) {
    ModelConfig c;
    c.layers = {{4, 9, {}}, {64, 9, {}}};
    c.num_classes = 2;
    c.input_height = c.input_width = 8;
    const Model m = build_model(c);
    std::vector<int> used(4, 0);
    for (std::size_t k : m.config.layers[1].wiring) ++used[k];
    for (int u : used) EXPECT_GT(u, 0);
}

TEST(BuildModel, ExplicitWiringKept) {
    ModelConfig c = tiny_config();
    c.layers[1].wiring = {1, 1, 0};
    EXPECT_EQ(build_model(c).config.layers[1].wiring, (std::vector<std::size_t>{1, 1, 0}));
    c.layers[1].wiring = {0, 2, 0};
    EXPECT_THROW(build_model(c), ConfigError);
}

TEST(Forward, ZeroImage) {
    Model m = build_model(tiny_config());
    m.classifier_bias = {0.5, -1.0, 2.0};
    const ForwardTrace t = forward(m, FeatureMap(8, 8));
    for (const auto& layer : t.layers) {
        for (const auto& map : layer.output) EXPECT_EQ(map, FeatureMap(8, 8));
    }
    for (double f : t.features) EXPECT_EQ(f, 0.0);
    const auto want = softmax(m.classifier_bias);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(t.probabilities[c], want[c]);
}

TEST(Forward, DeltaKernelsReduceToStackedMedians) {
    ModelConfig c;
    c.layers = {{2, 9, {0, 0}}, {2, 9, {0, 1}}};
    c.num_classes = 2;
    c.input_height = c.input_width = 6;
    Model m = build_model(c);
    for (auto& layer : m.kernels) {
        for (auto& k : layer) k = test::delta_kernel(9);
    }
    std::mt19937_64 gen(1);
    const FeatureMap image = random_map(gen, 6, 6, 0.0, 1.0);
    const FeatureMap twice = test::sorted_median(test::sorted_median(image, 3), 3);
    const double mean = std::accumulate(twice.values().begin(), twice.values().end(), 0.0) / 36.0;
    const auto features = extract_features(m, image);
    ASSERT_EQ(features.size(), 2u);
    for (double f : features) EXPECT_NEAR(f, mean, 1e-15);
}

TEST(Forward, ComposesLayerOperators) {
    const Model m = build_model(tiny_config());
    std::mt19937_64 gen(2);
    const FeatureMap image = random_map(gen, 8, 8, 0.0, 1.0);
    const ForwardTrace t = forward(m, image);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < t.layers[i].output.size(); ++j) {
            const FeatureMap& in = i == 0 ? image : t.layers[0].output[m.config.layers[i].wiring[j]];
            const FeatureMap y = test::naive_project(in, m.kernels[i][j].coefficients);
            FeatureMap rect = y;
            for (double& v : rect.values()) v = std::fabs(v);
            const FeatureMap want = test::sorted_median(rect, 3);
            for (std::size_t p = 0; p < want.size(); ++p) {
                ASSERT_NEAR(t.layers[i].output[j].values()[p], want.values()[p], 1e-14);
            }
        }
    }
}

TEST(Forward, ProbabilitiesNormalizedAndFinite) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 20; ++trial) {
        Model m = build_model(tiny_config(trial));
        for (double& w : m.classifier_weights) w = std::uniform_real_distribution<double>(-5, 5)(gen);
        const ForwardTrace t = forward(m, random_map(gen, 8, 8, 0.0, 1.0));
        const double sum = std::accumulate(t.probabilities.begin(), t.probabilities.end(), 0.0);
        EXPECT_NEAR(sum, 1.0, 1e-10);
        for (const auto& layer : t.layers) {
            for (const auto& map : layer.output) ASSERT_TRUE(map.all_finite());
        }
        for (double f : t.features) EXPECT_GE(f, 0.0);
    }
}

TEST(Forward, ShapeMismatch) {
    const Model m = build_model(tiny_config());
    EXPECT_THROW(forward(m, FeatureMap(8, 7)), ShapeError);
}

TEST(Forward, NegatedKernelLeavesOutputUnchanged) {
    Model m = build_model(tiny_config());
    std::mt19937_64 gen(4);
    const FeatureMap image = random_map(gen, 8, 8, 0.0, 1.0);
    const ForwardTrace before = forward(m, image);
    for (double& k : m.kernels[0][1].coefficients) k = -k;
    const ForwardTrace after = forward(m, image);
    EXPECT_EQ(after.layers[0].output[1], before.layers[0].output[1]);
    EXPECT_EQ(after.features, before.features);
}

TEST(ExtractFeatures, PaperDefaultDimension) {
    const Model m = build_model(paper_default_config());
    std::mt19937_64 gen(5);
    const FeatureMap image = random_map(gen, 28, 28, 0.0, 1.0);
    const auto a = extract_features(m, image);
    EXPECT_EQ(a.size(), 1024u);
    EXPECT_EQ(extract_features(m, image), a);
    const auto zero = extract_features(m, FeatureMap(28, 28));
    for (double f : zero) EXPECT_EQ(f, 0.0);
}

TEST(ExtractFeatures, LengthFollowsLastLayer) {
    for (std::size_t n : {1u, 5u, 17u}) {
        ModelConfig c = tiny_config();
        c.layers[1].num_projections = n;
        EXPECT_EQ(extract_features(build_model(c), FeatureMap(8, 8, 0.3)).size(), n);
    }
}

TEST(Softmax, UniformForZeroHead) {
    const std::vector<double> features{0.3, 0.1};
    const auto p = softmax_classify(features, std::vector<double>(8, 0.0), std::vector<double>(4, 0.0));
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Softmax, LargeLogitsStayFinite) {
    const auto p = softmax(std::vector<double>{1000.0, 1000.0, 1000.0});
    for (double v : p) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, HandNormalized) {
    const std::vector<double> bias{std::log(1.0), std::log(2.0), std::log(7.0)};
    const std::vector<double> features{0.5};
    const auto p = softmax_classify(features, std::vector<double>(3, 0.0), bias);
    EXPECT_NEAR(p[0], 0.1, 1e-15);
    EXPECT_NEAR(p[1], 0.2, 1e-15);
    EXPECT_NEAR(p[2], 0.7, 1e-15);
}

TEST(Softmax, DimensionMismatch) {
    const std::vector<double> features{1.0, 2.0};
    EXPECT_THROW(softmax_classify(features, std::vector<double>(5, 0.0), std::vector<double>(3, 0.0)),
                 ShapeError);
}

TEST(Argmax, LowestIndexWinsTies) {
    EXPECT_EQ(argmax(std::vector<double>{0.2, 0.4, 0.4}), 1u);
    EXPECT_EQ(argmax(std::vector<double>{0.5, 0.5}), 0u);
}

TEST(ActivationPattern, DetectsSignFlip) {
    const Model m = build_model(tiny_config());
    std::mt19937_64 gen(6);
    const FeatureMap image = random_map(gen, 8, 8, 0.0, 1.0);
    const ForwardTrace t = forward(m, image);
    const auto base = activation_pattern(m, t);
    EXPECT_EQ(activation_pattern(m, forward(m, image)), base);
    Model shifted = m;
    shifted.distributions[0][0].midpoint = 5.0;
    shifted.refresh_kernels();
    EXPECT_NE(activation_pattern(shifted, forward(shifted, image)), base);
}

}  // namespace
}  // namespace larp
