#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bgfg/pipeline.hpp"
#include "bgfg/synth.hpp"

using namespace bgfg;

namespace {

FrameSample frame_with(const Tensor& image, LabelMap labels) {
    FrameSample f;
    f.image = image;
    f.labels = std::move(labels);
    f.sequence_id = "s";
    return f;
}

Real px(const Tensor& t, std::size_t c, std::size_t r, std::size_t k) { return t[(c * t.dim(1) + r) * t.dim(2) + k]; }

}  // namespace

TEST(EncoderDecoder, FullScaleLatentExtent) {
    const auto p = EncoderDecoderProfile::paper();
    EXPECT_EQ(p.input_size, 128u);
    EXPECT_EQ(p.latent_extent(), 128u >> p.channel_progression.size());
    const NetworkSpec spec = build_encoder_decoder(p);
    EXPECT_EQ(spec.output_shape(2), (Shape{2, 3, 128, 128}));
}

TEST(EncoderDecoder, RejectsIndivisibleInput) {
    EncoderDecoderProfile p;
    p.input_size = 36;  // 36 / 8 is not whole
    EXPECT_THROW(build_encoder_decoder(p), ConfigError);
}

TEST(EncoderDecoder, ShapePreservingForSeveralProfiles) {
    std::mt19937_64 rng(4);
    for (const auto& [size, chans] : std::vector<std::pair<std::size_t, std::vector<std::size_t>>>{
             {8, {4}}, {16, {4, 8}}, {32, {16, 32, 64}}, {32, {8, 8}}}) {
        EncoderDecoderProfile p;
        p.input_size = size;
        p.channel_progression = chans;
        p.latent_channels = 8;
        Network net(build_encoder_decoder(p));
        net.initialize(rng, 0.05);
        const Tensor out = reconstruct(net, Tensor::uniform({2, 3, size, size}, -0.5, 0.5, rng));
        EXPECT_EQ(out.shape(), (Shape{2, 3, size, size}));
    }
}

TEST(EncoderDecoder, DeskForwardIsFinite) {
    std::mt19937_64 rng(1);
    Network net(build_encoder_decoder(EncoderDecoderProfile::desk()));
    net.initialize(rng, 0.01);
    const Tensor out = reconstruct(net, Tensor::uniform({1, 3, 32, 32}, -0.5, 0.5, rng));
    ASSERT_EQ(out.shape(), (Shape{1, 3, 32, 32}));
    for (auto v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(EncoderDecoder, ZeroNetworkGivesTanhOfZero) {
    std::mt19937_64 rng(1);
    Network net(build_encoder_decoder(EncoderDecoderProfile::desk()));
    net.zero_parameters();
    const Tensor out = reconstruct(net, Tensor::uniform({1, 3, 32, 32}, -0.5, 0.5, rng));
    for (auto v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(EncoderDecoder, SizeMismatchIsAnError) {
    Network net(build_encoder_decoder(EncoderDecoderProfile::desk()));
    EXPECT_THROW(reconstruct(net, Tensor({1, 3, 16, 16})), ShapeError);
}

TEST(ReconstructionLoss, Examples) {
    const Tensor b({2, 2, 3}, 1.5);
    EXPECT_EQ(reconstruction_loss(b, b), 0.0);
    EXPECT_EQ(reconstruction_loss(b, Tensor({2, 2, 3}, 0.5)), 12.0);
    EXPECT_THROW(reconstruction_loss(b, Tensor({2, 3, 2})), ShapeError);
}

TEST(ReconstructionLoss, GradientIsTwiceResidual) {
    std::mt19937_64 rng(3);
    const Tensor bv = Tensor::uniform({1, 3, 4, 4}, -1, 1, rng), tv = Tensor::uniform({1, 3, 4, 4}, -1, 1, rng);
    Graph g;
    Var b = g.input(bv);
    g.backward(reconstruction_loss(b, g.input(tv, false)));
    const Tensor gb = g.grad(b);
    for (std::size_t i = 0; i < gb.size(); ++i) EXPECT_DOUBLE_EQ(gb[i], 2 * (bv[i] - tv[i]));
}

TEST(ReconstructionLoss, NonNegativeAndZeroOnlyAtTarget) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 20; ++k) {
        const Tensor a = Tensor::uniform({3, 5, 5}, -1, 1, rng);
        Tensor b = a;
        EXPECT_EQ(reconstruction_loss(a, b), 0.0);
        b[std::size_t(k) % b.size()] += 1e-3;
        EXPECT_GT(reconstruction_loss(a, b), 0.0);
    }
}

TEST(Median, OddAndEven) {
    EXPECT_EQ(median_of({3, 1, 2}), 2.0);
    EXPECT_EQ(median_of({4, 1, 3, 2}), 2.5);
    EXPECT_THROW(median_of({}), Error);
}

TEST(GroundTruthBackground, StaticSequenceEqualsAnyFrame) {
    std::mt19937_64 rng(8);
    const Tensor img = Tensor::uniform({3, 6, 5}, 0, 1, rng);
    std::vector<FrameSample> frames(4, frame_with(img, LabelMap(6, 5)));
    const auto gt = synthesize_gt_background(frames);
    EXPECT_TRUE(gt.image.bitwise_equal(img));
    for (auto c : gt.coverage) EXPECT_EQ(c, 4u);
}

TEST(GroundTruthBackground, OccludedPixelUsesBackgroundObservationsOnly) {
    std::mt19937_64 rng(9);
    std::vector<FrameSample> frames;
    for (int t = 0; t < 5; ++t) frames.push_back(frame_with(Tensor::uniform({3, 4, 4}, 0, 1, rng), LabelMap(4, 4)));
    frames[2].labels(1, 3) = kForeground;
    const auto gt = synthesize_gt_background(frames);

    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<Real> seen;
        for (int t : {0, 1, 3, 4}) seen.push_back(px(frames[t].image, c, 1, 3));
        std::sort(seen.begin(), seen.end());
        EXPECT_DOUBLE_EQ(px(gt.image, c, 1, 3), (seen[1] + seen[2]) / 2);
    }
    EXPECT_EQ(gt.coverage[1 * 4 + 3], 4u);
}

TEST(GroundTruthBackground, AlwaysForegroundFallsBackToUnconditionalMedian) {
    std::vector<FrameSample> frames;
    for (int t = 0; t < 3; ++t) {
        LabelMap l(2, 2);
        l(0, 0) = kForeground;
        frames.push_back(frame_with(Tensor({3, 2, 2}, 0.1 * (t + 1)), l));
    }
    frames[1].labels(0, 0) = kIgnore;  // ignored is not background either
    const auto gt = synthesize_gt_background(frames);
    EXPECT_EQ(gt.coverage[0], 0u);
    EXPECT_DOUBLE_EQ(px(gt.image, 0, 0, 0), 0.2);
}

TEST(GroundTruthBackground, PermutationInvariant) {
    const auto frames = synth_sequence(SyntheticSceneSpec::moving_square(3));
    std::vector<FrameSample> shuffled(frames.begin(), frames.end());
    std::mt19937_64 rng(1);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_TRUE(synthesize_gt_background(frames).image.bitwise_equal(synthesize_gt_background(shuffled).image));
    EXPECT_THROW(synthesize_gt_background(std::vector<FrameSample>{}), DataError);
}

TEST(GroundTruthBackground, MedianRecoversMovingSquareBackground) {
    SyntheticSceneSpec spec = SyntheticSceneSpec::moving_square(2);
    spec.noise_sigma = 0;
    const auto frames = synth_sequence(spec);
    EXPECT_TRUE(synthesize_gt_background(frames).image.bitwise_equal(*frames[0].gt_background));
}

// Stage 1 alone on a static scene: the 100-iteration window mean of the
// per-pixel loss keeps falling until it is below 1e-3.
TEST(ReconstructionTraining, StaticSceneLossFallsBelowThreshold) {
    SyntheticSceneSpec spec = SyntheticSceneSpec::moving_square(1);
    spec.sprites.clear();
    spec.frames = 20;
    const auto frames = synth_sequence(spec);
    TrainingConfig cfg = TrainingConfig::desk();
    cfg.steps[1].iterations = cfg.steps[2].iterations = 0;
    const auto result = run_training_schedule(cfg, frames);

    const Real per_item = Real(cfg.steps[0].batch_size) * 3 * 32 * 32;
    std::vector<Real> windows;
    for (std::size_t i = 0; i + 100 <= result.history.size(); i += 100) {
        Real s = 0;
        for (std::size_t j = i; j < i + 100; ++j) s += *result.history[j].l_rec / per_item;
        windows.push_back(s / 100);
    }
    ASSERT_EQ(windows.size(), 20u);
    for (std::size_t k = 1; k < windows.size(); ++k)
        if (windows[k - 1] >= 1e-3) EXPECT_LT(windows[k], windows[k - 1]) << "window " << k;
    EXPECT_LT(windows.back(), 1e-3);
}
