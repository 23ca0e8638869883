#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bgfg/config.hpp"
#include "bgfg/pipeline.hpp"
#include "oracles/gradient_suite.hpp"
#include "support/tiny.hpp"

using namespace bgfg;

namespace {

struct StepChecksums {
    std::uint64_t stage1 = 0, stage2 = 0, bridge = 0;
};

std::vector<StepChecksums> checksums_per_step(const TrainingConfig& cfg, std::span<const FrameSample> data,
                                              StepChecksums* initial = nullptr) {
    std::vector<StepChecksums> out;
    run_training_schedule(cfg, data, [&](int, const TwoStageModel& m) {
        out.push_back({m.stage1.params().checksum(), m.stage2.params().checksum(), m.bridge.checksum()});
    });
    if (initial) {
        TwoStageModel m(cfg.stage1, cfg.stage2);
        std::mt19937_64 rng(cfg.seed);
        m.initialize(rng, cfg.init_std);
        *initial = {m.stage1.params().checksum(), m.stage2.params().checksum(), m.bridge.checksum()};
    }
    return out;
}

bool same(const std::optional<Real>& a, const std::optional<Real>& b) {
    if (a.has_value() != b.has_value()) return false;
    return !a || std::bit_cast<std::uint64_t>(*a) == std::bit_cast<std::uint64_t>(*b);
}

}  // namespace

TEST(Bridge, FullScaleSizes) {
    const Tensor out = bilinear_bridge(Tensor({1, 3, 128, 128}, 0.25), 961);
    EXPECT_EQ(out.shape(), (Shape{1, 3, 961, 961}));
}

TEST(Bridge, SameSizeIsBitwiseIdentity) {
    std::mt19937_64 rng(1);
    const Tensor x = Tensor::uniform({2, 3, 9, 9}, -1, 1, rng);
    EXPECT_TRUE(bilinear_bridge(x, 9).bitwise_equal(x));
}

TEST(Bridge, ConstantInConstantOut) {
    for (auto [from, to] : {std::pair<std::size_t, std::size_t>{8, 16}, {32, 64}, {16, 7}, {5, 23}}) {
        const Tensor out = bilinear_bridge(Tensor({1, 3, from, from}, 0.37), to);
        for (auto v : out.data()) EXPECT_NEAR(v, 0.37, 1e-15);
    }
}

TEST(Bridge, CoefficientsAreFixed) {
    BilinearBridge b(8, 16);
    for (const auto& [name, p] : b.coefficients()) EXPECT_FALSE(p.trainable) << name;
    EXPECT_EQ(b.checksum(), BilinearBridge(8, 16).checksum());
    EXPECT_NE(b.checksum(), BilinearBridge(8, 17).checksum());
}

TEST(JointLoss, Examples) {
    EXPECT_EQ(joint_loss(2.0, 3.0, 1.0), 5.0);
    EXPECT_EQ(joint_loss(2.5, 3.0, 0.0), 2.5);
    Graph g;
    Var r = g.input(Tensor({1}, 0.1)), s = g.input(Tensor({1}, 0.7));
    Var l = joint_loss(r, s, 0.0);
    EXPECT_EQ(l.value()[0], 0.1);
    g.backward(l);
    EXPECT_EQ(g.grad(s)[0], 0.0);
    EXPECT_EQ(g.grad(r)[0], 1.0);
}

// Gradient of the joint loss with respect to the stage-1 output, through the
// bridge, the concatenation and a tiny stage-2 network.
TEST(JointLoss, GradientThroughBridgeMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    Network stage2(build_mcfcn(tiny::stage2()));
    stage2.initialize(rng, 0.3);
    const BilinearBridge bridge(8, 16);
    const Tensor target = Tensor::uniform({1, 3, 8, 8}, -0.5, 0.5, rng);
    const Tensor frame = Tensor::uniform({1, 3, 16, 16}, -0.5, 0.5, rng);
    const auto labels = oracle::random_labels(1, 16, 16, rng);
    for (Real lambda : {0.0, 0.7, 1.0}) {
        auto build = [&](Graph& g, const std::vector<Var>& in) {
            Var rec = reconstruction_loss(in[0], g.constant(target));
            Var input = concat_channels(g.constant(frame), bridge.forward(in[0]));
            Var seg = softmax_cross_entropy(stage2.forward(g, input, false, false), labels);
            return joint_loss(rec, seg, lambda);
        };
        EXPECT_LT(oracle::check_gradients(build, {Tensor::uniform({1, 3, 8, 8}, -0.5, 0.5, rng)}), 1e-4)
            << "lambda " << lambda;
    }
}

TEST(TrainingConfig, FullScalePresetValues) {
    const TrainingConfig c = TrainingConfig::paper();
    EXPECT_EQ(c.steps[0].batch_size, 4u);
    EXPECT_EQ(c.steps[1].batch_size, 2u);
    EXPECT_EQ(c.steps[2].batch_size, 1u);
    EXPECT_EQ(c.steps[0].learning_rate, 1e-4);
    EXPECT_EQ(c.steps[1].learning_rate, 1e-3);
    EXPECT_EQ(c.steps[2].learning_rate, 1e-5);
    EXPECT_EQ(c.steps[0].iterations, 20000u);
    EXPECT_EQ(c.steps[1].iterations, 6000u);
    EXPECT_EQ(c.steps[2].iterations, 3000u);
    EXPECT_EQ(c.init_std, 0.01);
    EXPECT_EQ(c.lambda, 1.0);
    EXPECT_EQ(c.stage1.input_size, 128u);
    EXPECT_EQ(c.stage2.input_size, 961u);
    EXPECT_NO_THROW(c.validate());
}

TEST(TrainingConfig, DeskValues) {
    const TrainingConfig c = TrainingConfig::desk();
    EXPECT_EQ(c.steps[0].iterations, 2000u);
    EXPECT_EQ(c.steps[1].iterations, 1000u);
    EXPECT_EQ(c.steps[2].iterations, 500u);
    EXPECT_EQ(c.stage1.input_size, 32u);
    EXPECT_EQ(c.stage2.input_size, 64u);
}

TEST(TrainingConfig, ScopeOrderIsFixed) {
    TrainingConfig c = tiny::config();
    std::swap(c.steps[0].scope, c.steps[1].scope);
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny::config();
    c.lambda = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny::config();
    c.steps[2].batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Schedule, EmptyDataIsAnError) {
    EXPECT_THROW(run_training_schedule(tiny::config(), std::vector<FrameSample>{}), DataError);
}

TEST(Schedule, StepTwoFreezesStageOneExactly) {
    const auto data = tiny::scene();
    StepChecksums init;
    const auto s = checksums_per_step(tiny::config(), data, &init);
    ASSERT_EQ(s.size(), 3u);
    EXPECT_NE(s[0].stage1, init.stage1);
    EXPECT_EQ(s[0].stage2, init.stage2);
    EXPECT_EQ(s[1].stage1, s[0].stage1);
    EXPECT_NE(s[1].stage2, s[0].stage2);
    EXPECT_NE(s[2].stage1, s[1].stage1);  // step 3 reaches stage 1 through the bridge
    EXPECT_NE(s[2].stage2, s[1].stage2);
}

TEST(Schedule, BridgeNeverChanges) {
    const auto data = tiny::scene();
    StepChecksums init;
    for (const auto& s : checksums_per_step(tiny::config(), data, &init)) EXPECT_EQ(s.bridge, init.bridge);
}

TEST(Schedule, LambdaZeroLeavesStageTwoUntouchedInStepThree) {
    TrainingConfig c = tiny::config();
    c.lambda = 0;
    const auto s = checksums_per_step(c, tiny::scene());
    EXPECT_EQ(s[2].stage2, s[1].stage2);
    EXPECT_NE(s[2].stage1, s[1].stage1);
}

TEST(Schedule, LambdaZeroJointEqualsReconstruction) {
    TrainingConfig c = tiny::config();
    c.lambda = 0;
    const auto r = run_training_schedule(c, tiny::scene());
    for (const auto& rec : r.history)
        if (rec.step == 3) EXPECT_EQ(rec.joint, *rec.l_rec);
}

TEST(Schedule, HistoryLayout) {
    const TrainingConfig c = tiny::config();
    const auto r = run_training_schedule(c, tiny::scene());
    ASSERT_EQ(r.history.size(), 15u);
    for (std::size_t i = 0; i < r.history.size(); ++i) {
        const auto& h = r.history[i];
        EXPECT_EQ(h.iteration, i + 1);
        EXPECT_EQ(h.l_rec.has_value(), h.step != 2);
        EXPECT_EQ(h.l_seg.has_value(), h.step != 1);
        if (h.step == 3) EXPECT_EQ(h.joint, joint_loss(*h.l_rec, *h.l_seg, c.lambda));
    }
}

TEST(Schedule, FixedSeedReproducesHistoryBitForBit) {
    const auto data = tiny::scene();
    const auto a = run_training_schedule(tiny::config(5), data), b = run_training_schedule(tiny::config(5), data);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_TRUE(same(a.history[i].l_rec, b.history[i].l_rec));
        EXPECT_TRUE(same(a.history[i].l_seg, b.history[i].l_seg));
        EXPECT_TRUE(same(a.history[i].joint, b.history[i].joint));
    }
    EXPECT_EQ(a.model.stage2.params().checksum(), b.model.stage2.params().checksum());
    const auto c = run_training_schedule(tiny::config(6), data);
    EXPECT_NE(a.model.stage1.params().checksum(), c.model.stage1.params().checksum());
}

TEST(Schedule, ZeroIterationStepsAreSkipped) {
    TrainingConfig c = tiny::config();
    c.steps[1].iterations = c.steps[2].iterations = 0;
    const auto r = run_training_schedule(c, tiny::scene());
    EXPECT_EQ(r.history.size(), c.steps[0].iterations);
}

TEST(Schedule, NonFiniteLossAborts) {
    auto data = tiny::scene();
    for (auto& f : data) f.image[5] = std::nan("");
    EXPECT_THROW(run_training_schedule(tiny::config(), data), NumericalError);
}

TEST(Schedule, MissingBackgroundUsesLabelMaskedMedian) {
    auto data = tiny::scene();
    for (auto& f : data) f.gt_background.reset();
    EXPECT_NO_THROW(run_training_schedule(tiny::config(), data));
}

TEST(Inference, ShapesAndDeterminism) {
    auto r = run_training_schedule(tiny::config(), tiny::scene());
    const auto frame = tiny::scene()[2].image;
    const InferenceResult a = infer_end_to_end(r.model, frame), b = infer_end_to_end(r.model, frame);
    EXPECT_EQ(a.background.shape(), (Shape{3, 8, 8}));
    EXPECT_EQ(a.probs.probs.shape(), (Shape{1, 2, 16, 16}));
    EXPECT_EQ(a.mask.height, 16u);
    EXPECT_TRUE(a.background.bitwise_equal(b.background));
    EXPECT_TRUE(a.probs.probs.bitwise_equal(b.probs.probs));
    EXPECT_EQ(a.mask, b.mask);
}

TEST(Inference, UninitialisedModelIsAnError) {
    TwoStageModel m(tiny::stage1(), tiny::stage2());
    EXPECT_THROW(infer_end_to_end(m, Tensor({3, 16, 16})), Error);
}

TEST(Inference, ThreeChannelModelIgnoresBackground) {
    TrainingConfig c = tiny::config();
    c.stage2 = tiny::stage2(16, 3);
    auto r = run_training_schedule(c, tiny::scene());
    EXPECT_FALSE(r.model.uses_background());
    EXPECT_EQ(infer_end_to_end(r.model, tiny::scene()[0].image).mask.width, 16u);
}

TEST(LossCsv, LeavesUnevaluatedTermsEmpty) {
    const auto r = run_training_schedule(tiny::config(), tiny::scene());
    const auto path = std::filesystem::temp_directory_path() / "bgfg_loss_test.csv";
    write_loss_csv(path.string(), r.history);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "iteration,l_rec,l_seg,joint");
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 15u);
    EXPECT_NE(lines[0].find(",,"), std::string::npos);      // step 1: no l_seg
    EXPECT_EQ(lines[6].rfind("7,,", 0), 0u);                 // step 2: no l_rec
    EXPECT_EQ(lines[14].find(",,"), std::string::npos);     // step 3: everything
    std::filesystem::remove(path);
}

TEST(Config, DefaultsToDesk) {
    const TrainingConfig c = parse_config("");
    EXPECT_EQ(c.profile, "desk");
    EXPECT_EQ(c.steps, TrainingConfig::desk().steps);
}

TEST(Config, KeysAndOverrides) {
    const std::string text =
        "# comment\n"
        "profile = paper\n"
        "seed = 12   # trailing comment\n"
        "lambda = 0.5\n"
        "step2.learning_rate = 2e-3\n"
        "stage1.channels = 8, 16\n"
        "stage1.input_size = 64\n";
    const TrainingConfig c = parse_config(text, {{"seed", "99"}, {"step3.iterations", "7"}});
    EXPECT_EQ(c.profile, "paper");
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.lambda, 0.5);
    EXPECT_EQ(c.steps[1].learning_rate, 2e-3);
    EXPECT_EQ(c.steps[2].iterations, 7u);
    EXPECT_EQ(c.steps[0].iterations, 20000u);
    EXPECT_EQ(c.stage1.channel_progression, (std::vector<std::size_t>{8, 16}));
    EXPECT_EQ(c.stage2.input_size, 961u);
}

TEST(Config, ProfileSetLateStillActsAsBase) {
    const TrainingConfig c = parse_config("lambda = 0.25\nprofile = paper\n");
    EXPECT_EQ(c.lambda, 0.25);
    EXPECT_EQ(c.stage1.input_size, 128u);
}

TEST(Config, Errors) {
    EXPECT_THROW(parse_config("bogus = 1\n"), ConfigError);
    EXPECT_THROW(parse_config("step4.iterations = 1\n"), ConfigError);
    EXPECT_THROW(parse_config("step1.speed = 1\n"), ConfigError);
    EXPECT_THROW(parse_config("lambda = fast\n"), ConfigError);
    EXPECT_THROW(parse_config("seed = 1x\n"), ConfigError);
    EXPECT_THROW(parse_config("just a line\n"), ConfigError);
    EXPECT_THROW(parse_config("profile = huge\n"), ConfigError);
    EXPECT_THROW(parse_config("step1.scope = both\n"), ConfigError);
    EXPECT_THROW(parse_config("stage2.in_channels = 5\n"), ConfigError);
    EXPECT_THROW(parse_override("novalue"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/file.cfg"), ConfigError);
}

TEST(Config, DescribeRoundTrips) {
    TrainingConfig c = parse_config("profile = paper\nseed = 3\nlambda = 0.1\nstep2.batch_size = 3\n");
    const TrainingConfig back = parse_config(describe(c));
    EXPECT_EQ(describe(back), describe(c));
    EXPECT_EQ(back.lambda, c.lambda);
    EXPECT_EQ(back.steps, c.steps);
    EXPECT_EQ(back.stage1, c.stage1);
    EXPECT_EQ(back.stage2, c.stage2);
}

TEST(Config, ShippedFilesParse) {
    const std::filesystem::path dir = BGFG_SOURCE_DIR "/configs";
    const TrainingConfig desk = load_config((dir / "desk.cfg").string());
    EXPECT_EQ(describe(desk), describe(TrainingConfig::desk()));
    const TrainingConfig paper = load_config((dir / "paper.cfg").string());
    EXPECT_EQ(describe(paper), describe(TrainingConfig::paper()));
}
