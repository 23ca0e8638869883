#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <unistd.h>

#include <gtest/gtest.h>

#include "bgfg/cli.hpp"
#include "bgfg/dataset.hpp"

using namespace bgfg;
namespace fs = std::filesystem;

namespace {

constexpr const char* kTinyConfig = R"(# a few iterations of very small networks
stage1.input_size = 8
stage1.channels = 4
stage1.latent_channels = 4
stage2.input_size = 16
stage2.stage_channels = 4,4
stage2.fc6_dilation = 2
stage2.output_stride = 2
stage2.fc_channels = 4
step1.iterations = 4
step2.iterations = 3
step3.iterations = 2
)";

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    return out;
}

struct Outcome {
    int code;
    std::string out, err;
};

class Cli : public ::testing::Test {
protected:
    fs::path root;
    fs::path seq;
    fs::path cfg;

    void SetUp() override {
        root = fs::temp_directory_path() / ("bgfg_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root);
        fs::create_directories(root);
        seq = root / "synthetic" / "square";
        cfg = root / "tiny.cfg";
        std::ofstream(cfg) << kTinyConfig;
        ASSERT_EQ(run({"synth", "--preset", "moving_square", "--seed", "2", "--frames", "8", "--canvas", "16",
                       "--out", seq.string()})
                      .code,
                  kExitOk);
    }
    void TearDown() override { fs::remove_all(root); }

    static Outcome run(const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_command(args, out, err);
        return {code, out.str(), err.str()};
    }
    Outcome train(const fs::path& out) {
        return run({"train", "--config", cfg.string(), "--seed", "5", "--data", seq.string(), "--out", out.string()});
    }
};

}  // namespace

TEST_F(Cli, SynthWritesSequenceLayout) {
    for (int i = 1; i <= 8; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%06d.png", i);
        EXPECT_TRUE(fs::exists(seq / "input" / (std::string("in") + name)));
        EXPECT_TRUE(fs::exists(seq / "groundtruth" / (std::string("gt") + name)));
        EXPECT_TRUE(fs::exists(seq / "background" / (std::string("bg") + name)));
    }
    const Sequence s = load_sequence(seq);
    EXPECT_EQ(s.frames.size(), 8u);
    EXPECT_EQ(s.frames[0].height(), 16u);
}

TEST_F(Cli, TrainInferEvalChain) {
    const auto before = snapshot(seq);
    const Outcome t = train(root / "run");
    ASSERT_EQ(t.code, kExitOk) << t.err;
    EXPECT_NE(t.err.find("# resolved configuration"), std::string::npos);
    EXPECT_NE(t.err.find("stage2.fc6_dilation = 2"), std::string::npos);
    for (const char* f : {"step1.ckpt", "step2.ckpt", "step3.ckpt", "config.cfg", "loss.csv"})
        EXPECT_TRUE(fs::exists(root / "run" / f)) << f;
    const std::string loss = slurp(root / "run" / "loss.csv");
    EXPECT_TRUE(loss.starts_with("iteration,l_rec,l_seg,joint\n"));
    EXPECT_EQ(std::count(loss.begin(), loss.end(), '\n'), 1 + 4 + 3 + 2);

    const std::string ckpt = (root / "run" / "step3.ckpt").string();
    const Outcome i = run({"infer", "--checkpoint", ckpt, "--data", seq.string(), "--out", (root / "inf").string()});
    ASSERT_EQ(i.code, kExitOk) << i.err;
    EXPECT_TRUE(fs::exists(root / "inf" / "square" / "bg000005.png"));
    EXPECT_TRUE(fs::exists(root / "inf" / "square" / "mask000008.png"));
    EXPECT_FALSE(fs::exists(root / "inf" / "square" / "mask000001.png"));  // train split

    const Outcome e = run({"eval", "--checkpoint", ckpt, "--data", seq.string(), "--out", (root / "ev").string()});
    ASSERT_EQ(e.code, kExitOk) << e.err;
    EXPECT_TRUE(fs::exists(root / "ev" / "report.csv"));
    EXPECT_NE(e.out.find("overall"), std::string::npos);

    EXPECT_EQ(snapshot(seq), before);
}

TEST_F(Cli, EvalOfGroundTruthMasksScoresOne) {
    const Sequence s = load_sequence(seq);
    fs::create_directories(root / "masks" / "square");
    for (const auto& f : s.frames) {
        Mask m(f.height(), f.width());
        for (std::size_t p = 0; p < m.values.size(); ++p) m.values[p] = f.labels.values[p] == kForeground;
        char name[32];
        std::snprintf(name, sizeof name, "mask%06zu.png", f.frame_index);
        write_mask((root / "masks" / "square" / name).string(), m);
    }
    const Outcome e = run({"eval", "--masks", (root / "masks").string(), "--data", seq.string(), "--split", "all", "--out",
                           (root / "ev").string()});
    ASSERT_EQ(e.code, kExitOk) << e.err;
    const std::string csv = slurp(root / "ev" / "report.csv");
    EXPECT_NE(csv.find("overall,overall"), std::string::npos) << csv;
    const std::string last = csv.substr(csv.rfind("overall"));
    EXPECT_TRUE(last.ends_with(",1,1,1\n")) << last;
}

TEST_F(Cli, SweepBaselineOneCoversTheGrid) {
    const Outcome r = run({"sweep", "--method", "baseline1", "--config", cfg.string(), "--data", seq.string(), "--out",
                           (root / "sw").string()});
    ASSERT_EQ(r.code, kExitOk) << r.err;
    std::ifstream csv(root / "sw" / "sweep_baseline1.csv");
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "theta,f_measure");
    std::vector<double> thetas;
    while (std::getline(csv, line)) thetas.push_back(std::stod(line.substr(0, line.find(','))));
    ASSERT_EQ(thetas.size(), 51u);
    EXPECT_EQ(thetas.front(), 0.0);
    EXPECT_EQ(thetas.back(), 0.5);
    EXPECT_NE(r.out.find("best F"), std::string::npos);
}

TEST_F(Cli, PcaAndRpcaSweepsRun) {
    for (const char* m : {"pca", "rpca"}) {
        const Outcome r = run({"sweep", "--method", m, "--data", seq.string(), "--out", (root / "sw").string()});
        ASSERT_EQ(r.code, kExitOk) << r.err;
        EXPECT_TRUE(fs::exists(root / "sw" / (std::string("sweep_") + m + ".csv")));
    }
    EXPECT_EQ(run({"pca", "--k", "2", "--data", seq.string(), "--out", (root / "p").string()}).code, kExitOk);
    EXPECT_EQ(run({"rpca", "--rank", "1", "--data", seq.string(), "--out", (root / "r").string()}).code, kExitOk);
    EXPECT_TRUE(fs::exists(root / "r" / "square" / "mask000008.png"));
}

TEST_F(Cli, SameArgumentsSameBytes) {
    ASSERT_EQ(train(root / "run").code, kExitOk);
    const auto first = snapshot(root / "run");
    fs::remove_all(root / "run");
    ASSERT_EQ(train(root / "run").code, kExitOk);
    EXPECT_EQ(snapshot(root / "run"), first);
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run({}).code, kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
    EXPECT_EQ(run({"train", "--bogus"}).code, kExitUsage);
    EXPECT_EQ(run({"--help"}).code, kExitOk);
    EXPECT_EQ(run({"train", "--set", "nonsense.key=1", "--data", seq.string(), "--out", (root / "x").string()}).code,
              kExitUsage);
    EXPECT_EQ(run({"train", "--set", "step1.iterations=abc", "--data", seq.string(), "--out", (root / "x").string()}).code,
              kExitUsage);
    EXPECT_EQ(run({"train", "--config", (root / "missing.cfg").string(), "--data", seq.string(), "--out",
                   (root / "x").string()})
                  .code,
              kExitUsage);
    EXPECT_EQ(run({"sweep", "--method", "pca", "--data", (root / "nowhere").string(), "--out", (root / "x").string()}).code,
              kExitData);
    EXPECT_EQ(run({"eval", "--data", seq.string()}).code, kExitUsage);
    EXPECT_EQ(run({"sweep", "--method", "magic", "--data", seq.string(), "--out", (root / "x").string()}).code, kExitUsage);

    std::ofstream(root / "bad.ckpt") << "not a checkpoint";
    EXPECT_EQ(run({"infer", "--checkpoint", (root / "bad.ckpt").string(), "--data", seq.string(), "--out",
                   (root / "x").string()})
                  .code,
              kExitData);
}
