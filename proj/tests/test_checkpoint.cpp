#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include <unistd.h>

#include <gtest/gtest.h>

#include "bgfg/checkpoint.hpp"
#include "support/tiny.hpp"

using namespace bgfg;
namespace fs = std::filesystem;

namespace {

class CheckpointFile : public ::testing::Test {
protected:
    fs::path path = fs::temp_directory_path() / ("bgfg_ckpt_" + std::to_string(::getpid()) + ".bin");
    void TearDown() override { fs::remove(path); }

    std::string bytes() const {
        std::ifstream f(path, std::ios::binary);
        return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    }
    void write(const std::string& b) const {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f.write(b.data(), std::streamsize(b.size()));
    }
};

TwoStageModel trained_tiny() { return run_training_schedule(tiny::config(), tiny::scene()).model; }

void expect_rejected(const fs::path& p, const std::string& fragment) {
    try {
        load_checkpoint(p.string());
        ADD_FAILURE() << "expected a DataError mentioning '" << fragment << "'";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

}  // namespace

TEST_F(CheckpointFile, RawRoundTripIsBitExact) {
    Checkpoint c;
    c.metadata = {{"note", "x"}, {"values", {1, 2, 3}}};
    Tensor odd({2, 3});
    const Real specials[] = {0.0, -0.0, std::numeric_limits<Real>::infinity(), std::nan(""),
                             std::numeric_limits<Real>::denorm_min(), -1.2345678901234567e-300};
    for (std::size_t i = 0; i < 6; ++i) odd[i] = specials[i];
    c.tensors.emplace_back("a/odd", odd);
    c.tensors.emplace_back("b", Tensor({1, 1, 1, 5}, 0.1));
    save_checkpoint(path.string(), c);

    const Checkpoint back = load_checkpoint(path.string());
    EXPECT_EQ(back.metadata, c.metadata);
    ASSERT_EQ(back.tensors.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back.tensors[i].first, c.tensors[i].first);
        EXPECT_TRUE(back.tensors[i].second.bitwise_equal(c.tensors[i].second));
    }
    EXPECT_THROW(back.tensor("missing"), DataError);
}

TEST_F(CheckpointFile, ModelRoundTripIsBitExact) {
    TwoStageModel m = trained_tiny();
    save_model(path.string(), m, 7, 3);
    TwoStageModel back = load_model(path.string());
    EXPECT_EQ(back.stage1_profile, m.stage1_profile);
    EXPECT_EQ(back.stage2_profile, m.stage2_profile);
    EXPECT_EQ(back.channel_mean, m.channel_mean);
    for (const auto& [name, p] : m.stage1.params()) EXPECT_TRUE(back.stage1.params().get(name).value.bitwise_equal(p.value)) << name;
    for (const auto& [name, p] : m.stage2.params()) EXPECT_TRUE(back.stage2.params().get(name).value.bitwise_equal(p.value)) << name;
    EXPECT_EQ(back.bridge.checksum(), m.bridge.checksum());

    const Tensor frame = tiny::scene()[1].image;
    const auto a = infer_end_to_end(m, frame), b = infer_end_to_end(back, frame);
    EXPECT_TRUE(a.background.bitwise_equal(b.background));
    EXPECT_TRUE(a.probs.probs.bitwise_equal(b.probs.probs));

    const Checkpoint raw = load_checkpoint(path.string());
    EXPECT_EQ(raw.metadata["seed"], 7);
    EXPECT_EQ(raw.metadata["step"], 3);
    EXPECT_EQ(raw.metadata["align_corners"], false);
    EXPECT_EQ(raw.metadata["channel_order"], (nlohmann::json{"frame", "background"}));
}

TEST_F(CheckpointFile, SavingTwiceGivesIdenticalBytes) {
    const TwoStageModel m = trained_tiny();
    save_model(path.string(), m, 1, 1);
    const std::string first = bytes();
    save_model(path.string(), m, 1, 1);
    EXPECT_EQ(bytes(), first);
}

TEST_F(CheckpointFile, CorruptedMagic) {
    save_model(path.string(), trained_tiny(), 1, 1);
    std::string b = bytes();
    b[1] = 'X';
    write(b);
    expect_rejected(path, "magic");
}

TEST_F(CheckpointFile, UnsupportedVersion) {
    save_model(path.string(), trained_tiny(), 1, 1);
    std::string b = bytes();
    const std::uint32_t v = 99;
    std::memcpy(b.data() + 4, &v, 4);
    write(b);
    expect_rejected(path, "version 99");
}

TEST_F(CheckpointFile, TruncationAnywhereIsRejected) {
    save_model(path.string(), trained_tiny(), 1, 1);
    const std::string full = bytes();
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{6}, std::size_t{10}, full.size() / 3,
                            full.size() / 2, full.size() - 1}) {
        write(full.substr(0, cut));
        EXPECT_THROW(load_checkpoint(path.string()), DataError) << "cut at " << cut;
    }
    write(full + "z");
    expect_rejected(path, "trailing");
}

TEST_F(CheckpointFile, MissingFile) { EXPECT_THROW(load_checkpoint((path / "nope").string()), DataError); }

TEST(CheckpointModel, ShapeMismatchAgainstProfile) {
    Checkpoint c = model_checkpoint(trained_tiny(), 1, 1);
    for (auto& [name, t] : c.tensors)
        if (name == "stage2/conv1.weight") t = Tensor({4, 3, 3, 3});
    try {
        model_from_checkpoint(c);
        ADD_FAILURE() << "shape mismatch accepted";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("shape"), std::string::npos) << e.what();
    }
    // The profile decides the expected shape: a 3-channel profile with the 6-channel weights must fail too.
    Checkpoint d = model_checkpoint(trained_tiny(), 1, 1);
    d.metadata["stage2"]["in_channels"] = 3;
    EXPECT_THROW(model_from_checkpoint(d), DataError);
}

TEST(CheckpointModel, UnexpectedMissingAndTamperedTensors) {
    const Checkpoint good = model_checkpoint(trained_tiny(), 1, 1);
    EXPECT_NO_THROW(model_from_checkpoint(good));

    Checkpoint extra = good;
    extra.tensors.emplace_back("stage1/ghost.weight", Tensor({1}));
    EXPECT_THROW(model_from_checkpoint(extra), DataError);

    Checkpoint missing = good;
    missing.tensors.erase(missing.tensors.begin());
    EXPECT_THROW(model_from_checkpoint(missing), DataError);

    Checkpoint tampered = good;
    for (auto& [name, t] : tampered.tensors)
        if (name.starts_with("bridge/")) t[0] += 1e-12;
    EXPECT_THROW(model_from_checkpoint(tampered), DataError);

    Checkpoint no_meta = good;
    no_meta.metadata.erase("channel_mean");
    EXPECT_THROW(model_from_checkpoint(no_meta), DataError);
}
