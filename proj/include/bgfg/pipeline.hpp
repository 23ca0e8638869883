#pragma once

#include <array>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "bgfg/bridge.hpp"
#include "bgfg/reconstruction.hpp"
#include "bgfg/segmentation.hpp"

namespace bgfg {

enum class Scope { stage1, stage2, both };
std::string to_string(Scope s);
Scope parse_scope(const std::string& s);

struct StepSpec {
    std::size_t batch_size = 1;
    Real learning_rate = 1e-4;
    std::size_t iterations = 0;
    Scope scope = Scope::both;
    bool operator==(const StepSpec&) const = default;
};

struct TrainingConfig {
    std::string profile = "desk";
    EncoderDecoderProfile stage1 = EncoderDecoderProfile::desk();
    McfcnProfile stage2 = McfcnProfile::desk();
    Real lambda = 1.0;
    std::array<StepSpec, 3> steps;
    Real init_std = 0.01;
    Real momentum = 0.9;
    std::uint64_t seed = 0;

    static TrainingConfig desk();
    static TrainingConfig paper();
    void validate() const;
};

/// Stage-1 network, fixed bridge, stage-2 network and the normalisation
/// shared by training and inference. Images enter as [3,H,W] in [0,1] and are
/// shifted by `channel_mean` before either stage sees them.
struct TwoStageModel {
    EncoderDecoderProfile stage1_profile;
    McfcnProfile stage2_profile;
    Network stage1;
    Network stage2;
    BilinearBridge bridge;
    std::array<Real, 3> channel_mean{0.5, 0.5, 0.5};
    bool initialized = false;

    TwoStageModel() = default;
    TwoStageModel(const EncoderDecoderProfile& p1, const McfcnProfile& p2);

    void initialize(std::mt19937_64& rng, Real init_std);
    /// The stage-2 input includes the reconstructed background.
    bool uses_background() const { return stage2_profile.in_channels == 6; }

    Tensor normalize(const Tensor& image, std::size_t size) const;
    Tensor denormalize(const Tensor& image) const;
};

Real joint_loss(Real l_rec, Real l_seg, Real lambda);
Var joint_loss(Var l_rec, Var l_seg, Real lambda);

/// Per-iteration losses. Terms a step does not evaluate are empty.
struct LossRecord {
    std::size_t iteration = 0;  // 1-based, counted across all steps
    int step = 0;
    std::optional<Real> l_rec;
    std::optional<Real> l_seg;
    Real joint = 0;
};

struct TrainingResult {
    TwoStageModel model;
    std::vector<LossRecord> history;
};

/// Called after each step finishes, with the 1-based step number.
using StepHook = std::function<void(int step, const TwoStageModel&)>;

/// Three-step schedule: stage 1 on the reconstruction loss, stage 2 on the
/// segmentation loss with stage 1 frozen, then both on the joint loss.
/// Frames lacking gt_background get the label-masked median of their sequence.
TrainingResult run_training_schedule(const TrainingConfig& config, std::span<const FrameSample> data,
                                     const StepHook& hook = {});

/// Channel means over a set of frames, used for normalisation.
std::array<Real, 3> channel_means(std::span<const FrameSample> frames);

struct InferenceResult {
    Tensor background;  // [3,S1,S1], image range
    ProbabilityMap probs;  // [1,2,S2,S2]
    Mask mask;  // S2 x S2
};

InferenceResult infer_end_to_end(TwoStageModel& model, const Tensor& image, MaskRule rule = MaskRule::argmax());

/// Masks resized (nearest) to each frame's label grid.
std::vector<Mask> predict_masks(TwoStageModel& model, std::span<const FrameSample> frames,
                                MaskRule rule = MaskRule::argmax());

void write_loss_csv(const std::string& path, std::span<const LossRecord> history);

}  // namespace bgfg
