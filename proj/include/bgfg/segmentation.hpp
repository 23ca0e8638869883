#pragma once

#include <span>
#include <vector>

#include "bgfg/network.hpp"
#include "bgfg/sample.hpp"

namespace bgfg {

/// Dilated fully-convolutional segmentation trunk (a small DeepLab-LargeFOV
/// analogue). The first log2(output_stride) stages downsample with stride 2,
/// the remaining stages use dilation 2; then fc6 (3x3, dilation fc6_dilation),
/// fc7 (1x1), fc8 (1x1 -> 2 logits) and a fixed bilinear resize back to
/// input_size.
struct McfcnProfile {
    std::size_t in_channels = 6;
    std::size_t input_size = 64;
    std::vector<std::size_t> stage_channels{16, 32, 64, 64};
    std::size_t fc6_dilation = 6;
    std::size_t output_stride = 4;
    std::size_t fc_channels = 64;
    std::size_t num_classes = 2;
    bool use_batchnorm = false;

    static McfcnProfile desk();
    static McfcnProfile paper();
    /// Same trunk with a single-image (3-channel) input.
    McfcnProfile baseline2() const;

    void validate() const;
    bool operator==(const McfcnProfile&) const = default;
};

NetworkSpec build_mcfcn(const McfcnProfile& profile);

/// Name of the layer that consumes the network input.
inline constexpr const char* kMcfcnFirstLayer = "conv1";

/// Frame channels first, background channels second.
Tensor concat_channels(const Tensor& frame, const Tensor& background);

struct ProbabilityMap {
    Tensor probs;  // [N,2,H,W]

    std::size_t batch() const { return probs.dim(0); }
    std::size_t height() const { return probs.dim(2); }
    std::size_t width() const { return probs.dim(3); }
    Real foreground(std::size_t n, std::size_t r, std::size_t c) const { return probs.at(n, 1, r, c); }
};

ProbabilityMap segment(Network& net, const Tensor& input);

/// Negative log-likelihood of the true class averaged over non-ignored
/// pixels of the whole batch. Ignored pixels contribute neither loss nor
/// gradient; a batch with no scorable pixel has loss 0.
Var segmentation_loss(Var probs, std::span<const LabelMap> labels);
Real segmentation_loss(const ProbabilityMap& probs, std::span<const LabelMap> labels);

/// softmax_channels followed by segmentation_loss, fused for numerical
/// stability. The logit gradient is (P - onehot(L)) / count at scorable
/// pixels and exactly zero elsewhere.
Var softmax_cross_entropy(Var logits, std::span<const LabelMap> labels);

struct MaskRule {
    enum class Mode { argmax, threshold };
    Mode mode = Mode::argmax;
    Real theta = 0.5;

    static MaskRule argmax() { return {}; }
    static MaskRule threshold(Real theta);
};

/// Argmax marks foreground only when P_fg > P_bg (ties go to background);
/// threshold mode marks P_fg > theta.
Mask mask_from_probs(const ProbabilityMap& probs, std::size_t index, MaskRule rule = MaskRule::argmax());

}  // namespace bgfg
