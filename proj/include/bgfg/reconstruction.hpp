#pragma once

#include <span>
#include <vector>

#include "bgfg/network.hpp"
#include "bgfg/sample.hpp"

namespace bgfg {

/// Shape of the background encoder-decoder. The encoder is a stack of
/// 4x4/stride-2 convolutions (one per entry of channel_progression) followed
/// by a 3x3 latent convolution; the decoder mirrors it with 4x4/stride-2
/// transposed convolutions and ends in a 3-channel tanh.
struct EncoderDecoderProfile {
    std::size_t input_size = 32;
    std::vector<std::size_t> channel_progression{16, 32, 64};
    std::size_t latent_channels = 128;
    bool use_batchnorm = false;
    Real encoder_slope = 0.2;

    static EncoderDecoderProfile desk();
    static EncoderDecoderProfile paper();

    void validate() const;
    std::size_t latent_extent() const;
    bool operator==(const EncoderDecoderProfile&) const = default;
};

NetworkSpec build_encoder_decoder(const EncoderDecoderProfile& profile);

/// One forward pass; frames are [N,3,S,S] in the normalised image space.
Tensor reconstruct(Network& net, const Tensor& frames);

/// Sum of squared differences over every element.
Var reconstruction_loss(Var background, Var target);
Real reconstruction_loss(const Tensor& background, const Tensor& target);

struct GroundTruthBackground {
    Tensor image;                       // [3,H,W]
    std::vector<std::size_t> coverage;  // per pixel, number of background observations used
};

/// Label-masked temporal median: per pixel and channel, the median over frames
/// labelled background there; pixels never labelled background fall back to
/// the median over all frames (coverage 0).
GroundTruthBackground synthesize_gt_background(std::span<const FrameSample> frames);

/// Median of a non-empty sample; even counts average the two middle values.
Real median_of(std::vector<Real> values);

}  // namespace bgfg
