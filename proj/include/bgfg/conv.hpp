#pragma once

#include <cstddef>
#include <optional>

#include "bgfg/tensor.hpp"

namespace bgfg {

/// Geometry of a 2-D convolution layer. For a transposed convolution the
/// channel counts describe the layer as used (input -> output) and the weight
/// tensor is laid out [in, out, kh, kw], i.e. it is the weight of the
/// convolution it is the adjoint of.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t dilation = 1;
    std::size_t padding = 0;
    bool has_bias = true;

    static ConvSpec square(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride = 1,
                           std::size_t padding = 0, std::size_t dilation = 1, bool bias = true) {
        return {in, out, kernel, kernel, stride, dilation, padding, bias};
    }

    void validate() const;

    /// floor((in + 2p - d(k-1) - 1)/s) + 1; throws ShapeError when it would be < 1.
    std::size_t conv_extent(std::size_t in, std::size_t kernel) const;
    /// (in-1)s - 2p + d(k-1) + 1; throws ShapeError when it would be < 1.
    std::size_t transposed_extent(std::size_t in, std::size_t kernel) const;

    Shape conv_weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
    Shape transposed_weight_shape() const { return {in_channels, out_channels, kernel_h, kernel_w}; }

    /// The convolution whose input-gradient this transposed layer computes.
    ConvSpec adjoint() const;

    bool operator==(const ConvSpec&) const = default;
};

namespace kernels {

// Dense NCHW kernels shared by the autodiff ops. All are deterministic and
// single-threaded.

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor* bias);

/// Gradient of conv2d w.r.t. its input, for an input of extent in_h x in_w.
Tensor conv2d_input_grad(const Tensor& grad_out, const ConvSpec& spec, const Tensor& weights, std::size_t in_h,
                         std::size_t in_w);

/// Accumulates d(loss)/d(weights) into `grad_weights`.
void conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvSpec& spec, Tensor& grad_weights);

/// Accumulates the per-channel sum of grad_out into `grad_bias`.
void bias_grad(const Tensor& grad_out, Tensor& grad_bias);

Tensor transposed_conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                                 const Tensor* bias);

}  // namespace kernels

/// Weights for a transposed convolution that performs bilinear upsampling by
/// `factor` per channel (no cross-channel mixing). Kernel size 2f - f%2,
/// padding ceil((f-1)/2) gives output extent factor*H.
Tensor bilinear_upsampling_kernel(std::size_t channels, std::size_t factor);
ConvSpec bilinear_upsampling_spec(std::size_t channels, std::size_t factor);

}  // namespace bgfg
