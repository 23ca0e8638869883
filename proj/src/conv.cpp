#include "bgfg/conv.hpp"

#include <cmath>

namespace bgfg {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Geometry {
    std::size_t channels, in_h, in_w, out_h, out_w;
};

// col is [C*kh*kw, out_h*out_w]
void im2col(const Real* image, const Geometry& g, const ConvSpec& s, Real* col) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        const Real* src = image + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                Real* row = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * plane;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * s.stride + ki * s.dilation) - pad;
                    Real* dst = row + oh * g.out_w;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, Real(0));
                        continue;
                    }
                    const Real* line = src + ih * g.in_w;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * s.stride + kj * s.dilation) - pad;
                        dst[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.in_w)) ? Real(0) : line[iw];
                    }
                }
            }
        }
    }
}

// Scatter-add of im2col; image must be zeroed by the caller.
void col2im(const Real* col, const Geometry& g, const ConvSpec& s, Real* image) {
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(s.padding);
    const std::size_t plane = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.channels; ++c) {
        Real* dst = image + c * g.in_h * g.in_w;
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                const Real* row = col + ((c * s.kernel_h + ki) * s.kernel_w + kj) * plane;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const std::ptrdiff_t ih =
                        static_cast<std::ptrdiff_t>(oh * s.stride + ki * s.dilation) - pad;
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    Real* line = dst + ih * g.in_w;
                    const Real* src = row + oh * g.out_w;
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const std::ptrdiff_t iw =
                            static_cast<std::ptrdiff_t>(ow * s.stride + kj * s.dilation) - pad;
                        if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in_w)) line[iw] += src[ow];
                    }
                }
            }
        }
    }
}

void check_input(const Tensor& input, const ConvSpec& spec, const char* what) {
    require_rank(input, 4, what);
    if (input.dim(1) != spec.in_channels)
        throw ShapeError(std::string(what) + ": input has " + std::to_string(input.dim(1)) +
                         " channels, spec expects " + std::to_string(spec.in_channels));
}

}  // namespace

void ConvSpec::validate() const {
    if (in_channels == 0 || out_channels == 0) throw ShapeError("conv spec: channel counts must be positive");
    if (kernel_h == 0 || kernel_w == 0) throw ShapeError("conv spec: kernel extents must be positive");
    if (stride == 0) throw ShapeError("conv spec: stride must be >= 1");
    if (dilation == 0) throw ShapeError("conv spec: dilation must be >= 1");
}

std::size_t ConvSpec::conv_extent(std::size_t in, std::size_t kernel) const {
    const auto span = static_cast<std::ptrdiff_t>(dilation * (kernel - 1) + 1);
    const auto padded = static_cast<std::ptrdiff_t>(in + 2 * padding);
    if (padded < span)
        throw ShapeError("conv: non-positive output extent (input " + std::to_string(in) + ", kernel " +
                         std::to_string(kernel) + ", dilation " + std::to_string(dilation) + ", padding " +
                         std::to_string(padding) + ")");
    return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(stride)) + 1;
}

std::size_t ConvSpec::transposed_extent(std::size_t in, std::size_t kernel) const {
    const auto full = static_cast<std::ptrdiff_t>((in - 1) * stride + dilation * (kernel - 1) + 1);
    const auto out = full - 2 * static_cast<std::ptrdiff_t>(padding);
    if (out < 1) throw ShapeError("transposed conv: non-positive output extent");
    return static_cast<std::size_t>(out);
}

ConvSpec ConvSpec::adjoint() const {
    ConvSpec c = *this;
    std::swap(c.in_channels, c.out_channels);
    return c;
}

namespace kernels {

Tensor conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights, const Tensor* bias) {
    spec.validate();
    check_input(input, spec, "conv2d");
    require_shape(weights, spec.conv_weight_shape(), "conv2d weights");
    if (bias) require_shape(*bias, {spec.out_channels}, "conv2d bias");

    const Geometry g{spec.in_channels, input.dim(2), input.dim(3), spec.conv_extent(input.dim(2), spec.kernel_h),
                     spec.conv_extent(input.dim(3), spec.kernel_w)};
    const std::size_t n_batch = input.dim(0);
    const std::size_t k = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t plane = g.out_h * g.out_w;

    Tensor out({n_batch, spec.out_channels, g.out_h, g.out_w});
    RowMat col(k, plane);
    ConstMapMat w(weights.raw(), spec.out_channels, k);
    for (std::size_t n = 0; n < n_batch; ++n) {
        im2col(input.raw() + n * g.channels * g.in_h * g.in_w, g, spec, col.data());
        MapMat y(out.raw() + n * spec.out_channels * plane, spec.out_channels, plane);
        y.noalias() = w * col;
        if (bias)
            for (std::size_t c = 0; c < spec.out_channels; ++c) y.row(c).array() += (*bias)[c];
    }
    return out;
}

Tensor conv2d_input_grad(const Tensor& grad_out, const ConvSpec& spec, const Tensor& weights, std::size_t in_h,
                         std::size_t in_w) {
    spec.validate();
    require_rank(grad_out, 4, "conv2d input grad");
    require_shape(weights, spec.conv_weight_shape(), "conv2d weights");
    const Geometry g{spec.in_channels, in_h, in_w, spec.conv_extent(in_h, spec.kernel_h),
                     spec.conv_extent(in_w, spec.kernel_w)};
    const std::size_t n_batch = grad_out.dim(0);
    require_shape(grad_out, {n_batch, spec.out_channels, g.out_h, g.out_w}, "conv2d output gradient");

    const std::size_t k = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t plane = g.out_h * g.out_w;
    Tensor dx({n_batch, spec.in_channels, in_h, in_w});
    RowMat col(k, plane);
    ConstMapMat w(weights.raw(), spec.out_channels, k);
    for (std::size_t n = 0; n < n_batch; ++n) {
        ConstMapMat dy(grad_out.raw() + n * spec.out_channels * plane, spec.out_channels, plane);
        col.noalias() = w.transpose() * dy;
        col2im(col.data(), g, spec, dx.raw() + n * spec.in_channels * in_h * in_w);
    }
    return dx;
}

void conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const ConvSpec& spec, Tensor& grad_weights) {
    check_input(input, spec, "conv2d weight grad");
    require_shape(grad_weights, spec.conv_weight_shape(), "conv2d weight grad");
    const Geometry g{spec.in_channels, input.dim(2), input.dim(3), spec.conv_extent(input.dim(2), spec.kernel_h),
                     spec.conv_extent(input.dim(3), spec.kernel_w)};
    const std::size_t n_batch = input.dim(0);
    require_shape(grad_out, {n_batch, spec.out_channels, g.out_h, g.out_w}, "conv2d output gradient");

    const std::size_t k = spec.in_channels * spec.kernel_h * spec.kernel_w;
    const std::size_t plane = g.out_h * g.out_w;
    RowMat col(k, plane);
    MapMat dw(grad_weights.raw(), spec.out_channels, k);
    for (std::size_t n = 0; n < n_batch; ++n) {
        im2col(input.raw() + n * g.channels * g.in_h * g.in_w, g, spec, col.data());
        ConstMapMat dy(grad_out.raw() + n * spec.out_channels * plane, spec.out_channels, plane);
        dw.noalias() += dy * col.transpose();
    }
}

void bias_grad(const Tensor& grad_out, Tensor& grad_bias) {
    const std::size_t n_batch = grad_out.dim(0), channels = grad_out.dim(1);
    const std::size_t plane = grad_out.dim(2) * grad_out.dim(3);
    for (std::size_t n = 0; n < n_batch; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
            const Real* p = grad_out.raw() + (n * channels + c) * plane;
            Real s = 0;
            for (std::size_t i = 0; i < plane; ++i) s += p[i];
            grad_bias[c] += s;
        }
}

Tensor transposed_conv2d_forward(const Tensor& input, const ConvSpec& spec, const Tensor& weights,
                                 const Tensor* bias) {
    spec.validate();
    check_input(input, spec, "transposed_conv2d");
    require_shape(weights, spec.transposed_weight_shape(), "transposed_conv2d weights");
    if (bias) require_shape(*bias, {spec.out_channels}, "transposed_conv2d bias");
    const std::size_t out_h = spec.transposed_extent(input.dim(2), spec.kernel_h);
    const std::size_t out_w = spec.transposed_extent(input.dim(3), spec.kernel_w);
    Tensor out = conv2d_input_grad(input, spec.adjoint(), weights, out_h, out_w);
    if (bias) {
        const std::size_t plane = out_h * out_w;
        for (std::size_t n = 0; n < out.dim(0); ++n)
            for (std::size_t c = 0; c < spec.out_channels; ++c) {
                Real* p = out.raw() + (n * spec.out_channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) p[i] += (*bias)[c];
            }
    }
    return out;
}

}  // namespace kernels

Tensor bilinear_upsampling_kernel(std::size_t channels, std::size_t factor) {
    if (factor == 0) throw ShapeError("bilinear kernel: factor must be positive");
    const std::size_t k = 2 * factor - factor % 2;
    const Real center = (k % 2 == 1) ? Real(factor - 1) : Real(factor) - 0.5;
    Tensor w({channels, channels, k, k});
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                w.at(c, c, i, j) = (1 - std::abs(Real(i) - center) / Real(factor)) *
                                   (1 - std::abs(Real(j) - center) / Real(factor));
    return w;
}

ConvSpec bilinear_upsampling_spec(std::size_t channels, std::size_t factor) {
    const std::size_t k = 2 * factor - factor % 2;
    return ConvSpec::square(channels, channels, k, factor, (factor - factor % 2) / 2, 1, false);
}

}  // namespace bgfg
