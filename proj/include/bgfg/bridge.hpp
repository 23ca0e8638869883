#pragma once

#include "bgfg/autodiff.hpp"

namespace bgfg {

/// Fixed bilinear resize between the two stages (align_corners = false).
/// The coefficients are registered as non-trainable parameters so they are
/// checkpointed and checksummed like any other tensor, but no optimiser ever
/// touches them. The same `matrix` is applied to rows and columns.
class BilinearBridge {
public:
    BilinearBridge() : BilinearBridge(1, 1) {}
    BilinearBridge(std::size_t from, std::size_t to);

    std::size_t from() const { return axis_.in; }
    std::size_t to() const { return axis_.out; }

    /// [N,C,from,from] -> [N,C,to,to]; gradients flow to the input only.
    Var forward(Var input) const;
    Tensor apply(const Tensor& input) const;

    /// "bridge.matrix": the dense [to, from] interpolation operator.
    const ParameterSet& coefficients() const { return coeffs_; }
    std::uint64_t checksum() const { return coeffs_.checksum(); }

private:
    ResizeAxis axis_;
    ParameterSet coeffs_;
};

/// One-shot bridge: resize [N,3,S1,S1] to [N,3,S2,S2].
Tensor bilinear_bridge(const Tensor& background, std::size_t target);

}  // namespace bgfg
