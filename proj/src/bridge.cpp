#include "bgfg/bridge.hpp"

namespace bgfg {

BilinearBridge::BilinearBridge(std::size_t from, std::size_t to) : axis_(ResizeAxis::bilinear(from, to)) {
    Tensor m({to, from});
    for (std::size_t o = 0; o < to; ++o) {
        m[o * from + axis_.lo[o]] += 1 - axis_.frac[o];
        m[o * from + axis_.hi[o]] += axis_.frac[o];
    }
    coeffs_.add("bridge.matrix", std::move(m), false);
}

Var BilinearBridge::forward(Var input) const {
    const Shape& s = input.shape();
    if (s.size() != 4 || s[2] != axis_.in || s[3] != axis_.in)
        throw ShapeError("bridge: expected [N,C," + std::to_string(axis_.in) + "," + std::to_string(axis_.in) +
                         "] input, got " + shape_to_string(s));
    return bilinear_resize(input, axis_, axis_);
}

Tensor BilinearBridge::apply(const Tensor& input) const {
    Graph g;
    return forward(g.constant(input)).value();
}

Tensor bilinear_bridge(const Tensor& background, std::size_t target) {
    require_rank(background, 4, "bilinear_bridge");
    if (background.dim(2) != background.dim(3)) throw ShapeError("bilinear_bridge: square input expected");
    return BilinearBridge(background.dim(2), target).apply(background);
}

}  // namespace bgfg
