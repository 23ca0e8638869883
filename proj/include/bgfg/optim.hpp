#pragma once

#include <map>
#include <string>

#include "bgfg/autodiff.hpp"

namespace bgfg {

/// Momentum SGD: v <- momentum*v - lr*g ; w <- w + v.
struct SgdState {
    Real learning_rate = 1e-4;
    Real momentum = 0.9;
    std::map<std::string, Tensor> velocity;

    SgdState() = default;
    SgdState(Real lr, Real mom);
};

/// Applies one update to every trainable parameter of `params` and clears
/// their gradients. Throws if a trainable parameter has no gradient.
void sgd_step(SgdState& state, ParameterSet& params);

}  // namespace bgfg
