#include "bgfg/optim.hpp"

namespace bgfg {

SgdState::SgdState(Real lr, Real mom) : learning_rate(lr), momentum(mom) {
    if (!(lr > 0)) throw ConfigError("sgd: learning rate must be positive");
    if (!(mom >= 0 && mom < 1)) throw ConfigError("sgd: momentum must lie in [0,1)");
}

void sgd_step(SgdState& state, ParameterSet& params) {
    for (auto& [name, p] : params) {
        if (!p.trainable) continue;
        if (!p.has_grad) throw Error("sgd_step: missing gradient for parameter " + name);
    }
    for (auto& [name, p] : params) {
        if (!p.trainable) continue;
        auto [it, fresh] = state.velocity.try_emplace(name, p.value.shape());
        Tensor& v = it->second;
        require_shape(v, p.value.shape(), "sgd velocity");
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = state.momentum * v[i] - state.learning_rate * p.grad[i];
            p.value[i] += v[i];
        }
        if (!p.value.all_finite()) throw NumericalError("sgd_step: parameter " + name + " became non-finite");
        p.zero_grad();
    }
}

}  // namespace bgfg
