#pragma once

// Central finite differences; deliberately knows nothing about the autodiff
// graph beyond "scalar function of a tensor".

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "bgfg/autodiff.hpp"

namespace bgfg::oracle {

inline Tensor numeric_gradient(const std::function<Real(const Tensor&)>& f, const Tensor& x, Real eps = 1e-5) {
    Tensor g(x.shape());
    Tensor probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const Real orig = probe[i];
        probe[i] = orig + eps;
        const Real up = f(probe);
        probe[i] = orig - eps;
        const Real down = f(probe);
        probe[i] = orig;
        g[i] = (up - down) / (2 * eps);
    }
    return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)
inline Real max_relative_error(const Tensor& analytic, const Tensor& numeric, Real floor = 1e-3) {
    Real worst = 0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const Real denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

/// Scalar probe sum_i w_i * x_i recorded as a graph op, so any tensor-valued
/// op can be reduced to a loss with a non-trivial upstream gradient.
inline Var weighted_sum(Var x, const Tensor& weights) {
    Real s = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.value()[i];
    const std::size_t xid = x.id;
    return x.graph->record(Tensor({1}, s), {x}, [xid, weights](Graph& g, std::size_t self) {
        const Real dy = g.grad_of(self)[0];
        Tensor& d = g.grad_buffer(xid);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += dy * weights[i];
    });
}

/// Pushes values away from a kink at 0 so finite differences stay on one branch.
inline void avoid_kink(Tensor& t, Real margin = 1e-3) {
    for (auto& v : t.data())
        if (std::abs(v) < margin) v = v < 0 ? -margin : margin;
}

}  // namespace bgfg::oracle
