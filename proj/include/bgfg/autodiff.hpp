#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bgfg/conv.hpp"
#include "bgfg/tensor.hpp"

namespace bgfg {

/// A named learnable (or frozen) tensor. `grad` accumulates across backward
/// passes until zero_grad().
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    bool has_grad = false;

    void zero_grad();
};

/// Named parameter registry. Iteration order is by name, so anything derived
/// from it (checksums, serialization, updates) is deterministic.
class ParameterSet {
public:
    Parameter& add(const std::string& name, Tensor value, bool trainable = true);
    Parameter& get(const std::string& name);
    const Parameter& get(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;
    void set_trainable(bool trainable);
    void zero_grad();
    std::uint64_t checksum() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Parameter> params_;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Tape of operations recorded in execution order. Nodes are appended by the
/// ops below, so node order is a topological order and backward simply walks
/// it in reverse.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value);
    Var input(Tensor value, bool requires_grad = true);
    /// Leaf bound to `p`; gradients flow into p.grad on backward when p is trainable.
    Var parameter(Parameter& p);

    const Tensor& value(Var v) const;
    /// Gradient of the last backward pass w.r.t. v; zeros if v was unreachable.
    Tensor grad(Var v) const;
    bool requires_grad(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward function in
    /// reverse order. May be called once per graph.
    void backward(Var loss);

    // -- op implementation interface --
    Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
    const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
    const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
    bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Zero-initialised on first access; only call for nodes with needs_grad.
    Tensor& grad_buffer(std::size_t id);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    void check(Var v, const char* what) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

struct Activation {
    enum class Kind { identity, relu, leaky_relu, tanh };
    Kind kind = Kind::identity;
    Real slope = 0.2;  // leaky_relu only

    static Activation relu() { return {Kind::relu, 0.0}; }
    static Activation leaky_relu(Real slope) { return {Kind::leaky_relu, slope}; }
    static Activation tanh() { return {Kind::tanh, 0.0}; }
    static Activation identity() { return {}; }
    std::string name() const;
    bool operator==(const Activation&) const = default;
};

Var conv2d(Var input, const ConvSpec& spec, Var weights, std::optional<Var> bias = std::nullopt);
Var transposed_conv2d(Var input, const ConvSpec& spec, Var weights, std::optional<Var> bias = std::nullopt);
Var apply_activation(Var input, Activation act);
/// Per-pixel softmax over axis 1 of an [N,K,H,W] tensor (K >= 2).
Var softmax_channels(Var logits);
/// Channel concatenation of two [N,*,H,W] tensors.
Var concat_channels(Var first, Var second);

/// Batch normalisation over (N,H,W) per channel. In training mode it uses
/// batch statistics and updates the running estimates with `momentum`.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
    Real momentum = 0.1;
    Real eps = 1e-5;
};
Var batch_norm(Var input, Var gamma, Var beta, BatchNormState& state, bool training);

Var add(Var a, Var b);
Var scale(Var a, Real factor);
Var sum(Var a);

/// Precomputed 1-D interpolation table for align_corners=false bilinear
/// resizing: for each output index, the two source taps and the weight of the
/// second one.
struct ResizeAxis {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<std::size_t> lo, hi;
    std::vector<Real> frac;

    static ResizeAxis bilinear(std::size_t in, std::size_t out);
    bool identity() const { return in == out; }
};

/// Fixed-coefficient bilinear resize of the two trailing axes.
Var bilinear_resize(Var input, const ResizeAxis& rows, const ResizeAxis& cols);
Tensor bilinear_resize(const Tensor& input, const ResizeAxis& rows, const ResizeAxis& cols);
Tensor bilinear_resize(const Tensor& input, std::size_t out_h, std::size_t out_w);

}  // namespace bgfg
