#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "bgfg/autodiff.hpp"

namespace bgfg {

struct LayerSpec {
    enum class Kind { conv, transposed_conv, activation, batch_norm, resize };

    Kind kind = Kind::conv;
    std::string name;
    ConvSpec conv;            // conv / transposed_conv
    Activation activation;    // activation
    std::size_t channels = 0; // batch_norm
    std::size_t resize_to = 0;  // resize: square target extent, fixed bilinear weights

    static LayerSpec convolution(std::string name, ConvSpec spec);
    static LayerSpec transposed(std::string name, ConvSpec spec);
    static LayerSpec act(std::string name, Activation a);
    static LayerSpec norm(std::string name, std::size_t channels);
    static LayerSpec resize(std::string name, std::size_t target);

    std::string kind_name() const;
};

/// Ordered layer descriptors of one sub-network.
struct NetworkSpec {
    std::string name;
    std::size_t in_channels = 0;
    std::size_t input_size = 0;
    std::vector<LayerSpec> layers;

    /// Shape inference for an [N, in_channels, input_size, input_size] input.
    Shape output_shape(std::size_t batch) const;
    /// Learnable and running-statistics tensors, by parameter name.
    std::map<std::string, Shape> parameter_shapes() const;
    const LayerSpec& layer(const std::string& name) const;
};

class Network {
public:
    Network() = default;
    explicit Network(NetworkSpec spec);

    /// Weights ~ Normal(0, init_std^2); biases and BN shifts 0; BN scales 1.
    void initialize(std::mt19937_64& rng, Real init_std);
    /// Zeroes every parameter (BN scales included).
    void zero_parameters();

    /// With `track_grads` false the parameters enter the graph as constants.
    Var forward(Graph& graph, Var input, bool training, bool track_grads = true);
    Tensor infer(const Tensor& input);

    /// Marks the learnable tensors trainable or frozen. Running statistics stay frozen.
    void set_trainable(bool trainable);

    const NetworkSpec& spec() const { return spec_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }

private:
    Var param(Graph& graph, const std::string& name, bool track);

    NetworkSpec spec_;
    ParameterSet params_;
};

}  // namespace bgfg
