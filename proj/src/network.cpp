#include "bgfg/network.hpp"

namespace bgfg {

namespace {

bool is_running_stat(const std::string& name) {
    return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

}  // namespace

LayerSpec LayerSpec::convolution(std::string name, ConvSpec spec) {
    LayerSpec l;
    l.kind = Kind::conv;
    l.name = std::move(name);
    l.conv = spec;
    return l;
}

LayerSpec LayerSpec::transposed(std::string name, ConvSpec spec) {
    LayerSpec l = convolution(std::move(name), spec);
    l.kind = Kind::transposed_conv;
    return l;
}

LayerSpec LayerSpec::act(std::string name, Activation a) {
    LayerSpec l;
    l.kind = Kind::activation;
    l.name = std::move(name);
    l.activation = a;
    return l;
}

LayerSpec LayerSpec::norm(std::string name, std::size_t channels) {
    LayerSpec l;
    l.kind = Kind::batch_norm;
    l.name = std::move(name);
    l.channels = channels;
    return l;
}

LayerSpec LayerSpec::resize(std::string name, std::size_t target) {
    LayerSpec l;
    l.kind = Kind::resize;
    l.name = std::move(name);
    l.resize_to = target;
    return l;
}

std::string LayerSpec::kind_name() const {
    switch (kind) {
        case Kind::conv: return "conv";
        case Kind::transposed_conv: return "transposed_conv";
        case Kind::activation: return "activation";
        case Kind::batch_norm: return "batch_norm";
        case Kind::resize: return "resize";
    }
    return "?";
}

Shape NetworkSpec::output_shape(std::size_t batch) const {
    Shape s{batch, in_channels, input_size, input_size};
    for (const auto& l : layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv:
                l.conv.validate();
                if (s[1] != l.conv.in_channels) throw ShapeError(name + "/" + l.name + ": channel mismatch");
                s = {batch, l.conv.out_channels, l.conv.conv_extent(s[2], l.conv.kernel_h),
                     l.conv.conv_extent(s[3], l.conv.kernel_w)};
                break;
            case LayerSpec::Kind::transposed_conv:
                l.conv.validate();
                if (s[1] != l.conv.in_channels) throw ShapeError(name + "/" + l.name + ": channel mismatch");
                s = {batch, l.conv.out_channels, l.conv.transposed_extent(s[2], l.conv.kernel_h),
                     l.conv.transposed_extent(s[3], l.conv.kernel_w)};
                break;
            case LayerSpec::Kind::batch_norm:
                if (s[1] != l.channels) throw ShapeError(name + "/" + l.name + ": channel mismatch");
                break;
            case LayerSpec::Kind::resize:
                if (l.resize_to == 0) throw ShapeError(name + "/" + l.name + ": resize target must be positive");
                s[2] = s[3] = l.resize_to;
                break;
            case LayerSpec::Kind::activation: break;
        }
    }
    return s;
}

std::map<std::string, Shape> NetworkSpec::parameter_shapes() const {
    std::map<std::string, Shape> out;
    for (const auto& l : layers) {
        if (l.kind == LayerSpec::Kind::conv || l.kind == LayerSpec::Kind::transposed_conv) {
            out[l.name + ".weight"] =
                l.kind == LayerSpec::Kind::conv ? l.conv.conv_weight_shape() : l.conv.transposed_weight_shape();
            if (l.conv.has_bias) out[l.name + ".bias"] = {l.conv.out_channels};
        } else if (l.kind == LayerSpec::Kind::batch_norm) {
            out[l.name + ".gamma"] = {l.channels};
            out[l.name + ".beta"] = {l.channels};
            out[l.name + ".running_mean"] = {l.channels};
            out[l.name + ".running_var"] = {l.channels};
        }
    }
    return out;
}

const LayerSpec& NetworkSpec::layer(const std::string& layer_name) const {
    for (const auto& l : layers)
        if (l.name == layer_name) return l;
    throw Error(name + ": no layer named " + layer_name);
}

Network::Network(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.output_shape(1);
    for (const auto& [name, shape] : spec_.parameter_shapes()) {
        Tensor init(shape, name.ends_with(".running_var") || name.ends_with(".gamma") ? 1.0 : 0.0);
        params_.add(name, std::move(init), !is_running_stat(name));
    }
}

void Network::initialize(std::mt19937_64& rng, Real init_std) {
    if (!(init_std > 0)) throw ConfigError("init_std must be positive");
    // parameter_shapes() is ordered by name, so draws are reproducible.
    for (auto& [name, p] : params_) {
        if (name.ends_with(".weight")) p.value = Tensor::normal(p.value.shape(), init_std, rng);
        else if (name.ends_with(".gamma") || name.ends_with(".running_var")) p.value.fill(1.0);
        else p.value.fill(0.0);
        p.zero_grad();
    }
}

void Network::zero_parameters() {
    for (auto& [name, p] : params_) {
        p.value.fill(name.ends_with(".running_var") ? 1.0 : 0.0);
        p.zero_grad();
    }
}

void Network::set_trainable(bool trainable) {
    for (auto& [name, p] : params_) p.trainable = trainable && !is_running_stat(name);
}

Var Network::param(Graph& graph, const std::string& name, bool track) {
    Parameter& p = params_.get(name);
    return track ? graph.parameter(p) : graph.constant(p.value);
}

Var Network::forward(Graph& graph, Var input, bool training, bool track_grads) {
    const Shape& in = input.shape();
    if (in.size() != 4 || in[1] != spec_.in_channels || in[2] != spec_.input_size || in[3] != spec_.input_size)
        throw ShapeError(spec_.name + ": expected input [N," + std::to_string(spec_.in_channels) + "," +
                         std::to_string(spec_.input_size) + "," + std::to_string(spec_.input_size) + "], got " +
                         shape_to_string(in));
    Var x = input;
    for (const auto& l : spec_.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::conv:
            case LayerSpec::Kind::transposed_conv: {
                Var w = param(graph, l.name + ".weight", track_grads);
                std::optional<Var> b;
                if (l.conv.has_bias) b = param(graph, l.name + ".bias", track_grads);
                x = l.kind == LayerSpec::Kind::conv ? conv2d(x, l.conv, w, b) : transposed_conv2d(x, l.conv, w, b);
                break;
            }
            case LayerSpec::Kind::activation: x = apply_activation(x, l.activation); break;
            case LayerSpec::Kind::batch_norm: {
                BatchNormState st;
                st.running_mean = params_.get(l.name + ".running_mean").value;
                st.running_var = params_.get(l.name + ".running_var").value;
                x = batch_norm(x, param(graph, l.name + ".gamma", track_grads),
                               param(graph, l.name + ".beta", track_grads), st, training);
                if (training) {
                    params_.get(l.name + ".running_mean").value = st.running_mean;
                    params_.get(l.name + ".running_var").value = st.running_var;
                }
                break;
            }
            case LayerSpec::Kind::resize: {
                const Shape& s = x.shape();
                x = bilinear_resize(x, ResizeAxis::bilinear(s[2], l.resize_to), ResizeAxis::bilinear(s[3], l.resize_to));
                break;
            }
        }
    }
    return x;
}

Tensor Network::infer(const Tensor& input) {
    Graph g;
    return forward(g, g.constant(input), false, false).value();
}

}  // namespace bgfg
