#include "bgfg/segmentation.hpp"

#include <cmath>

namespace bgfg {

namespace {

std::size_t log2_exact(std::size_t v) {
    std::size_t k = 0;
    while ((std::size_t{1} << k) < v) ++k;
    return k;
}

void check_labels(const Shape& s, std::span<const LabelMap> labels, const char* what) {
    if (s.size() != 4 || s[1] != 2) throw ShapeError(std::string(what) + ": expected [N,2,H,W] input");
    if (labels.size() != s[0]) throw ShapeError(std::string(what) + ": one label map per batch item required");
    for (const auto& l : labels) {
        if (l.height != s[2] || l.width != s[3])
            throw ShapeError(std::string(what) + ": label map " + std::to_string(l.height) + "x" +
                             std::to_string(l.width) + " does not match probabilities " + shape_to_string(s));
        l.validate();
    }
}

std::size_t scorable(std::span<const LabelMap> labels) {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.size() - l.count(kIgnore);
    return n;
}

}  // namespace

McfcnProfile McfcnProfile::desk() { return {}; }

McfcnProfile McfcnProfile::paper() {
    McfcnProfile p;
    p.input_size = 961;
    p.stage_channels = {64, 128, 256, 512, 512};
    p.output_stride = 8;
    p.fc_channels = 1024;
    return p;
}

McfcnProfile McfcnProfile::baseline2() const {
    McfcnProfile p = *this;
    p.in_channels = 3;
    return p;
}

void McfcnProfile::validate() const {
    if (in_channels != 3 && in_channels != 6)
        throw ConfigError("mcfcn: in_channels must be 3 or 6, got " + std::to_string(in_channels));
    if (num_classes != 2) throw ConfigError("mcfcn: exactly 2 classes supported");
    if (stage_channels.empty()) throw ConfigError("mcfcn: stage_channels is empty");
    for (auto c : stage_channels)
        if (c == 0) throw ConfigError("mcfcn: stage widths must be positive");
    if (fc_channels == 0 || fc6_dilation == 0) throw ConfigError("mcfcn: fc6 width and dilation must be positive");
    if (output_stride == 0 || (output_stride & (output_stride - 1)) != 0)
        throw ConfigError("mcfcn: output_stride must be a power of two");
    if (log2_exact(output_stride) > stage_channels.size())
        throw ConfigError("mcfcn: not enough stages for output_stride " + std::to_string(output_stride));
    if (input_size == 0) throw ConfigError("mcfcn: input_size must be positive");
}

NetworkSpec build_mcfcn(const McfcnProfile& profile) {
    profile.validate();
    NetworkSpec spec;
    spec.name = "mcfcn";
    spec.in_channels = profile.in_channels;
    spec.input_size = profile.input_size;
    const std::size_t strided = log2_exact(profile.output_stride);

    std::size_t in = profile.in_channels;
    for (std::size_t i = 0; i < profile.stage_channels.size(); ++i) {
        const std::string name = "conv" + std::to_string(i + 1);
        const std::size_t out = profile.stage_channels[i];
        const ConvSpec c = i < strided ? ConvSpec::square(in, out, 3, 2, 1) : ConvSpec::square(in, out, 3, 1, 2, 2);
        spec.layers.push_back(LayerSpec::convolution(name, c));
        if (profile.use_batchnorm) spec.layers.push_back(LayerSpec::norm(name + "_bn", out));
        spec.layers.push_back(LayerSpec::act(name + "_relu", Activation::relu()));
        in = out;
    }
    const std::size_t d = profile.fc6_dilation;
    spec.layers.push_back(LayerSpec::convolution("fc6", ConvSpec::square(in, profile.fc_channels, 3, 1, d, d)));
    spec.layers.push_back(LayerSpec::act("fc6_relu", Activation::relu()));
    spec.layers.push_back(LayerSpec::convolution("fc7", ConvSpec::square(profile.fc_channels, profile.fc_channels, 1)));
    spec.layers.push_back(LayerSpec::act("fc7_relu", Activation::relu()));
    spec.layers.push_back(LayerSpec::convolution("fc8", ConvSpec::square(profile.fc_channels, profile.num_classes, 1)));
    spec.layers.push_back(LayerSpec::resize("upsample", profile.input_size));
    return spec;
}

Tensor concat_channels(const Tensor& frame, const Tensor& background) {
    Graph g;
    return concat_channels(g.constant(frame), g.constant(background)).value();
}

ProbabilityMap segment(Network& net, const Tensor& input) {
    require_rank(input, 4, "segment");
    if (input.dim(1) != net.spec().in_channels)
        throw ShapeError("segment: input has " + std::to_string(input.dim(1)) + " channels, network expects " +
                         std::to_string(net.spec().in_channels));
    Graph g;
    Var logits = net.forward(g, g.constant(input), false, false);
    return {softmax_channels(logits).value()};
}

Var segmentation_loss(Var probs, std::span<const LabelMap> labels) {
    const Tensor& p = probs.value();
    check_labels(p.shape(), labels, "segmentation_loss");
    const std::size_t plane = p.dim(2) * p.dim(3);
    const std::size_t count = scorable(labels);
    Real total = 0;
    for (std::size_t n = 0; n < labels.size(); ++n)
        for (std::size_t i = 0; i < plane; ++i) {
            const auto l = labels[n].values[i];
            if (l == kIgnore) continue;
            total -= std::log(p[(n * 2 + static_cast<std::size_t>(l)) * plane + i]);
        }
    const Real loss = count ? total / static_cast<Real>(count) : 0.0;
    std::vector<LabelMap> kept(labels.begin(), labels.end());
    const std::size_t pid = probs.id;
    return probs.graph->record(Tensor({1}, loss), {probs},
                               [pid, kept = std::move(kept), plane, count](Graph& g, std::size_t self) {
                                   if (!count) return;
                                   const Real dy = g.grad_of(self)[0] / static_cast<Real>(count);
                                   const Tensor& pv = g.value_of(pid);
                                   Tensor& dp = g.grad_buffer(pid);
                                   for (std::size_t n = 0; n < kept.size(); ++n)
                                       for (std::size_t i = 0; i < plane; ++i) {
                                           const auto l = kept[n].values[i];
                                           if (l == kIgnore) continue;
                                           const std::size_t j = (n * 2 + static_cast<std::size_t>(l)) * plane + i;
                                           dp[j] -= dy / pv[j];
                                       }
                               });
}

Real segmentation_loss(const ProbabilityMap& probs, std::span<const LabelMap> labels) {
    Graph g;
    return segmentation_loss(g.constant(probs.probs), labels).value()[0];
}

Var softmax_cross_entropy(Var logits, std::span<const LabelMap> labels) {
    const Tensor& z = logits.value();
    check_labels(z.shape(), labels, "softmax_cross_entropy");
    const std::size_t plane = z.dim(2) * z.dim(3);
    const std::size_t count = scorable(labels);
    Tensor p(z.shape());
    Real total = 0;
    for (std::size_t n = 0; n < labels.size(); ++n)
        for (std::size_t i = 0; i < plane; ++i) {
            const Real z0 = z[(n * 2) * plane + i], z1 = z[(n * 2 + 1) * plane + i];
            const Real m = std::max(z0, z1);
            const Real e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
            const Real s = e0 + e1;
            p[(n * 2) * plane + i] = e0 / s;
            p[(n * 2 + 1) * plane + i] = e1 / s;
            const auto l = labels[n].values[i];
            if (l == kIgnore) continue;
            total -= (l == kForeground ? z1 : z0) - m - std::log(s);
        }
    const Real loss = count ? total / static_cast<Real>(count) : 0.0;
    std::vector<LabelMap> kept(labels.begin(), labels.end());
    const std::size_t zid = logits.id;
    return logits.graph->record(
        Tensor({1}, loss), {logits},
        [zid, kept = std::move(kept), p = std::move(p), plane, count](Graph& g, std::size_t self) {
            if (!count) return;
            const Real dy = g.grad_of(self)[0] / static_cast<Real>(count);
            Tensor& dz = g.grad_buffer(zid);
            for (std::size_t n = 0; n < kept.size(); ++n)
                for (std::size_t i = 0; i < plane; ++i) {
                    const auto l = kept[n].values[i];
                    if (l == kIgnore) continue;
                    for (std::size_t k = 0; k < 2; ++k) {
                        const std::size_t j = (n * 2 + k) * plane + i;
                        dz[j] += dy * (p[j] - (static_cast<std::int8_t>(k) == l ? 1.0 : 0.0));
                    }
                }
        });
}

MaskRule MaskRule::threshold(Real theta) {
    if (!(theta > 0 && theta < 1)) throw ConfigError("mask threshold must lie in (0,1)");
    return {Mode::threshold, theta};
}

Mask mask_from_probs(const ProbabilityMap& probs, std::size_t index, MaskRule rule) {
    if (index >= probs.batch()) throw ShapeError("mask_from_probs: batch index out of range");
    Mask m(probs.height(), probs.width());
    for (std::size_t r = 0; r < m.height; ++r)
        for (std::size_t c = 0; c < m.width; ++c) {
            const Real fg = probs.probs.at(index, 1, r, c);
            const bool on = rule.mode == MaskRule::Mode::argmax ? fg > probs.probs.at(index, 0, r, c) : fg > rule.theta;
            m(r, c) = on ? 1 : 0;
        }
    return m;
}

}  // namespace bgfg
