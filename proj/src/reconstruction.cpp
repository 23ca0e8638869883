#include "bgfg/reconstruction.hpp"

#include <algorithm>

namespace bgfg {

EncoderDecoderProfile EncoderDecoderProfile::desk() { return {}; }

EncoderDecoderProfile EncoderDecoderProfile::paper() {
    EncoderDecoderProfile p;
    p.input_size = 128;
    p.channel_progression = {64, 64, 128, 256, 512};
    p.latent_channels = 512;
    return p;
}

void EncoderDecoderProfile::validate() const {
    if (channel_progression.empty()) throw ConfigError("encoder-decoder: channel_progression is empty");
    if (latent_channels == 0) throw ConfigError("encoder-decoder: latent_channels must be positive");
    for (auto c : channel_progression)
        if (c == 0) throw ConfigError("encoder-decoder: channel widths must be positive");
    const std::size_t factor = std::size_t{1} << channel_progression.size();
    if (input_size == 0 || input_size % factor != 0)
        throw ConfigError("encoder-decoder: input_size " + std::to_string(input_size) + " not divisible by 2^" +
                          std::to_string(channel_progression.size()));
    if (!(encoder_slope > 0 && encoder_slope < 1)) throw ConfigError("encoder-decoder: slope must lie in (0,1)");
}

std::size_t EncoderDecoderProfile::latent_extent() const {
    return input_size >> channel_progression.size();
}

NetworkSpec build_encoder_decoder(const EncoderDecoderProfile& profile) {
    profile.validate();
    NetworkSpec spec;
    spec.name = "encoder_decoder";
    spec.in_channels = 3;
    spec.input_size = profile.input_size;
    const auto& ch = profile.channel_progression;
    const std::size_t stages = ch.size();

    std::size_t in = 3;
    for (std::size_t i = 0; i < stages; ++i) {
        const std::string name = "enc" + std::to_string(i + 1);
        spec.layers.push_back(LayerSpec::convolution(name, ConvSpec::square(in, ch[i], 4, 2, 1)));
        if (profile.use_batchnorm && i > 0) spec.layers.push_back(LayerSpec::norm(name + "_bn", ch[i]));
        spec.layers.push_back(LayerSpec::act(name + "_act", Activation::leaky_relu(profile.encoder_slope)));
        in = ch[i];
    }
    spec.layers.push_back(LayerSpec::convolution("latent", ConvSpec::square(in, profile.latent_channels, 3, 1, 1)));
    if (profile.use_batchnorm) spec.layers.push_back(LayerSpec::norm("latent_bn", profile.latent_channels));
    spec.layers.push_back(LayerSpec::act("latent_act", Activation::leaky_relu(profile.encoder_slope)));

    in = profile.latent_channels;
    for (std::size_t i = stages; i-- > 0;) {
        const std::string name = "dec" + std::to_string(i + 1);
        const std::size_t out = i == 0 ? 3 : ch[i - 1];
        spec.layers.push_back(LayerSpec::transposed(name, ConvSpec::square(in, out, 4, 2, 1)));
        if (i == 0) {
            spec.layers.push_back(LayerSpec::act(name + "_act", Activation::tanh()));
        } else {
            if (profile.use_batchnorm) spec.layers.push_back(LayerSpec::norm(name + "_bn", out));
            spec.layers.push_back(LayerSpec::act(name + "_act", Activation::relu()));
        }
        in = out;
    }
    return spec;
}

Tensor reconstruct(Network& net, const Tensor& frames) {
    require_rank(frames, 4, "reconstruct");
    if (frames.dim(1) != 3 || frames.dim(2) != net.spec().input_size || frames.dim(3) != net.spec().input_size)
        throw ShapeError("reconstruct: frame size " + shape_to_string(frames.shape()) + " does not match profile size " +
                         std::to_string(net.spec().input_size));
    return net.infer(frames);
}

Var reconstruction_loss(Var background, Var target) {
    const Tensor& b = background.value();
    const Tensor& t = target.value();
    require_shape(t, b.shape(), "reconstruction_loss");
    Real total = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const Real d = b[i] - t[i];
        total += d * d;
    }
    const std::size_t bid = background.id, tid = target.id;
    return background.graph->record(Tensor({1}, total), {background, target}, [bid, tid](Graph& g, std::size_t self) {
        const Real dy = g.grad_of(self)[0];
        const Tensor& bv = g.value_of(bid);
        const Tensor& tv = g.value_of(tid);
        if (g.needs_grad(bid)) {
            Tensor& d = g.grad_buffer(bid);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += 2 * dy * (bv[i] - tv[i]);
        }
        if (g.needs_grad(tid)) {
            Tensor& d = g.grad_buffer(tid);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= 2 * dy * (bv[i] - tv[i]);
        }
    });
}

Real reconstruction_loss(const Tensor& background, const Tensor& target) {
    Graph g;
    return reconstruction_loss(g.constant(background), g.constant(target)).value()[0];
}

Real median_of(std::vector<Real> values) {
    if (values.empty()) throw Error("median of an empty sample");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    const Real upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const Real lower = *std::max_element(values.begin(), values.begin() + mid);
    return lower + (upper - lower) / 2;
}

GroundTruthBackground synthesize_gt_background(std::span<const FrameSample> frames) {
    if (frames.empty()) throw DataError("synthesize_gt_background: empty sequence");
    const std::size_t h = frames[0].height(), w = frames[0].width();
    for (const auto& f : frames) {
        require_shape(f.image, {3, h, w}, "synthesize_gt_background frame");
        if (f.labels.height != h || f.labels.width != w)
            throw DataError("synthesize_gt_background: label map size does not match its image");
    }
    GroundTruthBackground gt{Tensor({3, h, w}), std::vector<std::size_t>(h * w, 0)};
    std::vector<Real> bg, all;
    for (std::size_t p = 0; p < h * w; ++p) {
        std::size_t used = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            bg.clear();
            all.clear();
            for (const auto& f : frames) {
                const Real v = f.image[c * h * w + p];
                all.push_back(v);
                if (f.labels.values[p] == kBackground) bg.push_back(v);
            }
            used = bg.size();
            gt.image[c * h * w + p] = median_of(bg.empty() ? all : bg);
        }
        gt.coverage[p] = used;
    }
    return gt;
}

}  // namespace bgfg
