#include "bgfg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

namespace bgfg {

namespace {

Real reflect(Real p, Real range) {
    if (range <= 0) return 0;
    Real m = std::fmod(p, 2 * range);
    if (m < 0) m += 2 * range;
    return m > range ? 2 * range - m : m;
}

// One channel of smooth zero-mean unit-variance noise.
cv::Mat smooth_noise(std::size_t n, Real blur, std::mt19937_64& rng) {
    cv::Mat m(static_cast<int>(n), static_cast<int>(n), CV_64F);
    std::normal_distribution<Real> gauss(0.0, 1.0);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) m.at<double>(r, c) = gauss(rng);
    if (blur > 0) cv::GaussianBlur(m, m, cv::Size(0, 0), blur, blur, cv::BORDER_REFLECT);
    cv::Scalar mean, stddev;
    cv::meanStdDev(m, mean, stddev);
    m = (m - mean[0]) / std::max(stddev[0], 1e-12);
    return m;
}

Tensor texture(std::size_t n, Real blur, Real amplitude, std::mt19937_64& rng) {
    Tensor t({3, n, n});
    for (std::size_t c = 0; c < 3; ++c) {
        const cv::Mat m = smooth_noise(n, blur, rng);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t k = 0; k < n; ++k)
                t[(c * n + r) * n + k] = std::clamp(0.5 + amplitude * m.at<double>(int(r), int(k)), 0.0, 1.0);
    }
    return t;
}

Tensor gradient_background(std::size_t n, std::mt19937_64& rng) {
    Tensor t({3, n, n});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            const Real x = Real(c) / Real(n), y = Real(r) / Real(n);
            t[(0 * n + r) * n + c] = 0.25 + 0.35 * x;
            t[(1 * n + r) * n + c] = 0.35 + 0.35 * y;
            t[(2 * n + r) * n + c] = 0.55 - 0.2 * x * y;
        }
    // a few static blocks in muted blue/green tones
    std::uniform_real_distribution<Real> u(0, 1);
    for (int k = 0; k < 3; ++k) {
        const auto h = std::size_t(n * (0.15 + 0.2 * u(rng))), w = std::size_t(n * (0.15 + 0.2 * u(rng)));
        const auto r0 = std::size_t(u(rng) * Real(n - h)), c0 = std::size_t(u(rng) * Real(n - w));
        const std::array<Real, 3> col{0.15 + 0.2 * u(rng), 0.4 + 0.4 * u(rng), 0.5 + 0.4 * u(rng)};
        for (std::size_t ch = 0; ch < 3; ++ch)
            for (std::size_t r = r0; r < r0 + h; ++r)
                for (std::size_t c = c0; c < c0 + w; ++c) t[(ch * n + r) * n + c] = col[ch];
    }
    return t;
}

}  // namespace

SyntheticSceneSpec SyntheticSceneSpec::moving_square(std::uint64_t seed) {
    SyntheticSceneSpec s;
    s.seed = seed;
    s.sequence_id = "moving_square";
    std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
    std::uniform_real_distribution<Real> pos(0, Real(s.canvas - 12)), speed(1.5, 3.0);
    std::bernoulli_distribution flip(0.5);
    SpriteSpec sq;
    sq.size = 12;
    sq.x = pos(rng);
    sq.y = pos(rng);
    sq.vx = speed(rng) * (flip(rng) ? 1 : -1);
    sq.vy = speed(rng) * (flip(rng) ? 1 : -1);
    s.sprites.push_back(sq);
    return s;
}

SyntheticSceneSpec SyntheticSceneSpec::camouflage(std::uint64_t seed, std::size_t canvas) {
    SyntheticSceneSpec s;
    s.seed = seed;
    s.canvas = canvas;
    s.frames = 80;
    s.background = Background::texture;
    s.texture_blur = 1.0;
    s.sequence_id = "camouflage";
    std::mt19937_64 rng(seed ^ 0xc4a0f1a6eULL);
    const std::size_t size = canvas / 4;
    std::uniform_real_distribution<Real> pos(0, Real(canvas - size)), speed(0.6, 2.0);
    std::bernoulli_distribution flip(0.5);
    for (int k = 0; k < 2; ++k) {
        SpriteSpec sp;
        sp.size = size;
        sp.x = pos(rng);
        sp.y = pos(rng);
        sp.vx = speed(rng) * (flip(rng) ? 1 : -1);
        sp.vy = speed(rng) * (flip(rng) ? 1 : -1);
        sp.camouflage = true;
        s.sprites.push_back(sp);
    }
    return s;
}

void SyntheticSceneSpec::validate() const {
    if (frames == 0) throw ConfigError("synthetic scene: zero frames");
    if (canvas == 0) throw ConfigError("synthetic scene: zero canvas");
    if (noise_sigma < 0) throw ConfigError("synthetic scene: negative noise sigma");
    for (const auto& s : sprites)
        if (s.size == 0 || s.size > canvas) throw ConfigError("synthetic scene: sprite does not fit the canvas");
}

std::array<long, 2> sprite_origin(const SpriteSpec& s, std::size_t t, std::size_t canvas) {
    const Real range = Real(canvas - s.size);
    const Real x = reflect(s.x + s.vx * Real(t), range), y = reflect(s.y + s.vy * Real(t), range);
    return {std::lround(y), std::lround(x)};
}

Mask sprite_footprint(const SpriteSpec& s, std::size_t t, std::size_t canvas) {
    Mask m(canvas, canvas);
    const auto [r0, c0] = sprite_origin(s, t, canvas);
    const Real rad = Real(s.size) / 2;
    for (std::size_t dr = 0; dr < s.size; ++dr)
        for (std::size_t dc = 0; dc < s.size; ++dc) {
            if (s.shape == SpriteSpec::Shape::disc) {
                const Real y = Real(dr) + 0.5 - rad, x = Real(dc) + 0.5 - rad;
                if (x * x + y * y > rad * rad) continue;
            }
            m(std::size_t(r0) + dr, std::size_t(c0) + dc) = 1;
        }
    return m;
}

std::vector<FrameSample> synth_sequence(const SyntheticSceneSpec& spec) {
    spec.validate();
    const std::size_t n = spec.canvas, plane = n * n;
    std::mt19937_64 rng(spec.seed);
    const Tensor bg = spec.background == SyntheticSceneSpec::Background::gradient
                          ? gradient_background(n, rng)
                          : texture(n, spec.texture_blur, spec.texture_amplitude, rng);
    std::normal_distribution<Real> noise(0.0, 1.0);

    std::vector<FrameSample> out;
    out.reserve(spec.frames);
    for (std::size_t t = 0; t < spec.frames; ++t) {
        Tensor clean = bg;
        if (spec.dynamic) {
            const Real phase = 2 * std::numbers::pi * Real(t) / 8.0;
            for (std::size_t r = n - n / 4; r < n; ++r)
                for (std::size_t c = 0; c < n; ++c)
                    for (std::size_t ch = 0; ch < 3; ++ch)
                        clean[ch * plane + r * n + c] =
                            std::clamp(clean[ch * plane + r * n + c] + 0.08 * std::sin(phase + Real(c) / 3.0), 0.0, 1.0);
        }
        Tensor img = clean;
        LabelMap labels(n, n, kBackground);
        for (const auto& s : spec.sprites) {
            const Mask fp = sprite_footprint(s, t, n);
            const Tensor fill = s.camouflage ? texture(n, spec.texture_blur, spec.texture_amplitude, rng) : Tensor();
            for (std::size_t p = 0; p < plane; ++p) {
                if (!fp.values[p]) continue;
                labels.values[p] = kForeground;
                for (std::size_t ch = 0; ch < 3; ++ch) img[ch * plane + p] = s.camouflage ? fill[ch * plane + p] : s.color[ch];
            }
        }
        if (spec.noise_sigma > 0)
            for (auto& v : img.data()) v = std::clamp(v + spec.noise_sigma * noise(rng), 0.0, 1.0);
        FrameSample f;
        f.image = std::move(img);
        f.labels = std::move(labels);
        f.gt_background = std::move(clean);
        f.sequence_id = spec.sequence_id;
        f.frame_index = t + 1;
        out.push_back(std::move(f));
    }
    return out;
}

std::vector<Sprite> sprite_library(std::uint64_t seed, std::size_t count, std::size_t max_size) {
    if (max_size < 3) throw ConfigError("sprite_library: max_size must be at least 3");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> size(3, max_size);
    std::uniform_int_distribution<int> kind(0, 3);
    std::uniform_real_distribution<Real> u(0, 1);
    std::vector<Sprite> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t h = size(rng), w = size(rng);
        const int k = kind(rng);
        Sprite s{Tensor({3, h, w}), Mask(h, w)};
        const std::array<Real, 3> base{u(rng), u(rng), u(rng)};
        const Real cy = Real(h) / 2, cx = Real(w) / 2;
        for (std::size_t r = 0; r < h; ++r)
            for (std::size_t c = 0; c < w; ++c) {
                const Real y = (Real(r) + 0.5 - cy) / cy, x = (Real(c) + 0.5 - cx) / cx;
                const Real d = x * x + y * y;
                bool on = true;
                if (k == 1) on = d <= 1.0;
                else if (k == 2) on = Real(r) + 0.5 >= Real(h) * std::abs(x);  // triangle, apex at the top
                else if (k == 3) on = d <= 1.0 && d >= 0.3;
                s.alpha(r, c) = on ? 1 : 0;
                for (std::size_t ch = 0; ch < 3; ++ch)
                    s.color[(ch * h + r) * w + c] = std::clamp(base[ch] + 0.1 * (x - y) * (ch == 0 ? 1 : -1), 0.0, 1.0);
            }
        if (s.alpha.count() == 0) s.alpha(h / 2, w / 2) = 1;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace bgfg
