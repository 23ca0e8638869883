#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "bgfg/sample.hpp"

namespace bgfg {

struct SpriteSpec {
    enum class Shape { square, disc };
    Shape shape = Shape::square;
    std::size_t size = 12;
    Real x = 0, y = 0;    // top-left at frame 0
    Real vx = 0, vy = 0;  // pixels per frame; bounces off the canvas border
    std::array<Real, 3> color{0.9, 0.1, 0.1};
    // Fill with a fresh draw of the background texture every frame instead of `color`.
    bool camouflage = false;
};

struct SyntheticSceneSpec {
    enum class Background { gradient, texture };

    std::size_t canvas = 64;
    std::size_t frames = 40;
    Background background = Background::gradient;
    bool dynamic = false;  // periodic ripple band along the bottom quarter
    std::vector<SpriteSpec> sprites;
    Real noise_sigma = 0.02;
    Real texture_blur = 1.5;
    Real texture_amplitude = 0.15;
    std::uint64_t seed = 0;
    std::string sequence_id = "synthetic";

    /// Seeded moving square on a static gradient-and-rectangles background.
    static SyntheticSceneSpec moving_square(std::uint64_t seed);
    /// A sprite whose texture is drawn from the same distribution as the
    /// background it moves over: no single frame gives it away.
    static SyntheticSceneSpec camouflage(std::uint64_t seed, std::size_t canvas = 32);

    void validate() const;
};

/// Top-left pixel of a sprite at frame t (reflecting motion, rounded).
std::array<long, 2> sprite_origin(const SpriteSpec& s, std::size_t t, std::size_t canvas);
Mask sprite_footprint(const SpriteSpec& s, std::size_t t, std::size_t canvas);

/// Frames with exact labels and the clean background as gt_background.
std::vector<FrameSample> synth_sequence(const SyntheticSceneSpec& spec);

/// A procedurally generated cut-out: colour patch plus binary alpha.
struct Sprite {
    Tensor color;  // [3,h,w]
    Mask alpha;

    std::size_t height() const { return alpha.height; }
    std::size_t width() const { return alpha.width; }
};

/// Deterministic set of `count` shapes (squares, discs, triangles, rings).
std::vector<Sprite> sprite_library(std::uint64_t seed, std::size_t count, std::size_t max_size);

}  // namespace bgfg
