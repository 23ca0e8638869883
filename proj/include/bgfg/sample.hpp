#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgfg/tensor.hpp"

namespace bgfg {

inline constexpr std::int8_t kBackground = 0;
inline constexpr std::int8_t kForeground = 1;
inline constexpr std::int8_t kIgnore = -1;

/// Per-pixel labels in {0 background, 1 foreground, -1 ignored}, row-major.
struct LabelMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::int8_t> values;

    LabelMap() = default;
    LabelMap(std::size_t h, std::size_t w, std::int8_t fill = kBackground);

    std::int8_t& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
    std::int8_t operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    std::size_t size() const { return values.size(); }

    /// Throws DataError on any value outside {0, 1, -1}.
    void validate() const;
    std::size_t count(std::int8_t label) const;
    /// Nearest-neighbour resampling (labels must never be interpolated).
    LabelMap resized(std::size_t h, std::size_t w) const;
    bool operator==(const LabelMap&) const = default;
};

/// Binary mask, row-major, 1 = foreground.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    Mask() = default;
    Mask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}
    std::uint8_t& operator()(std::size_t r, std::size_t c) { return values[r * width + c]; }
    std::uint8_t operator()(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    std::size_t count() const;
    Mask resized(std::size_t h, std::size_t w) const;
    bool operator==(const Mask&) const = default;
};

/// One frame: image [3,H,W] in [0,1] RGB, its labels, and optionally the
/// clean background behind it.
struct FrameSample {
    Tensor image;
    LabelMap labels;
    std::optional<Tensor> gt_background;
    std::string sequence_id;
    std::size_t frame_index = 0;

    std::size_t height() const { return image.dim(1); }
    std::size_t width() const { return image.dim(2); }
};

}  // namespace bgfg
