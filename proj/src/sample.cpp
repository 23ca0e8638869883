#include "bgfg/sample.hpp"

#include <algorithm>

namespace bgfg {

namespace {

// Nearest-neighbour source index under the align_corners=false convention.
std::size_t nearest(std::size_t dst, std::size_t in, std::size_t out) {
    const std::size_t src = (2 * dst + 1) * in / (2 * out);
    return std::min(src, in - 1);
}

}  // namespace

LabelMap::LabelMap(std::size_t h, std::size_t w, std::int8_t fill) : height(h), width(w), values(h * w, fill) {}

void LabelMap::validate() const {
    if (values.size() != height * width) throw DataError("label map: size does not match extents");
    for (auto v : values)
        if (v != kBackground && v != kForeground && v != kIgnore)
            throw DataError("label map: value " + std::to_string(v) + " outside {0,1,-1}");
}

std::size_t LabelMap::count(std::int8_t label) const {
    return static_cast<std::size_t>(std::count(values.begin(), values.end(), label));
}

LabelMap LabelMap::resized(std::size_t h, std::size_t w) const {
    if (h == height && w == width) return *this;
    LabelMap out(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out(r, c) = (*this)(nearest(r, height, h), nearest(c, width, w));
    return out;
}

std::size_t Mask::count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](auto v) { return v != 0; }));
}

Mask Mask::resized(std::size_t h, std::size_t w) const {
    if (h == height && w == width) return *this;
    Mask out(h, w);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) out(r, c) = (*this)(nearest(r, height, h), nearest(c, width, w));
    return out;
}

}  // namespace bgfg
