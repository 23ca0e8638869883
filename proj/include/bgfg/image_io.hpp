#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bgfg/sample.hpp"

namespace bgfg {

struct GrayImage {
    std::size_t height = 0, width = 0;
    std::vector<std::uint8_t> values;
};

/// 8-bit colour image as [3,H,W] RGB in [0,1]. Throws DataError when unreadable.
Tensor read_rgb(const std::string& path);
GrayImage read_gray(const std::string& path);

/// [3,H,W] values are clamped to [0,1] and rounded to 8 bits.
void write_rgb(const std::string& path, const Tensor& image);
void write_gray(const std::string& path, const GrayImage& image);
/// 0 background, 255 foreground.
void write_mask(const std::string& path, const Mask& mask);

}  // namespace bgfg
