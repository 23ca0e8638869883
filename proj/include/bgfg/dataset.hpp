#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bgfg/image_io.hpp"
#include "bgfg/synth.hpp"

namespace bgfg {

/// Raw ground-truth values: 0 static and 50 shadow are background, 255 is
/// foreground, 85 (outside the region of interest) and 170 (unknown) are
/// ignored. Strict mode rejects anything else; lenient mode ignores it.
enum class LabelMode { strict, lenient };
LabelMap map_gt_labels(const GrayImage& raw, LabelMode mode = LabelMode::strict, std::size_t* unknown = nullptr);

struct Sequence {
    std::string category;
    std::string name;
    std::vector<FrameSample> frames;
};

/// Reads <dir>/input/in%06d.{png,jpg} and <dir>/groundtruth/gt%06d.png.
/// Frames without a ground-truth file, or outside temporalROI.txt when
/// present, get all-ignore labels. An optional <dir>/background/bg%06d.png
/// supplies gt_background.
Sequence load_sequence(const std::filesystem::path& dir, LabelMode mode = LabelMode::strict);

/// Writes the same layout; ignored pixels are stored as 170.
void write_sequence(const std::filesystem::path& dir, std::span<const FrameSample> frames);

/// 1-based frame numbers among the labelled frames.
struct DatasetSplit {
    std::vector<std::size_t> train_indices;  // 1 .. floor(n/2)
    std::vector<std::size_t> test_indices;   // floor(n/2)+1 .. n
};

DatasetSplit split_dataset(std::size_t n);

/// A frame is labelled when at least one pixel is not ignored.
bool is_labelled(const FrameSample& f);

struct SplitFrames {
    std::vector<FrameSample> train;
    std::vector<FrameSample> test;
};

/// Applies split_dataset to the labelled frames of one sequence, in order.
SplitFrames split_frames(std::span<const FrameSample> frames);

/// Composites 1 or 2 sprites (count drawn from `seed` unless given) at
/// seeded positions; labels under each sprite become foreground,
/// gt_background is untouched.
FrameSample paste_objects(const FrameSample& sample, std::span<const Sprite> sprites, std::uint64_t seed,
                          std::optional<std::size_t> count = std::nullopt);

}  // namespace bgfg
