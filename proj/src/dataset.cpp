#include "bgfg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <regex>

namespace bgfg {

namespace fs = std::filesystem;

LabelMap map_gt_labels(const GrayImage& raw, LabelMode mode, std::size_t* unknown) {
    if (raw.values.size() != raw.height * raw.width) throw DataError("ground truth: size does not match extents");
    LabelMap out(raw.height, raw.width);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        switch (raw.values[i]) {
            case 0:
            case 50: out.values[i] = kBackground; break;
            case 255: out.values[i] = kForeground; break;
            case 85:
            case 170: out.values[i] = kIgnore; break;
            default:
                if (mode == LabelMode::strict)
                    throw DataError("ground truth: raw value " + std::to_string(raw.values[i]) +
                                    " outside {0,50,85,170,255}");
                out.values[i] = kIgnore;
                ++bad;
        }
    }
    if (unknown) *unknown = bad;
    return out;
}

namespace {

std::string numbered(const char* prefix, std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%06zu.%s", prefix, i, ext);
    return buf;
}

// frame number -> path, for files named <prefix>NNNNNN.<ext>
std::map<std::size_t, fs::path> scan(const fs::path& dir, const std::string& prefix) {
    std::map<std::size_t, fs::path> out;
    if (!fs::is_directory(dir)) return out;
    const std::regex re(prefix + R"((\d{6})\.(png|jpg|jpeg|bmp))", std::regex::icase);
    for (const auto& e : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (std::regex_match(name, m, re)) out.emplace(std::stoul(m[1].str()), e.path());
    }
    return out;
}

}  // namespace

Sequence load_sequence(const fs::path& dir, LabelMode mode) {
    if (!fs::is_directory(dir)) throw DataError("sequence directory not found: " + dir.string());
    const auto inputs = scan(dir / "input", "in");
    if (inputs.empty()) throw DataError("no input frames under " + (dir / "input").string());
    const auto truths = scan(dir / "groundtruth", "gt");
    for (const auto& [i, p] : truths)
        if (!inputs.count(i))
            throw DataError("ground truth " + p.filename().string() + " has no matching input frame (" +
                            std::to_string(inputs.size()) + " inputs, " + std::to_string(truths.size()) +
                            " ground truths)");
    const auto backgrounds = scan(dir / "background", "bg");

    std::size_t roi_lo = 0, roi_hi = SIZE_MAX;
    if (std::ifstream roi(dir / "temporalROI.txt"); roi) {
        if (!(roi >> roi_lo >> roi_hi) || roi_lo > roi_hi) throw DataError("malformed temporalROI.txt in " + dir.string());
    }

    Sequence s;
    const fs::path abs = fs::absolute(dir).lexically_normal();
    s.name = (abs.has_filename() ? abs : abs.parent_path()).filename().string();
    s.category = (abs.has_filename() ? abs : abs.parent_path()).parent_path().filename().string();
    for (const auto& [i, path] : inputs) {
        FrameSample f;
        f.image = read_rgb(path.string());
        f.sequence_id = s.name;
        f.frame_index = i;
        const auto gt = truths.find(i);
        if (gt != truths.end() && i >= roi_lo && i <= roi_hi) {
            const GrayImage raw = read_gray(gt->second.string());
            if (raw.height != f.height() || raw.width != f.width())
                throw DataError("ground truth " + gt->second.filename().string() + " is " + std::to_string(raw.height) +
                                "x" + std::to_string(raw.width) + ", frame is " + std::to_string(f.height()) + "x" +
                                std::to_string(f.width()));
            f.labels = map_gt_labels(raw, mode);
        } else {
            f.labels = LabelMap(f.height(), f.width(), kIgnore);
        }
        if (const auto bg = backgrounds.find(i); bg != backgrounds.end()) {
            f.gt_background = read_rgb(bg->second.string());
            require_shape(*f.gt_background, f.image.shape(), "background image");
        }
        s.frames.push_back(std::move(f));
    }
    return s;
}

void write_sequence(const fs::path& dir, std::span<const FrameSample> frames) {
    fs::create_directories(dir / "input");
    fs::create_directories(dir / "groundtruth");
    for (const auto& f : frames) {
        write_rgb((dir / "input" / numbered("in", f.frame_index, "png")).string(), f.image);
        GrayImage g{f.labels.height, f.labels.width, std::vector<std::uint8_t>(f.labels.size())};
        for (std::size_t i = 0; i < g.values.size(); ++i) {
            const auto l = f.labels.values[i];
            g.values[i] = l == kForeground ? 255 : l == kBackground ? 0 : 170;
        }
        write_gray((dir / "groundtruth" / numbered("gt", f.frame_index, "png")).string(), g);
        if (f.gt_background) {
            fs::create_directories(dir / "background");
            write_rgb((dir / "background" / numbered("bg", f.frame_index, "png")).string(), *f.gt_background);
        }
    }
}

DatasetSplit split_dataset(std::size_t n) {
    if (n < 2) throw DataError("split: need at least 2 labelled frames, got " + std::to_string(n));
    DatasetSplit s;
    const std::size_t half = n / 2;
    for (std::size_t i = 1; i <= n; ++i) (i <= half ? s.train_indices : s.test_indices).push_back(i);
    return s;
}

bool is_labelled(const FrameSample& f) { return f.labels.count(kIgnore) < f.labels.size(); }

SplitFrames split_frames(std::span<const FrameSample> frames) {
    std::vector<const FrameSample*> labelled;
    for (const auto& f : frames)
        if (is_labelled(f)) labelled.push_back(&f);
    const DatasetSplit split = split_dataset(labelled.size());
    SplitFrames out;
    for (auto i : split.train_indices) out.train.push_back(*labelled[i - 1]);
    for (auto i : split.test_indices) out.test.push_back(*labelled[i - 1]);
    return out;
}

FrameSample paste_objects(const FrameSample& sample, std::span<const Sprite> sprites, std::uint64_t seed,
                          std::optional<std::size_t> count) {
    if (sprites.empty()) throw DataError("paste_objects: empty sprite set");
    if (count && *count != 1 && *count != 2) throw ConfigError("paste_objects: count must be 1 or 2");
    const std::size_t h = sample.height(), w = sample.width();
    for (const auto& s : sprites)
        if (s.height() > h || s.width() > w)
            throw DataError("paste_objects: sprite " + std::to_string(s.height()) + "x" + std::to_string(s.width()) +
                            " larger than frame " + std::to_string(h) + "x" + std::to_string(w));
    std::mt19937_64 rng(seed);
    const std::size_t n = count ? *count : std::uniform_int_distribution<std::size_t>(1, 2)(rng);
    FrameSample out = sample;
    for (std::size_t k = 0; k < n; ++k) {
        const Sprite& s = sprites[std::uniform_int_distribution<std::size_t>(0, sprites.size() - 1)(rng)];
        const std::size_t r0 = std::uniform_int_distribution<std::size_t>(0, h - s.height())(rng);
        const std::size_t c0 = std::uniform_int_distribution<std::size_t>(0, w - s.width())(rng);
        for (std::size_t r = 0; r < s.height(); ++r)
            for (std::size_t c = 0; c < s.width(); ++c) {
                if (!s.alpha(r, c)) continue;
                for (std::size_t ch = 0; ch < 3; ++ch)
                    out.image[(ch * h + r0 + r) * w + c0 + c] = s.color[(ch * s.height() + r) * s.width() + c];
                out.labels(r0 + r, c0 + c) = kForeground;
            }
    }
    return out;
}

}  // namespace bgfg
