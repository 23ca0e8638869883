#include "bgfg/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace bgfg {

namespace {

void write_mat(const std::string& path, const cv::Mat& m) {
    bool ok = false;
    try {
        ok = cv::imwrite(path, m);
    } catch (const cv::Exception& e) {
        throw DataError("cannot write " + path + ": " + e.what());
    }
    if (!ok) throw DataError("cannot write " + path);
}

}  // namespace

Tensor read_rgb(const std::string& path) {
    const cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw DataError("cannot read image " + path);
    const auto h = std::size_t(m.rows), w = std::size_t(m.cols);
    Tensor t({3, h, w});
    for (std::size_t r = 0; r < h; ++r) {
        const auto* row = m.ptr<cv::Vec3b>(int(r));
        for (std::size_t c = 0; c < w; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch) t[(ch * h + r) * w + c] = row[c][2 - ch] / 255.0;  // BGR
    }
    return t;
}

GrayImage read_gray(const std::string& path) {
    const cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read image " + path);
    GrayImage g{std::size_t(m.rows), std::size_t(m.cols), {}};
    g.values.reserve(g.height * g.width);
    for (int r = 0; r < m.rows; ++r) g.values.insert(g.values.end(), m.ptr<std::uint8_t>(r), m.ptr<std::uint8_t>(r) + m.cols);
    return g;
}

void write_rgb(const std::string& path, const Tensor& image) {
    require_rank(image, 3, "write_rgb");
    if (image.dim(0) != 3) throw ShapeError("write_rgb: expected 3 channels");
    const std::size_t h = image.dim(1), w = image.dim(2);
    cv::Mat m(int(h), int(w), CV_8UC3);
    for (std::size_t r = 0; r < h; ++r) {
        auto* row = m.ptr<cv::Vec3b>(int(r));
        for (std::size_t c = 0; c < w; ++c)
            for (std::size_t ch = 0; ch < 3; ++ch)
                row[c][2 - ch] = std::uint8_t(std::lround(std::clamp(image[(ch * h + r) * w + c], 0.0, 1.0) * 255.0));
    }
    write_mat(path, m);
}

void write_gray(const std::string& path, const GrayImage& image) {
    cv::Mat m(int(image.height), int(image.width), CV_8UC1);
    std::copy(image.values.begin(), image.values.end(), m.data);
    write_mat(path, m);
}

void write_mask(const std::string& path, const Mask& mask) {
    GrayImage g{mask.height, mask.width, std::vector<std::uint8_t>(mask.values.size())};
    std::transform(mask.values.begin(), mask.values.end(), g.values.begin(), [](auto v) { return v ? 255 : 0; });
    write_gray(path, g);
}

}  // namespace bgfg
