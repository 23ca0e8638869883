#include "bgfg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace bgfg {

std::string shape_to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

Tensor::Tensor(Shape shape, Real fill) : shape_(std::move(shape)) {
    for (auto d : shape_)
        if (d == 0) throw ShapeError("tensor extents must be positive, got " + shape_to_string(shape_));
    data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::span<const Real> values) : Tensor(std::move(shape)) {
    if (values.size() != data_.size())
        throw ShapeError("tensor " + shape_to_string(shape_) + " needs " + std::to_string(data_.size()) +
                         " values, got " + std::to_string(values.size()));
    std::copy(values.begin(), values.end(), data_.begin());
}

Tensor Tensor::normal(Shape shape, Real stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<Real> dist(0.0, stddev);
    for (auto& v : t.data_) v = dist(rng);
    return t;
}

Tensor Tensor::uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<Real> dist(lo, hi);
    for (auto& v : t.data_) v = dist(rng);
    return t;
}

Real& Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

Real Tensor::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != size())
        throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    return Tensor(std::move(shape), data());
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    return shape_ == other.shape_ &&
           std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(Real)) == 0;
}

std::uint64_t Tensor::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (auto d : shape_) {
        std::uint64_t d64 = d;
        mix(&d64, sizeof d64);
    }
    mix(data_.data(), data_.size() * sizeof(Real));
    return h;
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
    if (t.shape() != expected)
        throw ShapeError(std::string(what) + ": expected shape " + shape_to_string(expected) + ", got " +
                         shape_to_string(t.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank)
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_to_string(t.shape()));
}

Real dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ShapeError("dot: size mismatch");
    Real s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

Real sum(const Tensor& t) {
    Real s = 0;
    for (auto v : t.data()) s += v;
    return s;
}

Real max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shape mismatch");
    Real m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("stack: no tensors");
    Shape shape{items.size()};
    shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
    Tensor out(shape);
    const std::size_t block = items[0].size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        require_shape(items[i], items[0].shape(), "stack");
        std::copy(items[i].data().begin(), items[i].data().end(), out.raw() + i * block);
    }
    return out;
}

Tensor take(const Tensor& batched, std::size_t i) {
    if (batched.rank() < 2 || i >= batched.dim(0)) throw ShapeError("take: index out of range");
    Shape shape(batched.shape().begin() + 1, batched.shape().end());
    const std::size_t block = shape_size(shape);
    return Tensor(shape, batched.data().subspan(i * block, block));
}

}  // namespace bgfg
