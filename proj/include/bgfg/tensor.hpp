#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bgfg {

using Real = double;
using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Inconsistent tensor shapes or layer specifications.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf produced by a forward or backward pass, or a non-finite loss.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Missing or malformed input data (images, label maps, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration keys or values.
class ConfigError : public Error {
public:
    using Error::Error;
};

std::string shape_to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of Reals. Gradients live in the autodiff graph and
/// in Parameter, not here.
class Tensor {
public:
    using Storage = std::vector<Real, Eigen::aligned_allocator<Real>>;

    Tensor() = default;
    explicit Tensor(Shape shape, Real fill = 0.0);
    Tensor(Shape shape, std::span<const Real> values);

    static Tensor normal(Shape shape, Real stddev, std::mt19937_64& rng);
    static Tensor uniform(Shape shape, Real lo, Real hi, std::mt19937_64& rng);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    Real* raw() { return data_.data(); }
    const Real* raw() const { return data_.data(); }

    Real& operator[](std::size_t i) { return data_[i]; }
    Real operator[](std::size_t i) const { return data_[i]; }

    // rank-4 NCHW accessors
    Real& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
    Real at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;

    void fill(Real value);
    Tensor reshaped(Shape shape) const;
    bool all_finite() const;
    bool bitwise_equal(const Tensor& other) const;

    /// FNV-1a over the shape and the raw payload bytes.
    std::uint64_t checksum() const;

private:
    Shape shape_;
    Storage data_;
};

void require_shape(const Tensor& t, const Shape& expected, const char* what);
void require_rank(const Tensor& t, std::size_t rank, const char* what);

Real dot(const Tensor& a, const Tensor& b);
Real sum(const Tensor& t);
Real max_abs_diff(const Tensor& a, const Tensor& b);

/// Stack equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
/// Slice index `i` of the leading axis.
Tensor take(const Tensor& batched, std::size_t i);

}  // namespace bgfg
