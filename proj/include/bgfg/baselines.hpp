#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

#include "bgfg/sample.hpp"

namespace bgfg {

/// Mean frame plus the top-k principal directions of the centred training frames.
struct PcaBackgroundModel {
    Shape frame_shape;
    Eigen::VectorXd mean;
    Eigen::MatrixXd components;      // D x k, orthonormal columns
    Eigen::VectorXd singular_values;  // all of them, descending
    std::size_t k = 0;

    /// Fraction of total variance captured by the first `n` components.
    Real explained_variance(std::size_t n) const;
};

PcaBackgroundModel pca_fit(std::span<const Tensor> frames, std::size_t k);
Tensor pca_background(const PcaBackgroundModel& model, const Tensor& frame);

/// Streaming low-rank + sparse decomposition. The first `warmup` frames are
/// buffered and returned unsplit (sparse part 0); once the buffer is full a
/// small robust fit (alternating rank-r SVD and soft-thresholding) seeds the
/// subspace. Afterwards each frame alternates projection onto the subspace
/// and soft-thresholding of the residual, and the cleaned frame is folded
/// into a rank-limited incremental SVD.
struct RpcaState {
    Shape frame_shape;
    std::size_t rank = 2;
    Real sparse_threshold = 0.1;
    Real forgetting = 1.0;  // weight kept by past singular values per update
    std::size_t warmup = 8;  // 0 in the constructor means 4 * rank
    std::size_t inner_iterations = 10;
    std::size_t frames_seen = 0;
    Eigen::MatrixXd basis;            // D x r', r' <= rank
    Eigen::VectorXd singular_values;  // r'
    Eigen::MatrixXd warmup_frames;    // D x frames buffered so far

    RpcaState() = default;
    RpcaState(Shape frame_shape, std::size_t rank, Real sparse_threshold, std::size_t warmup = 0,
              Real forgetting = 1.0);

    /// max |B^T B - I|
    Real orthonormality_error() const;
};

struct RpcaOutput {
    Tensor low_rank;
    Tensor sparse;
};

RpcaOutput rpca_update(RpcaState& state, const Tensor& frame);
/// Same decomposition as rpca_update without touching the state.
RpcaOutput rpca_decompose(const RpcaState& state, const Tensor& frame);

/// Foreground where the largest per-channel absolute difference exceeds theta.
Mask threshold_classify(const Tensor& frame, const Tensor& background, Real theta);

/// 51 evenly spaced thresholds covering [0, 0.5] inclusive.
std::vector<Real> default_threshold_grid();

struct SweepPoint {
    Real theta = 0;
    Real f_measure = 0;
};

struct SweepCurve {
    std::vector<SweepPoint> points;
    Real best_theta = 0;
    Real best_f = 0;
};

/// F-measure (counts aggregated over all frames) of threshold_classify at each theta.
SweepCurve threshold_sweep(std::span<const Tensor> frames, std::span<const Tensor> backgrounds,
                           std::span<const LabelMap> labels, const std::vector<Real>& grid = default_threshold_grid());

}  // namespace bgfg
