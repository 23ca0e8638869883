#include "bgfg/baselines.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "bgfg/evaluation.hpp"

namespace bgfg {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(const Tensor& t) {
    return {t.raw(), static_cast<Eigen::Index>(t.size())};
}

Tensor as_tensor(const Eigen::VectorXd& v, const Shape& shape) {
    return Tensor(shape, std::span<const Real>(v.data(), std::size_t(v.size())));
}

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, Real t) {
    return v.unaryExpr([t](Real x) { return x > t ? x - t : x < -t ? x + t : 0.0; });
}

// Modified Gram-Schmidt in place; keeps column signs.
void reorthonormalize(Eigen::MatrixXd& b) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
        for (Eigen::Index i = 0; i < j; ++i) b.col(j) -= b.col(i).dot(b.col(j)) * b.col(i);
        b.col(j).normalize();
    }
}

}  // namespace

Real PcaBackgroundModel::explained_variance(std::size_t n) const {
    const Real total = singular_values.squaredNorm();
    if (total == 0) return 1.0;
    n = std::min<std::size_t>(n, std::size_t(singular_values.size()));
    return singular_values.head(Eigen::Index(n)).squaredNorm() / total;
}

PcaBackgroundModel pca_fit(std::span<const Tensor> frames, std::size_t k) {
    if (frames.empty()) throw DataError("pca_fit: no frames");
    if (k > frames.size()) throw ConfigError("pca_fit: k=" + std::to_string(k) + " exceeds frame count " +
                                             std::to_string(frames.size()));
    PcaBackgroundModel m;
    m.frame_shape = frames[0].shape();
    const auto d = Eigen::Index(frames[0].size()), n = Eigen::Index(frames.size());
    Eigen::MatrixXd x(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        require_shape(frames[std::size_t(j)], m.frame_shape, "pca_fit");
        x.col(j) = as_vector(frames[std::size_t(j)]);
    }
    m.mean = x.rowwise().mean();
    x.colwise() -= m.mean;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU);
    m.singular_values = svd.singularValues();
    m.k = k;
    m.components = svd.matrixU().leftCols(Eigen::Index(k));
    return m;
}

Tensor pca_background(const PcaBackgroundModel& model, const Tensor& frame) {
    require_shape(frame, model.frame_shape, "pca_background");
    const Eigen::VectorXd centred = as_vector(frame) - model.mean;
    const Eigen::VectorXd bg = model.mean + model.components * (model.components.transpose() * centred);
    return as_tensor(bg, model.frame_shape);
}

RpcaState::RpcaState(Shape shape, std::size_t r, Real threshold, std::size_t warm, Real forget)
    : frame_shape(std::move(shape)), rank(r), sparse_threshold(threshold), forgetting(forget), warmup(warm ? warm : 4 * r) {
    if (rank == 0) throw ConfigError("rpca: rank must be positive");
    if (!(sparse_threshold > 0)) throw ConfigError("rpca: sparse threshold must be positive");
    if (!(forgetting > 0 && forgetting <= 1)) throw ConfigError("rpca: forgetting factor must lie in (0,1]");
    basis.resize(Eigen::Index(shape_size(frame_shape)), 0);
}

Real RpcaState::orthonormality_error() const {
    if (basis.cols() == 0) return 0;
    const Eigen::MatrixXd g = basis.transpose() * basis - Eigen::MatrixXd::Identity(basis.cols(), basis.cols());
    return g.cwiseAbs().maxCoeff();
}

RpcaOutput rpca_decompose(const RpcaState& state, const Tensor& frame) {
    require_shape(frame, state.frame_shape, "rpca");
    const Eigen::VectorXd x = as_vector(frame);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(x.size());
    if (state.basis.cols() > 0) {
        for (std::size_t it = 0; it < state.inner_iterations; ++it) {
            const Eigen::VectorXd l = state.basis * (state.basis.transpose() * (x - s));
            s = soft_threshold(x - l, state.sparse_threshold);
        }
    }
    // L is defined as x - S so the two parts add back to the frame exactly.
    return {as_tensor(x - s, state.frame_shape), as_tensor(s, state.frame_shape)};
}

namespace {

// Robust seed of the subspace from the buffered warm-up frames.
void seed_subspace(RpcaState& state) {
    const Eigen::MatrixXd& x = state.warmup_frames;
    const Eigen::Index r = std::min<Eigen::Index>(Eigen::Index(state.rank), x.cols());
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(x.rows(), x.cols());
    for (int it = 0; it < 30; ++it) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(x - s, Eigen::ComputeThinU);
        const Eigen::MatrixXd u = svd.matrixU().leftCols(r);
        s = x - u * (u.transpose() * (x - s));
        for (Eigen::Index j = 0; j < s.cols(); ++j) s.col(j) = soft_threshold(s.col(j), state.sparse_threshold);
    }
    Eigen::BDCSVD<Eigen::MatrixXd> svd(x - s, Eigen::ComputeThinU);
    state.basis = svd.matrixU().leftCols(r);
    state.singular_values = svd.singularValues().head(r);
    reorthonormalize(state.basis);
    state.warmup_frames.resize(0, 0);
}

// Brand's rank-one SVD update with `l` as the new column.
void fold_in(RpcaState& state, const Eigen::VectorXd& l) {
    const Eigen::Index k = state.basis.cols();
    const Eigen::VectorXd p = state.basis.transpose() * l;
    const Eigen::VectorXd resid = l - state.basis * p;
    const Real rho = resid.norm();
    const bool grow = rho > 1e-10 * std::max<Real>(1.0, l.norm());
    const Eigen::Index kk = k + (grow ? 1 : 0);
    Eigen::MatrixXd core = Eigen::MatrixXd::Zero(kk, k + 1);
    core.topLeftCorner(k, k) = (state.forgetting * state.singular_values).asDiagonal();
    core.block(0, k, k, 1) = p;
    if (grow) core(k, k) = rho;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(core, Eigen::ComputeThinU);
    Eigen::MatrixXd extended(state.basis.rows(), kk);
    extended.leftCols(k) = state.basis;
    if (grow) extended.col(k) = resid / rho;
    const Eigen::Index keep = std::min<Eigen::Index>(Eigen::Index(state.rank), svd.singularValues().size());
    state.basis = extended * svd.matrixU().leftCols(keep);
    state.singular_values = svd.singularValues().head(keep);
    reorthonormalize(state.basis);
}

}  // namespace

RpcaOutput rpca_update(RpcaState& state, const Tensor& frame) {
    RpcaOutput out = rpca_decompose(state, frame);
    if (state.basis.cols() == 0) {
        const Eigen::Index n = state.warmup_frames.cols();
        state.warmup_frames.conservativeResize(Eigen::Index(frame.size()), n + 1);
        state.warmup_frames.col(n) = as_vector(frame);
        if (std::size_t(n + 1) >= state.warmup) seed_subspace(state);
    } else {
        fold_in(state, as_vector(out.low_rank));
    }
    ++state.frames_seen;
    return out;
}

Mask threshold_classify(const Tensor& frame, const Tensor& background, Real theta) {
    if (!(theta >= 0)) throw ConfigError("threshold must be non-negative");
    require_rank(frame, 3, "threshold_classify");
    require_shape(background, frame.shape(), "threshold_classify");
    const std::size_t ch = frame.dim(0), h = frame.dim(1), w = frame.dim(2), plane = h * w;
    Mask m(h, w);
    for (std::size_t p = 0; p < plane; ++p) {
        Real d = 0;
        for (std::size_t c = 0; c < ch; ++c) d = std::max(d, std::abs(frame[c * plane + p] - background[c * plane + p]));
        m.values[p] = d > theta ? 1 : 0;
    }
    return m;
}

std::vector<Real> default_threshold_grid() {
    std::vector<Real> g(51);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.5 * Real(i) / 50.0;
    return g;
}

SweepCurve threshold_sweep(std::span<const Tensor> frames, std::span<const Tensor> backgrounds,
                           std::span<const LabelMap> labels, const std::vector<Real>& grid) {
    if (frames.empty()) throw DataError("threshold sweep: no frames");
    if (grid.empty()) throw ConfigError("threshold sweep: empty grid");
    if (frames.size() != backgrounds.size() || frames.size() != labels.size())
        throw ShapeError("threshold sweep: frames, backgrounds and labels differ in count");
    for (Real t : grid)
        if (!(t >= 0 && t <= 0.5)) throw ConfigError("threshold sweep: grid values must lie in [0, 0.5]");
    SweepCurve curve;
    std::vector<Mask> masks(frames.size());
    for (Real theta : grid) {
        for (std::size_t i = 0; i < frames.size(); ++i) masks[i] = threshold_classify(frames[i], backgrounds[i], theta);
        const Real f = f_measure(masks, labels).f_measure;
        curve.points.push_back({theta, f});
        if (curve.points.size() == 1 || f > curve.best_f) {
            curve.best_f = f;
            curve.best_theta = theta;
        }
    }
    return curve;
}

}  // namespace bgfg
