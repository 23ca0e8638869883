#pragma once

// Batch principal component pursuit by the inexact augmented Lagrange
// multiplier method: min ||L||_* + lambda ||S||_1 s.t. L + S = M.

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace bgfg::oracle {

struct PcpResult {
    Eigen::MatrixXd low_rank;
    Eigen::MatrixXd sparse;
    int iterations = 0;
};

inline Eigen::MatrixXd shrink(const Eigen::MatrixXd& x, double t) {
    return x.unaryExpr([t](double v) { return v > t ? v - t : v < -t ? v + t : 0.0; });
}

inline PcpResult batch_pcp(const Eigen::MatrixXd& m, double lambda = -1, double tol = 1e-7, int max_iter = 1000) {
    if (lambda <= 0) lambda = 1.0 / std::sqrt(double(std::max(m.rows(), m.cols())));
    const double norm2 = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
    const double dual = std::max(norm2, m.cwiseAbs().maxCoeff() / lambda);
    Eigen::MatrixXd y = m / dual;
    double mu = 1.25 / norm2;
    const double mu_max = mu * 1e7, rho = 1.5, mnorm = m.norm();

    PcpResult r{Eigen::MatrixXd::Zero(m.rows(), m.cols()), Eigen::MatrixXd::Zero(m.rows(), m.cols()), 0};
    for (; r.iterations < max_iter; ++r.iterations) {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(m - r.sparse + y / mu, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd sv = shrink(svd.singularValues(), 1.0 / mu);
        r.low_rank = svd.matrixU() * sv.asDiagonal() * svd.matrixV().transpose();
        r.sparse = shrink(m - r.low_rank + y / mu, lambda / mu);
        const Eigen::MatrixXd z = m - r.low_rank - r.sparse;
        y += mu * z;
        mu = std::min(mu * rho, mu_max);
        if (z.norm() / mnorm < tol) break;
    }
    return r;
}

}  // namespace bgfg::oracle
