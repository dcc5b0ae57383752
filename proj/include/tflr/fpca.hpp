#ifndef TFLR_FPCA_HPP
#define TFLR_FPCA_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/grid.hpp"

namespace tflr {

// Empirical eigensystem of a covariance kernel restricted to [0, theta].
// Eigenfunctions are L2-orthonormal on [0, domain_theta] and identically
// zero on grid points beyond it.
struct EigenSystem {
    Grid grid;
    double domain_theta = 1.0;
    Eigen::VectorXd mean_curve;       // sample mean on the full grid
    Eigen::VectorXd eigenvalues;      // size m, nonincreasing, >= 0
    Eigen::MatrixXd eigenfunctions;   // m x G, rows are phi_j
    Eigen::VectorXd domain_weights;   // restricted quadrature weights (zero past theta)

    int m() const { return static_cast<int>(eigenvalues.size()); }
    int g() const { return grid.size(); }

    // View of the same system keeping only the leading `m_keep` components.
    EigenSystem truncated_to(int m_keep) const {
        if (m_keep < 1 || m_keep > m())
            throw DomainError("EigenSystem::truncated_to: invalid component count");
        EigenSystem out;
        out.grid = grid;
        out.domain_theta = domain_theta;
        out.mean_curve = mean_curve;
        out.eigenvalues = eigenvalues.head(m_keep);
        out.eigenfunctions = eigenfunctions.topRows(m_keep);
        out.domain_weights = domain_weights;
        return out;
    }
};

// Sample mean curve and covariance kernel K(t1, t2) on the full grid,
// with the 1/n convention.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> empirical_covariance(
    const CurveSet& curves) {
    const int n = curves.n();
    if (n < 2) throw InsufficientDataError("empirical_covariance: need n >= 2 curves");
    Eigen::VectorXd mean = curves.values.colwise().mean();
    Eigen::MatrixXd centered = curves.values.rowwise() - mean.transpose();
    Eigen::MatrixXd kernel =
        (centered.transpose() * centered) / static_cast<double>(n);
    return {std::move(mean), std::move(kernel)};
}

namespace detail {

// Deterministic sign convention: the entry of largest absolute value is
// made positive; ties go to the earliest index.
inline void normalize_sign(Eigen::VectorXd& phi) {
    int arg = 0;
    double best = -1.0;
    for (int j = 0; j < phi.size(); ++j) {
        const double a = std::abs(phi[j]);
        if (a > best) {
            best = a;
            arg = j;
        }
    }
    if (phi[arg] < 0.0) phi = -phi;
}

}  // namespace detail

// Top-m eigenpairs of the empirical covariance operator restricted to
// [0, theta]. The weighted symmetric form D^{1/2} K D^{1/2} (D = restricted
// quadrature weights) is decomposed and eigenvectors are mapped back by
// D^{-1/2}, which makes the returned eigenfunctions L2-orthonormal on
// [0, theta].
inline EigenSystem eigensystem(const CurveSet& curves, double theta, int m) {
    if (!(theta > 0.0)) throw DomainError("eigensystem: theta must be positive");
    const int n = curves.n();
    if (n < 2) throw InsufficientDataError("eigensystem: need n >= 2 curves");

    const Grid& grid = curves.grid;
    const int last = grid.last_index_leq(theta);
    const int k_pts = last + 1;  // grid points inside [0, theta]
    const int feasible = std::min(n - 1, k_pts);
    if (m < 1 || m > feasible)
        throw InfeasibleModelError(
            "eigensystem: m = " + std::to_string(m) + " infeasible on [0, " +
                std::to_string(theta) + "] (max " + std::to_string(feasible) + ")",
            feasible);
    if (k_pts < 2)
        throw InfeasibleModelError("eigensystem: truncated domain has no quadrature panel", 0);

    auto [mean, kernel] = empirical_covariance(curves);
    const Eigen::VectorXd wr = theta >= 1.0 ? grid.weights : grid.restricted_weights(theta);

    const Eigen::VectorXd sqrt_w = wr.head(k_pts).array().sqrt().matrix();
    Eigen::MatrixXd sym = sqrt_w.asDiagonal() * kernel.topLeftCorner(k_pts, k_pts) *
                          sqrt_w.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        throw NumericalError("eigensystem: eigendecomposition failed");

    EigenSystem es;
    es.grid = grid;
    es.domain_theta = theta;
    es.mean_curve = std::move(mean);
    es.domain_weights = wr;
    es.eigenvalues.resize(m);
    es.eigenfunctions = Eigen::MatrixXd::Zero(m, grid.size());

    // Eigen returns ascending order; take the top m from the back.
    for (int j = 0; j < m; ++j) {
        double value = solver.eigenvalues()[k_pts - 1 - j];
        if (value < 0.0) {
            if (value <= -1e-10)
                throw NumericalError("eigensystem: covariance eigenvalue " +
                                     std::to_string(value) + " far below zero");
            value = 0.0;
        }
        es.eigenvalues[j] = value;
        Eigen::VectorXd phi =
            (solver.eigenvectors().col(k_pts - 1 - j).array() / sqrt_w.array()).matrix();
        detail::normalize_sign(phi);
        es.eigenfunctions.row(j).head(k_pts) = phi.transpose();
    }
    return es;
}

// Principal-component scores: entry (i, j) is the restricted inner product
// of the centered curve i with eigenfunction j over [0, domain_theta].
inline Eigen::MatrixXd scores(const CurveSet& curves, const EigenSystem& es) {
    if (!curves.grid.same_as(es.grid))
        throw DimensionError("scores: curve grid does not match eigensystem grid");
    Eigen::MatrixXd centered =
        curves.values.rowwise() - es.mean_curve.transpose();
    // (n x G) * (G x G diag) * (G x m)
    return centered * es.domain_weights.asDiagonal() * es.eigenfunctions.transpose();
}

}  // namespace tflr

#endif
