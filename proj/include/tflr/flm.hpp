#ifndef TFLR_FLM_HPP
#define TFLR_FLM_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/fpca.hpp"
#include "tflr/grid.hpp"

namespace tflr {

// Relative eigenvalue floor below which a component is treated as
// non-invertible (the regression divides by each eigenvalue).
inline constexpr double kEigenvalueFloorRel = 1e-10;

// Principal-components regression fit of y on curves over [0, domain_theta]:
// slope b = sum_j beta_j phi_j, intercept from mean-centering.
struct PilotFit {
    EigenSystem es;
    int m = 0;
    Eigen::VectorXd beta_check;  // size m
    double a_check = 0.0;
    Eigen::VectorXd b_check;     // size G, zero beyond es.domain_theta
    double sigma2_hat = 0.0;

    double theta() const { return es.domain_theta; }
};

// Number of leading components usable for regression: all eigenvalues up to
// it must clear the relative floor.
inline int regression_feasible_m(const Eigen::VectorXd& eigenvalues) {
    if (eigenvalues.size() == 0) return 0;
    const double floor = kEigenvalueFloorRel * eigenvalues[0];
    int m = 0;
    while (m < eigenvalues.size() && eigenvalues[m] > floor) ++m;
    return m;
}

// Core fit against a precomputed eigensystem, using its leading m
// components. The coefficient of each component is the inner product of the
// cross-covariance curve R with the eigenfunction, divided by the
// eigenvalue; this solves the normal equations exactly because the
// empirical scores are uncorrelated across components.
inline PilotFit fit_with_eigensystem(const CurveSet& curves, const Eigen::VectorXd& y,
                                     const EigenSystem& es, int m) {
    const int n = curves.n();
    if (y.size() != n) throw DimensionError("fit: response length does not match curves");
    if (m < 1 || m > es.m())
        throw InfeasibleModelError("fit: m out of range for eigensystem", es.m());
    if (n < m + 2)
        throw InsufficientDataError("fit: need n >= m + 2 observations");
    const int usable = regression_feasible_m(es.eigenvalues);
    if (m > usable)
        throw IllConditionedError(
            "fit: eigenvalue " + std::to_string(m) + " below the invertibility floor",
            usable);

    const double theta = es.domain_theta;
    const Grid& grid = curves.grid;
    const double y_bar = y.mean();

    // R(t) = n^{-1} sum_i (y_i - ybar) {X_i(t) - Xbar(t)}
    Eigen::MatrixXd centered = curves.values.rowwise() - es.mean_curve.transpose();
    Eigen::VectorXd r_curve =
        centered.transpose() * (y.array() - y_bar).matrix() / static_cast<double>(n);

    PilotFit fit;
    fit.m = m;
    fit.beta_check.resize(m);
    for (int j = 0; j < m; ++j) {
        const double num = restricted_inner_product(
            r_curve, es.eigenfunctions.row(j).transpose(), grid, theta);
        fit.beta_check[j] = num / es.eigenvalues[j];
    }
    fit.b_check = es.eigenfunctions.topRows(m).transpose() * fit.beta_check;
    fit.a_check = y_bar - restricted_inner_product(fit.b_check, es.mean_curve, grid, theta);
    fit.es = es.truncated_to(m);

    double rss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double pred = fit.a_check + restricted_inner_product(
                                              fit.b_check, curves.values.row(i).transpose(),
                                              grid, theta);
        rss += (y[i] - pred) * (y[i] - pred);
    }
    fit.sigma2_hat = rss / static_cast<double>(n);
    return fit;
}

// PC regression of y on the curves over [0, theta] with m components.
inline PilotFit fit_pc_regression(const CurveSet& curves, const Eigen::VectorXd& y, int m,
                                  double theta = 1.0) {
    EigenSystem es = eigensystem(curves, theta, m);
    return fit_with_eigensystem(curves, y, es, m);
}

// Truncated linear prediction a + int_0^theta b x.
inline double predict(const PilotFit& fit, const Eigen::VectorXd& x, double theta) {
    return fit.a_check + restricted_inner_product(fit.b_check, x, fit.es.grid, theta);
}

inline double predict(const PilotFit& fit, const Eigen::VectorXd& x) {
    return predict(fit, x, fit.es.domain_theta);
}

// sigma^2 = n^{-1} sum (y_i - a - int b X_i)^2 over the fit's domain.
inline double residual_variance(const PilotFit& fit, const CurveSet& curves,
                                const Eigen::VectorXd& y) {
    if (y.size() != curves.n())
        throw DimensionError("residual_variance: response length does not match curves");
    double rss = 0.0;
    for (int i = 0; i < curves.n(); ++i) {
        const double e = y[i] - predict(fit, curves.values.row(i).transpose());
        rss += e * e;
    }
    return rss / static_cast<double>(curves.n());
}

struct BicEntry {
    int m = 0;
    double bic = 0.0;
    bool feasible = false;
};

struct BicSelection {
    int m_star = 0;
    PilotFit fit;                 // the fit at m_star
    std::vector<BicEntry> table;  // one entry per requested m
    std::vector<PilotFit> fits;   // fits for the feasible m values, in order
};

// BIC(m) = log(n^{-1} RSS) + (m + 1) log n, minimised over m_range;
// ties resolved toward the smallest m. Infeasible m values are recorded in
// the table and skipped.
inline BicSelection bic_select_m(const CurveSet& curves, const Eigen::VectorXd& y,
                                 const std::vector<int>& m_range, double theta = 1.0) {
    if (m_range.empty()) throw DomainError("bic_select_m: empty m range");
    const int n = curves.n();
    int m_cap = 0;
    for (int m : m_range) m_cap = std::max(m_cap, m);
    const int last = curves.grid.last_index_leq(theta);
    m_cap = std::min({m_cap, n - 2, last + 1});
    if (m_cap < 1) throw InsufficientDataError("bic_select_m: no feasible m");

    EigenSystem es = eigensystem(curves, theta, m_cap);
    const int usable = std::min(m_cap, regression_feasible_m(es.eigenvalues));
    const double log_n = std::log(static_cast<double>(n));

    BicSelection sel;
    int best_index = -1;
    for (int m : m_range) {
        BicEntry entry;
        entry.m = m;
        if (m >= 1 && m <= usable) {
            PilotFit fit = fit_with_eigensystem(curves, y, es, m);
            entry.bic = std::log(fit.sigma2_hat) + (m + 1) * log_n;
            entry.feasible = true;
            sel.fits.push_back(std::move(fit));
            if (best_index < 0 || entry.bic < sel.table[best_index].bic ||
                (entry.bic == sel.table[best_index].bic && m < sel.table[best_index].m)) {
                best_index = static_cast<int>(sel.table.size());
            }
        }
        sel.table.push_back(entry);
    }
    if (best_index < 0) throw InfeasibleModelError("bic_select_m: no feasible m", usable);
    sel.m_star = sel.table[best_index].m;
    for (const PilotFit& f : sel.fits)
        if (f.m == sel.m_star) sel.fit = f;
    return sel;
}

}  // namespace tflr

#endif
