#ifndef TFLR_TRUNCATED_HPP
#define TFLR_TRUNCATED_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/flm.hpp"
#include "tflr/fpca.hpp"
#include "tflr/grid.hpp"

namespace tflr {

// Candidate truncation points for the search. Every candidate coincides
// with a curve-grid point, so the search is exact: objectives are piecewise
// constant between grid points under the no-partial-panel quadrature rule.
struct ThetaGrid {
    Eigen::VectorXd candidates;

    int count() const { return static_cast<int>(candidates.size()); }

    static ThetaGrid from_grid(const Grid& grid, double theta_min = 0.05,
                               double theta_max = 1.0) {
        if (!(theta_min > 0.0) || !(theta_max <= 1.0) || !(theta_min <= theta_max))
            throw DomainError("ThetaGrid: need 0 < theta_min <= theta_max <= 1");
        std::vector<double> kept;
        for (int k = 0; k < grid.size(); ++k) {
            const double t = grid.points[k];
            if (t >= theta_min && t <= theta_max) kept.push_back(t);
        }
        if (kept.empty()) throw DomainError("ThetaGrid: no grid points in range");
        ThetaGrid tg;
        tg.candidates = Eigen::Map<Eigen::VectorXd>(kept.data(),
                                                    static_cast<int>(kept.size()));
        return tg;
    }
};

struct ThetaObjective {
    double theta = 0.0;
    double objective = 0.0;
    int m_used = 0;  // components actually used (may be shrunk near theta_min)
};

// A fitted truncated linear model: prediction is
//   a_hat + int_0^theta_hat b_hat x.
struct TruncatedFit {
    double a_hat = 0.0;
    Eigen::VectorXd b_hat;  // zero on grid points beyond theta_hat
    double theta_hat = 1.0;
    int m = 0;
    double lambda = 0.0;
    char method = 'A';
    std::vector<ThetaObjective> objective_trace;
};

inline double predict(const TruncatedFit& fit, const Eigen::VectorXd& x, const Grid& grid) {
    return fit.a_hat + restricted_inner_product(fit.b_hat, x, grid, fit.theta_hat);
}

// Eigensystems and scores for every candidate truncation point, computed
// once per data set. They do not depend on the response, the penalty level
// or the component count, so the penalized searches, the tuning loops and
// bootstrap refits all share one instance.
class ThetaBasisCache {
public:
    ThetaBasisCache(const CurveSet& curves, const ThetaGrid& thetas, int m_max)
        : thetas_(thetas.candidates) {
        const int n = curves.n();
        systems_.reserve(count());
        scores_.reserve(count());
        usable_.reserve(count());
        for (int t = 0; t < count(); ++t) {
            const double theta = thetas_[t];
            const int k_pts = curves.grid.last_index_leq(theta) + 1;
            const int avail = std::min({m_max, n - 1, k_pts});
            if (avail < 1) {
                systems_.emplace_back();
                scores_.emplace_back();
                usable_.push_back(0);
                continue;
            }
            EigenSystem es = eigensystem(curves, theta, avail);
            const int usable =
                std::min({avail, n - 2, regression_feasible_m(es.eigenvalues)});
            scores_.push_back(tflr::scores(curves, es));
            systems_.push_back(std::move(es));
            usable_.push_back(usable);
        }
    }

    int count() const { return static_cast<int>(thetas_.size()); }
    double theta(int idx) const { return thetas_[idx]; }
    const Eigen::VectorXd& thetas() const { return thetas_; }
    const EigenSystem& system(int idx) const { return systems_[idx]; }
    const Eigen::MatrixXd& score_matrix(int idx) const { return scores_[idx]; }
    int usable_m(int idx) const { return usable_[idx]; }

private:
    Eigen::VectorXd thetas_;
    std::vector<EigenSystem> systems_;
    std::vector<Eigen::MatrixXd> scores_;
    std::vector<int> usable_;
};

namespace detail {

struct ScoreFit {
    double a = 0.0;
    Eigen::VectorXd beta;
    Eigen::VectorXd b;  // zero-extended slope on the full grid
    double rss = 0.0;
};

// Least squares of r on the leading m score columns plus an intercept.
// The score Gram matrix is n * diag(eigenvalues) up to roundoff, which
// reduces the solve to one division per component.
inline ScoreFit fit_on_scores(const EigenSystem& es, const Eigen::MatrixXd& score_mat,
                              const Eigen::VectorXd& r, int m) {
    const int n = static_cast<int>(r.size());
    const double r_bar = r.mean();
    const Eigen::VectorXd rc = r.array() - r_bar;

    ScoreFit fit;
    fit.beta.resize(m);
    for (int j = 0; j < m; ++j)
        fit.beta[j] = score_mat.col(j).dot(rc) /
                      (static_cast<double>(n) * es.eigenvalues[j]);
    fit.b = es.eigenfunctions.topRows(m).transpose() * fit.beta;
    fit.a = r_bar - restricted_inner_product(fit.b, es.mean_curve, es.grid,
                                             es.domain_theta);
    fit.rss = (rc - score_mat.leftCols(m) * fit.beta).squaredNorm();
    return fit;
}

}  // namespace detail

struct ObjectiveAResult {
    double objective = 0.0;  // minimized S1 + n lambda theta^2
    double a = 0.0;
    Eigen::VectorXd beta;
};

// Simultaneous objective: exact least squares of y on the basis adapted to
// [0, theta], plus the penalty n lambda theta^2.
inline ObjectiveAResult objective_a(const CurveSet& curves, const Eigen::VectorXd& y,
                                    double theta, int m, double lambda) {
    const int n = curves.n();
    EigenSystem es = eigensystem(curves, theta, std::min(m, std::max(1, n - 1)));
    const int usable = std::min({m, n - 2, regression_feasible_m(es.eigenvalues)});
    if (m > es.m() || usable < m)
        throw InfeasibleModelError(
            "objective_a: m = " + std::to_string(m) + " infeasible at theta = " +
                std::to_string(theta),
            std::min(usable, es.m()));
    detail::ScoreFit fit = detail::fit_on_scores(es, scores(curves, es), y, m);
    ObjectiveAResult out;
    out.objective = fit.rss + n * lambda * theta * theta;
    out.a = fit.a;
    out.beta = std::move(fit.beta);
    return out;
}

struct MethodAOptions {
    bool allow_m_shrink = true;  // shrink m near theta_min instead of failing
};

// Simultaneous truncation estimator: exhaustive search of the penalized sum
// of squares over the candidate grid, refitting the basis at each theta.
// Ties go to the smallest theta. Candidates where not even one component is
// feasible are skipped.
inline TruncatedFit fit_method_a(const CurveSet& curves, const Eigen::VectorXd& y, int m,
                                 double lambda, const ThetaBasisCache& cache,
                                 const MethodAOptions& opts = {}) {
    const int n = curves.n();
    if (y.size() != n) throw DimensionError("fit_method_a: response length mismatch");

    TruncatedFit best;
    best.method = 'A';
    best.lambda = lambda;
    bool found = false;
    double best_objective = 0.0;
    int best_idx = -1;
    int best_m = 0;

    for (int t = 0; t < cache.count(); ++t) {
        int m_used = std::min(m, cache.usable_m(t));
        if (!opts.allow_m_shrink && m_used < m) m_used = 0;
        if (m_used < 1) continue;
        const double theta = cache.theta(t);
        detail::ScoreFit fit =
            detail::fit_on_scores(cache.system(t), cache.score_matrix(t), y, m_used);
        const double objective = fit.rss + n * lambda * theta * theta;
        best.objective_trace.push_back({theta, objective, m_used});
        if (!found || objective < best_objective) {
            found = true;
            best_objective = objective;
            best_idx = t;
            best_m = m_used;
        }
    }
    if (!found)
        throw InfeasibleModelError("fit_method_a: no feasible candidate theta", 0);

    detail::ScoreFit fit = detail::fit_on_scores(cache.system(best_idx),
                                                 cache.score_matrix(best_idx), y, best_m);
    best.a_hat = fit.a;
    best.b_hat = std::move(fit.b);
    best.theta_hat = cache.theta(best_idx);
    best.m = best_m;
    return best;
}

inline TruncatedFit fit_method_a(const CurveSet& curves, const Eigen::VectorXd& y, int m,
                                 double lambda, const ThetaGrid& thetas,
                                 const MethodAOptions& opts = {}) {
    ThetaBasisCache cache(curves, thetas, m);
    return fit_method_a(curves, y, m, lambda, cache, opts);
}

// Truncate a pilot slope at theta and re-center the intercept so the mean
// training prediction is unchanged (the least-squares intercept given the
// truncated slope):
//   b_hat = b_check on [0, theta], 0 beyond;
//   a_hat = a_check + int_0^1 b_check Xbar - int_0^theta b_hat Xbar
//         = ybar - int_0^theta b_hat Xbar.
inline std::pair<double, Eigen::VectorXd> truncate_and_correct(const PilotFit& pilot,
                                                               double theta) {
    if (!(theta > 0.0) || theta > 1.0)
        throw DomainError("truncate_and_correct: theta must be in (0, 1]");
    const Grid& grid = pilot.es.grid;
    Eigen::VectorXd b_hat = pilot.b_check;
    const int last = grid.last_index_leq(theta);
    b_hat.tail(grid.size() - 1 - last).setZero();
    const double a_hat = pilot.a_check +
                         inner_product(pilot.b_check, pilot.es.mean_curve, grid) -
                         restricted_inner_product(b_hat, pilot.es.mean_curve, grid, theta);
    return {a_hat, std::move(b_hat)};
}

// Penalized criterion for truncating a pilot fit at theta:
//   T(theta) = sum_i {y_i - a_check - int_0^theta b_check X_i}^2
//              + n lambda theta^2.
inline double objective_b(const PilotFit& pilot, const CurveSet& curves,
                          const Eigen::VectorXd& y, double theta, double lambda) {
    const int n = curves.n();
    if (y.size() != n) throw DimensionError("objective_b: response length mismatch");
    const Eigen::VectorXd wr = theta >= 1.0 ? curves.grid.weights
                                            : curves.grid.restricted_weights(theta);
    const Eigen::VectorXd preds =
        (curves.values * (wr.array() * pilot.b_check.array()).matrix()).array() +
        pilot.a_check;
    return (y - preds).squaredNorm() + n * lambda * theta * theta;
}

struct MethodBOptions {
    // Refit (a, b) by PC regression on [0, theta_hat] instead of truncating
    // the pilot slope.
    bool refit_after_truncation = false;
};

// Iterative truncation estimator: scan T(theta) left to right and take the
// first interior local minimum (strictly below both neighbours); fall back
// to the global argmin when no interior minimum exists. The final slope is
// the truncated pilot with the intercept corrected for location.
inline TruncatedFit fit_method_b(const PilotFit& pilot, const CurveSet& curves,
                                 const Eigen::VectorXd& y, double lambda,
                                 const ThetaGrid& thetas, const MethodBOptions& opts = {}) {
    const int t_count = thetas.count();
    if (t_count == 0) throw DomainError("fit_method_b: empty theta grid");

    TruncatedFit fit;
    fit.method = 'B';
    fit.lambda = lambda;
    fit.m = pilot.m;
    Eigen::VectorXd t_values(t_count);
    for (int t = 0; t < t_count; ++t) {
        t_values[t] = objective_b(pilot, curves, y, thetas.candidates[t], lambda);
        fit.objective_trace.push_back({thetas.candidates[t], t_values[t], pilot.m});
    }

    int chosen = -1;
    for (int t = 1; t + 1 < t_count; ++t) {
        if (t_values[t] < t_values[t - 1] && t_values[t] < t_values[t + 1]) {
            chosen = t;
            break;
        }
    }
    if (chosen < 0) {
        chosen = 0;
        for (int t = 1; t < t_count; ++t)
            if (t_values[t] < t_values[chosen]) chosen = t;
    }
    fit.theta_hat = thetas.candidates[chosen];

    if (opts.refit_after_truncation) {
        const int k_pts = curves.grid.last_index_leq(fit.theta_hat) + 1;
        const int m_refit = std::min({pilot.m, curves.n() - 2, k_pts});
        PilotFit refit = fit_pc_regression(curves, y, m_refit, fit.theta_hat);
        fit.a_hat = refit.a_check;
        fit.b_hat = refit.b_check;
        fit.m = m_refit;
    } else {
        auto [a_hat, b_hat] = truncate_and_correct(pilot, fit.theta_hat);
        fit.a_hat = a_hat;
        fit.b_hat = std::move(b_hat);
    }
    return fit;
}

}  // namespace tflr

#endif
