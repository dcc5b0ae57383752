#ifndef TFLR_TUNING_HPP
#define TFLR_TUNING_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/flm.hpp"
#include "tflr/fpca.hpp"
#include "tflr/grid.hpp"
#include "tflr/truncated.hpp"

namespace tflr {

// Low-dimensional parametric slope used only to calibrate the penalty
// level: {c0 + c1 sin(2^k pi t) + c2 cos(2^k pi t)} I(t < theta_bar).
struct SimpleModel {
    int k = 1;  // frequency exponent, 1..3
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
    double theta_bar = 1.0;
    Eigen::VectorXd curve;  // the model evaluated on the grid, zero at t >= theta_bar
};

struct LambdaRecord {
    double lambda = 0.0;
    double theta_lambda = 0.0;
    double v_lambda = 0.0;
    double p_b = 0.0;
    bool degenerate = false;  // flat risk curve: curvature clamped at the floor
};

struct MBicRow {
    int m = 0;
    double lambda_star = 0.0;
    double bic = 0.0;
    double theta_hat = 0.0;
    bool feasible = false;
};

struct TuningReport {
    Eigen::VectorXd lambda_grid;
    std::vector<LambdaRecord> records;  // per-lambda records at the selected m
    double lambda_star = 0.0;
    int m_star = 0;
    std::vector<MBicRow> bic_table;
};

struct TuningOptions {
    int bsimp_k = 1;
    // Use the observed responses instead of the noiseless surrogate
    // responses in the prediction-risk sum of squares.
    bool a5_target_observed = false;
    // Use the full-domain variance components instead of the truncated ones
    // in the iterative-method slope risk.
    bool sb_b_full_domain_tau = false;
    double second_diff_floor = 1e-8;
};

// 25 log-spaced penalty levels spanning [1e-5, 1e2] x var(y), so that the
// n lambda theta^2 term ranges from negligible to dominant relative to the
// residual sum of squares.
inline Eigen::VectorXd default_lambda_grid(const Eigen::VectorXd& y, int count = 25,
                                           double lo_rel = 1e-5, double hi_rel = 1e2) {
    if (count < 1) throw DomainError("default_lambda_grid: count must be >= 1");
    const double y_bar = y.mean();
    const double var_y =
        (y.array() - y_bar).square().sum() / static_cast<double>(y.size());
    const double scale = var_y > 0.0 ? var_y : 1.0;
    Eigen::VectorXd grid(count);
    if (count == 1) {
        grid[0] = scale * std::sqrt(lo_rel * hi_rel);
        return grid;
    }
    const double log_lo = std::log10(lo_rel), log_hi = std::log10(hi_rel);
    for (int i = 0; i < count; ++i)
        grid[i] = scale * std::pow(10.0, log_lo + i * (log_hi - log_lo) / (count - 1));
    return grid;
}

namespace detail {

// Zero the entries at grid points >= theta (strict truncation).
inline Eigen::VectorXd mask_strictly_below(const Eigen::VectorXd& v, const Grid& grid,
                                           double theta) {
    Eigen::VectorXd out = v;
    for (int k = 0; k < grid.size(); ++k)
        if (grid.points[k] >= theta) out[k] = 0.0;
    return out;
}

}  // namespace detail

// Fits the parametric model by profiling: for each candidate theta the
// remaining parameters (intercept plus c0, c1, c2) enter linearly, so the
// non-linear fit reduces to an exact grid search. Candidates with a
// rank-deficient design are skipped; ties go to the smallest theta.
inline SimpleModel fit_bsimp(const CurveSet& curves, const Eigen::VectorXd& y, int k,
                             const ThetaGrid& thetas) {
    if (k < 1 || k > 3) throw DomainError("fit_bsimp: k must be 1, 2 or 3");
    const int n = curves.n();
    if (n < 5) throw InsufficientDataError("fit_bsimp: need n >= 5 observations");
    if (y.size() != n) throw DimensionError("fit_bsimp: response length mismatch");

    const Grid& grid = curves.grid;
    Eigen::MatrixXd basis(3, grid.size());
    basis.row(0) = trig_basis(1, grid).transpose();
    basis.row(1) = trig_basis(2 * k, grid).transpose();
    basis.row(2) = trig_basis(2 * k + 1, grid).transpose();

    double best_rss = std::numeric_limits<double>::infinity();
    double best_theta = 0.0;
    Eigen::Vector4d best_coef;
    bool found = false;

    Eigen::MatrixXd design(n, 4);
    design.col(0).setOnes();
    for (int t = 0; t < thetas.count(); ++t) {
        const double theta = thetas.candidates[t];
        const Eigen::VectorXd wr =
            theta >= 1.0 ? grid.weights : grid.restricted_weights(theta);
        for (int j = 0; j < 3; ++j)
            design.col(j + 1) =
                curves.values * (wr.array() * basis.row(j).transpose().array()).matrix();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        if (qr.rank() < 4) continue;  // collinear restriction, e.g. tiny theta
        Eigen::Vector4d coef = qr.solve(y);
        const double rss = (y - design * coef).squaredNorm();
        if (!found || rss < best_rss) {
            found = true;
            best_rss = rss;
            best_theta = theta;
            best_coef = coef;
        }
    }
    if (!found) throw NumericalError("fit_bsimp: design singular at every candidate theta");

    SimpleModel model;
    model.k = k;
    model.c0 = best_coef[1];
    model.c1 = best_coef[2];
    model.c2 = best_coef[3];
    model.theta_bar = best_theta;
    Eigen::VectorXd full = basis.transpose() * best_coef.tail(3);
    model.curve = detail::mask_strictly_below(full, grid, best_theta);
    return model;
}

// Risk curves over the candidate truncation points for one component count.
struct RiskCurves {
    Eigen::VectorXd thetas;
    Eigen::VectorXd s_y;
    Eigen::VectorXd s_b;
    std::vector<int> m_used;
};

namespace detail {

// Noiseless surrogate responses a_check + int_I bsimp X_i.
inline Eigen::VectorXd surrogate_responses(const CurveSet& curves, const SimpleModel& bsimp,
                                           double a_check) {
    return (curves.values *
            (curves.grid.weights.array() * bsimp.curve.array()).matrix())
               .array() +
           a_check;
}

// Simultaneous-method risks at one cached truncation point.
//   prediction risk: || target - fitted(theta) ||^2 + sigma^2 (m + 1)
//   slope risk:      int (bsimp - b*_theta)^2 + sigma^2 sum_j 1 / tau_j^theta
inline std::pair<double, double> risks_a_at(const CurveSet& curves,
                                            const ThetaBasisCache& cache, int t_idx, int m,
                                            const SimpleModel& bsimp,
                                            const Eigen::VectorXd& ybar_star,
                                            const Eigen::VectorXd& target, double sigma2) {
    const EigenSystem& es = cache.system(t_idx);
    const double theta = cache.theta(t_idx);
    ScoreFit fit = fit_on_scores(es, cache.score_matrix(t_idx), ybar_star, m);

    double pred_ss = 0.0;
    for (int i = 0; i < curves.n(); ++i) {
        const double pred = fit.a + restricted_inner_product(
                                        fit.b, curves.values.row(i).transpose(),
                                        curves.grid, theta);
        pred_ss += (target[i] - pred) * (target[i] - pred);
    }
    const double s_y = pred_ss + sigma2 * (m + 1);

    const Eigen::VectorXd diff = bsimp.curve - fit.b;
    double inv_tau = 0.0;
    for (int j = 0; j < m; ++j) inv_tau += 1.0 / es.eigenvalues[j];
    const double s_b = inner_product(diff, diff, curves.grid) + sigma2 * inv_tau;
    return {s_y, s_b};
}

}  // namespace detail

// Simultaneous-method surrogate risks at a single truncation point.
inline std::pair<double, double> surrogate_risks_a(const CurveSet& curves,
                                                   const SimpleModel& bsimp, double a_check,
                                                   double sigma2_hat, int m, double theta) {
    const int n = curves.n();
    EigenSystem es = eigensystem(curves, theta, std::min(m, std::max(1, n - 1)));
    const int usable = std::min({m, n - 2, regression_feasible_m(es.eigenvalues)});
    if (m > es.m() || usable < m)
        throw InfeasibleModelError("surrogate_risks_a: infeasible m at theta",
                                   std::min(usable, es.m()));
    ThetaGrid single;
    single.candidates = Eigen::VectorXd::Constant(1, theta);
    ThetaBasisCache cache(curves, single, m);
    const Eigen::VectorXd ybar_star = detail::surrogate_responses(curves, bsimp, a_check);
    return detail::risks_a_at(curves, cache, 0, m, bsimp, ybar_star, ybar_star, sigma2_hat);
}

namespace detail {

struct MethodBSurrogate {
    ScoreFit star_fit;             // (a*, b*) fitted on the full domain
    Eigen::MatrixXd centered;      // centered curves
    Eigen::VectorXd inv_tau_full;  // 1 / tau_j^1 for j < m
};

inline MethodBSurrogate make_b_surrogate(const CurveSet& curves, const PilotFit& pilot,
                                         const Eigen::VectorXd& ybar_star, int m) {
    MethodBSurrogate s;
    s.star_fit = fit_on_scores(pilot.es, scores(curves, pilot.es), ybar_star, m);
    s.centered = curves.values.rowwise() - pilot.es.mean_curve.transpose();
    s.inv_tau_full = pilot.es.eigenvalues.head(m).cwiseInverse();
    return s;
}

// Iterative-method risks at one truncation point.
inline std::pair<double, double> risks_b_at(const CurveSet& curves, const PilotFit& pilot,
                                            const MethodBSurrogate& surr,
                                            const Eigen::VectorXd& tau_theta, int m_tau,
                                            double theta, const SimpleModel& bsimp,
                                            const Eigen::VectorXd& target, double sigma2,
                                            bool full_domain_tau) {
    const Grid& grid = curves.grid;
    const int m = static_cast<int>(surr.inv_tau_full.size());
    const Eigen::VectorXd wr =
        theta >= 1.0 ? grid.weights : grid.restricted_weights(theta);

    // predictions of the truncated full-domain fit
    const Eigen::VectorXd preds =
        (curves.values * (wr.array() * surr.star_fit.b.array()).matrix()).array() +
        surr.star_fit.a;
    double pred_ss = (target - preds).squaredNorm();

    // sigma^2 sum_j (tau_j^1)^{-1} sum_i (int_0^theta phi_j^1 (X_i - Xbar))^2
    double var_y_term = 0.0;
    for (int j = 0; j < m; ++j) {
        const Eigen::VectorXd partial_scores =
            surr.centered *
            (wr.array() * pilot.es.eigenfunctions.row(j).transpose().array()).matrix();
        var_y_term += surr.inv_tau_full[j] * partial_scores.squaredNorm();
    }
    const double s_y = pred_ss + sigma2 * var_y_term;

    // int {bsimp - b* I(t < theta)}^2 + sigma^2 sum_j tau_j^{-1} int_0^theta (phi_j^1)^2
    const Eigen::VectorXd diff =
        bsimp.curve - mask_strictly_below(surr.star_fit.b, grid, theta);
    double var_b_term = 0.0;
    const int j_count = full_domain_tau ? m : std::min(m, m_tau);
    for (int j = 0; j < j_count; ++j) {
        const double phi_sq = restricted_inner_product(
            pilot.es.eigenfunctions.row(j).transpose(),
            pilot.es.eigenfunctions.row(j).transpose(), grid, theta);
        const double tau = full_domain_tau ? pilot.es.eigenvalues[j] : tau_theta[j];
        var_b_term += phi_sq / tau;
    }
    const double s_b = inner_product(diff, diff, grid) + sigma2 * var_b_term;
    return {s_y, s_b};
}

}  // namespace detail

// Iterative-method surrogate risks at a single truncation point. The pilot
// supplies the full-domain basis; the truncated variance components are
// recomputed here.
inline std::pair<double, double> surrogate_risks_b(const CurveSet& curves,
                                                   const SimpleModel& bsimp, double a_check,
                                                   double sigma2_hat, int m, double theta,
                                                   const PilotFit& pilot,
                                                   bool full_domain_tau = false) {
    if (m > pilot.m)
        throw InfeasibleModelError("surrogate_risks_b: m exceeds pilot components", pilot.m);
    const Eigen::VectorXd ybar_star = detail::surrogate_responses(curves, bsimp, a_check);
    detail::MethodBSurrogate surr = detail::make_b_surrogate(curves, pilot, ybar_star, m);
    Eigen::VectorXd tau_theta;
    int m_tau = 0;
    if (!full_domain_tau) {
        const int k_pts = curves.grid.last_index_leq(theta) + 1;
        const int avail = std::min({m, curves.n() - 1, k_pts});
        EigenSystem es_theta = eigensystem(curves, theta, avail);
        m_tau = std::min(avail, regression_feasible_m(es_theta.eigenvalues));
        tau_theta = es_theta.eigenvalues;
    }
    return detail::risks_b_at(curves, pilot, surr, tau_theta, m_tau, theta, bsimp,
                              ybar_star, sigma2_hat, full_domain_tau);
}

struct ThetaLambdaResult {
    double theta_lambda = 0.0;
    double v_lambda = 0.0;
    int index = 0;
    bool degenerate = false;
};

// Minimiser of the penalized risk s_y(theta) + lambda theta^2 (global
// argmin for the simultaneous method, first interior local minimum for the
// iterative one) together with the Laplace-style variance
//   V = (sigma^2 / n) S'' / (S'' + lambda)^2,
// where S'' is a three-point second difference of the raw risk curve at the
// minimiser, clamped below at `floor`.
inline ThetaLambdaResult theta_lambda_and_variance(const Eigen::VectorXd& thetas,
                                                   const Eigen::VectorXd& s_y, double lambda,
                                                   char method, double sigma2_hat, int n,
                                                   double floor = 1e-8) {
    const int count = static_cast<int>(thetas.size());
    if (count < 3) throw DomainError("theta_lambda_and_variance: need >= 3 risk points");
    if (s_y.size() != count)
        throw DimensionError("theta_lambda_and_variance: curve length mismatch");

    Eigen::VectorXd penalized =
        s_y.array() + lambda * thetas.array().square();

    int chosen = -1;
    if (method == 'B') {
        for (int t = 1; t + 1 < count; ++t) {
            if (penalized[t] < penalized[t - 1] && penalized[t] < penalized[t + 1]) {
                chosen = t;
                break;
            }
        }
    } else if (method != 'A') {
        throw DomainError("theta_lambda_and_variance: method must be 'A' or 'B'");
    }
    if (chosen < 0) {
        chosen = 0;
        for (int t = 1; t < count; ++t)
            if (penalized[t] < penalized[chosen]) chosen = t;
    }

    // Quadratic through the three nearest points; constant second
    // derivative, so the same formula serves the one-sided boundary cases.
    int lo = std::clamp(chosen - 1, 0, count - 3);
    const double ta = thetas[lo], tb = thetas[lo + 1], tc = thetas[lo + 2];
    const double fa = s_y[lo], fb = s_y[lo + 1], fc = s_y[lo + 2];
    double second = 2.0 * (fa / ((tb - ta) * (tc - ta)) - fb / ((tb - ta) * (tc - tb)) +
                           fc / ((tc - ta) * (tc - tb)));

    ThetaLambdaResult out;
    out.degenerate = !(second > floor);
    if (out.degenerate) second = floor;
    out.theta_lambda = thetas[chosen];
    out.index = chosen;
    out.v_lambda = (sigma2_hat / static_cast<double>(n)) * second /
                   ((second + lambda) * (second + lambda));
    return out;
}

// Expectation of the slope risk under a normal for theta centred at
// theta_lambda with variance v_lambda, renormalized to the mass the density
// places on the candidate range (so a constant risk integrates to itself).
inline double p_b(const Eigen::VectorXd& thetas, const Eigen::VectorXd& s_b,
                  double theta_lambda, double v_lambda) {
    const int count = static_cast<int>(thetas.size());
    if (count == 0) throw DomainError("p_b: empty risk curve");
    if (s_b.size() != count) throw DimensionError("p_b: curve length mismatch");
    if (count == 1) return s_b[0];

    if (v_lambda < 1e-14) {
        // point-mass limit: risk at the candidate nearest theta_lambda
        int nearest = 0;
        for (int t = 1; t < count; ++t)
            if (std::abs(thetas[t] - theta_lambda) < std::abs(thetas[nearest] - theta_lambda))
                nearest = t;
        return s_b[nearest];
    }

    const Eigen::VectorXd tw = Grid::trapezoid_weights(thetas);
    Eigen::VectorXd log_density =
        -(thetas.array() - theta_lambda).square() / (2.0 * v_lambda);
    const double shift = log_density.maxCoeff();
    double num = 0.0, den = 0.0;
    for (int t = 0; t < count; ++t) {
        const double mass = std::exp(log_density[t] - shift) * tw[t];
        num += s_b[t] * mass;
        den += mass;
    }
    return num / den;
}

// Full tuning result: the report plus the objects the loop produced along
// the way, so callers do not refit.
struct SelectLambdaResult {
    TuningReport report;
    TruncatedFit fit;
    PilotFit pilot;
    SimpleModel bsimp;
};

namespace detail {

inline RiskCurves risk_curves_a(const CurveSet& curves, const ThetaBasisCache& cache, int m,
                                const SimpleModel& bsimp, const Eigen::VectorXd& ybar_star,
                                const Eigen::VectorXd& target, double sigma2) {
    std::vector<double> ts, sy, sb;
    std::vector<int> used;
    for (int t = 0; t < cache.count(); ++t) {
        const int m_used = std::min(m, cache.usable_m(t));
        if (m_used < 1) continue;
        auto [y_risk, b_risk] =
            risks_a_at(curves, cache, t, m_used, bsimp, ybar_star, target, sigma2);
        ts.push_back(cache.theta(t));
        sy.push_back(y_risk);
        sb.push_back(b_risk);
        used.push_back(m_used);
    }
    RiskCurves rc;
    rc.thetas = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<int>(ts.size()));
    rc.s_y = Eigen::Map<Eigen::VectorXd>(sy.data(), static_cast<int>(sy.size()));
    rc.s_b = Eigen::Map<Eigen::VectorXd>(sb.data(), static_cast<int>(sb.size()));
    rc.m_used = std::move(used);
    return rc;
}

inline RiskCurves risk_curves_b(const CurveSet& curves, const ThetaBasisCache& cache,
                                const PilotFit& pilot, const SimpleModel& bsimp,
                                const Eigen::VectorXd& ybar_star, double sigma2,
                                const TuningOptions& opts) {
    const int m = pilot.m;
    MethodBSurrogate surr = make_b_surrogate(curves, pilot, ybar_star, m);
    std::vector<double> ts, sy, sb;
    std::vector<int> used;
    for (int t = 0; t < cache.count(); ++t) {
        const int m_tau = std::min(m, cache.usable_m(t));
        if (!opts.sb_b_full_domain_tau && m_tau < 1) continue;
        auto [y_risk, b_risk] = risks_b_at(
            curves, pilot, surr, cache.system(t).eigenvalues, m_tau, cache.theta(t), bsimp,
            ybar_star, sigma2, opts.sb_b_full_domain_tau);
        ts.push_back(cache.theta(t));
        sy.push_back(y_risk);
        sb.push_back(b_risk);
        used.push_back(m_tau);
    }
    RiskCurves rc;
    rc.thetas = Eigen::Map<Eigen::VectorXd>(ts.data(), static_cast<int>(ts.size()));
    rc.s_y = Eigen::Map<Eigen::VectorXd>(sy.data(), static_cast<int>(sy.size()));
    rc.s_b = Eigen::Map<Eigen::VectorXd>(sb.data(), static_cast<int>(sb.size()));
    rc.m_used = std::move(used);
    return rc;
}

// Per-lambda loop on a pair of risk curves. The penalty coefficient handed
// to the risk minimiser is n * lambda, matching the scale the data-fitting
// objectives use.
inline std::vector<LambdaRecord> lambda_records(const RiskCurves& rc,
                                                const Eigen::VectorXd& lambda_grid,
                                                char method, double sigma2, int n,
                                                double floor) {
    std::vector<LambdaRecord> records;
    records.reserve(lambda_grid.size());
    for (int l = 0; l < lambda_grid.size(); ++l) {
        const double lambda = lambda_grid[l];
        ThetaLambdaResult tl = theta_lambda_and_variance(
            rc.thetas, rc.s_y, static_cast<double>(n) * lambda, method, sigma2, n, floor);
        LambdaRecord rec;
        rec.lambda = lambda;
        rec.theta_lambda = tl.theta_lambda;
        rec.v_lambda = tl.v_lambda;
        rec.degenerate = tl.degenerate;
        rec.p_b = p_b(rc.thetas, rc.s_b, tl.theta_lambda, tl.v_lambda);
        records.push_back(rec);
    }
    return records;
}

inline int argmin_p_b(const std::vector<LambdaRecord>& records) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(records.size()); ++i)
        if (records[i].p_b < records[best].p_b) best = i;
    return best;
}

}  // namespace detail

// Shared state for tuning runs: pilot, parametric slope, surrogate
// responses and the per-theta basis cache are computed once and reused by
// both methods (and by bootstrap refits, which keep the curves fixed).
class TuningSession {
public:
    TuningSession(const CurveSet& curves, const Eigen::VectorXd& y,
                  const std::vector<int>& m_range, const ThetaGrid& thetas,
                  const TuningOptions& opts = {})
        : curves_(curves),
          y_(y),
          m_range_(m_range),
          thetas_(thetas),
          opts_(opts),
          pilot_sel_(bic_select_m(curves, y, m_range)),
          bsimp_(fit_bsimp(curves, y, opts.bsimp_k, thetas)),
          cache_(curves, thetas, cache_cap(m_range, pilot_sel_.m_star)) {
        ybar_star_ = detail::surrogate_responses(curves_, bsimp_, pilot().a_check);
    }

    const PilotFit& pilot() const { return pilot_sel_.fit; }
    const BicSelection& pilot_selection() const { return pilot_sel_; }
    const SimpleModel& bsimp() const { return bsimp_; }
    const ThetaBasisCache& cache() const { return cache_; }

    SelectLambdaResult select(char method, const Eigen::VectorXd& lambda_grid) const {
        if (lambda_grid.size() == 0) throw DomainError("select_lambda: empty lambda grid");
        if (method == 'A') return select_a(lambda_grid);
        if (method == 'B') return select_b(lambda_grid);
        throw DomainError("select_lambda: method must be 'A' or 'B'");
    }

private:
    static int cache_cap(const std::vector<int>& m_range, int m_pilot) {
        int cap = m_pilot;
        for (int m : m_range) cap = std::max(cap, m);
        return cap;
    }

    SelectLambdaResult select_b(const Eigen::VectorXd& lambda_grid) const {
        const int n = curves_.n();
        SelectLambdaResult result;
        result.pilot = pilot();
        result.bsimp = bsimp_;
        result.report.lambda_grid = lambda_grid;

        RiskCurves rc = detail::risk_curves_b(curves_, cache_, pilot(), bsimp_, ybar_star_,
                                              pilot().sigma2_hat, opts_);
        if (rc.thetas.size() < 3)
            throw InfeasibleModelError("select_lambda: too few feasible candidates", 0);
        result.report.records = detail::lambda_records(
            rc, lambda_grid, 'B', pilot().sigma2_hat, n, opts_.second_diff_floor);
        const int best = detail::argmin_p_b(result.report.records);
        result.report.lambda_star = lambda_grid[best];
        result.report.m_star = pilot().m;
        for (const BicEntry& e : pilot_sel_.table)
            result.report.bic_table.push_back(
                {e.m, result.report.lambda_star, e.bic, 0.0, e.feasible});
        result.fit =
            fit_method_b(pilot(), curves_, y_, result.report.lambda_star, thetas_);
        return result;
    }

    // Outer loop over component counts: each count gets its own penalty via
    // the surrogate, is refit on the data, and the count is chosen by BIC.
    SelectLambdaResult select_a(const Eigen::VectorXd& lambda_grid) const {
        const int n = curves_.n();
        const double log_n = std::log(static_cast<double>(n));
        const Eigen::VectorXd& target = opts_.a5_target_observed ? y_ : ybar_star_;

        SelectLambdaResult result;
        result.pilot = pilot();
        result.bsimp = bsimp_;
        result.report.lambda_grid = lambda_grid;

        std::vector<std::vector<LambdaRecord>> all_records;
        std::vector<TruncatedFit> fits;
        int best_row = -1;
        for (int m : m_range_) {
            MBicRow row;
            row.m = m;
            RiskCurves rc = detail::risk_curves_a(curves_, cache_, m, bsimp_, ybar_star_,
                                                  target, pilot().sigma2_hat);
            if (rc.thetas.size() < 3) {
                all_records.emplace_back();
                fits.emplace_back();
                result.report.bic_table.push_back(row);
                continue;
            }
            std::vector<LambdaRecord> records = detail::lambda_records(
                rc, lambda_grid, 'A', pilot().sigma2_hat, n, opts_.second_diff_floor);
            const int best_l = detail::argmin_p_b(records);
            row.lambda_star = lambda_grid[best_l];

            TruncatedFit fit = fit_method_a(curves_, y_, m, row.lambda_star, cache_);
            double rss = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e =
                    y_[i] - predict(fit, curves_.values.row(i).transpose(), curves_.grid);
                rss += e * e;
            }
            row.bic = std::log(rss / static_cast<double>(n)) + (m + 1) * log_n;
            row.theta_hat = fit.theta_hat;
            row.feasible = true;

            all_records.push_back(std::move(records));
            fits.push_back(std::move(fit));
            result.report.bic_table.push_back(row);
            const int idx = static_cast<int>(result.report.bic_table.size()) - 1;
            if (best_row < 0 || row.bic < result.report.bic_table[best_row].bic)
                best_row = idx;
        }
        if (best_row < 0) throw InfeasibleModelError("select_lambda: no feasible m", 0);

        result.report.m_star = result.report.bic_table[best_row].m;
        result.report.lambda_star = result.report.bic_table[best_row].lambda_star;
        result.report.records = all_records[best_row];
        result.fit = fits[best_row];
        return result;
    }

    const CurveSet& curves_;
    Eigen::VectorXd y_;
    std::vector<int> m_range_;
    ThetaGrid thetas_;
    TuningOptions opts_;
    BicSelection pilot_sel_;
    SimpleModel bsimp_;
    ThetaBasisCache cache_;
    Eigen::VectorXd ybar_star_;
};

// One-shot penalty selection for a single method.
inline SelectLambdaResult select_lambda(const CurveSet& curves, const Eigen::VectorXd& y,
                                        char method, const std::vector<int>& m_range,
                                        const Eigen::VectorXd& lambda_grid,
                                        const ThetaGrid& thetas,
                                        const TuningOptions& opts = {}) {
    TuningSession session(curves, y, m_range, thetas, opts);
    return session.select(method, lambda_grid);
}

}  // namespace tflr

#endif
