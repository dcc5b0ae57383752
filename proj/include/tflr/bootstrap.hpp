#ifndef TFLR_BOOTSTRAP_HPP
#define TFLR_BOOTSTRAP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/flm.hpp"
#include "tflr/grid.hpp"
#include "tflr/parallel.hpp"
#include "tflr/rng.hpp"
#include "tflr/truncated.hpp"

namespace tflr {

struct BootstrapOptions {
    int m_min = 2;
    int m_max = 9;
    bool freeze_theta = false;    // keep the original truncation point in refits
    bool keep_replicates = false; // retain the replicate slope curves
    int retry_cap = 100;          // resample retries per replicate before giving up
    int threads = 1;
};

struct BootstrapBands {
    Eigen::VectorXd b_hat;
    Eigen::VectorXd pointwise_sd;
    Eigen::MatrixXd replicate_curves;  // B x G when kept, empty otherwise
    int b_count = 0;
};

namespace detail {

// One full refit at a fixed penalty: the component count is re-selected by
// BIC, the truncation point re-estimated (unless frozen).
inline TruncatedFit bootstrap_refit(const CurveSet& curves, const Eigen::VectorXd& y_star,
                                    char method, double lambda, double frozen_theta,
                                    bool freeze_theta, const std::vector<int>& m_range,
                                    const ThetaGrid& thetas, const ThetaBasisCache& cache,
                                    const EigenSystem& es_full) {
    const int n = curves.n();
    if (method == 'A') {
        const double log_n = std::log(static_cast<double>(n));
        TruncatedFit best;
        double best_bic = 0.0;
        bool found = false;
        for (int m : m_range) {
            TruncatedFit fit;
            try {
                if (freeze_theta) {
                    ThetaGrid frozen;
                    frozen.candidates = Eigen::VectorXd::Constant(1, frozen_theta);
                    fit = fit_method_a(curves, y_star, m, lambda, frozen);
                } else {
                    fit = fit_method_a(curves, y_star, m, lambda, cache);
                }
            } catch (const Error&) {
                continue;
            }
            double rss = 0.0;
            for (int i = 0; i < n; ++i) {
                const double e =
                    y_star[i] - predict(fit, curves.values.row(i).transpose(), curves.grid);
                rss += e * e;
            }
            const double bic = std::log(rss / static_cast<double>(n)) + (m + 1) * log_n;
            if (!found || bic < best_bic) {
                found = true;
                best_bic = bic;
                best = std::move(fit);
            }
        }
        if (!found) throw InfeasibleModelError("bootstrap refit: no feasible m", 0);
        return best;
    }

    // Method B: re-select the pilot by BIC, then truncate.
    BicSelection sel = [&] {
        std::vector<PilotFit> fits;
        BicSelection out;
        const int usable = std::min({static_cast<int>(es_full.m()), n - 2,
                                     regression_feasible_m(es_full.eigenvalues)});
        int best_index = -1;
        const double log_n = std::log(static_cast<double>(n));
        for (int m : m_range) {
            BicEntry entry;
            entry.m = m;
            if (m >= 1 && m <= usable) {
                PilotFit fit = fit_with_eigensystem(curves, y_star, es_full, m);
                entry.bic = std::log(fit.sigma2_hat) + (m + 1) * log_n;
                entry.feasible = true;
                out.fits.push_back(std::move(fit));
                if (best_index < 0 || entry.bic < out.table[best_index].bic)
                    best_index = static_cast<int>(out.table.size());
            }
            out.table.push_back(entry);
        }
        if (best_index < 0) throw InfeasibleModelError("bootstrap refit: no feasible m", usable);
        out.m_star = out.table[best_index].m;
        for (const PilotFit& f : out.fits)
            if (f.m == out.m_star) out.fit = f;
        return out;
    }();

    if (freeze_theta) {
        TruncatedFit fit;
        fit.method = 'B';
        fit.lambda = lambda;
        fit.m = sel.fit.m;
        fit.theta_hat = frozen_theta;
        auto [a_hat, b_hat] = truncate_and_correct(sel.fit, frozen_theta);
        fit.a_hat = a_hat;
        fit.b_hat = std::move(b_hat);
        return fit;
    }
    return fit_method_b(sel.fit, curves, y_star, lambda, thetas);
}

}  // namespace detail

// Residual bootstrap for pointwise dispersion of the slope estimate.
// Residuals are re-centred and resampled with replacement; each replicate
// re-runs the fit at the already-selected penalty (the component count is
// re-selected by BIC each time). Replicates run on independent streams
// derived from (seed, replicate), so the bands are reproducible at any
// thread count.
inline BootstrapBands residual_bootstrap(const CurveSet& curves, const Eigen::VectorXd& y,
                                         const TruncatedFit& fit, int b_reps,
                                         std::uint64_t seed, const ThetaGrid& thetas,
                                         const BootstrapOptions& opts = {}) {
    if (b_reps < 2) throw DomainError("residual_bootstrap: need B >= 2 replicates");
    const int n = curves.n();
    if (y.size() != n) throw DimensionError("residual_bootstrap: response length mismatch");
    const int g = curves.grid.size();

    Eigen::VectorXd fitted(n);
    for (int i = 0; i < n; ++i)
        fitted[i] = predict(fit, curves.values.row(i).transpose(), curves.grid);
    Eigen::VectorXd residuals = y - fitted;
    residuals.array() -= residuals.mean();

    std::vector<int> m_range;
    for (int m = opts.m_min; m <= opts.m_max; ++m) m_range.push_back(m);

    // Shared basis work: the curves are fixed across replicates.
    ThetaBasisCache cache(curves, thetas, opts.m_max);
    const int full_cap = std::min(opts.m_max, n - 2);
    EigenSystem es_full = eigensystem(curves, 1.0, std::min(full_cap, n - 1));

    Eigen::MatrixXd replicate_curves(b_reps, g);
    parallel_for(b_reps, opts.threads, [&](int r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r), 3));
        Eigen::VectorXd y_star(n);
        int attempt = 0;
        for (;;) {
            for (int i = 0; i < n; ++i)
                y_star[i] = fitted[i] + residuals[rng.uniform_int(n)];
            try {
                TruncatedFit refit = detail::bootstrap_refit(
                    curves, y_star, fit.method, fit.lambda, fit.theta_hat,
                    opts.freeze_theta, m_range, thetas, cache, es_full);
                replicate_curves.row(r) = refit.b_hat.transpose();
                return;
            } catch (const Error& e) {
                if (++attempt > opts.retry_cap)
                    throw NumericalError("residual_bootstrap: replicate " +
                                         std::to_string(r) + " failed after " +
                                         std::to_string(attempt) + " attempts: " + e.what());
            }
        }
    });

    BootstrapBands bands;
    bands.b_count = b_reps;
    bands.b_hat = fit.b_hat;
    const Eigen::VectorXd mean = replicate_curves.colwise().mean();
    bands.pointwise_sd =
        ((replicate_curves.rowwise() - mean.transpose()).colwise().squaredNorm() /
         static_cast<double>(b_reps - 1))
            .cwiseSqrt()
            .transpose();
    if (opts.keep_replicates) bands.replicate_curves = std::move(replicate_curves);
    return bands;
}

}  // namespace tflr

#endif
