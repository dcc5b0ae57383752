#ifndef TFLR_SIMSTUDY_HPP
#define TFLR_SIMSTUDY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "tflr/errors.hpp"
#include "tflr/grid.hpp"
#include "tflr/parallel.hpp"
#include "tflr/rng.hpp"
#include "tflr/tuning.hpp"

namespace tflr {

// Data-generating process and estimation settings for one study. Covariates
// are Gaussian linear combinations of the trigonometric basis with variance
// exp{-(k - 1) * decay} on component k; the slope is one of three shapes
// supported on [0, theta0], scaled to the requested signal-to-noise ratio.
struct SimConfig {
    int n = 100;
    int grid_size = 101;
    int n_components = 25;
    double decay = 0.25;
    int model_id = 1;  // 1, 2 or 3
    double snr = 26.25;
    double noise_sd = 1.0;
    double theta0 = 0.5;
    double a0 = 0.0;
    int replicates = 400;
    std::uint64_t seed = 1;

    // estimation settings
    int m_min = 2;
    int m_max = 9;
    double theta_min = 0.05;
    double theta_max = 1.0;
    int lambda_count = 25;
    double lambda_lo_rel = 1e-5;
    double lambda_hi_rel = 1e2;
    int threads = 1;
    TuningOptions tuning;

    std::vector<int> m_range() const {
        std::vector<int> r;
        for (int m = m_min; m <= m_max; ++m) r.push_back(m);
        return r;
    }

    void validate() const {
        if (n < 5) throw DomainError("SimConfig: n too small");
        if (grid_size < 2) throw DomainError("SimConfig: grid_size too small");
        if (n_components < 1) throw DomainError("SimConfig: n_components must be positive");
        if (!(decay > 0.0)) throw DomainError("SimConfig: decay must be positive");
        if (model_id < 1 || model_id > 3) throw DomainError("SimConfig: model_id must be 1..3");
        if (!(snr > 0.0) || !(noise_sd > 0.0)) throw DomainError("SimConfig: snr and noise_sd must be positive");
        if (!(theta0 > 0.0) || !(theta0 < 1.0)) throw DomainError("SimConfig: theta0 must be in (0, 1)");
        if (replicates < 1) throw DomainError("SimConfig: replicates must be positive");
        if (m_min < 1 || m_max < m_min) throw DomainError("SimConfig: invalid m range");
        if (threads < 1) throw DomainError("SimConfig: threads must be positive");
    }
};

// Basis matrix (component x grid point) used by the generator.
inline Eigen::MatrixXd simulation_basis(const Grid& grid, int n_components) {
    Eigen::MatrixXd basis(n_components, grid.size());
    for (int k = 1; k <= n_components; ++k)
        basis.row(k - 1) = trig_basis(k, grid).transpose();
    return basis;
}

inline double component_variance(int k_one_based, double decay) {
    return std::exp(-(k_one_based - 1) * decay);
}

// Draws n covariate curves. Coefficients are independent centred Gaussians
// with exponentially decaying variances; draw order is fixed (curve-major,
// component-minor) so a seed pins the output bit for bit.
inline CurveSet gen_x(const SimConfig& config, std::uint64_t replicate_seed) {
    const Grid grid = Grid::uniform(config.grid_size);
    const Eigen::MatrixXd basis = simulation_basis(grid, config.n_components);
    Eigen::VectorXd sds(config.n_components);
    for (int k = 1; k <= config.n_components; ++k)
        sds[k - 1] = std::sqrt(component_variance(k, config.decay));

    Rng rng(replicate_seed);
    Eigen::MatrixXd coef(config.n, config.n_components);
    for (int i = 0; i < config.n; ++i)
        for (int k = 0; k < config.n_components; ++k)
            coef(i, k) = sds[k] * rng.normal();
    return CurveSet::make(grid, coef * basis);
}

// Unscaled slope shapes: a flat step, a sine arch, and a raised cosine,
// with discontinuities at theta0 in the 0th, 1st and 2nd derivative.
inline Eigen::VectorXd model_slope_shape(int model_id, const Grid& grid, double theta0) {
    Eigen::VectorXd shape(grid.size());
    for (int g = 0; g < grid.size(); ++g) {
        const double t = grid.points[g];
        switch (model_id) {
            case 1:
                shape[g] = t <= theta0 ? 1.0 : 0.0;
                break;
            case 2:
                shape[g] = t < theta0 ? std::sin(2.0 * M_PI * t) : 0.0;
                break;
            case 3:
                shape[g] = t < theta0 ? std::cos(2.0 * M_PI * t) + 1.0 : 0.0;
                break;
            default:
                throw DomainError("model_slope_shape: model_id must be 1..3");
        }
    }
    return shape;
}

// Slope scaled so that var(int b0 X) = snr * noise_sd^2 under the analytic
// covariance K(s, t) = sum_k v_k eta_k(s) eta_k(t) of the generator.
inline Eigen::VectorXd model_slope(int model_id, const Grid& grid, double snr,
                                   double noise_sd, double theta0, int n_components,
                                   double decay) {
    const Eigen::VectorXd shape = model_slope_shape(model_id, grid, theta0);
    const Eigen::MatrixXd basis = simulation_basis(grid, n_components);
    double variance = 0.0;
    for (int k = 1; k <= n_components; ++k) {
        const double proj = inner_product(shape, basis.row(k - 1).transpose(), grid);
        variance += component_variance(k, decay) * proj * proj;
    }
    if (!(variance > 1e-12))
        throw DomainError("model_slope: shape carries no signal variance");
    const double scale = std::sqrt(snr * noise_sd * noise_sd / variance);
    return scale * shape;
}

// y_i = a0 + int_I b0 X_i + noise, one normal draw per observation.
inline Eigen::VectorXd gen_y(const CurveSet& curves, const Eigen::VectorXd& b0, double a0,
                             double noise_sd, std::uint64_t noise_seed) {
    if (b0.size() != curves.grid.size())
        throw DimensionError("gen_y: slope length does not match grid");
    Rng rng(noise_seed);
    Eigen::VectorXd y(curves.n());
    for (int i = 0; i < curves.n(); ++i) {
        y[i] = a0 + inner_product(b0, curves.values.row(i).transpose(), curves.grid) +
               noise_sd * rng.normal();
    }
    return y;
}

struct ReplicateRecord {
    int replicate = 0;
    bool ok = false;
    std::string error;
    double theta_a = 0.0, theta_b = 0.0;
    double ise_a = 0.0, ise_b = 0.0, ise_notrunc = 0.0;
    int m_a = 0, m_pilot = 0;
    double lambda_a = 0.0, lambda_b = 0.0;
};

struct StudySummary {
    int completed = 0;
    int failed = 0;
    double mean_theta_a = 0.0, sd_theta_a = 0.0;
    double mean_theta_b = 0.0, sd_theta_b = 0.0;
    double mean_ise_a = 0.0, median_ise_a = 0.0;
    double mean_ise_b = 0.0, median_ise_b = 0.0;
    double mean_ise_notrunc = 0.0, median_ise_notrunc = 0.0;
};

struct StudyReport {
    SimConfig config;
    Eigen::VectorXd b0;  // the true (scaled) slope on the grid
    std::vector<ReplicateRecord> records;
    StudySummary summary;
};

inline double integrated_squared_error(const Eigen::VectorXd& estimate,
                                       const Eigen::VectorXd& truth, const Grid& grid) {
    const Eigen::VectorXd diff = estimate - truth;
    return inner_product(diff, diff, grid);
}

namespace detail {

inline double median_of(std::vector<double> values) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    if (values.size() % 2 == 1) return values[mid];
    return 0.5 * (values[mid - 1] + values[mid]);
}

inline std::pair<double, double> mean_sd(const std::vector<double>& values) {
    const int count = static_cast<int>(values.size());
    if (count == 0) return {0.0, 0.0};
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= count;
    if (count == 1) return {mean, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / (count - 1))};
}

}  // namespace detail

inline StudySummary summarize(const std::vector<ReplicateRecord>& records) {
    StudySummary s;
    std::vector<double> ta, tb, ia, ib, in;
    for (const ReplicateRecord& r : records) {
        if (!r.ok) {
            ++s.failed;
            continue;
        }
        ++s.completed;
        ta.push_back(r.theta_a);
        tb.push_back(r.theta_b);
        ia.push_back(r.ise_a);
        ib.push_back(r.ise_b);
        in.push_back(r.ise_notrunc);
    }
    std::tie(s.mean_theta_a, s.sd_theta_a) = detail::mean_sd(ta);
    std::tie(s.mean_theta_b, s.sd_theta_b) = detail::mean_sd(tb);
    std::tie(s.mean_ise_a, std::ignore) = detail::mean_sd(ia);
    std::tie(s.mean_ise_b, std::ignore) = detail::mean_sd(ib);
    std::tie(s.mean_ise_notrunc, std::ignore) = detail::mean_sd(in);
    s.median_ise_a = detail::median_of(ia);
    s.median_ise_b = detail::median_of(ib);
    s.median_ise_notrunc = detail::median_of(in);
    return s;
}

// Runs the full study: per replicate, generate data, tune and fit both
// methods, and record truncation points and integrated squared errors.
// Replicates are independent streams indexed by (seed, replicate), so the
// report does not depend on the thread count. Failures are recorded and
// excluded from the summaries, never silently dropped.
inline StudyReport run_study(const SimConfig& config) {
    config.validate();
    const Grid grid = Grid::uniform(config.grid_size);
    const Eigen::VectorXd b0 =
        model_slope(config.model_id, grid, config.snr, config.noise_sd, config.theta0,
                    config.n_components, config.decay);
    const ThetaGrid thetas = ThetaGrid::from_grid(grid, config.theta_min, config.theta_max);
    const std::vector<int> m_range = config.m_range();

    StudyReport report;
    report.config = config;
    report.b0 = b0;
    report.records.resize(config.replicates);

    parallel_for(config.replicates, config.threads, [&](int r) {
        ReplicateRecord rec;
        rec.replicate = r;
        try {
            const CurveSet curves = gen_x(config, derive_seed(config.seed, r, 1));
            const Eigen::VectorXd y =
                gen_y(curves, b0, config.a0, config.noise_sd, derive_seed(config.seed, r, 2));
            const Eigen::VectorXd lambda_grid = default_lambda_grid(
                y, config.lambda_count, config.lambda_lo_rel, config.lambda_hi_rel);

            TuningSession session(curves, y, m_range, thetas, config.tuning);
            SelectLambdaResult a = session.select('A', lambda_grid);
            SelectLambdaResult b = session.select('B', lambda_grid);

            rec.theta_a = a.fit.theta_hat;
            rec.theta_b = b.fit.theta_hat;
            rec.ise_a = integrated_squared_error(a.fit.b_hat, b0, grid);
            rec.ise_b = integrated_squared_error(b.fit.b_hat, b0, grid);
            rec.ise_notrunc = integrated_squared_error(session.pilot().b_check, b0, grid);
            rec.m_a = a.report.m_star;
            rec.m_pilot = session.pilot().m;
            rec.lambda_a = a.report.lambda_star;
            rec.lambda_b = b.report.lambda_star;
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        report.records[r] = std::move(rec);
    });

    report.summary = summarize(report.records);
    return report;
}

}  // namespace tflr

#endif
