#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tflr/io.hpp"
#include "tflr/rng.hpp"
#include "tflr/simstudy.hpp"

#include "test_helpers.hpp"

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using namespace tflr;

TEST_CASE("component variances decay exponentially", "[simstudy]") {
    REQUIRE_THAT(component_variance(1, 0.25), WithinAbs(1.0, 1e-15));
    REQUIRE_THAT(component_variance(2, 0.25), WithinAbs(std::exp(-0.25), 1e-15));
    REQUIRE_THAT(component_variance(5, 0.25), WithinAbs(std::exp(-1.0), 1e-15));
}

TEST_CASE("curve generation is deterministic in the seed", "[simstudy]") {
    SimConfig config;
    config.n = 12;
    config.grid_size = 31;
    config.n_components = 8;
    const CurveSet a = gen_x(config, 42u);
    const CurveSet b = gen_x(config, 42u);
    REQUIRE(a.values == b.values);
    const CurveSet c = gen_x(config, 43u);
    REQUIRE(a.values != c.values);
}

TEST_CASE("generated coefficients carry the configured variances", "[simstudy]") {
    SimConfig config;
    config.n = 10000;
    config.grid_size = 101;
    config.n_components = 25;
    const CurveSet curves = gen_x(config, 2024u);
    const Grid& grid = curves.grid;

    // project back onto the low-frequency basis functions; their discrete
    // near-orthogonality makes the projection recover the coefficients up
    // to a small leakage from the aliased high-frequency components
    for (int k = 1; k <= 5; ++k) {
        const Eigen::VectorXd eta = trig_basis(k, grid);
        const double norm2 = inner_product(eta, eta, grid);
        double ss = 0.0, mean = 0.0;
        Eigen::VectorXd z(curves.n());
        for (int i = 0; i < curves.n(); ++i) {
            z[i] = inner_product(curves.values.row(i).transpose(), eta, grid) / norm2;
            mean += z[i];
        }
        mean /= curves.n();
        for (int i = 0; i < curves.n(); ++i) ss += (z[i] - mean) * (z[i] - mean);
        const double var = ss / (curves.n() - 1);
        const double target = component_variance(k, config.decay);
        REQUIRE(std::abs(var - target) <= 0.05 * target);
    }
}

TEST_CASE("slope shapes and their boundary behaviour", "[simstudy]") {
    const Grid grid = Grid::uniform(101);
    const Eigen::VectorXd m1 = model_slope_shape(1, grid, 0.5);
    REQUIRE(m1[50] == 1.0);   // t = 0.5 included for the step
    REQUIRE(m1[51] == 0.0);
    const Eigen::VectorXd m2 = model_slope_shape(2, grid, 0.5);
    REQUIRE_THAT(m2[25], WithinAbs(1.0, 1e-12));  // sin(pi/2)
    REQUIRE(m2[50] == 0.0);
    const Eigen::VectorXd m3 = model_slope_shape(3, grid, 0.5);
    REQUIRE_THAT(m3[0], WithinAbs(2.0, 1e-12));
    REQUIRE(m3[50] == 0.0);
}

TEST_CASE("slope scaling hits the requested signal variance", "[simstudy]") {
    const Grid grid = Grid::uniform(101);
    const int n_comp = 25;
    const double decay = 0.25;

    for (int model : {1, 2, 3}) {
        const Eigen::VectorXd b0 = model_slope(model, grid, 26.25, 1.0, 0.5, n_comp, decay);
        // analytic identity: sum_k v_k <b0, eta_k>^2 = snr
        double variance = 0.0;
        for (int k = 1; k <= n_comp; ++k) {
            const double proj = inner_product(b0, trig_basis(k, grid), grid);
            variance += component_variance(k, decay) * proj * proj;
        }
        REQUIRE_THAT(variance, WithinRel(26.25, 1e-10));
    }

    // doubling the signal-to-noise ratio scales the slope by sqrt(2)
    const Eigen::VectorXd base = model_slope(1, grid, 26.25, 1.0, 0.5, n_comp, decay);
    const Eigen::VectorXd doubled = model_slope(1, grid, 52.5, 1.0, 0.5, n_comp, decay);
    REQUIRE_THAT(doubled[0] / base[0], WithinRel(std::sqrt(2.0), 1e-12));

    REQUIRE_THROWS_AS(model_slope(2, grid, 26.25, 1.0, 1e-9, n_comp, decay), DomainError);
}

TEST_CASE("Monte Carlo check of the scaled signal variance", "[simstudy]") {
    const Grid grid = Grid::uniform(101);
    const Eigen::VectorXd b0 = model_slope(1, grid, 26.25, 1.0, 0.5, 25, 0.25);

    // integral of b0 against a generated curve is a linear combination of
    // the coefficient draws; sample its variance directly
    Eigen::VectorXd loadings(25);
    for (int k = 1; k <= 25; ++k)
        loadings[k - 1] = std::sqrt(component_variance(k, 0.25)) *
                          inner_product(b0, trig_basis(k, grid), grid);
    Rng rng(31337u);
    const int draws = 100000;
    double mean = 0.0, ss = 0.0;
    for (int d = 0; d < draws; ++d) {
        double s = 0.0;
        for (int k = 0; k < 25; ++k) s += loadings[k] * rng.normal();
        mean += s;
        const double delta = s;
        ss += delta * delta;
    }
    mean /= draws;
    const double var = ss / draws - mean * mean;
    // 3.5 Monte Carlo standard errors of a variance estimate at 1e5 draws
    REQUIRE(std::abs(var - 26.25) <= 3.5 * 26.25 * std::sqrt(2.0 / draws));
}

TEST_CASE("responses are the linear functional plus noise", "[simstudy]") {
    SimConfig config;
    config.n = 30;
    config.grid_size = 51;
    config.n_components = 10;
    const CurveSet curves = gen_x(config, 7u);
    const Grid& grid = curves.grid;
    const Eigen::VectorXd b0 = model_slope(1, grid, 26.25, 1.0, 0.5, 10, 0.25);

    SECTION("zero noise gives the exact functional") {
        const Eigen::VectorXd y = gen_y(curves, b0, 1.5, 0.0, 99u);
        for (int i = 0; i < curves.n(); ++i)
            REQUIRE(y[i] ==
                    1.5 + inner_product(b0, curves.values.row(i).transpose(), grid));
    }
    SECTION("zero slope gives pure noise around the intercept") {
        SimConfig big = config;
        big.n = 10000;
        const CurveSet many = gen_x(big, 8u);
        const Eigen::VectorXd y =
            gen_y(many, Eigen::VectorXd::Zero(grid.size()), 2.0, 1.5, 100u);
        const double mean = y.mean();
        const double var = (y.array() - mean).square().sum() / (y.size() - 1);
        REQUIRE_THAT(mean, WithinAbs(2.0, 0.06));
        REQUIRE(std::abs(var - 2.25) <= 0.05 * 2.25);
    }
    SECTION("empirical signal-to-noise matches the scaling") {
        SimConfig big = config;
        big.n = 10000;
        big.n_components = 25;
        big.grid_size = 101;
        const CurveSet many = gen_x(big, 9u);
        const Eigen::VectorXd b = model_slope(1, many.grid, 26.25, 1.0, 0.5, 25, 0.25);
        const Eigen::VectorXd signal_only = gen_y(many, b, 0.0, 0.0, 101u);
        const double mean = signal_only.mean();
        const double var =
            (signal_only.array() - mean).square().sum() / (signal_only.size() - 1);
        REQUIRE(std::abs(var - 26.25) <= 0.05 * 26.25);
    }
}

TEST_CASE("a single-replicate study equals the directly computed fit", "[simstudy]") {
    SimConfig config;
    config.n = 50;
    config.grid_size = 51;
    config.n_components = 10;
    config.model_id = 2;
    config.replicates = 1;
    config.seed = 4242u;
    config.m_min = 2;
    config.m_max = 5;
    config.lambda_count = 8;
    const StudyReport report = run_study(config);
    REQUIRE(report.summary.completed == 1);
    REQUIRE(report.records[0].ok);

    // replay the pipeline by hand with the same derived seeds
    const Grid grid = Grid::uniform(51);
    const Eigen::VectorXd b0 = model_slope(2, grid, 26.25, 1.0, 0.5, 10, 0.25);
    const CurveSet curves = gen_x(config, derive_seed(config.seed, 0, 1));
    const Eigen::VectorXd y = gen_y(curves, b0, 0.0, 1.0, derive_seed(config.seed, 0, 2));
    const Eigen::VectorXd lambda_grid = default_lambda_grid(y, 8, 1e-5, 1e2);
    const ThetaGrid thetas = ThetaGrid::from_grid(grid, 0.05, 1.0);
    TuningSession session(curves, y, config.m_range(), thetas, config.tuning);
    const SelectLambdaResult a = session.select('A', lambda_grid);
    const SelectLambdaResult b = session.select('B', lambda_grid);

    REQUIRE(report.records[0].theta_a == a.fit.theta_hat);
    REQUIRE(report.records[0].theta_b == b.fit.theta_hat);
    REQUIRE(report.records[0].lambda_a == a.report.lambda_star);
    REQUIRE(report.records[0].lambda_b == b.report.lambda_star);
    REQUIRE_THAT(report.records[0].ise_a,
                 WithinAbs(integrated_squared_error(a.fit.b_hat, b0, grid), 1e-12));
    REQUIRE(report.summary.mean_theta_a == report.records[0].theta_a);
}

TEST_CASE("study reports are identical across thread counts", "[simstudy]") {
    SimConfig config;
    config.n = 40;
    config.grid_size = 41;
    config.n_components = 10;
    config.model_id = 1;
    config.replicates = 6;
    config.seed = 777u;
    config.m_min = 2;
    config.m_max = 5;
    config.lambda_count = 6;

    SimConfig serial = config;
    serial.threads = 1;
    SimConfig parallel = config;
    parallel.threads = 4;

    const std::string a = to_json(run_study(serial)).dump();
    const std::string b = to_json(run_study(parallel)).dump();
    // thread count is part of the echoed config, so compare data fields via
    // reports built from equal configs but different execution widths
    StudyReport ra = run_study(serial);
    StudyReport rb = run_study(parallel);
    rb.config.threads = serial.threads;
    REQUIRE(to_json(ra).dump() == to_json(rb).dump());
    REQUIRE(a.size() == b.size());
}

TEST_CASE("study summaries are recomputable from the records", "[simstudy]") {
    SimConfig config;
    config.n = 40;
    config.grid_size = 41;
    config.n_components = 8;
    config.replicates = 4;
    config.seed = 31u;
    config.m_min = 2;
    config.m_max = 4;
    config.lambda_count = 5;
    const StudyReport report = run_study(config);
    REQUIRE(static_cast<int>(report.records.size()) == config.replicates);
    const StudySummary redo = summarize(report.records);
    REQUIRE(redo.mean_theta_a == report.summary.mean_theta_a);
    REQUIRE(redo.sd_theta_b == report.summary.sd_theta_b);
    REQUIRE(redo.median_ise_a == report.summary.median_ise_a);
    REQUIRE(redo.completed + redo.failed == config.replicates);
}

TEST_CASE("config validation rejects bad settings", "[simstudy]") {
    SimConfig config;
    config.model_id = 4;
    REQUIRE_THROWS_AS(config.validate(), DomainError);
    config.model_id = 1;
    config.theta0 = 1.0;
    REQUIRE_THROWS_AS(config.validate(), DomainError);
    config.theta0 = 0.5;
    config.replicates = 0;
    REQUIRE_THROWS_AS(config.validate(), DomainError);
}
