#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tflr/fpca.hpp"
#include "tflr/grid.hpp"
#include "tflr/rng.hpp"

#include "test_helpers.hpp"

using Catch::Matchers::WithinAbs;
using namespace tflr;

namespace {

CurveSet rank_one_pair(int grid_size = 21) {
    Eigen::MatrixXd values(2, grid_size);
    values.row(0).setOnes();
    values.row(1).setConstant(-1.0);
    return CurveSet::make(Grid::uniform(grid_size), values);
}

}  // namespace

TEST_CASE("covariance of identical curves vanishes", "[fpca]") {
    Eigen::MatrixXd values(4, 11);
    for (int i = 0; i < 4; ++i)
        values.row(i) = Eigen::VectorXd::LinSpaced(11, 0.0, 2.0).transpose();
    const CurveSet curves = CurveSet::make(Grid::uniform(11), values);
    const auto [mean, kernel] = empirical_covariance(curves);
    REQUIRE(kernel.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("covariance of the +-1 pair is identically one", "[fpca]") {
    const auto [mean, kernel] = empirical_covariance(rank_one_pair());
    REQUIRE(mean.cwiseAbs().maxCoeff() < 1e-15);
    REQUIRE((kernel.array() - 1.0).abs().maxCoeff() < 1e-14);
}

TEST_CASE("covariance matches a direct double-loop oracle", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(5, 11, 4, 99u);
    const auto [mean, kernel] = empirical_covariance(curves);

    for (int a = 0; a < 11; ++a) {
        double mu = 0.0;
        for (int i = 0; i < 5; ++i) mu += curves.values(i, a);
        mu /= 5.0;
        REQUIRE_THAT(mean[a], WithinAbs(mu, 1e-12));
    }
    for (int a = 0; a < 11; ++a) {
        for (int b = 0; b < 11; ++b) {
            double acc = 0.0;
            for (int i = 0; i < 5; ++i)
                acc += (curves.values(i, a) - mean[a]) * (curves.values(i, b) - mean[b]);
            REQUIRE_THAT(kernel(a, b), WithinAbs(acc / 5.0, 1e-12));
        }
    }
}

TEST_CASE("covariance requires two curves", "[fpca]") {
    Eigen::MatrixXd one(1, 11);
    one.setOnes();
    const CurveSet curves = CurveSet::make(Grid::uniform(11), one);
    REQUIRE_THROWS_AS(empirical_covariance(curves), InsufficientDataError);
}

TEST_CASE("rank-one eigensystem on the full domain", "[fpca]") {
    const EigenSystem es = eigensystem(rank_one_pair(), 1.0, 1);
    REQUIRE_THAT(es.eigenvalues[0], WithinAbs(1.0, 1e-12));
    // kernel is identically 1, so the eigenfunction is the constant 1 and
    // the sign convention makes it positive
    for (int g = 0; g < es.g(); ++g)
        REQUIRE_THAT(es.eigenfunctions(0, g), WithinAbs(1.0, 1e-10));
}

TEST_CASE("rank-one eigensystem on the half domain", "[fpca]") {
    const EigenSystem es = eigensystem(rank_one_pair(21), 0.5, 1);
    REQUIRE_THAT(es.eigenvalues[0], WithinAbs(0.5, 1e-12));
    const Grid& grid = es.grid;
    for (int g = 0; g < grid.size(); ++g) {
        const double expected = grid.points[g] <= 0.5 ? std::sqrt(2.0) : 0.0;
        REQUIRE_THAT(es.eigenfunctions(0, g), WithinAbs(expected, 1e-10));
    }
}

TEST_CASE("eigenvalue sum equals the kernel trace integral", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(12, 31, 6, 123u);
    const int full_rank = std::min(curves.n() - 1, curves.g());
    const EigenSystem es = eigensystem(curves, 1.0, full_rank);

    const auto [mean, kernel] = empirical_covariance(curves);
    REQUIRE_THAT(es.eigenvalues.sum(),
                 WithinAbs(inner_product(kernel.diagonal(), Eigen::VectorXd::Ones(31),
                                         curves.grid),
                           1e-8));
}

TEST_CASE("eigenfunctions are orthonormal on the truncated domain", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(20, 41, 8, 5u);
    for (double theta : {0.37, 0.6, 1.0}) {
        const EigenSystem es = eigensystem(curves, theta, 5);
        for (int i = 0; i < 5; ++i) {
            for (int j = 0; j < 5; ++j) {
                const double ip = restricted_inner_product(
                    es.eigenfunctions.row(i).transpose(),
                    es.eigenfunctions.row(j).transpose(), curves.grid, theta);
                REQUIRE_THAT(ip, WithinAbs(i == j ? 1.0 : 0.0, 1e-8));
            }
        }
        // zero beyond the domain
        for (int g = 0; g < curves.g(); ++g)
            if (curves.grid.points[g] > theta)
                for (int j = 0; j < 5; ++j) REQUIRE(es.eigenfunctions(j, g) == 0.0);
        // nonincreasing, nonnegative eigenvalues
        for (int j = 0; j + 1 < 5; ++j)
            REQUIRE(es.eigenvalues[j] >= es.eigenvalues[j + 1]);
        REQUIRE(es.eigenvalues[4] >= 0.0);
    }
}

TEST_CASE("weighted kernel maps eigenfunctions to scaled copies", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(15, 31, 6, 77u);
    const double theta = 0.7;
    const EigenSystem es = eigensystem(curves, theta, 4);
    const auto [mean, kernel] = empirical_covariance(curves);
    const Eigen::VectorXd wr = curves.grid.restricted_weights(theta);

    for (int j = 0; j < 4; ++j) {
        const Eigen::VectorXd applied =
            kernel * (wr.array() * es.eigenfunctions.row(j).transpose().array()).matrix();
        const int last = curves.grid.last_index_leq(theta);
        for (int g = 0; g <= last; ++g)
            REQUIRE_THAT(applied[g], WithinAbs(es.eigenvalues[j] * es.eigenfunctions(j, g),
                                               1e-6));
    }
}

TEST_CASE("eigensystem rejects an infeasible component count", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(6, 41, 4, 3u);
    try {
        eigensystem(curves, 1.0, 10);
        FAIL("expected InfeasibleModelError");
    } catch (const InfeasibleModelError& e) {
        REQUIRE(e.largest_feasible == 5);  // n - 1
    }
    REQUIRE_THROWS_AS(eigensystem(curves, 0.0, 1), DomainError);
}

TEST_CASE("scores of centred copies vanish", "[fpca]") {
    Eigen::MatrixXd values(3, 21);
    for (int i = 0; i < 3; ++i)
        values.row(i) = Eigen::VectorXd::LinSpaced(21, -1.0, 1.0).transpose();
    const CurveSet curves = CurveSet::make(Grid::uniform(21), values);
    const EigenSystem es = eigensystem(curves, 1.0, 1);
    REQUIRE(scores(curves, es).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scores recover coefficients along an eigenfunction", "[fpca]") {
    const CurveSet base = test_helpers::make_trig_curves(18, 41, 6, 21u);
    const EigenSystem es = eigensystem(base, 1.0, 4);

    const int j_target = 2;
    Eigen::MatrixXd values(5, 41);
    Rng rng(17);
    Eigen::VectorXd c(5);
    for (int i = 0; i < 5; ++i) {
        c[i] = rng.normal();
        values.row(i) = (es.mean_curve + c[i] * es.eigenfunctions.row(j_target).transpose())
                            .transpose();
    }
    const CurveSet shifted = CurveSet::make(base.grid, values);
    const Eigen::MatrixXd xi = scores(shifted, es);
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double expected = j == j_target ? c[i] : 0.0;
            REQUIRE_THAT(xi(i, j), WithinAbs(expected, 1e-8));
        }
    }
}

TEST_CASE("score column variances equal the eigenvalues", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(30, 41, 8, 2024u);
    for (double theta : {0.7, 1.0}) {
        const EigenSystem es = eigensystem(curves, theta, 3);
        const Eigen::MatrixXd xi = scores(curves, es);
        for (int j = 0; j < 3; ++j) {
            const double var = xi.col(j).squaredNorm() / curves.n();
            REQUIRE_THAT(var, WithinAbs(es.eigenvalues[j], 1e-8));
        }
    }
}

TEST_CASE("scores reject mismatched grids", "[fpca]") {
    const CurveSet curves = test_helpers::make_trig_curves(10, 21, 4, 1u);
    const CurveSet other = test_helpers::make_trig_curves(10, 31, 4, 1u);
    const EigenSystem es = eigensystem(curves, 1.0, 2);
    REQUIRE_THROWS_AS(scores(other, es), DimensionError);
}
