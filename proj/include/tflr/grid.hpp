#ifndef TFLR_GRID_HPP
#define TFLR_GRID_HPP

#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "tflr/errors.hpp"

namespace tflr {

// Discretisation of the unit interval together with trapezoid quadrature
// weights. All curves and slope functions in this library live on such a
// grid; integrals are the corresponding weighted sums.
struct Grid {
    Eigen::VectorXd points;   // strictly increasing, points[0] = 0, points[G-1] = 1
    Eigen::VectorXd weights;  // positive, sum = 1

    int size() const { return static_cast<int>(points.size()); }

    // Uniform grid with `size_g` points (default matches the library-wide
    // default resolution).
    static Grid uniform(int size_g = 101) {
        if (size_g < 2) throw DomainError("Grid::uniform: need at least 2 points");
        Eigen::VectorXd pts(size_g);
        for (int k = 0; k < size_g; ++k)
            pts[k] = static_cast<double>(k) / static_cast<double>(size_g - 1);
        pts[size_g - 1] = 1.0;
        return from_points(std::move(pts));
    }

    // Builds a grid from explicit points, validating the invariants and
    // attaching composite-trapezoid weights.
    static Grid from_points(Eigen::VectorXd pts) {
        const int g = static_cast<int>(pts.size());
        if (g < 2) throw DomainError("Grid: need at least 2 points");
        for (int k = 0; k < g; ++k) {
            if (!std::isfinite(pts[k]))
                throw DomainError("Grid: non-finite point at index " + std::to_string(k));
            if (k > 0 && !(pts[k] > pts[k - 1]))
                throw DomainError("Grid: points not strictly increasing at index " +
                                  std::to_string(k));
        }
        if (pts[0] != 0.0 || pts[g - 1] != 1.0)
            throw DomainError("Grid: domain must be exactly [0, 1]");
        Grid grid;
        grid.weights = trapezoid_weights(pts);
        grid.points = std::move(pts);
        return grid;
    }

    // Trapezoid weights for an arbitrary increasing point sequence.
    static Eigen::VectorXd trapezoid_weights(const Eigen::VectorXd& pts) {
        const int g = static_cast<int>(pts.size());
        Eigen::VectorXd w(g);
        w[0] = (pts[1] - pts[0]) / 2.0;
        for (int k = 1; k + 1 < g; ++k) w[k] = (pts[k + 1] - pts[k - 1]) / 2.0;
        w[g - 1] = (pts[g - 1] - pts[g - 2]) / 2.0;
        return w;
    }

    // Index of the last grid point <= theta. theta must be positive.
    int last_index_leq(double theta) const {
        if (!(theta > 0.0)) throw DomainError("theta must be positive");
        int k = size() - 1;
        while (k > 0 && points[k] > theta) --k;
        return k;
    }

    // Trapezoid weights for integration over [0, theta]. Integration stops
    // at the last grid point <= theta; there are no partial panels, so any
    // objective scanned over theta is piecewise constant between grid
    // points. Entries beyond the truncation point are zero.
    Eigen::VectorXd restricted_weights(double theta) const {
        const int last = last_index_leq(theta);
        Eigen::VectorXd w = Eigen::VectorXd::Zero(size());
        if (last == 0) return w;  // no panel fits in [0, theta]
        w.head(last + 1) = trapezoid_weights(points.head(last + 1));
        return w;
    }

    bool same_as(const Grid& other) const {
        return points.size() == other.points.size() && points == other.points;
    }
};

// A sample of curves evaluated on a common grid, one curve per row.
struct CurveSet {
    Grid grid;
    Eigen::MatrixXd values;  // n x G

    int n() const { return static_cast<int>(values.rows()); }
    int g() const { return static_cast<int>(values.cols()); }

    static CurveSet make(Grid grid, Eigen::MatrixXd values) {
        if (values.cols() != grid.size())
            throw DimensionError("CurveSet: row length " + std::to_string(values.cols()) +
                                 " does not match grid size " + std::to_string(grid.size()));
        if (!values.allFinite()) throw DomainError("CurveSet: non-finite curve value");
        return CurveSet{std::move(grid), std::move(values)};
    }
};

namespace detail {
// Shared accumulation path so that the restricted integral at theta = 1 is
// bit-identical to the full integral.
inline double weighted_product_sum(const Eigen::VectorXd& w, const Eigen::VectorXd& f,
                                   const Eigen::VectorXd& g) {
    return (w.array() * f.array() * g.array()).sum();
}
}  // namespace detail

// L2 inner product on [0, 1] by trapezoid quadrature.
inline double inner_product(const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                            const Grid& grid) {
    if (f.size() != grid.size() || g.size() != grid.size())
        throw DimensionError("inner_product: vector length does not match grid");
    return detail::weighted_product_sum(grid.weights, f, g);
}

// L2 inner product over [0, theta].
inline double restricted_inner_product(const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                       const Grid& grid, double theta) {
    if (f.size() != grid.size() || g.size() != grid.size())
        throw DimensionError("restricted_inner_product: vector length does not match grid");
    if (theta >= 1.0) return detail::weighted_product_sum(grid.weights, f, g);
    return detail::weighted_product_sum(grid.restricted_weights(theta), f, g);
}

// Trigonometric basis on [0, 1]:
//   index 1       -> constant 1
//   index 2k      -> sin(2^k pi t)
//   index 2k + 1  -> cos(2^k pi t)
// so indices 2..5 are sin(2 pi t), cos(2 pi t), sin(4 pi t), cos(4 pi t).
inline Eigen::VectorXd trig_basis(int k_index, const Grid& grid) {
    if (k_index < 1) throw DomainError("trig_basis: index must be >= 1");
    const int g = grid.size();
    Eigen::VectorXd out(g);
    if (k_index == 1) {
        out.setOnes();
        return out;
    }
    const int k = k_index / 2;  // frequency exponent for both sin and cos
    const double freq = std::ldexp(1.0, k) * M_PI;
    if (k_index % 2 == 0) {
        for (int j = 0; j < g; ++j) out[j] = std::sin(freq * grid.points[j]);
    } else {
        for (int j = 0; j < g; ++j) out[j] = std::cos(freq * grid.points[j]);
    }
    return out;
}

}  // namespace tflr

#endif
