#pragma once

#include "flutterlab/grid.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <string_view>

namespace flutterlab {

enum class OperatorKind { laplacian, bilaplacian, dx, dy, dxx, dyy, dxy };

/// Parse "laplacian", "bilaplacian", "dx", "dy", "dxx", "dyy", "dxy".
OperatorKind parse_operator_kind(std::string_view name);

/// Second-order centered finite differences on the interior nodes.
///
/// All first/second derivative kinds use the zero Dirichlet extension.  The
/// bilaplacian is the 13-point stencil with the clamped ghost reflection
/// u(-h) = u(h) across every edge.
Field apply_operator(OperatorKind kind, const Field& f, const PlateGrid& grid);

/// Assembled sparse form of apply_operator.
Eigen::SparseMatrix<double> assemble_operator(OperatorKind kind, const PlateGrid& grid);

/// ||grad u||^2 as the sum of squared edge differences, i.e. -<u, Lap_h u>.
///
/// This is the quadrature of |grad u|^2 on the staggered (edge-midpoint)
/// grid, and it makes Lap_h exactly the negative gradient of the discrete
/// Dirichlet energy.
double grad_norm_sq(const Field& u, const PlateGrid& grid);

/// <grad a, grad b> consistent with grad_norm_sq.
double grad_inner(const Field& a, const Field& b, const PlateGrid& grid);

/// ||Lap u||^2 in the clamped energy form h1 h2 u^T B u, B the 13-point operator.
///
/// Equals the trapezoid quadrature of u_xx^2 + 2 u_xx u_yy + u_yy^2 with the
/// ghost-reflected boundary second differences included.
double lap_norm_sq(const Field& u, const PlateGrid& grid);

inline double lap_norm(const Field& u, const PlateGrid& grid) {
    return std::sqrt(std::max(0.0, lap_norm_sq(u, grid)));
}

/// ||grad Lap u||: H^3 surrogate (edge differences of the Dirichlet Laplacian).
double grad_lap_norm(const Field& u, const PlateGrid& grid);

/// Second-derivative fields of u used by the delay kernels.
struct Hessian {
    Field xx, xy, yy;
};

Hessian hessian(const Field& u, const PlateGrid& grid);

}  // namespace flutterlab
