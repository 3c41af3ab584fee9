#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace flutterlab {

/// Interior-node field on a PlateGrid, row-major: index = j * n1 + i.
using Field = Eigen::VectorXd;

/// Error raised for contract violations (bad arguments, immature history, ...).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Rectangular clamped-plate discretization of (0,L1) x (0,L2).
///
/// Only interior nodes carry unknowns. Node (i, j) with 0 <= i < n1 and
/// 0 <= j < n2 sits at ((i+1) h1, (j+1) h2); the boundary rows and columns
/// (index -1 and n) are identically zero.
struct PlateGrid {
    double L1 = 1.0;
    double L2 = 1.0;
    int n1 = 31;
    int n2 = 31;
    double h1 = 1.0 / 32.0;
    double h2 = 1.0 / 32.0;

    int size() const { return n1 * n2; }
    int index(int i, int j) const { return j * n1 + i; }
    double x(int i) const { return (i + 1) * h1; }
    double y(int j) const { return (j + 1) * h2; }
    /// Quadrature weight of one interior node (trapezoid rule with zero boundary).
    double cell() const { return h1 * h2; }

    Field zeros() const { return Field::Zero(size()); }

    bool operator==(const PlateGrid&) const = default;
};

/// Build a grid with h_i = L_i / (n_i + 1).  Requires L > 0 and n >= 8.
PlateGrid build_grid(double L1, double L2, int n1, int n2);

/// Sample f(x, y) at the interior nodes.
template <typename F>
Field sample(const PlateGrid& g, F&& f) {
    Field out(g.size());
    for (int j = 0; j < g.n2; ++j)
        for (int i = 0; i < g.n1; ++i) out[g.index(i, j)] = f(g.x(i), g.y(j));
    return out;
}

/// Discrete L2 inner product over Omega.
inline double inner(const PlateGrid& g, const Field& a, const Field& b) {
    return g.cell() * a.dot(b);
}

inline double norm_l2(const PlateGrid& g, const Field& a) {
    return std::sqrt(inner(g, a, a));
}

void check_shape(const PlateGrid& g, const Field& f, const char* what);

}  // namespace flutterlab
