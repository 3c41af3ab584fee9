#include "flutterlab/operators.hpp"

#include <vector>

namespace flutterlab {

namespace {

// Value of f at interior index (i, j), zero on and beyond the boundary.
struct ZeroExt {
    const PlateGrid& g;
    const double* f;
    double operator()(int i, int j) const {
        if (i < 0 || j < 0 || i >= g.n1 || j >= g.n2) return 0.0;
        return f[g.index(i, j)];
    }
};

// Clamped extension: zero on the boundary line, mirrored one node beyond it.
struct ClampedExt {
    const PlateGrid& g;
    const double* f;
    static int reflect(int i, int n) {
        if (i == -2) return 0;
        if (i == n + 1) return n - 1;
        return i;
    }
    double operator()(int i, int j) const {
        i = reflect(i, g.n1);
        j = reflect(j, g.n2);
        if (i < 0 || j < 0 || i >= g.n1 || j >= g.n2) return 0.0;
        return f[g.index(i, j)];
    }
};

using Tap = std::pair<int, int>;

struct Stencil {
    std::vector<Tap> offsets;
    std::vector<double> weights;
    bool clamped = false;
};

Stencil stencil_for(OperatorKind kind, const PlateGrid& g) {
    const double ix2 = 1.0 / (g.h1 * g.h1);
    const double iy2 = 1.0 / (g.h2 * g.h2);
    Stencil s;
    auto add = [&](int di, int dj, double w) {
        s.offsets.emplace_back(di, dj);
        s.weights.push_back(w);
    };
    switch (kind) {
    case OperatorKind::laplacian:
        add(0, 0, -2.0 * (ix2 + iy2));
        add(-1, 0, ix2);
        add(1, 0, ix2);
        add(0, -1, iy2);
        add(0, 1, iy2);
        break;
    case OperatorKind::dxx:
        add(0, 0, -2.0 * ix2);
        add(-1, 0, ix2);
        add(1, 0, ix2);
        break;
    case OperatorKind::dyy:
        add(0, 0, -2.0 * iy2);
        add(0, -1, iy2);
        add(0, 1, iy2);
        break;
    case OperatorKind::dx:
        add(1, 0, 0.5 / g.h1);
        add(-1, 0, -0.5 / g.h1);
        break;
    case OperatorKind::dy:
        add(0, 1, 0.5 / g.h2);
        add(0, -1, -0.5 / g.h2);
        break;
    case OperatorKind::dxy: {
        const double w = 0.25 / (g.h1 * g.h2);
        add(1, 1, w);
        add(-1, -1, w);
        add(1, -1, -w);
        add(-1, 1, -w);
        break;
    }
    case OperatorKind::bilaplacian: {
        // (D_xx + D_yy)^2 written out: 13 points.
        const double ix4 = ix2 * ix2, iy4 = iy2 * iy2, ixy = 2.0 * ix2 * iy2;
        add(0, 0, 6.0 * ix4 + 6.0 * iy4 + 4.0 * ixy);
        add(-1, 0, -4.0 * ix4 - 2.0 * ixy);
        add(1, 0, -4.0 * ix4 - 2.0 * ixy);
        add(0, -1, -4.0 * iy4 - 2.0 * ixy);
        add(0, 1, -4.0 * iy4 - 2.0 * ixy);
        add(-2, 0, ix4);
        add(2, 0, ix4);
        add(0, -2, iy4);
        add(0, 2, iy4);
        add(-1, -1, ixy);
        add(1, 1, ixy);
        add(-1, 1, ixy);
        add(1, -1, ixy);
        s.clamped = true;
        break;
    }
    }
    return s;
}

template <typename Ext>
void apply_stencil(const Stencil& s, const Ext& ext, const PlateGrid& g, double* out) {
    const std::size_t m = s.offsets.size();
    for (int j = 0; j < g.n2; ++j) {
        for (int i = 0; i < g.n1; ++i) {
            double acc = 0.0;
            for (std::size_t k = 0; k < m; ++k)
                acc += s.weights[k] * ext(i + s.offsets[k].first, j + s.offsets[k].second);
            out[g.index(i, j)] = acc;
        }
    }
}

}  // namespace

OperatorKind parse_operator_kind(std::string_view name) {
    if (name == "laplacian") return OperatorKind::laplacian;
    if (name == "bilaplacian") return OperatorKind::bilaplacian;
    if (name == "dx") return OperatorKind::dx;
    if (name == "dy") return OperatorKind::dy;
    if (name == "dxx") return OperatorKind::dxx;
    if (name == "dyy") return OperatorKind::dyy;
    if (name == "dxy") return OperatorKind::dxy;
    throw Error("unknown operator kind '" + std::string(name) + "'");
}

Field apply_operator(OperatorKind kind, const Field& f, const PlateGrid& grid) {
    check_shape(grid, f, "apply_operator");
    const Stencil s = stencil_for(kind, grid);
    Field out(grid.size());
    if (s.clamped)
        apply_stencil(s, ClampedExt{grid, f.data()}, grid, out.data());
    else
        apply_stencil(s, ZeroExt{grid, f.data()}, grid, out.data());
    return out;
}

Eigen::SparseMatrix<double> assemble_operator(OperatorKind kind, const PlateGrid& g) {
    const Stencil s = stencil_for(kind, g);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(g.size()) * s.offsets.size());
    for (int j = 0; j < g.n2; ++j) {
        for (int i = 0; i < g.n1; ++i) {
            const int row = g.index(i, j);
            for (std::size_t k = 0; k < s.offsets.size(); ++k) {
                int si = i + s.offsets[k].first;
                int sj = j + s.offsets[k].second;
                if (s.clamped) {
                    si = ClampedExt::reflect(si, g.n1);
                    sj = ClampedExt::reflect(sj, g.n2);
                }
                if (si < 0 || sj < 0 || si >= g.n1 || sj >= g.n2) continue;
                trip.emplace_back(row, g.index(si, sj), s.weights[k]);
            }
        }
    }
    Eigen::SparseMatrix<double> m(g.size(), g.size());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

double grad_inner(const Field& a, const Field& b, const PlateGrid& g) {
    check_shape(g, a, "grad_inner");
    check_shape(g, b, "grad_inner");
    const ZeroExt ea{g, a.data()}, eb{g, b.data()};
    double sx = 0.0, sy = 0.0;
    for (int j = 0; j < g.n2; ++j)
        for (int i = -1; i < g.n1; ++i)
            sx += (ea(i + 1, j) - ea(i, j)) * (eb(i + 1, j) - eb(i, j));
    for (int j = -1; j < g.n2; ++j)
        for (int i = 0; i < g.n1; ++i)
            sy += (ea(i, j + 1) - ea(i, j)) * (eb(i, j + 1) - eb(i, j));
    return g.cell() * (sx / (g.h1 * g.h1) + sy / (g.h2 * g.h2));
}

double grad_norm_sq(const Field& u, const PlateGrid& g) { return grad_inner(u, u, g); }

double lap_norm_sq(const Field& u, const PlateGrid& g) {
    const Field bu = apply_operator(OperatorKind::bilaplacian, u, g);
    return g.cell() * u.dot(bu);
}

double grad_lap_norm(const Field& u, const PlateGrid& g) {
    const Field lu = apply_operator(OperatorKind::laplacian, u, g);
    return std::sqrt(grad_norm_sq(lu, g));
}

Hessian hessian(const Field& u, const PlateGrid& g) {
    return {apply_operator(OperatorKind::dxx, u, g), apply_operator(OperatorKind::dxy, u, g),
            apply_operator(OperatorKind::dyy, u, g)};
}

}  // namespace flutterlab
