#include "flutterlab/plate.hpp"

#include "flutterlab/operators.hpp"

#include <atomic>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>

namespace flutterlab {

Field berger_force(const Field& u, double b, const PlateGrid& grid) {
    check_shape(grid, u, "berger_force");
    warn_if_negative_load(b);
    const double coef = b - grad_norm_sq(u, grid);
    return coef * apply_operator(OperatorKind::laplacian, u, grid);
}

Field berger_force(const PlateState& state, double b, const PlateGrid& grid) {
    return berger_force(state.u, b, grid);
}

EnergyReport plate_energy(const PlateState& s, double b, const Field& p0, const PlateGrid& grid) {
    check_shape(grid, s.u, "plate_energy(u)");
    check_shape(grid, s.v, "plate_energy(v)");
    check_shape(grid, p0, "plate_energy(p0)");
    const double g2 = grad_norm_sq(s.u, grid);
    EnergyReport r;
    r.kinetic = 0.5 * inner(grid, s.v, s.v);
    r.bending = 0.5 * lap_norm_sq(s.u, grid);
    r.Pi_star = 0.25 * g2 * g2;
    r.Pi = r.Pi_star - 0.5 * b * g2 - inner(grid, p0, s.u);
    r.E_pl = r.kinetic + r.bending + r.Pi;
    r.E_star = r.kinetic + r.bending + r.Pi_star;
    return r;
}

void warn_if_negative_load(double b) {
    static std::atomic<bool> warned{false};
    if (b < 0.0 && !warned.exchange(true))
        std::cerr << "warning: b = " << b
                  << " < 0 (dissipative in-plane tension); results outside the b >= 0 regime\n";
}

void write_field(std::ostream& os, const PlateGrid& g, const Field& f, double t) {
    check_shape(g, f, "write_field");
    const auto old = os.precision(17);
    os << g.n1 << ' ' << g.n2 << ' ' << g.L1 << ' ' << g.L2 << ' ' << t << '\n';
    for (int j = 0; j < g.n2; ++j) {
        for (int i = 0; i < g.n1; ++i) {
            if (i) os << ' ';
            os << f[g.index(i, j)];
        }
        os << '\n';
    }
    os.precision(old);
}

void write_field(const std::string& path, const PlateGrid& g, const Field& f, double t) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    write_field(os, g, f, t);
}

FieldSnapshot read_field(std::istream& is) {
    // Leading "#" lines are comments.
    while ((is >> std::ws).peek() == '#') is.ignore(std::numeric_limits<std::streamsize>::max(), '\n');
    int n1 = 0, n2 = 0;
    double L1 = 0, L2 = 0, t = 0;
    if (!(is >> n1 >> n2 >> L1 >> L2 >> t)) throw Error("read_field: malformed header");
    FieldSnapshot s;
    s.grid = build_grid(L1, L2, n1, n2);
    s.t = t;
    s.values.resize(s.grid.size());
    for (int k = 0; k < s.grid.size(); ++k)
        if (!(is >> s.values[k])) throw Error("read_field: expected " +
                                               std::to_string(s.grid.size()) + " values");
    return s;
}

FieldSnapshot read_field(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    return read_field(is);
}

}  // namespace flutterlab
