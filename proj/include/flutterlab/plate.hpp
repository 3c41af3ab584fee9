#pragma once

#include "flutterlab/grid.hpp"

#include <iosfwd>
#include <string>

namespace flutterlab {

/// Displacement u and velocity v = u_t at time t.
struct PlateState {
    Field u;
    Field v;
    double t = 0.0;

    static PlateState zero(const PlateGrid& g, double t = 0.0) {
        return {g.zeros(), g.zeros(), t};
    }
};

/// Berger force f_B(u) = [b - ||grad u||^2] Lap u.
Field berger_force(const PlateState& state, double b, const PlateGrid& grid);
Field berger_force(const Field& u, double b, const PlateGrid& grid);

struct EnergyReport {
    double kinetic = 0.0;  ///< 1/2 ||v||^2
    double bending = 0.0;  ///< 1/2 ||Lap u||^2 (clamped energy form)
    double Pi = 0.0;       ///< 1/4 ||grad u||^4 - b/2 ||grad u||^2 - <p0, u>
    double Pi_star = 0.0;  ///< 1/4 ||grad u||^4
    double E_pl = 0.0;
    double E_star = 0.0;
};

EnergyReport plate_energy(const PlateState& state, double b, const Field& p0,
                          const PlateGrid& grid);

/// Emit the warning for b < 0 once per process.
void warn_if_negative_load(double b);

// Field snapshot text format: header "n1 n2 L1 L2 t", then n1*n2 values
// (row-major), all at 17 significant digits.  Leading "#" lines are skipped
// on read.
void write_field(std::ostream& os, const PlateGrid& grid, const Field& f, double t);
void write_field(const std::string& path, const PlateGrid& grid, const Field& f, double t);

struct FieldSnapshot {
    PlateGrid grid;
    Field values;
    double t = 0.0;
};

FieldSnapshot read_field(std::istream& is);
FieldSnapshot read_field(const std::string& path);

}  // namespace flutterlab
