#pragma once

#include "flutterlab/delay.hpp"

#include <array>
#include <string>
#include <vector>

namespace flutterlab {

using Point3 = std::array<double, 3>;

/// Smallest s beyond which the retarded footprint
/// (x - U s - r sin th, y - r cos th), r = sqrt(s^2 - z^2), misses Omega for
/// every (x, y) in Omega and every th.  Equals t* at z = 0.
double footprint_exit(const PlateGrid& grid, double U, double z);

/// Kirchhoff reconstruction of the flow driven by the plate history.
///
/// phi(x, t) = -chi(t - z)/(2 pi) int_z^S int_0^2pi H(x - k1, y - k2, t - s)
/// with H = u_t + U u_x, k1 = U s + r sin th, k2 = r cos th and S the footprint
/// exit time of the point.  H is extended by zero and read bilinearly, its
/// gradient is that of the bilinear interpolant, and history times are
/// interpolated linearly.  At z = 0 each ray is split at grid lines and
/// snapshot times and integrated exactly piece by piece; n_s is unused there.
/// For z > 0 the s-integral runs in sigma with s = z cosh(sigma) on n_s
/// trapezoid panels, which removes the square-root endpoint behaviour.
class FlowReconstructor {
public:
    FlowReconstructor(const PlateGrid& grid, double U, QuadratureSpec quad);

    double phi(const DelayHistory& hist, const Point3& p, double t) const;
    /// Time derivative by the boundary-term formula (two endpoint terms and
    /// two drift integrals); at z = 0 the weight s / r is 1.
    double phi_t(const DelayHistory& hist, const Point3& p, double t) const;

    /// History span needed for any point of Omega lifted to height z.
    double horizon(double z) const;
    /// History span needed for the point p (t* on the closed plate).
    double exit_time(const Point3& p) const;

    const PlateGrid& grid() const { return grid_; }
    double U() const { return U_; }
    double tstar() const { return tstar_; }
    const QuadratureSpec& quad() const { return quad_; }

private:
    void check(const DelayHistory& hist, const Point3& p, double t, const char* who) const;

    PlateGrid grid_;
    double U_, tstar_;
    QuadratureSpec quad_;
};

double eval_phi(const DelayHistory& hist, const Point3& p, double t, double U,
                const QuadratureSpec& quad, const PlateGrid& grid);
double eval_phi_t(const DelayHistory& hist, const Point3& p, double t, double U,
                  const QuadratureSpec& quad, const PlateGrid& grid);

struct TraceCheck {
    Field lhs;       ///< (d/dt + U d/dx) phi at z = 0 over Omega
    Field rhs;       ///< -(u_t + U u_x) - q
    Field residual;  ///< lhs - rhs
    double relative = 0.0;
    bool degenerate = false;  ///< both sides zero; relative reported as 0
};

/// Checks (d/dt + U d/dx) tr phi = -(u_t + U u_x) - q at every plate node.
/// d/dx phi by centered differences of phi with spacing h1.
TraceCheck trace_identity_check(const DelayHistory& hist, double t, double U,
                                const QuadratureSpec& quad, const PlateGrid& grid);

/// Half ball K_rho intersected with z >= 0, centered at the origin, sampled
/// on an n x n x (n/2 + 1) grid over [-rho, rho]^2 x [0, rho].
struct LocalEnergyBall {
    double rho = 1.0;
    int n = 17;

    void validate() const;
    double spacing() const { return 2.0 * rho / (n - 1); }
    int nz() const { return n / 2 + 1; }
    Point3 point(int i, int j, int k) const;
};

struct FlowSampleSet {
    std::vector<Point3> points;
    std::vector<double> values;   ///< phi
    std::vector<double> dvalues;  ///< phi_t
    double t = 0.0;
};

/// Evaluate phi and phi_t at arbitrary points.
FlowSampleSet sample_flow(const FlowReconstructor& rec, const DelayHistory& hist, double t,
                          const std::vector<Point3>& points);
/// Evaluate on the grid of a LocalEnergyBall, point index (k n + j) n + i.
FlowSampleSet sample_ball(const FlowReconstructor& rec, const DelayHistory& hist, double t,
                          const LocalEnergyBall& ball);

/// int_{K_rho, z >= 0} |grad phi|^2 + |phi_t|^2 from samples on the ball grid.
double local_flow_energy(const FlowSampleSet& samples, const LocalEnergyBall& ball);

/// E_int = 2 U <tr phi, u_x>.
double interaction_energy(const Field& u, const Field& phi_trace, double U,
                          const PlateGrid& grid);

/// Rows "x y z phi phi_t" after a "# t U n_theta n_s s_rule" header; each
/// line of `comment` is written first as a "# " line.
void write_flow_dump(const std::string& path, const FlowSampleSet& s, double U,
                     const QuadratureSpec& quad, const std::string& comment = {});
std::vector<Point3> read_points(const std::string& path);

}  // namespace flutterlab
