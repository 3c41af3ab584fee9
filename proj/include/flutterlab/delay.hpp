#pragma once

#include "flutterlab/history.hpp"
#include "flutterlab/operators.hpp"

#include <Eigen/Dense>

#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

namespace flutterlab {

/// How the s-integral over [0, t*] is discretized.
///
/// trapezoid: time nodes at s = m t*/n_s, m = 0..n_s.
/// segment: time nodes at the stored snapshot times.  The discrete q is then
///   an exact integral of the interpolated history, so eval_q_dt is its exact
///   time derivative.  Cost grows like 1/dt; meant for checks.
enum class SRule { trapezoid, segment };

std::string to_string(SRule rule);
SRule parse_s_rule(const std::string& name);

struct QuadratureSpec {
    int n_theta = 128;
    int n_s = 64;
    SRule s_rule = SRule::trapezoid;

    void validate() const;
    bool operator==(const QuadratureSpec&) const = default;
};

/// The aerodynamic delay potential q^u and its time derivative.
///
/// The history is read at time nodes t - sigma_m and taken linear in s between
/// them.  A drift shift is the same for every output node, so each node's
/// contribution is a set of integer-offset taps on the second-derivative
/// fields; the s-integral of the bilinear samples against the linear time
/// hats is done exactly, leaving the theta rule as the only spatial
/// approximation.  Kernels are cached, so a time loop only pays for the tap
/// applications.
///
/// Not thread-safe (the kernel cache is mutable); use one instance per thread.
class DelayOperator {
public:
    DelayOperator(const PlateGrid& grid, double U, QuadratureSpec quad);

    const PlateGrid& grid() const { return grid_; }
    double U() const { return U_; }
    double tstar() const { return tstar_; }
    const QuadratureSpec& quad() const { return quad_; }

    /// Which snapshots contribute: everything, only the newest one, or all but it.
    enum class Part { all, newest, older };

    Field eval_q(const DelayHistory& hist, double t, Part part = Part::all) const;
    Field eval_q_dt(const DelayHistory& hist, double t) const;

    /// q for a history frozen at u (the stationary delay operator Q u).
    Field apply_frozen(const Field& u) const;
    /// Dense matrix of apply_frozen.
    Eigen::MatrixXd assemble_frozen() const;

    struct Tap {
        int ox, oy;
        double wxx, wxy, wyy;
    };
    /// Taps acting on the history read at t - sigma.
    struct Group {
        double sigma = 0.0;
        std::vector<Tap> taps;
    };
    using Kernel = std::vector<Group>;

private:
    enum class Kind { value, derivative };

    std::shared_ptr<const Kernel> kernel(Kind kind, const DelayHistory& hist, double t) const;
    std::vector<double> time_nodes(const DelayHistory& hist, double t) const;
    Kernel build_kernel(Kind kind, const std::vector<double>& sigma) const;
    Field apply_kernel(const Kernel& k, const DelayHistory& hist, double t, Part part) const;

    PlateGrid grid_;
    double U_;
    double tstar_;
    QuadratureSpec quad_;
    std::vector<Tap> frozen_;
    mutable std::map<std::tuple<int, long long, double>, std::shared_ptr<const Kernel>> cache_;
};

/// Add one merged tap: out(i, j) += wxx Hxx(i+ox, j+oy) + ... over the valid overlap.
void apply_tap(const DelayOperator::Tap& tap, const Hessian& h, const PlateGrid& grid,
               double* out);

Field eval_q(const DelayHistory& hist, double t, double U, const QuadratureSpec& quad,
             const PlateGrid& grid);
Field eval_q_dt(const DelayHistory& hist, double t, double U, const QuadratureSpec& quad,
                const PlateGrid& grid);

struct BoundRatio {
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    bool degenerate = false;  ///< both sides zero; ratio reported as 0
};

struct DelayBoundReport {
    BoundRatio q;     ///< ||q|| against t* int ||Lap u||
    BoundRatio q_dt;  ///< ||q_t|| against t* [||Lap u(t)|| + ||Lap u(t-t*)|| + int ||u||_3]
    std::string h3_surrogate = "grad_lap";
};

DelayBoundReport delay_bound_ratios(const DelayHistory& hist, double t, double U,
                                    const PlateGrid& grid, const QuadratureSpec& quad = {});

}  // namespace flutterlab
