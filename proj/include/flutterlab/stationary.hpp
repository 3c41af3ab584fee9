#pragma once

#include "flutterlab/dynamics.hpp"

#include <Eigen/Dense>

#include <complex>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flutterlab {

/// Stationary residual Lap^2 u + f_B(u) + U u_x + Q u - p0 of the reduced plate.
///
/// Q u is the delay potential of the history frozen at u.  With flow coupling
/// off, the U u_x and Q u terms are dropped.
Field stationary_residual(const Field& u, const ModelParams& params, const PlateGrid& grid);

struct NewtonOptions {
    double tol = 1e-8;  ///< max-norm residual, scaled by (1 + ||p0||_max)
    int max_iter = 50;
};

struct StationaryResult {
    Field u;
    double residual_norm = 0.0;  ///< max norm
    int iterations = 0;
    bool converged = false;
    std::string status;  ///< converged, max-iterations, singular or line-search
    std::vector<double> residual_history;
};

/// Residual, Jacobian and Newton solver with the operators assembled once.
class StationaryProblem {
public:
    StationaryProblem(const PlateGrid& grid, const ModelParams& params);

    Field residual(const Field& u) const;
    /// B + [b - ||grad u||^2] L + 2 h1 h2 (L u)(L u)^T + U Dx + Q.
    Eigen::MatrixXd jacobian(const Field& u) const;
    StationaryResult solve(const Field& guess, const NewtonOptions& opt = {}) const;

    const PlateGrid& grid() const { return grid_; }
    const ModelParams& params() const { return params_; }
    double tolerance(const NewtonOptions& opt) const;

private:
    PlateGrid grid_;
    ModelParams params_;
    Field p0_;
    Eigen::SparseMatrix<double> lap_, dx_, bilap_;
    Eigen::MatrixXd linear_;  ///< B + b L + U Dx + Q
};

StationaryResult solve_stationary(const ModelParams& params, const Field& guess,
                                  const PlateGrid& grid, const NewtonOptions& opt = {});

/// Smallest eigenpair of B phi = lambda (-L) phi: the first discrete buckling load.
/// phi is normalized to unit max norm with a positive maximum.
struct BucklingMode {
    double lambda = 0.0;
    Field phi;
};
BucklingMode buckling_mode(const PlateGrid& grid);

/// Lateral box [-a, a]^2 x [0, zmax] sampled at m1 x m2 x m3 points.  The FFT
/// cell is at least `padding` times the box width per axis.
struct FlowBox {
    double a = 2.0;
    double zmax = 2.0;
    int m1 = 33, m2 = 33, m3 = 17;
    double padding = 2.0;

    void validate(const PlateGrid& grid) const;
    double x(int i) const { return -a + 2.0 * a * i / (m1 - 1); }
    double y(int j) const { return -a + 2.0 * a * j / (m2 - 1); }
    double z(int k) const { return zmax * k / (m3 - 1); }
    bool operator==(const FlowBox&) const = default;
};

/// Samples on the FlowBox grid, index (k m2 + j) m1 + i.
struct FlowSamples {
    FlowBox box;
    double U = 0.0;
    Eigen::VectorXd phi;

    double at(int i, int j, int k) const { return phi[(std::size_t(k) * box.m2 + j) * box.m1 + i]; }
};

/// Subsonic half-space Neumann problem (1 - U^2) phi_xx + phi_yy + phi_zz = 0,
/// phi_z = g on z = 0, solved per lateral Fourier mode of a periodic cell:
/// phi_hat = -g_hat exp(-kappa z) / kappa, kappa = sqrt((1 - U^2) xi1^2 + xi2^2).
/// This is the Prandtl-Glauert stretch x' = x / sqrt(1 - U^2) applied mode-wise.
/// The zero mode is set to 0.
class HalfSpaceFlow {
public:
    /// Data sampled at x = i hx, y = j hy for -nx/2 <= i < nx/2 (periodic cell).
    HalfSpaceFlow(const Eigen::MatrixXd& data, double hx, double hy, double U);

    /// Neumann data U d/dx u_ext from a plate field, on a cell covering the box.
    static HalfSpaceFlow from_plate(const Field& u_hat, double U, const FlowBox& box,
                                    const PlateGrid& grid);
    /// Neumann data from a function on a cell of nx x ny nodes (test hook).
    static HalfSpaceFlow from_function(const std::function<double(double, double)>& g, double U,
                                       int nx, int ny, double hx, double hy);

    enum class Component { value, dx, dy, dz };

    /// Tensor-grid evaluation; result(j, i) at (xs[i], ys[j], z).
    Eigen::MatrixXd evaluate(const std::vector<double>& xs, const std::vector<double>& ys,
                             double z, Component c = Component::value) const;
    double evaluate(double x, double y, double z, Component c = Component::value) const;

    /// int over the periodic cell x [0, zmax] of |grad phi|^2 (and of phi_x^2), by Parseval.
    double mode_grad_energy(double zmax) const;
    double mode_dx_energy(double zmax) const;

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    double period_x() const { return nx_ * hx_; }
    double period_y() const { return ny_ * hy_; }
    double U() const { return U_; }

private:
    int nx_, ny_;
    double hx_, hy_, U_;
    Eigen::MatrixXcd coef_;  ///< phi_hat at z = 0, (ky, kx) order of the FFT
    Eigen::VectorXd kx_, ky_;
};

/// Sample the flow of u_hat on the box grid.
FlowSamples solve_stationary_flow(const Field& u_hat, double U, const FlowBox& box,
                                  const PlateGrid& grid);

void write_flow_samples(const std::string& path, const FlowSamples& s);
FlowSamples read_flow_samples(const std::string& path);

struct StationaryPair {
    Field u_hat;
    FlowSamples phi_hat;
    double residual_norm = 0.0;
};

StationaryPair make_stationary_pair(const StationaryResult& r, double U, const FlowBox& box,
                                    const PlateGrid& grid);

/// Terms of D(u, phi) with the flow integrals truncated to the box.
struct PotentialD {
    double plate = 0.0;        ///< 1/2 ||Lap u||^2 + Pi(u)
    double flow_grad = 0.0;    ///< 1/2 ||grad phi||^2 over the box
    double flow_dx = 0.0;      ///< -U^2/2 ||phi_x||^2 over the box
    double interaction = 0.0;  ///< U <u_x, tr phi>
    double total = 0.0;
    FlowBox box;
};

PotentialD potential_D(const StationaryPair& pair, const ModelParams& params,
                       const PlateGrid& grid, const FlowBox& box);

enum class SweepParam { b, p0_amplitude, U };
SweepParam parse_sweep_param(const std::string& name);
std::string to_string(SweepParam p);

struct SweepSpec {
    SweepParam param = SweepParam::b;
    std::vector<double> values;  ///< monotone
    Field p0_shape;              ///< p0 = value * p0_shape for p0_amplitude sweeps
    /// Extra guesses tried at every point besides {previous, negated, zero}.
    std::vector<Field> extra_seeds;
};

struct Equilibrium {
    Field u;
    double residual = 0.0;
    int iterations = 0;
    std::string branch;
};

struct ContinuationPoint {
    double value = 0.0;
    std::vector<Equilibrium> solutions;
    bool terminated = false;  ///< every Newton attempt failed
};

struct ContinuationResult {
    SweepParam param = SweepParam::b;
    std::vector<ContinuationPoint> points;
};

/// Model parameters at one sweep value.
ModelParams sweep_params(const ModelParams& base, const SweepSpec& sweep, double value);

ContinuationResult continuation(const ModelParams& params, const SweepSpec& sweep,
                                const PlateGrid& grid, const NewtonOptions& opt = {});

/// Distinct converged solutions (max-norm separation > sep) of one parameter point.
std::vector<Equilibrium> deduplicate(std::vector<Equilibrium> sols, double sep = 1e-4);

struct DistanceReport {
    double distance = 0.0;  ///< sqrt(||Lap(u - u_hat)||^2 + ||u - u_hat||^2 + ||u_t||^2)
    int index = -1;
};

DistanceReport distance_to_equilibria(const PlateState& state, const std::vector<Field>& eqset,
                                      const PlateGrid& grid);

/// One JSON record per solution plus a plate snapshot per solution in `dir`.
void write_equilibria_manifest(const std::string& dir, const ContinuationResult& res,
                               const ModelParams& params, const PlateGrid& grid);

}  // namespace flutterlab
