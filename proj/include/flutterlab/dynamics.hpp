#pragma once

#include "flutterlab/delay.hpp"
#include "flutterlab/plate.hpp"

#include <Eigen/SparseCholesky>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flutterlab {

struct ModelParams {
    double U = 0.0;
    double k = 0.0;
    double beta = 0.0;  ///< static damping; 0 for the reduced plate
    double b = 0.0;
    Field p0;           ///< static pressure; empty means zero
    double dt = 0.01;
    double T = 10.0;
    QuadratureSpec quad;
    /// Toggles -u_t, -U u_x and -q together.
    bool flow_coupling = true;

    void validate(const PlateGrid& grid) const;
    /// p0 resized to the grid (zeros when empty).
    Field pressure(const PlateGrid& grid) const;
};

/// Theta scheme for u'' + c u' + A u = N with N supplied per stage.
///
/// theta = 1 / (1 + exp(-c dt / 2)), so modes with omega dt >> 1 decay by
/// exp(-c dt / 2) per step like the continuous system; theta - 1/2 = O(dt)
/// keeps second order, and c = 0 gives Crank-Nicolson exactly.
/// Factors M = (1 + theta dt c) I + (theta dt)^2 A once.
class LinearTheta {
public:
    LinearTheta(const Eigen::SparseMatrix<double>& A, double c, double dt);

    /// Part of the velocity right-hand side that does not depend on N.
    Field base(const Field& u0, const Field& v0) const;
    /// v1 = M^{-1}(base + dt Nbar); u1 = u0 + dt ((1 - theta) v0 + theta v1).
    PlateState advance(const PlateState& s, const Field& base, const Field& nbar) const;

    const Eigen::SparseMatrix<double>& A() const { return A_; }
    double theta() const { return theta_; }

private:
    Eigen::SparseMatrix<double> A_;
    double c_, dt_, theta_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// One IMEX integrator for the reduced delay plate.
///
/// Stiff linear part by the theta scheme, f_B, U u_x and q by one
/// predictor-corrector pass.  q(t + dt) splits into the part carried by older
/// snapshots (evaluated once) and the part carried by the newest one, which is
/// re-evaluated for the predicted and the final state.
class Stepper {
public:
    Stepper(const PlateGrid& grid, const ModelParams& params);

    /// Advance by dt.  hist must end with `state` (same time); on return it
    /// ends with the new state.
    PlateState step(const PlateState& state, DelayHistory& hist);

    /// q at the newest history time (cached from the last step when possible).
    Field current_q(const DelayHistory& hist);
    /// Explicit right-hand side p0 - f_B(u) - [U u_x + q].
    Field forcing(const Field& u, const Field& q) const;
    /// A u - forcing(u, q): the stationarity residual at zero velocity.
    Field residual(const Field& u, const Field& q) const;

    const DelayOperator& delay() const { return op_; }
    const ModelParams& params() const { return params_; }
    const PlateGrid& grid() const { return grid_; }

private:
    PlateGrid grid_;
    ModelParams params_;
    Field p0_;
    DelayOperator op_;
    Eigen::SparseMatrix<double> lap_, dx_;
    LinearTheta cn_;
    std::optional<std::pair<double, Field>> q_cache_;
};

/// Single step with a freshly assembled integrator (convenience; slow in loops).
PlateState step(const PlateState& state, DelayHistory& hist, const ModelParams& params,
                const PlateGrid& grid);

enum class DelayDatum { frozen, zero, ramp };

DelayDatum parse_delay_datum(const std::string& name);
std::string to_string(DelayDatum d);

/// History over [-max(t*, span) - dt, 0] ending with the initial state at t = 0.
/// frozen: u(s) = u0; zero: u(s) = 0 for s < 0; ramp: u(s) = (1 + s/t*) u0.
DelayHistory make_delay_datum(DelayDatum kind, const PlateState& initial, double tstar,
                              double dt, double span = 0.0);

struct TrajectorySample {
    double t = 0.0;
    double ut_norm = 0.0;
    double du_norm = 0.0;
    double u_norm = 0.0;
    double E_pl = 0.0;
    double E_star = 0.0;
    double q_norm = 0.0;
    double diss_cum = 0.0;
    std::optional<double> dist_eq;
    double residual = 0.0;  ///< max-norm stationarity residual
};

struct TrajectoryRecord {
    std::vector<TrajectorySample> samples;
};

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& traj,
                          const std::string& comment = {});

struct SimulationOptions {
    int sample_every = 10;
    double tol_v = 1e-7;
    double tol_r = 1e-6;  ///< scaled by (1 + ||p0||_max)
    int converge_samples = 3;
    double energy_limit = 1e12;
    bool stop_on_converged = true;
    /// History span kept beyond t* (for flow reconstruction at z > 0).
    double history_horizon = 0.0;
    /// Optional distance-to-equilibria diagnostic.
    std::function<double(const PlateState&)> distance;
};

struct SimulationResult {
    std::string verdict;  ///< converged, diverged or timeout
    TrajectoryRecord traj;
    PlateState final_state;
    double wall_time = 0.0;
    int steps = 0;
    std::optional<DelayHistory> history;  ///< at the final time
};

SimulationResult simulate(const PlateState& initial, DelayDatum eta, const ModelParams& params,
                          const PlateGrid& grid, const SimulationOptions& opt = {});

/// u = z + w split: z carries the data with extra static damping beta_z,
/// w starts from rest and is driven by p0 and beta_z z.
struct DecomposedSample {
    double t = 0.0;
    double z_energy_norm = 0.0;  ///< sqrt(||Lap z||^2 + ||z_t||^2)
    double w_energy_norm = 0.0;
    double lap_wt = 0.0;         ///< ||Lap w_t||
    double bilap_w = 0.0;        ///< ||Lap^2 w||
    double u_norm = 0.0;
    double recon_error = 0.0;    ///< ||u - (z + w)||
};

struct DecomposedRecord {
    std::vector<DecomposedSample> samples;
    std::string verdict;
    PlateState u, z, w;
    double wall_time = 0.0;
};

DecomposedRecord simulate_decomposed(const PlateState& initial, DelayDatum eta,
                                     const ModelParams& params, double beta_z,
                                     const PlateGrid& grid, int sample_every = 10);

struct LyapunovParams {
    double mu = 0.1;
    double nu = 1.0;
    double eps = 0.05;
    double K = 1.0;

    void validate() const;
};

/// V = E_beta(z) - <q(z^t), z> + <z_t, z> + k/2 ||z||^2
///     + mu (int ||Lap z||^2 + int_0^t* int_{t-s}^t ||Lap z||^2).
double lyapunov_V(const PlateState& z, const DelayHistory& zhist, const LyapunovParams& lp,
                  double k, double beta, const DelayOperator& op);

/// W = E - Q1 + nu ||ub||^2 + eps <ub_t, ub> + mu int_0^t* int_{t-s}^t E, built
/// on ub = u_t by centered differences of three consecutive states.  E at past
/// times comes from centered differences of the history snapshots.
double lyapunov_W(const PlateState& prev, const PlateState& cur, const PlateState& next,
                  const DelayHistory& hist, const LyapunovParams& lp, const ModelParams& params,
                  const PlateGrid& grid);

struct HadamardRow {
    double delta = 0.0;
    std::vector<double> ratio;  ///< ||difference(t)||_Y / delta at the sample times
    double growth_rate = 0.0;   ///< least-squares slope of log ratio
};

struct HadamardReport {
    std::vector<double> times;
    std::vector<HadamardRow> rows;  ///< delta, delta/2, delta/4
    double spread = 0.0;            ///< max relative gap of r(T) between the last two rows
};

/// Y_pl norm of (u, v): sqrt(||Lap u||^2 + ||v||^2).
double energy_norm(const Field& u, const Field& v, const PlateGrid& grid);

HadamardReport hadamard_probe(const PlateState& base, const Field& direction, double delta,
                              const ModelParams& params, DelayDatum eta, const PlateGrid& grid,
                              int sample_every = 10);

struct DissipationReport {
    double integral = 0.0;
    double tail_fraction = 0.0;  ///< share of the last quarter of the time span
};

DissipationReport dissipation_integral(const TrajectoryRecord& traj);

/// Least-squares line fit y = a + b x; returns {slope, intercept, R^2}.
struct LineFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace flutterlab
