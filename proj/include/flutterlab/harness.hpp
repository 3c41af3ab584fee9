#pragma once

#include "flutterlab/dynamics.hpp"
#include "flutterlab/flow.hpp"
#include "flutterlab/stationary.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flutterlab {

enum class Experiment {
    simulate,
    decompose,
    stationary,
    continuation,
    sweep_damping,
    verify,
    reconstruct,
    hadamard
};
Experiment parse_experiment(const std::string& name);
std::string to_string(Experiment e);

/// Everything one run needs.  Flat "key = value" file, see config_keys().
struct ExperimentConfig {
    Experiment experiment = Experiment::simulate;
    std::string output = "out";
    std::uint64_t seed = 1;

    // grid
    double L1 = 1.0, L2 = 1.0;
    int n1 = 31, n2 = 31;

    // model
    double U = 0.0, k = 0.0, beta = 0.0, b = 0.0;
    double p0 = 0.0;                  ///< load amplitude
    std::string p0_shape = "constant";  ///< constant or any preset name
    double dt = 0.01, T = 10.0;
    int n_theta = 128, n_s = 64;
    SRule s_rule = SRule::trapezoid;
    bool flow_coupling = true;

    // initial data
    std::string preset = "mode11";
    double amplitude = 1.0;  ///< max |u0|
    double velocity = 0.0;   ///< max |u1|, same shape as u0
    DelayDatum datum = DelayDatum::frozen;

    // simulate
    int sample_every = 10;
    double tol_v = 1e-7, tol_r = 1e-6;
    bool stop_on_converged = true;

    // decompose
    double beta_z = 50.0;

    // stationary and continuation
    double newton_tol = 1e-8;
    int newton_max_iter = 50;
    SweepParam sweep_param = SweepParam::b;
    double sweep_from = 0.0, sweep_to = 0.0;
    int sweep_count = 0;
    double box_a = 2.0, box_zmax = 2.0;
    int box_m = 33, box_mz = 17;

    // sweep-damping
    double k_lo = 0.1, k_hi = 10.0;
    int n_data = 3;

    // hadamard
    double delta = 1e-3;

    // reconstruct
    double time = 0.0;   ///< 0 means the end of the run
    std::string points;  ///< "x y z" file; empty samples the local energy ball
    double ball_rho = 1.0;
    int ball_n = 17;

    void validate() const;
    PlateGrid grid() const;
    ModelParams model(const PlateGrid& grid) const;
    PlateState initial_state(const PlateGrid& grid) const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Keys accepted by parse_config, in serialization order.
std::vector<std::string> config_keys();

/// Strict parse: unknown keys, malformed values and repeated keys are errors
/// naming the key and line.  `source` names the input in messages.
ExperimentConfig parse_config_text(const std::string& text, const std::string& source = "config");
ExperimentConfig parse_config(const std::string& path);
/// Every key with its effective value, one "key = value" per line.
std::string serialize_config(const ExperimentConfig& cfg);
/// Single-line overrides in "key=value" form (CLI --set).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

/// Initial-condition and load shapes, max |u| = amplitude, clamped-compatible
/// (u and its normal derivative vanish on the boundary).
///   mode11         x^2 (L1 - x)^2 y^2 (L2 - y)^2
///   skew           x^3 (L1 - x)^2 y^2 (L2 - y)^2 (1 + y / L2)
///   random-smooth  seeded sum of sin(m pi x / L1) sin(n pi y / L2), m, n <= 4,
///                  coefficients ~ 1 / (m^2 + n^2), times sin(pi x/L1) sin(pi y/L2)
std::vector<std::string> preset_names();
Field make_preset(const std::string& name, double amplitude, std::uint64_t seed,
                  const PlateGrid& grid);

/// Worker count for sweeps from FLUTTERLAB_WORKERS (default 1).
int worker_count();

struct KminRun {
    std::string preset;
    std::string verdict;
    double t_final = 0.0;
    double ut_final = 0.0;
    double residual_final = 0.0;
    double distance = -1.0;  ///< to the equilibrium set; -1 when not converged
};

struct KminRow {
    double k = 0.0;
    std::vector<KminRun> runs;
    bool all_converged = false;
};

struct KminReport {
    double k_lo = 0.0, k_hi = 0.0;  ///< final bracket
    bool valid = false;             ///< k_hi (initial) converged for every datum
    double k_min = 0.0;             ///< empirical, the final k_hi
    bool monotone = true;           ///< verdicts monotone in k over the tested points
    std::vector<KminRow> rows;      ///< in evaluation order
    std::vector<std::string> presets;
    int equilibria = 0;             ///< size of the equilibrium set used for distances
    double T = 0.0, tol_v = 0.0, tol_r = 0.0;
    std::string datum;
};

/// Presets for n_data: mode11, skew, then random-smooth with seeds seed, seed + 1, ...
std::vector<std::pair<std::string, std::uint64_t>> kmin_presets(int n_data, std::uint64_t seed);

/// Empirical minimal damping: validate k_hi over n_data presets, accept k_lo
/// outright if it already converges, else 8 bisection steps on
/// "every datum converged by T".
KminReport find_kmin(const ExperimentConfig& base, double k_lo, double k_hi, int n_data);

/// Equilibria of the model, Newton from zero, +/- scaled buckling modes and
/// the given extra seeds; deduplicated.
std::vector<Field> equilibrium_set(const ModelParams& params, const PlateGrid& grid,
                                   const std::vector<Field>& extra_seeds,
                                   const NewtonOptions& opt = {});

struct VerifyRow {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string detail;
};

/// Conservation, decomposition exactness, quadrature oracles and the trace
/// identity at sizes derived from the config grid.
std::vector<VerifyRow> verify_suite(const ExperimentConfig& cfg);

/// Runs the configured experiment and writes its artifacts under cfg.output.
/// Returns 0 for converged or completed, 1 for diverged or failed checks.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace flutterlab
