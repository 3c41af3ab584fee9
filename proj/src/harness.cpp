#include "flutterlab/harness.hpp"

#include "flutterlab/operators.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace flutterlab {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
    static const std::vector<std::pair<Experiment, std::string>> names = {
        {Experiment::simulate, "simulate"},
        {Experiment::decompose, "decompose"},
        {Experiment::stationary, "stationary"},
        {Experiment::continuation, "continuation"},
        {Experiment::sweep_damping, "sweep-damping"},
        {Experiment::verify, "verify"},
        {Experiment::reconstruct, "reconstruct"},
        {Experiment::hadamard, "hadamard"},
    };
    return names;
}

}  // namespace

Experiment parse_experiment(const std::string& name) {
    for (const auto& [e, n] : experiment_names())
        if (n == name) return e;
    throw Error("unknown experiment '" + name + "'");
}

std::string to_string(Experiment e) {
    for (const auto& [x, n] : experiment_names())
        if (x == e) return n;
    return "?";
}

// ---------------------------------------------------------------------------
// Config

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

double to_double(const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
        throw Error("expected a number, got '" + s + "'");
    return v;
}

template <typename I>
I to_integer(const std::string& s) {
    I v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw Error("expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error("expected true or false, got '" + s + "'");
}

struct Key {
    std::string name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define FL_DOUBLE(field) \
    Key{#field, [](const ExperimentConfig& c) { return fmt(c.field); }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_double(v); }}
#define FL_INT(field) \
    Key{#field, [](const ExperimentConfig& c) { return std::to_string(c.field); }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_integer<int>(v); }}
#define FL_BOOL(field) \
    Key{#field, [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = to_bool(v); }}
#define FL_STRING(field) \
    Key{#field, [](const ExperimentConfig& c) { return c.field; }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = v; }}

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        Key{"experiment", [](const ExperimentConfig& c) { return to_string(c.experiment); },
            [](ExperimentConfig& c, const std::string& v) { c.experiment = parse_experiment(v); }},
        FL_STRING(output),
        Key{"seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
            [](ExperimentConfig& c, const std::string& v) {
                c.seed = to_integer<std::uint64_t>(v);
            }},
        FL_DOUBLE(L1), FL_DOUBLE(L2), FL_INT(n1), FL_INT(n2),
        FL_DOUBLE(U), FL_DOUBLE(k), FL_DOUBLE(beta), FL_DOUBLE(b), FL_DOUBLE(p0),
        FL_STRING(p0_shape), FL_DOUBLE(dt), FL_DOUBLE(T), FL_INT(n_theta), FL_INT(n_s),
        Key{"s_rule", [](const ExperimentConfig& c) { return to_string(c.s_rule); },
            [](ExperimentConfig& c, const std::string& v) { c.s_rule = parse_s_rule(v); }},
        FL_BOOL(flow_coupling),
        FL_STRING(preset), FL_DOUBLE(amplitude), FL_DOUBLE(velocity),
        Key{"datum", [](const ExperimentConfig& c) { return to_string(c.datum); },
            [](ExperimentConfig& c, const std::string& v) { c.datum = parse_delay_datum(v); }},
        FL_INT(sample_every), FL_DOUBLE(tol_v), FL_DOUBLE(tol_r), FL_BOOL(stop_on_converged),
        FL_DOUBLE(beta_z),
        FL_DOUBLE(newton_tol), FL_INT(newton_max_iter),
        Key{"sweep_param", [](const ExperimentConfig& c) { return to_string(c.sweep_param); },
            [](ExperimentConfig& c, const std::string& v) {
                c.sweep_param = parse_sweep_param(v);
            }},
        FL_DOUBLE(sweep_from), FL_DOUBLE(sweep_to), FL_INT(sweep_count),
        FL_DOUBLE(box_a), FL_DOUBLE(box_zmax), FL_INT(box_m), FL_INT(box_mz),
        FL_DOUBLE(k_lo), FL_DOUBLE(k_hi), FL_INT(n_data),
        FL_DOUBLE(delta),
        FL_DOUBLE(time), FL_STRING(points), FL_DOUBLE(ball_rho), FL_INT(ball_n),
    };
    return k;
}

#undef FL_DOUBLE
#undef FL_INT
#undef FL_BOOL
#undef FL_STRING

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const Key* find_key(const std::string& name) {
    for (const Key& k : keys())
        if (k.name == name) return &k;
    return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const Key& k : keys()) out.push_back(k.name);
    return out;
}

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& key, const std::string& msg) {
        throw Error("config: " + key + ": " + msg);
    };
    if (output.empty()) fail("output", "must not be empty");
    if (!(L1 > 0.0)) fail("L1", "must be positive");
    if (!(L2 > 0.0)) fail("L2", "must be positive");
    if (n1 < 8) fail("n1", "must be >= 8");
    if (n2 < 8) fail("n2", "must be >= 8");
    if (!(U >= 0.0 && U < 1.0)) fail("U", "must satisfy 0 <= U < 1");
    if (!(k >= 0.0)) fail("k", "must be >= 0");
    if (!(beta >= 0.0)) fail("beta", "must be >= 0");
    if (!(dt > 0.0)) fail("dt", "must be positive");
    if (!(T >= dt)) fail("T", "must be >= dt");
    if (n_theta < 16 || n_theta % 2) fail("n_theta", "must be even and >= 16");
    if (n_s < 8) fail("n_s", "must be >= 8");
    const auto names = preset_names();
    if (std::find(names.begin(), names.end(), preset) == names.end())
        fail("preset", "unknown preset '" + preset + "'");
    if (p0_shape != "constant" && std::find(names.begin(), names.end(), p0_shape) == names.end())
        fail("p0_shape", "unknown shape '" + p0_shape + "'");
    if (!(amplitude >= 0.0)) fail("amplitude", "must be >= 0");
    if (!(velocity >= 0.0)) fail("velocity", "must be >= 0");
    if (sample_every < 1) fail("sample_every", "must be >= 1");
    if (!(tol_v > 0.0)) fail("tol_v", "must be positive");
    if (!(tol_r > 0.0)) fail("tol_r", "must be positive");
    if (!(beta_z >= 0.0)) fail("beta_z", "must be >= 0");
    if (!(newton_tol > 0.0)) fail("newton_tol", "must be positive");
    if (newton_max_iter < 1) fail("newton_max_iter", "must be >= 1");
    if (sweep_count < 0) fail("sweep_count", "must be >= 0");
    if (experiment == Experiment::continuation && sweep_count < 2)
        fail("sweep_count", "continuation needs at least 2 points");
    if (!(box_a > 0.0)) fail("box_a", "must be positive");
    if (!(box_zmax > 0.0)) fail("box_zmax", "must be positive");
    if (box_m < 3) fail("box_m", "must be >= 3");
    if (box_mz < 2) fail("box_mz", "must be >= 2");
    if (!(k_lo >= 0.0)) fail("k_lo", "must be >= 0");
    if (!(k_lo < k_hi)) fail("k_hi", "must exceed k_lo");
    if (n_data < 1) fail("n_data", "must be >= 1");
    if (!(delta > 0.0)) fail("delta", "must be positive");
    if (!(time >= 0.0)) fail("time", "must be >= 0");
    if (!(ball_rho > 0.0)) fail("ball_rho", "must be positive");
    if (ball_n < 5 || ball_n % 2 == 0) fail("ball_n", "must be odd and >= 5");
}

PlateGrid ExperimentConfig::grid() const { return build_grid(L1, L2, n1, n2); }

ModelParams ExperimentConfig::model(const PlateGrid& g) const {
    ModelParams m;
    m.U = U;
    m.k = k;
    m.beta = beta;
    m.b = b;
    m.dt = dt;
    m.T = T;
    m.quad.n_theta = n_theta;
    m.quad.n_s = n_s;
    m.quad.s_rule = s_rule;
    m.flow_coupling = flow_coupling;
    if (p0 != 0.0)
        m.p0 = p0_shape == "constant" ? Field(Field::Constant(g.size(), p0))
                                      : make_preset(p0_shape, p0, seed, g);
    return m;
}

PlateState ExperimentConfig::initial_state(const PlateGrid& g) const {
    PlateState s = PlateState::zero(g);
    s.u = make_preset(preset, amplitude, seed, g);
    if (velocity > 0.0) s.v = make_preset(preset, velocity, seed, g);
    return s;
}

ExperimentConfig parse_config_text(const std::string& text, const std::string& source) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto where = [&](const std::string& key) {
            return source + ":" + std::to_string(lineno) + ": " + (key.empty() ? "" : "key '" + key + "': ");
        };
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(where("") + "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        const Key* k = find_key(key);
        if (!k) throw Error(where("") + "unknown key '" + key + "'");
        if (!seen.insert(key).second) throw Error(where(key) + "repeated");
        try {
            k->set(cfg, value);
        } catch (const Error& e) {
            throw Error(where(key) + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open config '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    for (const Key& k : keys()) os << k.name << " = " << k.get(cfg) << '\n';
    return os.str();
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw Error("override '" + assignment + "': expected key=value");
    const std::string key = trim(assignment.substr(0, eq));
    const Key* k = find_key(key);
    if (!k) throw Error("override: unknown key '" + key + "'");
    try {
        k->set(cfg, trim(assignment.substr(eq + 1)));
    } catch (const Error& e) {
        throw Error("override: key '" + key + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names() { return {"mode11", "skew", "random-smooth"}; }

Field make_preset(const std::string& name, double amplitude, std::uint64_t seed,
                  const PlateGrid& g) {
    const double L1 = g.L1, L2 = g.L2, pi = std::numbers::pi;
    Field f;
    if (name == "mode11") {
        f = sample(g, [&](double x, double y) {
            return x * x * (L1 - x) * (L1 - x) * y * y * (L2 - y) * (L2 - y);
        });
    } else if (name == "skew") {
        f = sample(g, [&](double x, double y) {
            return x * x * x * (L1 - x) * (L1 - x) * y * y * (L2 - y) * (L2 - y) * (1.0 + y / L2);
        });
    } else if (name == "random-smooth") {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> coin(-1.0, 1.0);
        double c[4][4];
        for (int m = 0; m < 4; ++m)
            for (int n = 0; n < 4; ++n) c[m][n] = coin(rng) / ((m + 1) * (m + 1) + (n + 1) * (n + 1));
        f = sample(g, [&](double x, double y) {
            double s = 0.0;
            for (int m = 0; m < 4; ++m)
                for (int n = 0; n < 4; ++n)
                    s += c[m][n] * std::sin((m + 1) * pi * x / L1) * std::sin((n + 1) * pi * y / L2);
            return s * std::sin(pi * x / L1) * std::sin(pi * y / L2);
        });
    } else {
        throw Error("unknown preset '" + name + "'");
    }
    const double mx = f.lpNorm<Eigen::Infinity>();
    if (mx == 0.0) return g.zeros();
    return f * (amplitude / mx);
}

int worker_count() {
    const char* s = std::getenv("FLUTTERLAB_WORKERS");
    if (!s || !*s) return 1;
    try {
        const int n = to_integer<int>(s);
        if (n < 1) throw Error("");
        return n;
    } catch (const Error&) {
        throw Error(std::string("FLUTTERLAB_WORKERS must be a positive integer (got '") + s + "')");
    }
}

// ---------------------------------------------------------------------------
// k_min search

std::vector<std::pair<std::string, std::uint64_t>> kmin_presets(int n_data, std::uint64_t seed) {
    std::vector<std::pair<std::string, std::uint64_t>> out;
    const auto names = preset_names();
    for (int i = 0; i < n_data; ++i) {
        if (i < 2)
            out.push_back({names[i], seed});
        else
            out.push_back({"random-smooth", seed + static_cast<std::uint64_t>(i - 2)});
    }
    return out;
}

std::vector<Field> equilibrium_set(const ModelParams& params, const PlateGrid& grid,
                                   const std::vector<Field>& extra_seeds, const NewtonOptions& opt) {
    const StationaryProblem prob(grid, params);
    std::vector<Field> seeds = {grid.zeros()};
    const BucklingMode bm = buckling_mode(grid);
    const double g2 = grad_norm_sq(bm.phi, grid);
    std::vector<double> scales = {1.0};
    if (params.b > bm.lambda) scales.push_back(std::sqrt((params.b - bm.lambda) / g2));
    for (double a : scales) {
        seeds.push_back(a * bm.phi);
        seeds.push_back(-a * bm.phi);
    }
    for (const Field& f : extra_seeds) seeds.push_back(f);
    std::vector<Equilibrium> sols;
    for (const Field& s : seeds) {
        const StationaryResult r = prob.solve(s, opt);
        if (r.converged) sols.push_back({r.u, r.residual_norm, r.iterations, ""});
    }
    std::vector<Field> out;
    for (const Equilibrium& e : deduplicate(std::move(sols))) out.push_back(e.u);
    return out;
}

namespace {

// Runs f(0..n-1) on up to `workers` threads; f must only touch its own slot.
void parallel_for(int n, int workers, const std::function<void(int)>& f) {
    workers = std::max(1, std::min(workers, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) f(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace

KminReport find_kmin(const ExperimentConfig& base, double k_lo, double k_hi, int n_data) {
    if (!(k_lo >= 0.0 && k_lo < k_hi)) throw Error("find_kmin: need 0 <= k_lo < k_hi");
    if (n_data < 1) throw Error("find_kmin: n_data must be >= 1");
    const PlateGrid grid = base.grid();
    const auto presets = kmin_presets(n_data, base.seed);
    const int workers = worker_count();

    KminReport rep;
    rep.T = base.T;
    rep.tol_v = base.tol_v;
    rep.tol_r = base.tol_r;
    rep.datum = to_string(base.datum);
    for (const auto& p : presets) rep.presets.push_back(p.first);

    NewtonOptions nopt;
    nopt.tol = base.newton_tol;
    nopt.max_iter = base.newton_max_iter;
    // Equilibria do not depend on k.
    const ModelParams eq_params = base.model(grid);
    std::vector<Field> eqset = equilibrium_set(eq_params, grid, {}, nopt);

    auto eval = [&](double k) {
        KminRow row;
        row.k = k;
        row.runs.resize(presets.size());
        std::vector<PlateState> finals(presets.size());
        parallel_for(static_cast<int>(presets.size()), workers, [&](int i) {
            ExperimentConfig c = base;
            c.k = k;
            c.preset = presets[i].first;
            c.seed = presets[i].second;
            KminRun& run = row.runs[i];
            run.preset = presets[i].first;
            try {
                SimulationOptions o;
                o.sample_every = c.sample_every;
                o.tol_v = c.tol_v;
                o.tol_r = c.tol_r;
                const SimulationResult r =
                    simulate(c.initial_state(grid), c.datum, c.model(grid), grid, o);
                run.verdict = r.verdict;
                run.t_final = r.final_state.t;
                run.ut_final = norm_l2(grid, r.final_state.v);
                run.residual_final = r.traj.samples.back().residual;
                finals[i] = r.final_state;
            } catch (const Error&) {
                run.verdict = "failed";
            }
        });
        // Distances, serialized: a converged state not yet near the set seeds a
        // Newton solve that may add an equilibrium.
        row.all_converged = true;
        for (std::size_t i = 0; i < presets.size(); ++i) {
            KminRun& run = row.runs[i];
            if (run.verdict != "converged") {
                row.all_converged = false;
                continue;
            }
            DistanceReport d = distance_to_equilibria(finals[i], eqset, grid);
            if (d.index < 0 || d.distance > 1e-5) {
                const StationaryResult r = StationaryProblem(grid, eq_params).solve(finals[i].u, nopt);
                if (r.converged) {
                    std::vector<Equilibrium> all;
                    for (const Field& f : eqset) all.push_back({f, 0.0, 0, ""});
                    all.push_back({r.u, r.residual_norm, r.iterations, ""});
                    eqset.clear();
                    for (const Equilibrium& e : deduplicate(std::move(all))) eqset.push_back(e.u);
                    d = distance_to_equilibria(finals[i], eqset, grid);
                }
            }
            run.distance = d.distance;
        }
        rep.rows.push_back(row);
        return row.all_converged;
    };

    rep.valid = eval(k_hi);
    rep.k_lo = k_lo;
    rep.k_hi = k_hi;
    if (rep.valid) {
        if (eval(k_lo)) {
            rep.k_hi = k_lo;
        } else {
            double lo = k_lo, hi = k_hi;
            for (int it = 0; it < 8; ++it) {
                const double mid = 0.5 * (lo + hi);
                (eval(mid) ? hi : lo) = mid;
            }
            rep.k_lo = lo;
            rep.k_hi = hi;
        }
        rep.k_min = rep.k_hi;
    }
    std::vector<std::pair<double, bool>> seen;
    for (const KminRow& r : rep.rows) seen.push_back({r.k, r.all_converged});
    std::sort(seen.begin(), seen.end());
    for (std::size_t i = 1; i < seen.size(); ++i)
        if (seen[i - 1].second && !seen[i].second) rep.monotone = false;
    rep.equilibria = static_cast<int>(eqset.size());
    return rep;
}

// ---------------------------------------------------------------------------
// Verify suite

namespace {

// Smooth synthetic history u(t) = a(t) f + b(t) g with exact velocities.
DelayHistory synthetic_history(const PlateGrid& grid, double tstar, double dt, double t_end) {
    const Field f = make_preset("mode11", 1.0, 1, grid), g = make_preset("skew", 1.0, 1, grid);
    DelayHistory h(tstar, dt);
    h.set_retention(tstar + 6.0 * dt);
    const int n = static_cast<int>(std::ceil((tstar + 4.0 * dt) / dt));
    for (int m = n; m >= 0; --m) {
        const double t = t_end - m * dt;
        PlateState s;
        s.t = t;
        s.u = (1.0 + 0.5 * std::sin(2.0 * t)) * f + 0.3 * std::cos(3.0 * t) * g;
        s.v = std::cos(2.0 * t) * f - 0.9 * std::sin(3.0 * t) * g;
        h.push(s);
    }
    return h;
}

// dt that puts a whole number of steps in T, no larger than dt_max.
double aligned_dt(double T, double dt_max) { return T / std::ceil(T / dt_max - 1e-9); }

}  // namespace

std::vector<VerifyRow> verify_suite(const ExperimentConfig& cfg) {
    std::vector<VerifyRow> rows;
    const PlateGrid grid = build_grid(cfg.L1, cfg.L2, 15, 15);
    const QuadratureSpec quad{cfg.n_theta, cfg.n_s, cfg.s_rule};

    {  // energy conservation of the uncoupled undamped plate
        ModelParams p;
        p.flow_coupling = false;
        p.dt = 1e-3;
        p.T = 1.0;
        SimulationOptions o;
        o.sample_every = 50;
        o.stop_on_converged = false;
        PlateState s0 = PlateState::zero(grid);
        s0.u = make_preset("mode11", 1.0, cfg.seed, grid);
        const SimulationResult r = simulate(s0, DelayDatum::frozen, p, grid, o);
        const double E0 = r.traj.samples.front().E_pl;
        double drift = 0.0;
        for (const auto& smp : r.traj.samples) drift = std::max(drift, std::abs(smp.E_pl - E0) / E0);
        rows.push_back({"energy_conservation", drift, 1e-4, drift <= 1e-4, "max |E(t) - E(0)| / E(0), T = 1"});
    }
    {  // frozen-history q against a 4x refined quadrature
        const double U = 0.5;
        const Field u = make_preset("mode11", 1.0, cfg.seed, grid);
        const DelayOperator op(grid, U, quad);
        const DelayOperator fine(grid, U, {4 * quad.n_theta, 4 * quad.n_s, quad.s_rule});
        const double ts = op.tstar(), dt = 0.01;
        const DelayHistory h = DelayHistory::frozen(u, 3.0, ts, dt);
        const Field a = op.eval_q(h, 3.0), b = fine.eval_q(h, 3.0);
        const double rel = norm_l2(grid, a - b) / norm_l2(grid, b);
        rows.push_back({"q_refinement", rel, 1e-3, rel <= 1e-3, "frozen history, U = 0.5"});
    }
    {  // q_t against centered differences of q, three halvings
        const double U = 0.5, t = 3.0;
        const QuadratureSpec seg{quad.n_theta, quad.n_s, SRule::segment};
        const DelayOperator op(grid, U, seg);
        std::vector<double> err;
        for (double dt : {0.04, 0.02, 0.01, 0.005}) {
            const DelayHistory h = synthetic_history(grid, op.tstar(), dt, t + dt);
            const Field cd = (op.eval_q(h, t + dt) - op.eval_q(h, t - dt)) / (2.0 * dt);
            err.push_back(norm_l2(grid, op.eval_q_dt(h, t) - cd));
        }
        double order = 1e300;
        for (std::size_t i = 1; i < err.size(); ++i)
            order = std::min(order, std::log2(err[i - 1] / err[i]));
        rows.push_back({"q_dt_order", order, 1.8, order >= 1.8, "min observed order over 3 halvings"});
    }
    {  // u = z + w
        ModelParams p;
        p.U = 0.3;
        p.k = 1.0;
        p.T = 2.0;
        p.quad = quad;
        PlateState s0 = PlateState::zero(grid);
        s0.u = make_preset("skew", 1.0, cfg.seed, grid);
        const DecomposedRecord r = simulate_decomposed(s0, DelayDatum::frozen, p, 50.0, grid, 10);
        double err = 0.0, un = 0.0;
        for (const auto& smp : r.samples) {
            err = std::max(err, smp.recon_error);
            un = std::max(un, smp.u_norm);
        }
        const double rel = err / un;
        rows.push_back({"decomposition_exactness", rel, 1e-10, rel <= 1e-10, "max ||u - z - w|| / max ||u||, T = 2"});
    }
    {  // trace identity at t = 2 t*
        ModelParams p;
        p.U = 0.5;
        p.k = 2.0;
        p.quad = quad;
        const double ts = compute_tstar(grid, p.U);
        p.T = 2.0 * ts;
        p.dt = aligned_dt(p.T, 0.01);
        PlateState s0 = PlateState::zero(grid);
        s0.u = make_preset("mode11", 1.0, cfg.seed, grid);
        SimulationOptions o;
        o.stop_on_converged = false;
        const SimulationResult r = simulate(s0, DelayDatum::frozen, p, grid, o);
        const TraceCheck tc = trace_identity_check(*r.history, r.final_state.t, p.U, quad, grid);
        rows.push_back({"trace_identity", tc.relative, 5e-2, tc.relative <= 5e-2, "relative residual at t = 2 t*, U = 0.5"});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

json config_json(const ExperimentConfig& cfg) {
    json j = json::object();
    for (const Key& k : keys()) j[k.name] = k.get(cfg);
    return j;
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    os << std::setw(2) << doc << '\n';
}

void write_snapshot(const fs::path& path, const ExperimentConfig& cfg, const PlateGrid& g,
                    const Field& f, double t) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write '" + path.string() + "'");
    std::istringstream lines(serialize_config(cfg));
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    write_field(os, g, f, t);
}

json trajectory_summary(const TrajectoryRecord& traj) {
    const TrajectorySample& last = traj.samples.back();
    json j = {{"t_final", last.t},        {"ut_norm", last.ut_norm}, {"du_norm", last.du_norm},
              {"u_norm", last.u_norm},    {"E_pl", last.E_pl},       {"E_star", last.E_star},
              {"q_norm", last.q_norm},    {"residual", last.residual}};
    if (traj.samples.size() >= 2) {
        const DissipationReport d = dissipation_integral(traj);
        j["dissipation_integral"] = d.integral;
        j["dissipation_tail_fraction"] = d.tail_fraction;
    }
    return j;
}

SimulationOptions sim_options(const ExperimentConfig& cfg) {
    SimulationOptions o;
    o.sample_every = cfg.sample_every;
    o.tol_v = cfg.tol_v;
    o.tol_r = cfg.tol_r;
    o.stop_on_converged = cfg.stop_on_converged;
    return o;
}

NewtonOptions newton_options(const ExperimentConfig& cfg) {
    NewtonOptions o;
    o.tol = cfg.newton_tol;
    o.max_iter = cfg.newton_max_iter;
    return o;
}

FlowBox flow_box(const ExperimentConfig& cfg) {
    FlowBox b;
    b.a = cfg.box_a;
    b.zmax = cfg.box_zmax;
    b.m1 = b.m2 = cfg.box_m;
    b.m3 = cfg.box_mz;
    return b;
}

int run_simulate(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    const SimulationResult r =
        simulate(cfg.initial_state(g), cfg.datum, cfg.model(g), g, sim_options(cfg));
    write_trajectory_csv((out / "trajectory.csv").string(), r.traj, serialize_config(cfg));
    write_snapshot(out / "final_u.txt", cfg, g, r.final_state.u, r.final_state.t);
    write_snapshot(out / "final_v.txt", cfg, g, r.final_state.v, r.final_state.t);
    json doc = {{"experiment", "simulate"}, {"verdict", r.verdict}, {"steps", r.steps},
                {"wall_time", r.wall_time}, {"final", trajectory_summary(r.traj)},
                {"config", config_json(cfg)}};
    write_json(out / "summary.json", doc);
    return r.verdict == "diverged" ? 1 : 0;
}

int run_decompose(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    const DecomposedRecord r = simulate_decomposed(cfg.initial_state(g), cfg.datum, cfg.model(g),
                                                   cfg.beta_z, g, cfg.sample_every);
    {
        std::ofstream os(out / "decompose.csv");
        if (!os) throw Error("cannot write decompose.csv");
        std::istringstream lines(serialize_config(cfg));
        for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
        os << "t,z_energy_norm,w_energy_norm,lap_wt,bilap_w,u_norm,recon_error\n"
           << std::setprecision(17);
        for (const auto& s : r.samples)
            os << s.t << ',' << s.z_energy_norm << ',' << s.w_energy_norm << ',' << s.lap_wt << ','
               << s.bilap_w << ',' << s.u_norm << ',' << s.recon_error << '\n';
    }
    double err = 0.0, un = 0.0;
    std::vector<double> ts, lz;
    for (const auto& s : r.samples) {
        err = std::max(err, s.recon_error);
        un = std::max(un, s.u_norm);
        if (s.t >= 0.25 * cfg.T && s.z_energy_norm > 0.0) {
            ts.push_back(s.t);
            lz.push_back(std::log(s.z_energy_norm));
        }
    }
    json doc = {{"experiment", "decompose"}, {"verdict", r.verdict}, {"wall_time", r.wall_time},
                {"max_recon_error", err}, {"max_u_norm", un}, {"config", config_json(cfg)}};
    if (ts.size() >= 2) {
        const LineFit f = fit_line(ts, lz);
        doc["z_decay_fit"] = {{"from", ts.front()}, {"slope", f.slope}, {"r2", f.r2}};
    }
    write_json(out / "summary.json", doc);
    return r.verdict == "diverged" ? 1 : 0;
}

int run_stationary(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    const ModelParams p = cfg.model(g);
    const StationaryResult r = solve_stationary(p, cfg.initial_state(g).u, g, newton_options(cfg));
    write_snapshot(out / "u_hat.txt", cfg, g, r.u, 0.0);
    json doc = {{"experiment", "stationary"}, {"status", r.status},
                {"iterations", r.iterations}, {"residual", r.residual_norm},
                {"residual_history", r.residual_history}, {"u_norm", norm_l2(g, r.u)},
                {"max_abs_u", r.u.lpNorm<Eigen::Infinity>()}, {"config", config_json(cfg)}};
    if (r.converged) {
        const FlowBox box = flow_box(cfg);
        const StationaryPair pair = make_stationary_pair(r, p.U, box, g);
        write_flow_samples((out / "phi_hat.txt").string(), pair.phi_hat);
        const PotentialD d = potential_D(pair, p, g, box);
        doc["D"] = {{"plate", d.plate}, {"flow_grad", d.flow_grad}, {"flow_dx", d.flow_dx},
                    {"interaction", d.interaction}, {"total", d.total}};
    }
    write_json(out / "summary.json", doc);
    return r.converged ? 0 : 1;
}

int run_continuation(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    const ModelParams p = cfg.model(g);
    SweepSpec sw;
    sw.param = cfg.sweep_param;
    for (int i = 0; i < cfg.sweep_count; ++i)
        sw.values.push_back(cfg.sweep_from +
                            (cfg.sweep_to - cfg.sweep_from) * i / (cfg.sweep_count - 1));
    sw.p0_shape = cfg.p0_shape == "constant" ? Field(Field::Ones(g.size()))
                                             : make_preset(cfg.p0_shape, 1.0, cfg.seed, g);
    const Field u0 = cfg.initial_state(g).u;
    if (u0.lpNorm<Eigen::Infinity>() > 0.0) sw.extra_seeds = {u0, -u0};
    const ContinuationResult r = continuation(p, sw, g, newton_options(cfg));
    write_equilibria_manifest(out.string(), r, p, g);
    json manifest;
    {
        std::ifstream is(out / "equilibria.json");
        is >> manifest;
    }
    manifest["config"] = config_json(cfg);
    write_json(out / "equilibria.json", manifest);
    json pts = json::array();
    bool any_terminated = false;
    for (const auto& pt : r.points) {
        std::vector<std::string> br;
        for (const auto& e : pt.solutions) br.push_back(e.branch);
        pts.push_back({{"value", pt.value}, {"count", pt.solutions.size()}, {"branches", br},
                       {"terminated", pt.terminated}});
        any_terminated = any_terminated || pt.terminated;
    }
    write_json(out / "summary.json", {{"experiment", "continuation"},
                                      {"sweep", to_string(r.param)},
                                      {"points", pts},
                                      {"config", config_json(cfg)}});
    return any_terminated ? 1 : 0;
}

json kmin_json(const KminReport& rep) {
    json rows = json::array();
    for (const auto& row : rep.rows) {
        json runs = json::array();
        for (const auto& r : row.runs)
            runs.push_back({{"preset", r.preset}, {"verdict", r.verdict}, {"t_final", r.t_final},
                            {"ut_final", r.ut_final}, {"residual_final", r.residual_final},
                            {"distance", r.distance}});
        rows.push_back({{"k", row.k}, {"all_converged", row.all_converged}, {"runs", runs}});
    }
    return {{"valid", rep.valid},       {"k_lo", rep.k_lo},       {"k_hi", rep.k_hi},
            {"k_min", rep.k_min},       {"monotone", rep.monotone}, {"presets", rep.presets},
            {"equilibria", rep.equilibria}, {"T", rep.T},         {"tol_v", rep.tol_v},
            {"tol_r", rep.tol_r},       {"datum", rep.datum},     {"rows", rows}};
}

int run_sweep_damping(const ExperimentConfig& cfg, const fs::path& out) {
    const KminReport rep = find_kmin(cfg, cfg.k_lo, cfg.k_hi, cfg.n_data);
    json doc = kmin_json(rep);
    doc["experiment"] = "sweep-damping";
    doc["config"] = config_json(cfg);
    write_json(out / "kmin.json", doc);
    std::ofstream os(out / "kmin.csv");
    std::istringstream lines(serialize_config(cfg));
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << "k,preset,verdict,t_final,ut_final,residual_final,distance\n" << std::setprecision(17);
    for (const auto& row : rep.rows)
        for (const auto& r : row.runs)
            os << row.k << ',' << r.preset << ',' << r.verdict << ',' << r.t_final << ','
               << r.ut_final << ',' << r.residual_final << ',' << r.distance << '\n';
    return rep.valid ? 0 : 1;
}

int run_verify(const ExperimentConfig& cfg, const fs::path& out) {
    const auto rows = verify_suite(cfg);
    json list = json::array();
    std::ofstream os(out / "verify.txt");
    std::istringstream lines(serialize_config(cfg));
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << std::setprecision(17);
    bool all = true;
    for (const auto& r : rows) {
        os << (r.pass ? "PASS " : "FAIL ") << r.name << " value=" << r.value
           << " threshold=" << r.threshold << "  (" << r.detail << ")\n";
        list.push_back({{"name", r.name}, {"value", r.value}, {"threshold", r.threshold},
                        {"pass", r.pass}, {"detail", r.detail}});
        all = all && r.pass;
    }
    write_json(out / "verify.json",
               {{"experiment", "verify"}, {"checks", list}, {"config", config_json(cfg)}});
    return all ? 0 : 1;
}

int run_reconstruct(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    ModelParams p = cfg.model(g);
    const FlowReconstructor rec(g, p.U, p.quad);
    const double t_eval = cfg.time > 0.0 ? cfg.time : cfg.T;
    if (!(t_eval > rec.tstar()))
        throw Error("reconstruct: time must exceed t* = " + fmt(rec.tstar()));
    const bool ball = cfg.points.empty();
    const LocalEnergyBall lb{cfg.ball_rho, cfg.ball_n};
    std::vector<Point3> pts;
    if (ball) {
        lb.validate();
        for (int k = 0; k < lb.nz(); ++k)
            for (int j = 0; j < lb.n; ++j)
                for (int i = 0; i < lb.n; ++i) pts.push_back(lb.point(i, j, k));
    } else {
        pts = read_points(cfg.points);
    }
    double horizon = rec.tstar();
    for (const Point3& q : pts) horizon = std::max(horizon, rec.exit_time(q));

    p.T = t_eval;
    SimulationOptions o = sim_options(cfg);
    o.stop_on_converged = false;
    o.history_horizon = horizon + 2.0 * p.dt;
    const SimulationResult r = simulate(cfg.initial_state(g), cfg.datum, p, g, o);
    if (r.verdict == "diverged") throw Error("reconstruct: simulation diverged");
    const double t = r.final_state.t;
    const FlowSampleSet s = sample_flow(rec, *r.history, t, pts);
    write_flow_dump((out / "flow.txt").string(), s, p.U, p.quad, serialize_config(cfg));

    std::vector<Point3> plate;
    for (int j = 0; j < g.n2; ++j)
        for (int i = 0; i < g.n1; ++i) plate.push_back({g.x(i), g.y(j), 0.0});
    const FlowSampleSet tr = sample_flow(rec, *r.history, t, plate);
    Field trace = Eigen::Map<const Field>(tr.values.data(), tr.values.size());
    const TraceCheck tc = trace_identity_check(*r.history, t, p.U, p.quad, g);
    json doc = {{"experiment", "reconstruct"},
                {"t", t},
                {"tstar", rec.tstar()},
                {"history_horizon", horizon},
                {"points", pts.size()},
                {"interaction_energy", interaction_energy(r.final_state.u, trace, p.U, g)},
                {"trace_identity_relative", tc.relative},
                {"config", config_json(cfg)}};
    if (ball) doc["local_flow_energy"] = local_flow_energy(s, lb);
    write_json(out / "summary.json", doc);
    return 0;
}

int run_hadamard(const ExperimentConfig& cfg, const fs::path& out) {
    const PlateGrid g = cfg.grid();
    const Field dir = make_preset("random-smooth", 1.0, cfg.seed + 1, g);
    const HadamardReport r = hadamard_probe(cfg.initial_state(g), dir, cfg.delta, cfg.model(g),
                                            cfg.datum, g, cfg.sample_every);
    std::ofstream os(out / "hadamard.csv");
    std::istringstream lines(serialize_config(cfg));
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << "t";
    for (const auto& row : r.rows) os << ",ratio_" << fmt(row.delta);
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < r.times.size(); ++i) {
        os << r.times[i];
        for (const auto& row : r.rows) os << ',' << row.ratio[i];
        os << '\n';
    }
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"delta", row.delta}, {"growth_rate", row.growth_rate},
                        {"ratio_T", row.ratio.empty() ? 0.0 : row.ratio.back()}});
    write_json(out / "summary.json", {{"experiment", "hadamard"},
                                      {"spread", r.spread},
                                      {"rows", rows},
                                      {"config", config_json(cfg)}});
    return 0;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const fs::path out(cfg.output);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out))
        throw Error("output directory '" + cfg.output + "' cannot be created");
    {
        const fs::path probe = out / ".write_test";
        std::ofstream os(probe);
        if (!os) throw Error("output directory '" + cfg.output + "' is not writable");
        os.close();
        fs::remove(probe, ec);
    }
    {
        std::ofstream os(out / "config.txt");
        os << serialize_config(cfg);
    }
    switch (cfg.experiment) {
    case Experiment::simulate: return run_simulate(cfg, out);
    case Experiment::decompose: return run_decompose(cfg, out);
    case Experiment::stationary: return run_stationary(cfg, out);
    case Experiment::continuation: return run_continuation(cfg, out);
    case Experiment::sweep_damping: return run_sweep_damping(cfg, out);
    case Experiment::verify: return run_verify(cfg, out);
    case Experiment::reconstruct: return run_reconstruct(cfg, out);
    case Experiment::hadamard: return run_hadamard(cfg, out);
    }
    return 1;
}

}  // namespace flutterlab
