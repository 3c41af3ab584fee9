#include "flutterlab/dynamics.hpp"

#include "flutterlab/operators.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace flutterlab {

void ModelParams::validate(const PlateGrid& grid) const {
    std::ostringstream os;
    if (!(U >= 0.0 && U < 1.0)) os << "U must satisfy 0 <= U < 1 (got " << U << ")";
    else if (!(k >= 0.0)) os << "damping k must be >= 0 (got " << k << ")";
    else if (!(beta >= 0.0)) os << "beta must be >= 0 (got " << beta << ")";
    else if (!(dt > 0.0)) os << "dt must be positive (got " << dt << ")";
    else if (!(T >= dt)) os << "T must be >= dt (got T = " << T << ", dt = " << dt << ")";
    else if (p0.size() != 0 && p0.size() != grid.size())
        os << "p0 has " << p0.size() << " values, grid expects " << grid.size();
    if (!os.str().empty()) throw Error("model parameters: " + os.str());
    quad.validate();
}

Field ModelParams::pressure(const PlateGrid& grid) const {
    return p0.size() == 0 ? grid.zeros() : p0;
}

LinearTheta::LinearTheta(const Eigen::SparseMatrix<double>& A, double c, double dt)
    : A_(A), c_(c), dt_(dt), theta_(1.0 / (1.0 + std::exp(-0.5 * c * dt))) {
    Eigen::SparseMatrix<double> id(A.rows(), A.cols());
    id.setIdentity();
    const double td = theta_ * dt;
    Eigen::SparseMatrix<double> M = (1.0 + td * c) * id + (td * td) * A;
    solver_.compute(M);
    if (solver_.info() != Eigen::Success) throw Error("theta-scheme factorization failed");
}

Field LinearTheta::base(const Field& u0, const Field& v0) const {
    const Field w = u0 + (theta_ * (1.0 - theta_) * dt_) * v0;
    return (1.0 - (1.0 - theta_) * dt_ * c_) * v0 - dt_ * (A_ * w);
}

PlateState LinearTheta::advance(const PlateState& s, const Field& base, const Field& nbar) const {
    PlateState out;
    out.v = solver_.solve(base + dt_ * nbar);
    if (solver_.info() != Eigen::Success) throw Error("theta-scheme solve failed");
    out.u = s.u + dt_ * ((1.0 - theta_) * s.v + theta_ * out.v);
    out.t = s.t + dt_;
    return out;
}

namespace {

Eigen::SparseMatrix<double> stiffness(const PlateGrid& g, double beta) {
    Eigen::SparseMatrix<double> A = assemble_operator(OperatorKind::bilaplacian, g);
    if (beta != 0.0) {
        Eigen::SparseMatrix<double> id(g.size(), g.size());
        id.setIdentity();
        A += beta * id;
    }
    return A;
}

double damping(const ModelParams& p) { return p.k + (p.flow_coupling ? 1.0 : 0.0); }

}  // namespace

Stepper::Stepper(const PlateGrid& grid, const ModelParams& params)
    : grid_(grid),
      params_(params),
      p0_(params.pressure(grid)),
      op_(grid, params.U, params.quad),
      lap_(assemble_operator(OperatorKind::laplacian, grid)),
      dx_(assemble_operator(OperatorKind::dx, grid)),
      cn_(stiffness(grid, params.beta), damping(params), params.dt) {
    params_.validate(grid);
    warn_if_negative_load(params.b);
}

Field Stepper::forcing(const Field& u, const Field& q) const {
    const Field lu = lap_ * u;
    const double coef = params_.b + u.dot(lu) * grid_.cell();  // b - ||grad u||^2
    Field n = p0_ - coef * lu;
    if (params_.flow_coupling) n -= params_.U * (dx_ * u) + q;
    return n;
}

Field Stepper::residual(const Field& u, const Field& q) const {
    return cn_.A() * u - forcing(u, q);
}

Field Stepper::current_q(const DelayHistory& hist) {
    if (!params_.flow_coupling) return grid_.zeros();
    const double t = hist.back_time();
    if (q_cache_ && std::abs(q_cache_->first - t) <= 1e-9 * params_.dt) return q_cache_->second;
    Field q = op_.eval_q(hist, t);
    q_cache_ = std::make_pair(t, q);
    return q;
}

PlateState Stepper::step(const PlateState& s, DelayHistory& hist) {
    const double dt = params_.dt;
    if (std::abs(hist.back_time() - s.t) > 1e-9 * dt)
        throw Error("step: history does not end at the current state");
    if (std::abs(hist.dt() - dt) > 1e-12 * dt) throw Error("step: history spacing differs from dt");
    const double t1 = s.t + dt;
    const bool coupled = params_.flow_coupling;
    const Field q0 = coupled ? current_q(hist) : grid_.zeros();
    const Field n0 = forcing(s.u, q0);
    const Field base = cn_.base(s.u, s.v);

    PlateState pred = cn_.advance(s, base, n0);
    pred.t = t1;
    hist.push(pred);
    Field q_old = grid_.zeros(), q1 = grid_.zeros();
    if (coupled) {
        q_old = op_.eval_q(hist, t1, DelayOperator::Part::older);
        q1 = q_old + op_.eval_q(hist, t1, DelayOperator::Part::newest);
    }
    // Berger term as the discrete gradient of its potential between u0 and
    // the predicted u1: with c = 0 this conserves energy up to the predictor error.
    const Field lsum = lap_ * (s.u + pred.u);
    const double g0 = -s.u.dot(lap_ * s.u) * grid_.cell();
    const double g1 = -pred.u.dot(lap_ * pred.u) * grid_.cell();
    Field nbar = p0_ - (0.5 * (params_.b - 0.5 * (g0 + g1))) * lsum;
    if (coupled)
        nbar -= 0.5 * (params_.U * (dx_ * (s.u + pred.u)) + q0 + q1);

    PlateState next = cn_.advance(s, base, nbar);
    next.t = t1;
    hist.pop_back();
    hist.push(next);
    if (coupled) q_cache_ = std::make_pair(t1, q_old + op_.eval_q(hist, t1, DelayOperator::Part::newest));
    if (!next.u.allFinite() || !next.v.allFinite()) {
        std::ostringstream os;
        os << "step: non-finite state at t = " << t1;
        throw Error(os.str());
    }
    return next;
}

PlateState step(const PlateState& state, DelayHistory& hist, const ModelParams& params,
                const PlateGrid& grid) {
    Stepper st(grid, params);
    return st.step(state, hist);
}

DelayDatum parse_delay_datum(const std::string& name) {
    if (name == "frozen") return DelayDatum::frozen;
    if (name == "zero") return DelayDatum::zero;
    if (name == "ramp") return DelayDatum::ramp;
    throw Error("unknown delay datum '" + name + "' (expected frozen, zero or ramp)");
}

std::string to_string(DelayDatum d) {
    switch (d) {
    case DelayDatum::zero: return "zero";
    case DelayDatum::ramp: return "ramp";
    default: return "frozen";
    }
}

DelayHistory make_delay_datum(DelayDatum kind, const PlateState& initial, double tstar,
                              double dt, double span) {
    DelayHistory h(tstar, dt);
    h.set_retention(span);
    const int count = static_cast<int>(std::ceil(std::max(tstar, span) / dt)) + 1;
    const Field zero = Field::Zero(initial.u.size());
    for (int k = count; k >= 1; --k) {
        const double s = -k * dt;
        Field u;
        switch (kind) {
        case DelayDatum::zero: u = zero; break;
        case DelayDatum::ramp: u = std::max(0.0, 1.0 + s / tstar) * initial.u; break;
        default: u = initial.u;
        }
        h.push({u, zero, initial.t + s});
    }
    h.push(initial);
    return h;
}

void write_trajectory_csv(const std::string& path, const TrajectoryRecord& traj,
                          const std::string& comment) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << "t,ut_norm,du_norm,u_norm,E_pl,E_star,q_norm,diss_cum,dist_eq\n";
    os << std::setprecision(17);
    for (const auto& s : traj.samples) {
        os << s.t << ',' << s.ut_norm << ',' << s.du_norm << ',' << s.u_norm << ',' << s.E_pl
           << ',' << s.E_star << ',' << s.q_norm << ',' << s.diss_cum << ',';
        if (s.dist_eq) os << *s.dist_eq;
        os << '\n';
    }
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

SimulationResult simulate(const PlateState& initial, DelayDatum eta, const ModelParams& params,
                          const PlateGrid& grid, const SimulationOptions& opt) {
    const auto t_start = std::chrono::steady_clock::now();
    params.validate(grid);
    check_shape(grid, initial.u, "simulate(u0)");
    check_shape(grid, initial.v, "simulate(v0)");
    if (opt.sample_every < 1) throw Error("simulate: sample_every must be >= 1");
    Stepper st(grid, params);
    const Field p0 = params.pressure(grid);
    const double tol_r = opt.tol_r * (1.0 + p0.lpNorm<Eigen::Infinity>());
    DelayHistory hist = make_delay_datum(eta, initial, st.delay().tstar(), params.dt,
                                        opt.history_horizon);

    SimulationResult res;
    PlateState s = initial;
    double diss = 0.0;
    double prev_ut2 = s.v.squaredNorm() * grid.cell();
    int streak = 0;

    auto record = [&]() {
        TrajectorySample smp;
        const EnergyReport e = plate_energy(s, params.b, p0, grid);
        const Field q = st.current_q(hist);
        smp.t = s.t;
        smp.ut_norm = norm_l2(grid, s.v);
        smp.du_norm = lap_norm(s.u, grid);
        smp.u_norm = norm_l2(grid, s.u);
        smp.E_pl = e.E_pl;
        smp.E_star = e.E_star;
        smp.q_norm = norm_l2(grid, q);
        smp.diss_cum = diss;
        smp.residual = st.residual(s.u, q).lpNorm<Eigen::Infinity>();
        if (opt.distance) smp.dist_eq = opt.distance(s);
        res.traj.samples.push_back(smp);
        if (!std::isfinite(e.E_star) || e.E_star > opt.energy_limit) return -1;
        streak = (smp.ut_norm < opt.tol_v && smp.residual < tol_r) ? streak + 1 : 0;
        return streak >= opt.converge_samples ? 1 : 0;
    };

    const long long n_steps = std::llround(params.T / params.dt);
    res.verdict = "timeout";
    int status = record();
    long long n = 0;
    while (status == 0 || (status == 1 && !opt.stop_on_converged)) {
        if (n == n_steps) break;
        try {
            s = st.step(s, hist);
        } catch (const Error&) {
            status = -1;
            break;
        }
        ++n;
        const double ut2 = s.v.squaredNorm() * grid.cell();
        diss += 0.5 * params.dt * (prev_ut2 + ut2);
        prev_ut2 = ut2;
        if (n % opt.sample_every == 0 || n == n_steps) {
            const int r = record();
            if (r == -1) {
                status = -1;
                break;
            }
            status = r;
        }
    }
    if (status == -1)
        res.verdict = "diverged";
    else if (status == 1 || streak >= opt.converge_samples)
        res.verdict = "converged";
    res.final_state = s;
    res.steps = static_cast<int>(n);
    res.history = std::move(hist);
    res.wall_time = seconds_since(t_start);
    return res;
}

DecomposedRecord simulate_decomposed(const PlateState& initial, DelayDatum eta,
                                     const ModelParams& params, double beta_z,
                                     const PlateGrid& grid, int sample_every) {
    const auto t_start = std::chrono::steady_clock::now();
    params.validate(grid);
    check_shape(grid, initial.u, "simulate_decomposed(u0)");
    check_shape(grid, initial.v, "simulate_decomposed(v0)");
    if (!(beta_z >= 0.0)) throw Error("simulate_decomposed: beta_z must be >= 0");
    if (sample_every < 1) throw Error("simulate_decomposed: sample_every must be >= 1");

    const double dt = params.dt, c = damping(params);
    const bool coupled = params.flow_coupling;
    const DelayOperator op(grid, params.U, params.quad);
    const Eigen::SparseMatrix<double> L = assemble_operator(OperatorKind::laplacian, grid);
    const Eigen::SparseMatrix<double> D = assemble_operator(OperatorKind::dx, grid);
    const Eigen::SparseMatrix<double> B = assemble_operator(OperatorKind::bilaplacian, grid);
    const LinearTheta cn_u(stiffness(grid, params.beta), c, dt);
    const LinearTheta cn_z(stiffness(grid, params.beta + beta_z), c, dt);
    const Field p0 = params.pressure(grid);
    // beta_z z enters w with the weights the z scheme uses for it implicitly.
    const double th1 = cn_z.theta(), th0 = 1.0 - th1;

    DelayHistory hu = make_delay_datum(eta, initial, op.tstar(), dt);
    DelayHistory hz = hu;
    PlateState u = initial, z = initial, w = PlateState::zero(grid, initial.t);

    // coef = b - ||grad u||^2 is shared by all three systems.
    auto part = [&](const Field& x, double coef, const Field& q, bool load) {
        Field n = -coef * (L * x);
        if (load) n += p0;
        if (coupled) n -= params.U * (D * x) + q;
        return n;
    };
    auto coef_of = [&](const Field& x) { return params.b + x.dot(L * x) * grid.cell(); };
    auto q_of = [&](const DelayHistory& h, double t, DelayOperator::Part p) {
        return coupled ? op.eval_q(h, t, p) : grid.zeros();
    };

    DecomposedRecord rec;
    auto record = [&]() {
        DecomposedSample smp;
        smp.t = u.t;
        smp.z_energy_norm = energy_norm(z.u, z.v, grid);
        smp.w_energy_norm = energy_norm(w.u, w.v, grid);
        smp.lap_wt = lap_norm(w.v, grid);
        smp.bilap_w = norm_l2(grid, B * w.u);
        smp.u_norm = norm_l2(grid, u.u);
        smp.recon_error = norm_l2(grid, u.u - z.u - w.u);
        rec.samples.push_back(smp);
        const double e = plate_energy(u, params.b, p0, grid).E_star;
        return std::isfinite(e) && e <= 1e12;
    };

    Field qu = q_of(hu, u.t, DelayOperator::Part::all);
    Field qz = q_of(hz, z.t, DelayOperator::Part::all);
    rec.verdict = "completed";
    record();
    const long long n_steps = std::llround(params.T / dt);
    for (long long n = 1; n <= n_steps; ++n) {
        const double t1 = u.t + dt;
        const double c0 = coef_of(u.u);
        const Field n0u = part(u.u, c0, qu, true);
        const Field n0z = part(z.u, c0, qz, false);
        const Field n0w = part(w.u, c0, qu - qz, true);
        const Field bu = cn_u.base(u.u, u.v), bz = cn_z.base(z.u, z.v), bw = cn_u.base(w.u, w.v);

        PlateState zp = cn_z.advance(z, bz, n0z);
        PlateState wp = cn_u.advance(w, bw, n0w + beta_z * (th0 * z.u + th1 * zp.u));
        PlateState up = cn_u.advance(u, bu, n0u);
        hu.push(up);
        hz.push(zp);
        const Field qu_old = q_of(hu, t1, DelayOperator::Part::older);
        const Field qz_old = q_of(hz, t1, DelayOperator::Part::older);
        const Field qu1 = qu_old + q_of(hu, t1, DelayOperator::Part::newest);
        const Field qz1 = qz_old + q_of(hz, t1, DelayOperator::Part::newest);
        // Corrector as in Stepper::step: Berger coefficient averaged between u
        // and the predicted u, applied to the mean of each system's two states.
        const double cbar = 0.5 * (c0 + coef_of(up.u));
        auto mean = [&](const PlateState& x0, const PlateState& x1, const Field& qa,
                        const Field& qb, bool load) {
            return part(0.5 * (x0.u + x1.u), cbar, 0.5 * (qa + qb), load);
        };
        const Field nu = mean(u, up, qu, qu1, true);
        const Field nz = mean(z, zp, qz, qz1, false);
        const Field nw = mean(w, wp, qu - qz, qu1 - qz1, true);

        PlateState z1 = cn_z.advance(z, bz, nz);
        PlateState w1 = cn_u.advance(w, bw, nw + beta_z * (th0 * z.u + th1 * z1.u));
        PlateState u1 = cn_u.advance(u, bu, nu);
        z1.t = w1.t = u1.t = t1;
        hu.pop_back();
        hz.pop_back();
        hu.push(u1);
        hz.push(z1);
        qu = qu_old + q_of(hu, t1, DelayOperator::Part::newest);
        qz = qz_old + q_of(hz, t1, DelayOperator::Part::newest);
        u = std::move(u1);
        z = std::move(z1);
        w = std::move(w1);
        if (!u.u.allFinite()) {
            rec.verdict = "diverged";
            break;
        }
        if (n % sample_every == 0 || n == n_steps) {
            if (!record()) {
                rec.verdict = "diverged";
                break;
            }
        }
    }
    rec.u = u;
    rec.z = z;
    rec.w = w;
    rec.wall_time = seconds_since(t_start);
    return rec;
}

void LyapunovParams::validate() const {
    if (!(mu > 0.0 && nu > 0.0 && eps > 0.0 && K > 0.0))
        throw Error("Lyapunov weights mu, nu, eps, K must all be positive");
}

double lyapunov_V(const PlateState& z, const DelayHistory& zhist, const LyapunovParams& lp,
                  double k, double beta, const DelayOperator& op) {
    lp.validate();
    const PlateGrid& g = op.grid();
    check_shape(g, z.u, "lyapunov_V");
    const double t = z.t, ts = op.tstar();
    const double ebeta =
        0.5 * (lap_norm_sq(z.u, g) + inner(g, z.v, z.v) + beta * inner(g, z.u, z.u));
    const Field q = op.eval_q(zhist, t);
    auto lap2 = [&](double, const Field& u) { return lap_norm_sq(u, g); };
    // int_0^t* int_{t-s}^t G = int_{t-t*}^t G(tau) (tau - t + t*) dtau
    auto lap2w = [&](double tau, const Field& u) { return lap_norm_sq(u, g) * (tau - t + ts); };
    const double mem = integrate_window(zhist, t - ts, t, lap2) +
                       integrate_window(zhist, t - ts, t, lap2w);
    return ebeta - inner(g, q, z.u) + inner(g, z.v, z.u) + 0.5 * k * inner(g, z.u, z.u) +
           lp.mu * mem;
}

double lyapunov_W(const PlateState& prev, const PlateState& cur, const PlateState& next,
                  const DelayHistory& hist, const LyapunovParams& lp, const ModelParams& params,
                  const PlateGrid& grid) {
    lp.validate();
    const double dt = params.dt;
    if (std::abs(cur.t - prev.t - dt) > 1e-9 * dt || std::abs(next.t - cur.t - dt) > 1e-9 * dt)
        throw Error("lyapunov_W: window must be three consecutive states at spacing dt");
    const Field ub = (next.u - prev.u) / (2.0 * dt);
    const Field ubt = (next.u - 2.0 * cur.u + prev.u) / (dt * dt);
    auto energy = [&](const Field& a, const Field& at) {
        return 0.5 * (lap_norm_sq(a, grid) + inner(grid, at, at));
    };
    const double E = energy(ub, ubt);
    const Field lu = apply_operator(OperatorKind::laplacian, cur.u, grid);
    const double lu_ub = inner(grid, lu, ub);
    const double q1 =
        -0.5 * (grad_norm_sq(cur.u, grid) - params.b) * grad_norm_sq(ub, grid) - lu_ub * lu_ub;
    const double Q = E - q1 + lp.nu * inner(grid, ub, ub);

    // E at past times from centered differences of the stored snapshots.
    const double t = cur.t, ts = compute_tstar(grid, params.U);
    const auto& sn = hist.snapshots();
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 1; j + 1 < sn.size(); ++j) {
        if (sn[j].t < t - ts - 1e-9 * dt || sn[j].t > t - 0.5 * dt) continue;
        pts.emplace_back(sn[j].t, energy((sn[j + 1].u - sn[j - 1].u) / (2.0 * dt),
                                         (sn[j + 1].u - 2.0 * sn[j].u + sn[j - 1].u) / (dt * dt)));
    }
    pts.emplace_back(t, E);
    double mem = 0.0;
    for (std::size_t j = 1; j < pts.size(); ++j) {
        const auto [ta, ea] = pts[j - 1];
        const auto [tb, eb] = pts[j];
        mem += 0.5 * (tb - ta) * (ea * (ta - t + ts) + eb * (tb - t + ts));
    }
    return Q + lp.eps * inner(grid, ubt, ub) + lp.mu * mem;
}

double energy_norm(const Field& u, const Field& v, const PlateGrid& grid) {
    return std::sqrt(lap_norm_sq(u, grid) + inner(grid, v, v));
}

HadamardReport hadamard_probe(const PlateState& base, const Field& direction, double delta,
                              const ModelParams& params, DelayDatum eta, const PlateGrid& grid,
                              int sample_every) {
    if (!(delta >= 0.0)) throw Error("hadamard_probe: delta must be >= 0");
    check_shape(grid, direction, "hadamard_probe(direction)");
    const double dn = energy_norm(direction, grid.zeros(), grid);
    if (!(dn > 0.0)) throw Error("hadamard_probe: perturbation direction is zero");
    const Field e = direction / dn;

    auto run_states = [&](const PlateState& init, std::vector<double>& times) {
        Stepper st(grid, params);
        DelayHistory hist = make_delay_datum(eta, init, st.delay().tstar(), params.dt);
        std::vector<PlateState> out{init};
        times.assign(1, init.t);
        PlateState s = init;
        const long long n_steps = std::llround(params.T / params.dt);
        for (long long n = 1; n <= n_steps; ++n) {
            s = st.step(s, hist);
            if (n % sample_every == 0 || n == n_steps) {
                out.push_back(s);
                times.push_back(s.t);
            }
        }
        return out;
    };

    HadamardReport rep;
    const std::vector<PlateState> ref = run_states(base, rep.times);
    for (double d : {delta, 0.5 * delta, 0.25 * delta}) {
        HadamardRow row;
        row.delta = d;
        if (d == 0.0) {
            row.ratio.assign(ref.size(), 0.0);
        } else {
            PlateState init = base;
            init.u += d * e;
            std::vector<double> times;
            const std::vector<PlateState> pert = run_states(init, times);
            for (std::size_t k = 0; k < ref.size(); ++k)
                row.ratio.push_back(
                    energy_norm(pert[k].u - ref[k].u, pert[k].v - ref[k].v, grid) / d);
            std::vector<double> lx, ly;
            for (std::size_t k = 0; k < ref.size(); ++k)
                if (row.ratio[k] > 0.0) {
                    lx.push_back(rep.times[k]);
                    ly.push_back(std::log(row.ratio[k]));
                }
            if (lx.size() >= 2) row.growth_rate = fit_line(lx, ly).slope;
        }
        rep.rows.push_back(std::move(row));
    }
    const double a = rep.rows[1].ratio.back(), b = rep.rows[2].ratio.back();
    rep.spread = b > 0.0 ? std::abs(a - b) / b : 0.0;
    return rep;
}

DissipationReport dissipation_integral(const TrajectoryRecord& traj) {
    DissipationReport r;
    const auto& s = traj.samples;
    if (s.size() < 2) return r;
    const double t0 = s.front().t, t1 = s.back().t;
    const double tq = t0 + 0.75 * (t1 - t0);
    double tail = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        const double a = s[k - 1].ut_norm * s[k - 1].ut_norm, b = s[k].ut_norm * s[k].ut_norm;
        const double ta = s[k - 1].t, tb = s[k].t;
        r.integral += 0.5 * (tb - ta) * (a + b);
        if (tb <= tq) continue;
        if (ta >= tq) {
            tail += 0.5 * (tb - ta) * (a + b);
        } else {
            const double fa = a + (b - a) * (tq - ta) / (tb - ta);
            tail += 0.5 * (tb - tq) * (fa + b);
        }
    }
    r.tail_fraction = r.integral > 0.0 ? tail / r.integral : 0.0;
    return r;
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error("fit_line: need two or more points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sx += x[i], sy += y[i];
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    LineFit f;
    f.slope = sxx > 0 ? sxy / sxx : 0.0;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return f;
}

}  // namespace flutterlab
