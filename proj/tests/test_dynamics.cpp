#include "flutterlab/dynamics.hpp"
#include "flutterlab/operators.hpp"

#include <doctest.h>

using namespace flutterlab;

namespace {

Field bump(const PlateGrid& g, double amp = 1.0) {
    return sample(g, [amp](double x, double y) {
        return amp * 16 * std::pow(x * (1 - x) * y * (1 - y), 2) * (1 + 0.5 * x);
    });
}

PlateState start(const PlateGrid& g, double amp = 1.0) { return {bump(g, amp), g.zeros(), 0.0}; }

PlateState run(const PlateState& s0, const ModelParams& p, const PlateGrid& g) {
    Stepper st(g, p);
    DelayHistory h = make_delay_datum(DelayDatum::frozen, s0, st.delay().tstar(), p.dt);
    PlateState s = s0;
    const long long n = std::llround(p.T / p.dt);
    for (long long k = 0; k < n; ++k) s = st.step(s, h);
    return s;
}

// L2 state norm; the energy norm is dominated by stiff modes with omega dt >> 1
// that no trapezoid-type step resolves.
double l2(const Field& u, const Field& v, const PlateGrid& g) {
    return std::sqrt(inner(g, u, u) + inner(g, v, v));
}

}  // namespace

TEST_CASE("zero state is a fixed point") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.4;
    p.k = 1.0;
    p.b = 5.0;
    const PlateState z = PlateState::zero(g);
    DelayHistory h = make_delay_datum(DelayDatum::frozen, z, compute_tstar(g, p.U), p.dt);
    const PlateState s = step(z, h, p, g);
    CHECK(s.u.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s.v.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(s.t == doctest::Approx(p.dt));
    CHECK(h.back_time() == doctest::Approx(p.dt));
}

TEST_CASE("theta weight") {
    const PlateGrid g = build_grid(1, 1, 9, 9);
    const auto A = assemble_operator(OperatorKind::bilaplacian, g);
    CHECK(LinearTheta(A, 0.0, 0.01).theta() == 0.5);
    const double th = LinearTheta(A, 3.0, 0.01).theta();
    CHECK(th == doctest::Approx(1.0 / (1.0 + std::exp(-0.015))));
}

TEST_CASE("conservative limit conserves E_pl") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.flow_coupling = false;
    p.dt = 1e-3;
    p.T = 2.0;
    SimulationOptions o;
    o.stop_on_converged = false;
    o.sample_every = 50;
    const SimulationResult r = simulate(start(g), DelayDatum::frozen, p, g, o);
    const double E0 = r.traj.samples.front().E_pl;
    double drift = 0.0;
    for (const auto& s : r.traj.samples) drift = std::max(drift, std::abs(s.E_pl / E0 - 1.0));
    CHECK(drift <= 1e-4);
}

TEST_CASE("time reversibility of the conservative step") {
    // Forward step, flip the velocity, step again: the round-trip defect of a
    // symmetric scheme is O(dt^3).  The explicit Berger predictor breaks exact
    // symmetry, so the constant depends on the amplitude.
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.flow_coupling = false;
    p.b = 5.0;
    PlateState s0 = start(g);
    s0.v = bump(g, 0.3);
    double err[2];
    int k = 0;
    for (double dt : {0.02, 0.01}) {
        p.dt = dt;
        Stepper st(g, p);
        DelayHistory h = make_delay_datum(DelayDatum::frozen, s0, st.delay().tstar(), dt);
        const PlateState s1 = st.step(s0, h);
        PlateState back{s1.u, -s1.v, 0.0};
        DelayHistory hb = make_delay_datum(DelayDatum::frozen, back, st.delay().tstar(), dt);
        PlateState s2 = st.step(back, hb);
        s2.v = -s2.v;
        err[k] = l2(s2.u - s0.u, s2.v - s0.v, g) / l2(s0.u, s0.v, g);
        MESSAGE("dt " << dt << ": relative round-trip defect " << err[k] << " = "
                      << err[k] / (dt * dt * dt) << " dt^3");
        ++k;
    }
    CHECK(err[0] / err[1] >= 7.0);
    // linear part alone (tiny amplitude) is symmetric to roundoff
    p.dt = 0.01;
    p.b = 0.0;
    PlateState lin{1e-6 * s0.u, 1e-6 * s0.v, 0.0};
    Stepper st(g, p);
    DelayHistory h = make_delay_datum(DelayDatum::frozen, lin, st.delay().tstar(), p.dt);
    const PlateState l1 = st.step(lin, h);
    PlateState lb{l1.u, -l1.v, 0.0};
    DelayHistory hb = make_delay_datum(DelayDatum::frozen, lb, st.delay().tstar(), p.dt);
    PlateState l2s = st.step(lb, hb);
    l2s.v = -l2s.v;
    CHECK(l2(l2s.u - lin.u, l2s.v - lin.v, g) <= 10 * 1e-6 * l2(lin.u, lin.v, g));
}

TEST_CASE("second-order self-convergence") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.3;
    p.k = 1.0;
    p.b = 10.0;
    p.T = 0.5;
    const PlateState s0 = start(g, 0.5);
    auto final_u = [&](double dt) {
        ModelParams q = p;
        q.dt = dt;
        return run(s0, q, g).u;
    };
    const double dt = 0.01;
    const Field ref = final_u(dt / 8);
    const double e1 = norm_l2(g, final_u(dt) - ref);
    const double e2 = norm_l2(g, final_u(dt / 2) - ref);
    MESSAGE("error ratio " << e1 / e2);
    CHECK(e1 / e2 >= 3.5);
    CHECK(e1 / e2 <= 4.5);
}

TEST_CASE("simulate") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    SUBCASE("zero data converges at once") {
        ModelParams p;
        p.U = 0.3;
        const SimulationResult r = simulate(PlateState::zero(g), DelayDatum::frozen, p, g);
        CHECK(r.verdict == "converged");
        CHECK(r.final_state.u.lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(r.traj.samples.size() <= 4);
    }
    SUBCASE("k = 5 converges with finite dissipation, k = 0 recorded") {
        ModelParams p;
        p.U = 0.3;
        p.b = 0.0;
        p.T = 40.0;
        p.k = 5.0;
        const SimulationResult a = simulate(start(g), DelayDatum::frozen, p, g);
        CHECK(a.verdict == "converged");
        const DissipationReport da = dissipation_integral(a.traj);
        CHECK(std::isfinite(da.integral));
        CHECK(da.tail_fraction <= 0.05);
        double prev = 0.0;
        for (const auto& s : a.traj.samples) {
            CHECK(s.diss_cum >= prev);
            prev = s.diss_cum;
        }
        p.k = 0.0;
        p.T = 10.0;
        const SimulationResult b = simulate(start(g), DelayDatum::frozen, p, g);
        MESSAGE("k = 0: " << b.verdict << " at t = " << b.final_state.t);
        CHECK(b.verdict != "diverged");
    }
    SUBCASE("diverging data are flagged") {
        ModelParams p;
        p.U = 0.3;
        p.dt = 0.5;  // far outside any sensible step, must not hang or pass silently
        p.T = 5.0;
        SimulationOptions o;
        o.energy_limit = 1e-6;
        const SimulationResult r = simulate(start(g), DelayDatum::frozen, p, g, o);
        CHECK(r.verdict == "diverged");
    }
}

TEST_CASE("delay data") {
    const PlateGrid g = build_grid(1, 1, 9, 9);
    const PlateState s0 = start(g);
    const double ts = 0.5, dt = 0.1;
    CHECK(parse_delay_datum(to_string(DelayDatum::ramp)) == DelayDatum::ramp);
    const DelayHistory f = make_delay_datum(DelayDatum::frozen, s0, ts, dt);
    const DelayHistory z = make_delay_datum(DelayDatum::zero, s0, ts, dt);
    const DelayHistory r = make_delay_datum(DelayDatum::ramp, s0, ts, dt);
    CHECK(f.front_time() <= -ts);
    CHECK(f.mature_at(0.0));
    CHECK((f.u_at(-0.3) - s0.u).norm() == 0.0);
    CHECK(z.u_at(-0.3).norm() == 0.0);
    CHECK((r.u_at(-0.2) - 0.6 * s0.u).norm() <= 1e-14 * s0.u.norm());
    CHECK((r.u_at(0.0) - s0.u).norm() == 0.0);
    const DelayHistory w = make_delay_datum(DelayDatum::frozen, s0, ts, dt, 2.0);
    CHECK(w.front_time() <= -2.0);
}

TEST_CASE("simulate_decomposed") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.5;
    p.k = 1.0;
    p.b = 8.0;
    p.p0 = Field::Constant(g.size(), 3.0);
    p.T = 3.0;
    SUBCASE("zero everything") {
        ModelParams q = p;
        q.p0 = Field();
        const DecomposedRecord r = simulate_decomposed(PlateState::zero(g), DelayDatum::frozen, q, 50.0, g);
        CHECK(r.z.u.lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(r.w.u.lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("exact split") {
        const DecomposedRecord r = simulate_decomposed(start(g), DelayDatum::ramp, p, 50.0, g, 5);
        double err = 0.0, un = 0.0;
        for (const auto& s : r.samples) err = std::max(err, s.recon_error), un = std::max(un, s.u_norm);
        CHECK(err <= 1e-10 * un);
        CHECK((r.u.u - r.z.u - r.w.u).lpNorm<Eigen::Infinity>() <= 1e-10 * un);
        // the u trajectory is the ordinary simulation
        SimulationOptions o;
        o.stop_on_converged = false;
        const SimulationResult s = simulate(start(g), DelayDatum::ramp, p, g, o);
        CHECK((s.final_state.u - r.u.u).lpNorm<Eigen::Infinity>() <= 1e-12 * un);
    }
}

TEST_CASE("lyapunov_V") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const DelayOperator op(g, 0.5, {});
    const LyapunovParams lp;
    SUBCASE("zero") {
        const DelayHistory h = make_delay_datum(DelayDatum::frozen, PlateState::zero(g), op.tstar(), 0.01);
        CHECK(lyapunov_V(PlateState::zero(g), h, lp, 20.0, 50.0, op) == 0.0);
    }
    SUBCASE("quadratic in the z history") {
        PlateState z = start(g);
        z.v = bump(g, 0.2);
        PlateState z2{2.0 * z.u, 2.0 * z.v, 0.0};
        const DelayHistory h = make_delay_datum(DelayDatum::ramp, z, op.tstar(), 0.01);
        const DelayHistory h2 = make_delay_datum(DelayDatum::ramp, z2, op.tstar(), 0.01);
        const double v1 = lyapunov_V(z, h, lp, 2.0, 5.0, op);
        const double v2 = lyapunov_V(z2, h2, lp, 2.0, 5.0, op);
        CHECK(v2 == doctest::Approx(4.0 * v1).epsilon(1e-12));
    }
    SUBCASE("sandwich and decay along a strongly damped run") {
        // z-type system: static damping beta, large k, tiny amplitude so the
        // Berger term is negligible.
        ModelParams p;
        p.U = 0.5;
        p.k = 20.0;
        p.beta = 50.0;
        p.dt = 0.01;
        Stepper st(g, p);
        PlateState s = start(g, 1e-3);
        DelayHistory h = make_delay_datum(DelayDatum::frozen, s, st.delay().tstar(), p.dt);
        double cmin = 1e300, prev = 1e300;
        bool decreasing = true;
        for (int n = 1; n <= 2000; ++n) {
            s = st.step(s, h);
            if (n >= 500 && n % 50 == 0) {
                const double V = lyapunov_V(s, h, lp, p.k, p.beta, st.delay());
                const double Eb = 0.5 * (lap_norm_sq(s.u, g) + inner(g, s.v, s.v) +
                                         p.beta * inner(g, s.u, s.u));
                cmin = std::min(cmin, V / Eb);
                if (V > prev) decreasing = false;
                prev = V;
            }
        }
        MESSAGE("fitted sandwich constant c = " << cmin);
        CHECK(cmin > 0.0);
        CHECK(decreasing);
    }
}

TEST_CASE("lyapunov_W") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.3;
    const LyapunovParams lp;
    const PlateState a{bump(g), g.zeros(), 0.0};
    PlateState b = a, c = a;
    b.t = p.dt;
    c.t = 2 * p.dt;
    DelayHistory h = make_delay_datum(DelayDatum::frozen, a, compute_tstar(g, p.U), p.dt);
    h.push(b);
    h.push(c);
    CHECK(lyapunov_W(a, b, c, h, lp, p, g) == doctest::Approx(0.0));
    c.t = 3 * p.dt;
    CHECK_THROWS_AS(lyapunov_W(a, b, c, h, lp, p, g), Error);
}

TEST_CASE("hadamard_probe") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.3;
    p.k = 1.0;
    p.b = 10.0;
    p.T = 2.0;
    const Field dir = sample(g, [](double x, double y) { return std::pow(std::sin(M_PI * x) * std::sin(2 * M_PI * y), 2); });
    SUBCASE("delta = 0") {
        const HadamardReport r = hadamard_probe(start(g), dir, 0.0, p, DelayDatum::frozen, g);
        for (const auto& row : r.rows)
            for (double v : row.ratio) CHECK(v == 0.0);
    }
    SUBCASE("ratios settle under halving") {
        const HadamardReport r = hadamard_probe(start(g), dir, 1e-3, p, DelayDatum::frozen, g);
        CHECK(r.spread <= 0.1);
        CHECK(r.rows[0].ratio.front() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(std::isfinite(r.rows[2].growth_rate));
    }
    CHECK_THROWS_AS(hadamard_probe(start(g), dir, -1.0, p, DelayDatum::frozen, g), Error);
}

TEST_CASE("dissipation_integral") {
    TrajectoryRecord empty;
    CHECK(dissipation_integral(empty).integral == 0.0);
    TrajectoryRecord zero;
    for (int k = 0; k < 5; ++k) zero.samples.push_back({.t = 0.1 * k});
    CHECK(dissipation_integral(zero).integral == 0.0);
    // constant ||u_t||: integral t, tail a quarter
    TrajectoryRecord c;
    for (int k = 0; k <= 40; ++k) c.samples.push_back({.t = 0.1 * k, .ut_norm = 2.0});
    const DissipationReport r = dissipation_integral(c);
    CHECK(r.integral == doctest::Approx(16.0));
    CHECK(r.tail_fraction == doctest::Approx(0.25));
}

TEST_CASE("conservative run spreads dissipation evenly") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.flow_coupling = false;
    p.dt = 0.005;
    p.T = 20.0;
    SimulationOptions o;
    o.stop_on_converged = false;
    const SimulationResult r = simulate(start(g), DelayDatum::frozen, p, g, o);
    const DissipationReport d = dissipation_integral(r.traj);
    MESSAGE("tail fraction " << d.tail_fraction);
    CHECK(d.tail_fraction == doctest::Approx(0.25).epsilon(0.2));
}

TEST_CASE("fit_line") {
    const LineFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_line({1}, {1}), Error);
}
