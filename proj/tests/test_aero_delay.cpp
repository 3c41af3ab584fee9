#include "flutterlab/delay.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>

using namespace flutterlab;

namespace {

// Exit time of the drifted square footprint for one direction: a point leaves
// as soon as either coordinate does, and the worst start point sits on the far
// edge of each axis, so the time is min(L1 / |dx|, L2 / |dy|).
double exit_time_dir(double U, double th, double L1, double L2) {
    const double dx = std::abs(U + std::sin(th)), dy = std::abs(std::cos(th));
    const double tx = dx > 0 ? L1 / dx : 1e300, ty = dy > 0 ? L2 / dy : 1e300;
    return std::min(tx, ty);
}

double tstar_oracle(double U, double L1 = 1.0, double L2 = 1.0) {
    const int n = 1 << 20;
    double best = 0.0, at = 0.0;
    for (int k = 0; k < n; ++k) {
        const double th = 2 * M_PI * k / n;
        const double v = exit_time_dir(U, th, L1, L2);
        if (v > best) best = v, at = th;
    }
    // golden-section polish around the best sample
    double a = at - 4 * M_PI / n, b = at + 4 * M_PI / n;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 200; ++it) {
        const double c = b - r * (b - a), d = a + r * (b - a);
        if (exit_time_dir(U, c, L1, L2) > exit_time_dir(U, d, L1, L2))
            b = d;
        else
            a = c;
    }
    return std::max(best, exit_time_dir(U, 0.5 * (a + b), L1, L2));
}

Field smooth_a(const PlateGrid& g) {
    return sample(g, [](double x, double y) { return 16 * std::pow(x * (1 - x) * y * (1 - y), 2); });
}
Field smooth_b(const PlateGrid& g) {
    return sample(g, [](double x, double y) {
        return std::pow(std::sin(M_PI * x) * std::sin(M_PI * y), 2) * std::sin(M_PI * x);
    });
}

// u(t) = a(t) f + b(t) h with exact velocities, snapshots up to t_end.
DelayHistory synthetic(const PlateGrid& g, double tstar, double dt, double t_end, double w = 2.0) {
    const Field f = smooth_a(g), h = smooth_b(g);
    DelayHistory hist(tstar, dt);
    hist.set_retention(tstar + 6 * dt);
    const int n = static_cast<int>(std::ceil((tstar + 4 * dt) / dt));
    for (int m = n; m >= 0; --m) {
        const double t = t_end - m * dt;
        PlateState s;
        s.t = t;
        s.u = (1.0 + 0.5 * std::sin(w * t)) * f + 0.3 * std::cos(3 * t) * h;
        s.v = 0.5 * w * std::cos(w * t) * f - 0.9 * std::sin(3 * t) * h;
        hist.push(s);
    }
    return hist;
}

double rel_l2(const PlateGrid& g, const Field& a, const Field& b) {
    return norm_l2(g, a - b) / norm_l2(g, b);
}

}  // namespace

TEST_CASE("compute_tstar against the direction scan") {
    const PlateGrid g = build_grid(1, 1, 31, 31);
    CHECK(compute_tstar(g, 0.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-6));
    CHECK(oracle::rel(compute_tstar(g, 0.0), tstar_oracle(0.0)) <= 1e-6);
    const double t5 = compute_tstar(g, 0.5);
    CHECK(t5 > 2.0);
    CHECK(t5 > compute_tstar(g, 0.0));
    double prev = 0.0;
    for (int k = 0; k <= 9; ++k) {
        const double U = 0.1 * k;
        const double t = compute_tstar(g, U);
        CHECK(oracle::rel(t, tstar_oracle(U)) <= 1e-6);
        CHECK(t >= prev);
        prev = t;
    }
    const PlateGrid r = build_grid(2, 1, 63, 31);
    CHECK(oracle::rel(compute_tstar(r, 0.3), tstar_oracle(0.3, 2.0, 1.0)) <= 1e-6);
    CHECK_THROWS_AS(compute_tstar(g, 1.0), Error);
}

TEST_CASE("push_snapshot") {
    const PlateGrid g = build_grid(1, 1, 9, 9);
    DelayHistory h(0.05, 0.01);
    h = push_snapshot(h, PlateState::zero(g, 0.0));
    CHECK(h.size() == 1);
    SUBCASE("time jump rejected") {
        CHECK_THROWS_AS(h.push(PlateState::zero(g, 0.02)), Error);
    }
    SUBCASE("eviction keeps t - t* - 2 dt") {
        for (int k = 1; k <= 20; ++k) h.push(PlateState::zero(g, 0.01 * k));
        CHECK(h.back_time() == doctest::Approx(0.2));
        CHECK(h.front_time() >= 0.2 - 0.05 - 0.02 - 1e-12);
        CHECK(h.front_time() <= 0.2 - 0.05 + 1e-12);
        CHECK(h.mature_at(0.2));
    }
    SUBCASE("immature queries fail") {
        CHECK_FALSE(h.mature_at(0.0));
        const DelayOperator op(g, 0.0, {});
        CHECK_THROWS_AS(op.eval_q(h, 0.0), Error);
    }
}

TEST_CASE("eval_q") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const double U = 0.5;
    const QuadratureSpec base;
    const DelayOperator op(g, U, base);

    SUBCASE("zero history") {
        const DelayHistory z = DelayHistory::frozen(g.zeros(), 3.0, op.tstar(), 0.01);
        CHECK(op.eval_q(z, 3.0).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(op.eval_q_dt(z, 3.0).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("frozen history against a 4x refined evaluation") {
        const Field u = smooth_a(g) + 0.4 * smooth_b(g);
        const DelayHistory h = DelayHistory::frozen(u, 3.0, op.tstar(), 0.01);
        const QuadratureSpec fine{4 * base.n_theta, 4 * base.n_s, base.s_rule};
        CHECK(rel_l2(g, op.eval_q(h, 3.0), eval_q(h, 3.0, U, fine, g)) <= 1e-3);
        // q is constant in t, so q_t vanishes up to quadrature error
        const double qn = op.eval_q(h, 3.0).lpNorm<Eigen::Infinity>();
        CHECK(op.eval_q_dt(h, 3.0).lpNorm<Eigen::Infinity>() <= 1e-6 * std::max(1.0, qn));
        // frozen q equals the assembled stationary operator
        CHECK(rel_l2(g, op.eval_q(h, 3.0), op.apply_frozen(u)) <= 1e-10);
        const Eigen::MatrixXd Q = op.assemble_frozen();
        CHECK(rel_l2(g, Field(Q * u), op.apply_frozen(u)) <= 1e-12);
    }
    SUBCASE("theta refinement on a smooth trajectory") {
        // The zero extension leaves a kink in theta wherever a footprint crosses
        // the edge, so the periodic trapezoid converges algebraically.
        const DelayHistory h = synthetic(g, op.tstar(), 0.01, 3.0);
        const Field a = eval_q(h, 3.0, U, {64, base.n_s, base.s_rule}, g);
        const Field b = eval_q(h, 3.0, U, {128, base.n_s, base.s_rule}, g);
        const Field c = eval_q(h, 3.0, U, {256, base.n_s, base.s_rule}, g);
        const double d1 = (a - b).lpNorm<Eigen::Infinity>(), d2 = (b - c).lpNorm<Eigen::Infinity>();
        MESSAGE("max change 64 -> 128: " << d1 << ", 128 -> 256: " << d2 << ", |q| " << b.lpNorm<Eigen::Infinity>());
        CHECK(d1 <= 1e-3 * b.lpNorm<Eigen::Infinity>());
        CHECK(d2 < 0.5 * d1);
    }
    SUBCASE("linear in the history") {
        const DelayHistory h1 = synthetic(g, op.tstar(), 0.01, 3.0);
        const DelayHistory h2 = synthetic(g, op.tstar(), 0.01, 3.0, 5.0);
        DelayHistory hs(op.tstar(), 0.01);
        hs.set_retention(op.tstar() + 6 * 0.01);
        for (std::size_t k = 0; k < h1.size(); ++k) {
            const auto& a = h1.snapshots()[k];
            const auto& b = h2.snapshots()[k];
            hs.push({2.0 * a.u + b.u, 2.0 * a.v + b.v, a.t});
        }
        const Field lhs = op.eval_q(hs, 3.0);
        const Field rhs = 2.0 * op.eval_q(h1, 3.0) + op.eval_q(h2, 3.0);
        CHECK((lhs - rhs).lpNorm<Eigen::Infinity>() <= 1e-12 * rhs.lpNorm<Eigen::Infinity>());
        const Field dl = op.eval_q_dt(hs, 3.0);
        const Field dr = 2.0 * op.eval_q_dt(h1, 3.0) + op.eval_q_dt(h2, 3.0);
        CHECK((dl - dr).lpNorm<Eigen::Infinity>() <= 1e-12 * dr.lpNorm<Eigen::Infinity>());
    }
}

TEST_CASE("U = 0: q commutes with the point reflection through the center") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const DelayOperator op(g, 0.0, {});
    const DelayHistory h = synthetic(g, op.tstar(), 0.01, 3.0);
    DelayHistory r(op.tstar(), 0.01);
    r.set_retention(op.tstar() + 6 * 0.01);
    auto flip = [&](const Field& f) { return Field(f.reverse()); };  // (i, j) -> (n1-1-i, n2-1-j)
    for (const auto& s : h.snapshots()) r.push({flip(s.u), flip(s.v), s.t});
    const Field a = flip(op.eval_q(h, 3.0));
    const Field b = op.eval_q(r, 3.0);
    CHECK((a - b).lpNorm<Eigen::Infinity>() <= 1e-12 * b.lpNorm<Eigen::Infinity>());
}

TEST_CASE("eval_q_dt against centered differences of eval_q") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const double U = 0.3, t = 3.0;
    for (SRule rule : {SRule::segment, SRule::trapezoid}) {
        const DelayOperator op(g, U, {128, 64, rule});
        std::vector<double> err;
        for (double dt : {0.04, 0.02, 0.01, 0.005}) {
            const DelayHistory h = synthetic(g, op.tstar(), dt, t + dt);
            const Field cd = (op.eval_q(h, t + dt) - op.eval_q(h, t - dt)) / (2 * dt);
            err.push_back(norm_l2(g, op.eval_q_dt(h, t) - cd));
        }
        for (std::size_t i = 1; i < err.size(); ++i) {
            const double order = std::log2(err[i - 1] / err[i]);
            MESSAGE(to_string(rule) << " order " << order);
            if (rule == SRule::segment) CHECK(order >= 1.8);
        }
    }
}

TEST_CASE("quadrature spec limits") {
    CHECK_THROWS_AS((QuadratureSpec{15, 64, SRule::trapezoid}.validate()), Error);
    CHECK_THROWS_AS((QuadratureSpec{17, 64, SRule::trapezoid}.validate()), Error);
    CHECK_THROWS_AS((QuadratureSpec{16, 7, SRule::trapezoid}.validate()), Error);
    CHECK_NOTHROW((QuadratureSpec{16, 8, SRule::segment}.validate()));
    CHECK(parse_s_rule(to_string(SRule::segment)) == SRule::segment);
}

TEST_CASE("delay_bound_ratios") {
    SUBCASE("zero history is the degenerate sentinel") {
        const PlateGrid g = build_grid(1, 1, 15, 15);
        const double ts = compute_tstar(g, 0.5);
        const DelayHistory z = DelayHistory::frozen(g.zeros(), 3.0, ts, 0.01);
        const DelayBoundReport r = delay_bound_ratios(z, 3.0, 0.5, g);
        CHECK(r.q.degenerate);
        CHECK(r.q_dt.degenerate);
        CHECK(r.q.ratio == 0.0);
    }
    SUBCASE("frozen history: ratio stable across 31^2 and 63^2") {
        double ratio[2];
        int k = 0;
        for (int n : {31, 63}) {
            const PlateGrid g = build_grid(1, 1, n, n);
            const double ts = compute_tstar(g, 0.5);
            const DelayHistory h = DelayHistory::frozen(smooth_a(g), 3.0, ts, 0.01);
            const DelayBoundReport r = delay_bound_ratios(h, 3.0, 0.5, g);
            CHECK(r.q.ratio > 0.0);
            CHECK(std::isfinite(r.q.ratio));
            ratio[k++] = r.q.ratio;
        }
        CHECK(std::abs(ratio[0] - ratio[1]) <= 0.2 * ratio[1]);
    }
}
