#include "flutterlab/operators.hpp"
#include "flutterlab/stationary.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>

#include <cstdio>
#include <filesystem>

using namespace flutterlab;

namespace {

double lambda1_dense(const PlateGrid& g, Field* mode = nullptr) {
    const Eigen::MatrixXd B = Eigen::MatrixXd(assemble_operator(OperatorKind::bilaplacian, g));
    const Eigen::MatrixXd L = Eigen::MatrixXd(assemble_operator(OperatorKind::laplacian, g));
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (B + B.transpose()),
                                                                 -0.5 * (L + L.transpose()));
    if (mode) *mode = es.eigenvectors().col(0) / es.eigenvectors().col(0).lpNorm<Eigen::Infinity>();
    return es.eigenvalues()[0];
}

double maxabs(const Field& f) { return f.lpNorm<Eigen::Infinity>(); }

}  // namespace

TEST_CASE("stationary_residual trivial cases") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;
    p.U = 0.4;
    p.b = 3.0;
    CHECK(maxabs(stationary_residual(g.zeros(), p, g)) == 0.0);
    p.p0 = sample(g, [](double x, double y) { return 1.0 + x * y; });
    CHECK(maxabs(stationary_residual(g.zeros(), p, g) + p.p0) == 0.0);
}

TEST_CASE("solve_stationary") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    ModelParams p;

    SUBCASE("unloaded linear plate: zero in one iteration") {
        const StationaryResult r = solve_stationary(p, g.zeros(), g);
        CHECK(r.converged);
        CHECK(r.iterations <= 1);
        CHECK(maxabs(r.u) == 0.0);
    }
    SUBCASE("small constant load against a direct sparse solve") {
        p.p0 = Field::Constant(g.size(), 1e-2);
        const StationaryResult r = solve_stationary(p, g.zeros(), g);
        // At U = 0 the continuum stationary delay operator vanishes; its
        // quadrature keeps a small remainder, so the 1e-10 match is against
        // B + Q and the plain bilaplacian solve agrees to that remainder.
        const Eigen::MatrixXd BQ = Eigen::MatrixXd(assemble_operator(OperatorKind::bilaplacian, g)) +
                                   DelayOperator(g, 0.0, p.quad).assemble_frozen();
        const Field with_q = BQ.partialPivLu().solve(Field(p.p0));
        Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(assemble_operator(OperatorKind::bilaplacian, g));
        const Field plain = lu.solve(Field(p.p0));
        CHECK(r.converged);
        CHECK(maxabs(r.u - with_q) <= 1e-10);
        MESSAGE("relative gap to the plain bilaplacian solve " << maxabs(r.u - plain) / maxabs(plain));
        CHECK(maxabs(r.u - plain) <= 5e-3 * maxabs(plain));
    }
    SUBCASE("buckled state above the first load") {
        Field phi;
        const double lam = lambda1_dense(g, &phi);
        CHECK(oracle::rel(buckling_mode(g).lambda, lam) <= 1e-8);
        p.b = 1.2 * lam;
        const StationaryResult r = solve_stationary(p, std::sqrt(0.2 * lam / grad_norm_sq(phi, g)) * phi, g);
        CHECK(r.converged);
        const double g2 = grad_norm_sq(r.u, g);
        CHECK(g2 > 0.0);
        CHECK(g2 < p.b);
        CHECK(maxabs(stationary_residual(r.u, p, g)) <= 1e-8);
        MESSAGE("||grad u||^2 = " << g2 << ", b - lambda1 = " << p.b - lam);
    }
    SUBCASE("same basin, same solution; quadratic tail") {
        p.U = 0.3;
        p.k = 2.0;
        p.p0 = Field::Constant(g.size(), 5.0);
        const StationaryResult a = solve_stationary(p, g.zeros(), g);
        const StationaryResult b = solve_stationary(p, Field::Constant(g.size(), 1e-3), g);
        CHECK(a.converged);
        CHECK(b.converged);
        CHECK(maxabs(a.u - b.u) <= 1e-8);
        CHECK(maxabs(stationary_residual(a.u, p, g)) <= 1e-8 * (1.0 + 5.0));
        const auto& h = a.residual_history;
        for (std::size_t i = 1; i < h.size(); ++i)
            if (h[i - 1] < 1e-3 && h[i - 1] > 1e-12 && h[i] > 1e-14) {
                MESSAGE("r_{n+1} / r_n^2 = " << h[i] / (h[i - 1] * h[i - 1]));
                CHECK(h[i] / (h[i - 1] * h[i - 1]) < 10.0);
            }
    }
}

TEST_CASE("jacobian matches finite differences of the residual") {
    const PlateGrid g = build_grid(1, 1, 11, 11);
    ModelParams p;
    p.U = 0.5;
    p.b = 30.0;
    p.p0 = Field::Constant(g.size(), 2.0);
    const StationaryProblem prob(g, p);
    const Field u = sample(g, [](double x, double y) { return 0.3 * std::pow(x * (1 - x) * y * (1 - y), 1) * (1 + x); });
    const Eigen::MatrixXd J = prob.jacobian(u);
    const Field w = sample(g, [](double x, double y) { return std::sin(3 * x) * y * (1 - y); });
    const double e = 1e-6;
    const Field fd = (prob.residual(u + e * w) - prob.residual(u - e * w)) / (2 * e);
    CHECK(maxabs(J * w - fd) <= 1e-6 * maxabs(fd));
}

TEST_CASE("half-space flow: single mode closed form") {
    const int n = 64;
    const double h = 2 * M_PI / n;
    const double x1 = 1.0, x2 = 2.0;
    auto g = [&](double x, double y) { return std::sin(x1 * x) * std::sin(x2 * y); };
    for (double U : {0.0, 0.5}) {
        const HalfSpaceFlow f = HalfSpaceFlow::from_function(g, U, n, n, h, h);
        const double kappa = std::sqrt((1 - U * U) * x1 * x1 + x2 * x2);
        double err = 0.0;
        for (double z : {0.0, 0.3, 1.0, 2.5})
            for (double x : {-2.0, -0.3, 0.7, 1.9})
                for (double y : {-1.1, 0.0, 0.45, 2.2})
                    err = std::max(err, std::abs(f.evaluate(x, y, z) + g(x, y) * std::exp(-kappa * z) / kappa));
        CHECK(err <= 1e-8);
    }
}

TEST_CASE("half-space flow: U > 0 is the U = 0 solution in stretched x") {
    const int n = 64;
    const double h = 0.25, U = 0.5, beta = std::sqrt(1 - U * U);
    auto g = [](double x, double y) { return std::exp(-0.5 * (x * x + 2 * y * y)) * (x - 0.3 * y); };
    const HalfSpaceFlow fu = HalfSpaceFlow::from_function(g, U, n, n, h, h);
    // same samples on the stretched cell x' = x / beta
    const HalfSpaceFlow f0 = HalfSpaceFlow::from_function(
        [&](double xs, double y) { return g(beta * xs, y); }, 0.0, n, n, h / beta, h);
    double err = 0.0;
    for (double z : {0.0, 0.2, 0.8})
        for (double x : {-1.5, -0.2, 0.4, 1.3})
            for (double y : {-0.9, 0.1, 0.6})
                err = std::max(err, std::abs(fu.evaluate(x, y, z) - f0.evaluate(x / beta, y, z)));
    CHECK(err <= 1e-6);
}

TEST_CASE("half-space flow: Parseval against a direct integral") {
    const int n = 32;
    const double h = 2 * M_PI / n, zmax = 2.0;
    const HalfSpaceFlow f = HalfSpaceFlow::from_function(
        [](double x, double y) { return std::sin(x) * std::sin(2 * y) + 0.3 * std::cos(3 * x); }, 0.3, n,
        n, h, h);
    std::vector<double> gx, gw;
    oracle::gauss_legendre(24, gx, gw);
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = (i - n / 2) * h;
    double sum = 0.0, sum_x = 0.0;
    using C = HalfSpaceFlow::Component;
    for (std::size_t k = 0; k < gx.size(); ++k) {
        const double z = 0.5 * zmax * (gx[k] + 1);
        const Eigen::MatrixXd a = f.evaluate(xs, xs, z, C::dx);
        const Eigen::MatrixXd b = f.evaluate(xs, xs, z, C::dy);
        const Eigen::MatrixXd c = f.evaluate(xs, xs, z, C::dz);
        const double w = 0.5 * zmax * gw[k] * h * h;
        sum += w * (a.squaredNorm() + b.squaredNorm() + c.squaredNorm());
        sum_x += w * a.squaredNorm();
    }
    CHECK(oracle::rel(f.mode_grad_energy(zmax), sum) <= 1e-2);
    CHECK(oracle::rel(f.mode_dx_energy(zmax), sum_x) <= 1e-2);
}

TEST_CASE("stationary flow and D") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    FlowBox box;
    box.m1 = box.m2 = 17;
    box.m3 = 9;
    SUBCASE("zero data") {
        const FlowSamples s = solve_stationary_flow(g.zeros(), 0.4, box, g);
        CHECK(maxabs(s.phi) == 0.0);
        ModelParams p;
        p.U = 0.4;
        const StationaryPair pair{g.zeros(), s, 0.0};
        CHECK(potential_D(pair, p, g, box).total == 0.0);
    }
    SUBCASE("padding too small is rejected") {
        FlowBox tight = box;
        tight.a = 0.5;
        tight.padding = 1.0;
        CHECK_THROWS_AS(solve_stationary_flow(g.zeros(), 0.4, tight, g), Error);
    }
    SUBCASE("truncation and extremality") {
        ModelParams p;
        p.U = 0.3;
        p.k = 2.0;
        p.p0 = Field::Constant(g.size(), 5.0);
        const StationaryResult r = solve_stationary(p, g.zeros(), g);
        REQUIRE(r.converged);
        const StationaryPair pair = make_stationary_pair(r, p.U, box, g);
        const double d1 = potential_D(pair, p, g, box).total;
        FlowBox tall = box;
        tall.zmax = 2 * box.zmax;
        tall.m3 = 2 * box.m3 - 1;
        const double d2 = potential_D(pair, p, g, tall).total;
        CHECK(std::abs(d2 - d1) <= 0.01 * std::abs(d1));
        for (double s : {0.99, 1.01}) {
            const Field us = s * r.u;
            const StationaryPair ps{us, solve_stationary_flow(us, p.U, box, g), 0.0};
            const double ds = potential_D(ps, p, g, box).total;
            MESSAGE("D(" << s << " u) - D(u) = " << ds - d1);
            CHECK(ds >= d1);
        }
    }
    SUBCASE("flow sample file round trip") {
        const Field u = sample(g, [](double x, double y) { return std::pow(x * (1 - x) * y * (1 - y), 2); });
        const FlowSamples s = solve_stationary_flow(u, 0.4, box, g);
        const std::string path = (std::filesystem::temp_directory_path() / "fl_flow_samples.txt").string();
        write_flow_samples(path, s);
        const FlowSamples r = read_flow_samples(path);
        std::remove(path.c_str());
        CHECK(r.box == s.box);
        CHECK((r.phi.array() == s.phi.array()).all());
    }
}

TEST_CASE("continuation") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const double lam = lambda1_dense(g);
    ModelParams p;
    SUBCASE("below the first load: trivial only") {
        SweepSpec sw;
        sw.values = {0.0, 0.3 * lam, 0.6 * lam, 0.9 * lam};
        const ContinuationResult r = continuation(p, sw, g);
        for (const auto& pt : r.points) {
            CHECK(pt.solutions.size() == 1);
            CHECK(maxabs(pt.solutions[0].u) <= 1e-10);
        }
    }
    SUBCASE("U sweep at supercritical b is continuous") {
        p.b = 1.3 * lam;
        SweepSpec sw;
        sw.param = SweepParam::U;
        for (int k = 0; k <= 8; ++k) sw.values.push_back(0.1 * k);
        Field phi;
        lambda1_dense(g, &phi);
        sw.extra_seeds = {std::sqrt(0.3 * lam / grad_norm_sq(phi, g)) * phi};
        const ContinuationResult r = continuation(p, sw, g);
        // follow the branch seeded positive: at each point the solution nearest
        // the previous one
        Field prev = sw.extra_seeds[0];
        double worst = 0.0;
        for (std::size_t i = 0; i < r.points.size(); ++i) {
            double best = 1e300;
            Field pick;
            for (const auto& s : r.points[i].solutions)
                if (maxabs(s.u - prev) < best) best = maxabs(s.u - prev), pick = s.u;
            REQUIRE(pick.size() == g.size());
            if (i > 0) worst = std::max(worst, best / 0.1);
            prev = pick;
        }
        MESSAGE("max deflection jump per unit U: " << worst);
        CHECK(worst <= 10.0);
    }
}

TEST_CASE("distance_to_equilibria and deduplicate") {
    const PlateGrid g = build_grid(1, 1, 15, 15);
    const Field a = sample(g, [](double x, double y) { return std::pow(x * (1 - x) * y * (1 - y), 2); });
    const Field b = -2.0 * a;
    const std::vector<Field> set = {g.zeros(), a, b};
    const DistanceReport d = distance_to_equilibria({b, g.zeros(), 0.0}, set, g);
    CHECK(d.distance == 0.0);
    CHECK(d.index == 2);
    const Field e = sample(g, [](double x, double y) { return std::sin(M_PI * x) * std::sin(M_PI * y); });
    const double delta = 1e-4;
    const double en = std::sqrt(lap_norm_sq(e, g) + inner(g, e, e));
    const DistanceReport p = distance_to_equilibria({a + delta * e, g.zeros(), 0.0}, set, g);
    CHECK(p.index == 1);
    CHECK(p.distance >= 0.5 * delta * en);
    CHECK(p.distance <= 2.0 * delta * en);
    CHECK_THROWS_AS(distance_to_equilibria({a, g.zeros(), 0.0}, {}, g), Error);

    std::vector<Equilibrium> sols = {{a, 0, 0, ""}, {a + Field::Constant(g.size(), 1e-6), 0, 0, ""},
                                     {b, 0, 0, ""}};
    CHECK(deduplicate(sols).size() == 2);
}
