#include "flutterlab/stationary.hpp"

#include "flutterlab/operators.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <sstream>

#include <fftw3.h>
#include <json.hpp>

namespace flutterlab {

Field stationary_residual(const Field& u, const ModelParams& params, const PlateGrid& grid) {
    check_shape(grid, u, "stationary_residual");
    params.validate(grid);
    Field r = apply_operator(OperatorKind::bilaplacian, u, grid) + params.beta * u +
              berger_force(u, params.b, grid) - params.pressure(grid);
    if (params.flow_coupling) {
        r += params.U * apply_operator(OperatorKind::dx, u, grid);
        r += DelayOperator(grid, params.U, params.quad).apply_frozen(u);
    }
    return r;
}

StationaryProblem::StationaryProblem(const PlateGrid& grid, const ModelParams& params)
    : grid_(grid),
      params_(params),
      p0_(params.pressure(grid)),
      lap_(assemble_operator(OperatorKind::laplacian, grid)),
      dx_(assemble_operator(OperatorKind::dx, grid)),
      bilap_(assemble_operator(OperatorKind::bilaplacian, grid)) {
    params_.validate(grid);
    warn_if_negative_load(params.b);
    linear_ = Eigen::MatrixXd(bilap_);
    linear_ += Eigen::MatrixXd(params.b * lap_);
    linear_.diagonal().array() += params.beta;
    if (params.flow_coupling) {
        linear_ += Eigen::MatrixXd(params.U * dx_);
        linear_ += DelayOperator(grid, params.U, params.quad).assemble_frozen();
    }
}

double StationaryProblem::tolerance(const NewtonOptions& opt) const {
    return opt.tol * (1.0 + p0_.lpNorm<Eigen::Infinity>());
}

Field StationaryProblem::residual(const Field& u) const {
    check_shape(grid_, u, "StationaryProblem::residual");
    const Field lu = lap_ * u;
    const double g2 = -u.dot(lu) * grid_.cell();
    return linear_ * u - g2 * lu - p0_;
}

Eigen::MatrixXd StationaryProblem::jacobian(const Field& u) const {
    const Field lu = lap_ * u;
    const double g2 = -u.dot(lu) * grid_.cell();
    Eigen::MatrixXd j = linear_;
    if (g2 != 0.0) j -= Eigen::MatrixXd(g2 * lap_);
    j.noalias() += (2.0 * grid_.cell()) * lu * lu.transpose();
    return j;
}

StationaryResult StationaryProblem::solve(const Field& guess, const NewtonOptions& opt) const {
    check_shape(grid_, guess, "solve_stationary(guess)");
    if (opt.max_iter < 1) throw Error("solve_stationary: max_iter must be >= 1");
    const double tol = tolerance(opt);
    StationaryResult res;
    res.u = guess;
    Field r = residual(res.u);
    res.residual_norm = r.lpNorm<Eigen::Infinity>();
    res.residual_history.push_back(res.residual_norm);
    Field best = res.u;
    double best_norm = res.residual_norm;
    res.status = "max-iterations";
    while (true) {
        if (res.residual_norm <= tol) {
            res.converged = true;
            res.status = "converged";
            break;
        }
        if (res.iterations == opt.max_iter) break;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(jacobian(res.u));
        const Field step = lu.solve(-r);
        if (!step.allFinite()) {
            res.status = "singular";
            break;
        }
        const double r2 = r.norm();
        double alpha = 1.0;
        Field trial, rt;
        bool accepted = false;
        for (int k = 0; k < 30; ++k, alpha *= 0.5) {
            trial = res.u + alpha * step;
            rt = residual(trial);
            if (rt.allFinite() && rt.norm() <= (1.0 - 1e-4 * alpha) * r2) {
                accepted = true;
                break;
            }
        }
        ++res.iterations;
        if (!accepted) {
            res.status = "line-search";
            break;
        }
        res.u = std::move(trial);
        r = std::move(rt);
        res.residual_norm = r.lpNorm<Eigen::Infinity>();
        res.residual_history.push_back(res.residual_norm);
        if (res.residual_norm < best_norm) best = res.u, best_norm = res.residual_norm;
    }
    if (!res.converged) {
        res.u = best;
        res.residual_norm = best_norm;
    }
    return res;
}

StationaryResult solve_stationary(const ModelParams& params, const Field& guess,
                                  const PlateGrid& grid, const NewtonOptions& opt) {
    return StationaryProblem(grid, params).solve(guess, opt);
}

BucklingMode buckling_mode(const PlateGrid& grid) {
    // Inverse iteration on B^{-1}(-L), whose largest eigenvalue is 1/lambda_1.
    const Eigen::SparseMatrix<double> B = assemble_operator(OperatorKind::bilaplacian, grid);
    const Eigen::SparseMatrix<double> mL = -assemble_operator(OperatorKind::laplacian, grid);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(B);
    if (solver.info() != Eigen::Success) throw Error("buckling_mode: factorization failed");
    Field x = sample(grid, [&](double a, double b) {
        return std::sin(std::numbers::pi * a / grid.L1) * std::sin(std::numbers::pi * b / grid.L2);
    });
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
        Field y = solver.solve(mL * x);
        y /= y.norm();
        const double next = y.dot(B * y) / y.dot(mL * y);
        const bool done = it > 0 && std::abs(next - lambda) <= 1e-14 * next;
        x = std::move(y);
        lambda = next;
        if (done) break;
    }
    Eigen::Index imax;
    x.cwiseAbs().maxCoeff(&imax);
    x /= x[imax];
    return {lambda, x};
}

void FlowBox::validate(const PlateGrid& grid) const {
    std::ostringstream os;
    if (!(a > grid.L1 && a > grid.L2))
        os << "flow box half-width a = " << a << " must exceed the plate sides";
    else if (!(zmax > 0.0))
        os << "flow box height must be positive";
    else if (m1 < 3 || m2 < 3 || m3 < 3)
        os << "flow box needs at least 3 samples per axis";
    else if (!(padding >= 2.0))
        os << "flow box padding must be >= 2 (got " << padding << ")";
    if (!os.str().empty()) throw Error(os.str());
}

namespace {

using RowMatC = Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double wavenumber(int k, int n, double period) {
    const int f = k < n / 2 ? k : k - n;
    return 2.0 * std::numbers::pi * f / period;
}

}  // namespace

HalfSpaceFlow::HalfSpaceFlow(const Eigen::MatrixXd& data, double hx, double hy, double U)
    : nx_(static_cast<int>(data.cols())), ny_(static_cast<int>(data.rows())), hx_(hx), hy_(hy),
      U_(U) {
    if (!(U >= 0.0 && U < 1.0)) throw Error("half-space flow: U must satisfy 0 <= U < 1");
    if (nx_ < 4 || ny_ < 4 || nx_ % 2 || ny_ % 2)
        throw Error("half-space flow: cell sizes must be even and >= 4");
    RowMatC in(ny_, nx_), out(ny_, nx_);
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) in(j, i) = data(j, i);
    static std::mutex planner;  // the FFTW planner is not thread-safe
    std::unique_lock lock(planner);
    fftw_plan plan = fftw_plan_dft_2d(ny_, nx_, reinterpret_cast<fftw_complex*>(in.data()),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                      FFTW_ESTIMATE);
    lock.unlock();
    fftw_execute(plan);
    lock.lock();
    fftw_destroy_plan(plan);
    lock.unlock();

    kx_.resize(nx_);
    ky_.resize(ny_);
    for (int i = 0; i < nx_; ++i) kx_[i] = wavenumber(i, nx_, period_x());
    for (int j = 0; j < ny_; ++j) ky_[j] = wavenumber(j, ny_, period_y());
    // data(j, i) sits at x = (i - nx/2) hx, y = (j - ny/2) hy.
    const double x0 = -0.5 * nx_ * hx_, y0 = -0.5 * ny_ * hy_;
    const double n = static_cast<double>(nx_) * ny_;
    coef_.resize(ny_, nx_);
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const bool nyquist = i == nx_ / 2 || j == ny_ / 2;
            coef_(j, i) = nyquist ? 0.0
                                  : out(j, i) * std::polar(1.0 / n, -(kx_[i] * x0 + ky_[j] * y0));
        }
}

HalfSpaceFlow HalfSpaceFlow::from_function(const std::function<double(double, double)>& g,
                                           double U, int nx, int ny, double hx, double hy) {
    Eigen::MatrixXd d(ny, nx);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) d(j, i) = g((i - nx / 2) * hx, (j - ny / 2) * hy);
    return HalfSpaceFlow(d, hx, hy, U);
}

HalfSpaceFlow HalfSpaceFlow::from_plate(const Field& u_hat, double U, const FlowBox& box,
                                        const PlateGrid& grid) {
    check_shape(grid, u_hat, "solve_stationary_flow");
    box.validate(grid);
    auto cells = [](double width, double h) {
        int n = static_cast<int>(std::ceil(width / h - 1e-9));
        return n + (n % 2);
    };
    const int nx = cells(box.padding * 2.0 * box.a, grid.h1);
    const int ny = cells(box.padding * 2.0 * box.a, grid.h2);
    // The data support [0, L] must stay 10% of the cell away from its edges.
    const double px = nx * grid.h1, py = ny * grid.h2;
    if (0.5 * px - grid.L1 < 0.1 * px || 0.5 * py - grid.L2 < 0.1 * py)
        throw Error("flow box: padding too small, plate data reaches the periodic boundary");
    const Field g = U * apply_operator(OperatorKind::dx, u_hat, grid);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(ny, nx);
    for (int j = 0; j < grid.n2; ++j)
        for (int i = 0; i < grid.n1; ++i) d(j + 1 + ny / 2, i + 1 + nx / 2) = g[grid.index(i, j)];
    return HalfSpaceFlow(d, grid.h1, grid.h2, U);
}

Eigen::MatrixXd HalfSpaceFlow::evaluate(const std::vector<double>& xs,
                                        const std::vector<double>& ys, double z,
                                        Component c) const {
    const double beta2 = 1.0 - U_ * U_;
    const std::complex<double> I(0.0, 1.0);
    Eigen::MatrixXcd a(ny_, nx_);
    for (int j = 0; j < ny_; ++j)
        for (int i = 0; i < nx_; ++i) {
            const double kap = std::sqrt(beta2 * kx_[i] * kx_[i] + ky_[j] * ky_[j]);
            if (kap == 0.0) {
                a(j, i) = 0.0;
                continue;
            }
            const std::complex<double> v = -coef_(j, i) * std::exp(-kap * z) / kap;
            switch (c) {
            case Component::dx: a(j, i) = I * kx_[i] * v; break;
            case Component::dy: a(j, i) = I * ky_[j] * v; break;
            case Component::dz: a(j, i) = -kap * v; break;
            default: a(j, i) = v;
            }
        }
    Eigen::MatrixXcd ey(ys.size(), ny_), ex(nx_, xs.size());
    for (std::size_t q = 0; q < ys.size(); ++q)
        for (int j = 0; j < ny_; ++j) ey(q, j) = std::polar(1.0, ky_[j] * ys[q]);
    for (int i = 0; i < nx_; ++i)
        for (std::size_t p = 0; p < xs.size(); ++p) ex(i, p) = std::polar(1.0, kx_[i] * xs[p]);
    const Eigen::MatrixXcd tmp = ey * a;
    return (tmp * ex).real();
}

double HalfSpaceFlow::evaluate(double x, double y, double z, Component c) const {
    return evaluate(std::vector<double>{x}, std::vector<double>{y}, z, c)(0, 0);
}

namespace {

double mode_energy(const Eigen::MatrixXcd& coef, const Eigen::VectorXd& kx,
                   const Eigen::VectorXd& ky, double U, double zmax, double area, bool dx_only) {
    const double beta2 = 1.0 - U * U;
    double sum = 0.0;
    for (int j = 0; j < coef.rows(); ++j)
        for (int i = 0; i < coef.cols(); ++i) {
            const double kap = std::sqrt(beta2 * kx[i] * kx[i] + ky[j] * ky[j]);
            if (kap == 0.0) continue;
            const double a2 = std::norm(coef(j, i)) / (kap * kap);
            const double w = dx_only ? kx[i] * kx[i] : kx[i] * kx[i] + ky[j] * ky[j] + kap * kap;
            sum += a2 * w * (-std::expm1(-2.0 * kap * zmax)) / (2.0 * kap);
        }
    return area * sum;
}

}  // namespace

double HalfSpaceFlow::mode_grad_energy(double zmax) const {
    return mode_energy(coef_, kx_, ky_, U_, zmax, period_x() * period_y(), false);
}

double HalfSpaceFlow::mode_dx_energy(double zmax) const {
    return mode_energy(coef_, kx_, ky_, U_, zmax, period_x() * period_y(), true);
}

namespace {

std::vector<double> axis(int m, const std::function<double(int)>& f) {
    std::vector<double> v(m);
    for (int i = 0; i < m; ++i) v[i] = f(i);
    return v;
}

}  // namespace

FlowSamples solve_stationary_flow(const Field& u_hat, double U, const FlowBox& box,
                                  const PlateGrid& grid) {
    const HalfSpaceFlow flow = HalfSpaceFlow::from_plate(u_hat, U, box, grid);
    FlowSamples s{box, U, Eigen::VectorXd(std::size_t(box.m1) * box.m2 * box.m3)};
    const auto xs = axis(box.m1, [&](int i) { return box.x(i); });
    const auto ys = axis(box.m2, [&](int j) { return box.y(j); });
    for (int k = 0; k < box.m3; ++k) {
        const Eigen::MatrixXd v = flow.evaluate(xs, ys, box.z(k));
        for (int j = 0; j < box.m2; ++j)
            for (int i = 0; i < box.m1; ++i)
                s.phi[(std::size_t(k) * box.m2 + j) * box.m1 + i] = v(j, i);
    }
    return s;
}

void write_flow_samples(const std::string& path, const FlowSamples& s) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << std::setprecision(17);
    os << s.box.m1 << ' ' << s.box.m2 << ' ' << s.box.m3 << ' ' << s.box.a << ' ' << s.box.zmax
       << ' ' << s.U << '\n';
    for (Eigen::Index k = 0; k < s.phi.size(); ++k)
        os << s.phi[k] << ((k + 1) % s.box.m1 == 0 ? '\n' : ' ');
}

FlowSamples read_flow_samples(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open '" + path + "'");
    FlowSamples s;
    if (!(is >> s.box.m1 >> s.box.m2 >> s.box.m3 >> s.box.a >> s.box.zmax >> s.U))
        throw Error("flow samples: malformed header in '" + path + "'");
    s.phi.resize(std::size_t(s.box.m1) * s.box.m2 * s.box.m3);
    for (Eigen::Index k = 0; k < s.phi.size(); ++k)
        if (!(is >> s.phi[k])) throw Error("flow samples: truncated '" + path + "'");
    return s;
}

StationaryPair make_stationary_pair(const StationaryResult& r, double U, const FlowBox& box,
                                    const PlateGrid& grid) {
    return {r.u, solve_stationary_flow(r.u, U, box, grid), r.residual_norm};
}

namespace {

// Trapezoid weights on a uniform axis of m points over a length.
std::vector<double> trap(int m, double length) {
    std::vector<double> w(m, length / (m - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

}  // namespace

PotentialD potential_D(const StationaryPair& pair, const ModelParams& params,
                       const PlateGrid& grid, const FlowBox& box) {
    check_shape(grid, pair.u_hat, "potential_D");
    const Field p0 = params.pressure(grid);
    PotentialD d;
    d.box = box;
    const EnergyReport e = plate_energy({pair.u_hat, grid.zeros(), 0.0}, params.b, p0, grid);
    d.plate = e.bending + e.Pi;
    const double U = params.U;
    if (U != 0.0 && pair.u_hat.lpNorm<Eigen::Infinity>() > 0.0) {
        const HalfSpaceFlow flow = HalfSpaceFlow::from_plate(pair.u_hat, U, box, grid);
        const auto xs = axis(box.m1, [&](int i) { return box.x(i); });
        const auto ys = axis(box.m2, [&](int j) { return box.y(j); });
        const auto wx = trap(box.m1, 2.0 * box.a), wy = trap(box.m2, 2.0 * box.a);
        const auto wz = trap(box.m3, box.zmax);
        double grad2 = 0.0, dx2 = 0.0;
        using C = HalfSpaceFlow::Component;
        for (int k = 0; k < box.m3; ++k) {
            const double z = box.z(k);
            const Eigen::MatrixXd fx = flow.evaluate(xs, ys, z, C::dx);
            const Eigen::MatrixXd fy = flow.evaluate(xs, ys, z, C::dy);
            const Eigen::MatrixXd fz = flow.evaluate(xs, ys, z, C::dz);
            for (int j = 0; j < box.m2; ++j)
                for (int i = 0; i < box.m1; ++i) {
                    const double w = wx[i] * wy[j] * wz[k];
                    grad2 += w * (fx(j, i) * fx(j, i) + fy(j, i) * fy(j, i) + fz(j, i) * fz(j, i));
                    dx2 += w * fx(j, i) * fx(j, i);
                }
        }
        d.flow_grad = 0.5 * grad2;
        d.flow_dx = -0.5 * U * U * dx2;
        const auto px = axis(grid.n1, [&](int i) { return grid.x(i); });
        const auto py = axis(grid.n2, [&](int j) { return grid.y(j); });
        const Eigen::MatrixXd tr = flow.evaluate(px, py, 0.0);
        const Field ux = apply_operator(OperatorKind::dx, pair.u_hat, grid);
        double s = 0.0;
        for (int j = 0; j < grid.n2; ++j)
            for (int i = 0; i < grid.n1; ++i) s += ux[grid.index(i, j)] * tr(j, i);
        d.interaction = U * s * grid.cell();
    }
    d.total = d.plate + d.flow_grad + d.flow_dx + d.interaction;
    return d;
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "b") return SweepParam::b;
    if (name == "p0" || name == "p0_amplitude") return SweepParam::p0_amplitude;
    if (name == "U") return SweepParam::U;
    throw Error("unknown sweep parameter '" + name + "' (expected b, p0_amplitude or U)");
}

std::string to_string(SweepParam p) {
    switch (p) {
    case SweepParam::p0_amplitude: return "p0_amplitude";
    case SweepParam::U: return "U";
    default: return "b";
    }
}

ModelParams sweep_params(const ModelParams& base, const SweepSpec& sweep, double value) {
    ModelParams p = base;
    switch (sweep.param) {
    case SweepParam::b: p.b = value; break;
    case SweepParam::U: p.U = value; break;
    case SweepParam::p0_amplitude:
        if (sweep.p0_shape.size() == 0) throw Error("p0_amplitude sweep needs a p0 shape");
        p.p0 = value * sweep.p0_shape;
        break;
    }
    return p;
}

std::vector<Equilibrium> deduplicate(std::vector<Equilibrium> sols, double sep) {
    std::vector<Equilibrium> out;
    for (auto& s : sols) {
        bool dup = false;
        for (const auto& o : out)
            if ((s.u - o.u).lpNorm<Eigen::Infinity>() <= sep) {
                dup = true;
                break;
            }
        if (!dup) out.push_back(std::move(s));
    }
    return out;
}

ContinuationResult continuation(const ModelParams& params, const SweepSpec& sweep,
                                const PlateGrid& grid, const NewtonOptions& opt) {
    if (sweep.values.empty()) throw Error("continuation: empty sweep");
    for (std::size_t i = 1; i < sweep.values.size(); ++i) {
        const double d0 = sweep.values[1] - sweep.values[0];
        const double d = sweep.values[i] - sweep.values[i - 1];
        if (d == 0.0 || (d > 0) != (d0 > 0)) throw Error("continuation: sweep must be monotone");
    }
    for (const Field& s : sweep.extra_seeds) check_shape(grid, s, "continuation(seed)");
    ContinuationResult res;
    res.param = sweep.param;
    std::vector<Equilibrium> prev;
    int next_label = 1;
    for (double value : sweep.values) {
        const StationaryProblem prob(grid, sweep_params(params, sweep, value));
        std::vector<Field> seeds;
        for (const auto& e : prev) {
            seeds.push_back(e.u);
            seeds.push_back(-e.u);
        }
        seeds.push_back(grid.zeros());
        for (const Field& s : sweep.extra_seeds) seeds.push_back(s);

        std::vector<Equilibrium> found;
        for (const Field& s : seeds) {
            const StationaryResult r = prob.solve(s, opt);
            if (r.converged) found.push_back({r.u, r.residual_norm, r.iterations, {}});
        }
        ContinuationPoint pt;
        pt.value = value;
        pt.solutions = deduplicate(std::move(found));
        pt.terminated = pt.solutions.empty();
        // Labels follow the nearest solution of the previous point.
        for (auto& s : pt.solutions) {
            if (s.u.lpNorm<Eigen::Infinity>() <= 1e-4) {
                s.branch = "trivial";
                continue;
            }
            double best = 1e300;
            for (const auto& p : prev) {
                if (p.branch == "trivial") continue;
                const double d = (s.u - p.u).lpNorm<Eigen::Infinity>();
                if (d < best) best = d, s.branch = p.branch;
            }
            if (best > 0.5 * std::max(1e-3, s.u.lpNorm<Eigen::Infinity>()))
                s.branch = "branch" + std::to_string(next_label++);
        }
        prev = pt.solutions;
        res.points.push_back(std::move(pt));
    }
    return res;
}

DistanceReport distance_to_equilibria(const PlateState& state, const std::vector<Field>& eqset,
                                      const PlateGrid& grid) {
    if (eqset.empty()) throw Error("distance_to_equilibria: empty equilibria set");
    check_shape(grid, state.u, "distance_to_equilibria(u)");
    check_shape(grid, state.v, "distance_to_equilibria(v)");
    DistanceReport r;
    r.distance = std::numeric_limits<double>::infinity();
    const double v2 = inner(grid, state.v, state.v);
    for (std::size_t k = 0; k < eqset.size(); ++k) {
        check_shape(grid, eqset[k], "distance_to_equilibria(member)");
        const Field d = state.u - eqset[k];
        const double dist = std::sqrt(std::max(0.0, lap_norm_sq(d, grid)) + inner(grid, d, d) + v2);
        if (dist < r.distance) r.distance = dist, r.index = static_cast<int>(k);
    }
    return r;
}

void write_equilibria_manifest(const std::string& dir, const ContinuationResult& res,
                               const ModelParams& params, const PlateGrid& grid) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json doc;
    doc["model"] = {{"U", params.U}, {"k", params.k}, {"b", params.b}, {"beta", params.beta},
                    {"flow_coupling", params.flow_coupling},
                    {"n_theta", params.quad.n_theta}, {"n_s", params.quad.n_s},
                    {"s_rule", to_string(params.quad.s_rule)}};
    doc["grid"] = {{"L1", grid.L1}, {"L2", grid.L2}, {"n1", grid.n1}, {"n2", grid.n2}};
    doc["sweep"] = to_string(res.param);
    nlohmann::json list = nlohmann::json::array();
    for (std::size_t p = 0; p < res.points.size(); ++p) {
        const auto& pt = res.points[p];
        for (std::size_t s = 0; s < pt.solutions.size(); ++s) {
            const auto& e = pt.solutions[s];
            const std::string name = "eq_" + std::to_string(p) + "_" + std::to_string(s) + ".txt";
            write_field((fs::path(dir) / name).string(), grid, e.u, 0.0);
            list.push_back({{"value", pt.value},
                            {"branch", e.branch},
                            {"residual", e.residual},
                            {"iterations", e.iterations},
                            {"u_norm", norm_l2(grid, e.u)},
                            {"lap_norm", lap_norm(e.u, grid)},
                            {"grad_norm_sq", grad_norm_sq(e.u, grid)},
                            {"field", name}});
        }
        if (pt.terminated) list.push_back({{"value", pt.value}, {"terminated", true}});
    }
    doc["equilibria"] = list;
    std::ofstream os(fs::path(dir) / "equilibria.json");
    if (!os) throw Error("cannot write equilibria manifest in '" + dir + "'");
    os << std::setw(2) << doc << '\n';
}

}  // namespace flutterlab
