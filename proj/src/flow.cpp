#include "flutterlab/flow.hpp"

#include "flutterlab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace flutterlab {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

// Last s in [lo, hi] with inside(s, theta) for some theta, by a theta scan, a
// downward s scan and bisection on the final transition.
template <typename Inside>
double last_inside(double lo, double hi, int n_theta, int n_s, Inside&& inside) {
    double best = lo;
    const double step = (hi - lo) / n_s;
    for (int k = 0; k < n_theta; ++k) {
        const double th = two_pi * k / n_theta;
        for (int m = n_s; m >= 0; --m) {
            const double s = lo + m * step;
            if (!inside(s, th)) continue;
            if (m == n_s) return hi;
            double a = s, b = s + step;
            for (int it = 0; it < 50; ++it) {
                const double c = 0.5 * (a + b);
                (inside(c, th) ? a : b) = c;
            }
            best = std::max(best, b);
            break;
        }
    }
    return best;
}

// Smallest s >= z with sqrt(s^2 - z^2) - U s >= R.
double escape_bound(double U, double z, double R) {
    auto f = [&](double s) { return std::sqrt(std::max(0.0, s * s - z * z)) - U * s - R; };
    double a = z, b = z + 1.0;
    while (f(b) < 0.0) b = z + 2.0 * (b - z);
    for (int it = 0; it < 200 && b - a > 1e-14 * b; ++it) {
        const double c = 0.5 * (a + b);
        (f(c) < 0.0 ? a : b) = c;
    }
    return b;
}

double radius(double s, double z) { return std::sqrt(std::max(0.0, s * s - z * z)); }

bool in_closure(const PlateGrid& g, double x, double y) {
    return x >= 0.0 && x <= g.L1 && y >= 0.0 && y <= g.L2;
}

// Exit time of the footprint of one point.
double point_exit(const PlateGrid& g, double U, const Point3& p) {
    const auto [x, y, z] = p;
    double R = 0.0;
    for (double cx : {0.0, g.L1})
        for (double cy : {0.0, g.L2}) R = std::max(R, std::hypot(x - cx, y - cy));
    const double hi = escape_bound(U, z, R);
    auto inside = [&](double s, double th) {
        const double r = radius(s, z);
        const double X = x - U * s - r * std::sin(th), Y = y - r * std::cos(th);
        return X > 0.0 && X < g.L1 && Y > 0.0 && Y < g.L2;
    };
    return last_inside(z, hi, 512, 256, inside) * (1.0 + 1e-9);
}

}  // namespace

double footprint_exit(const PlateGrid& grid, double U, double z) {
    if (!(z >= 0.0)) throw Error("footprint_exit: z must be >= 0");
    if (z == 0.0) return compute_tstar(grid, U);
    const double D = std::hypot(grid.L1, grid.L2);
    const double hi = escape_bound(U, z, D);
    auto inside = [&](double s, double th) {
        const double r = radius(s, z);
        return std::abs(U * s + r * std::sin(th)) < grid.L1 && std::abs(r * std::cos(th)) < grid.L2;
    };
    return last_inside(z, hi, 1024, 512, inside) * (1.0 + 1e-9);
}

FlowReconstructor::FlowReconstructor(const PlateGrid& grid, double U, QuadratureSpec quad)
    : grid_(grid), U_(U), tstar_(compute_tstar(grid, U)), quad_(quad) {
    quad_.validate();
}

double FlowReconstructor::horizon(double z) const { return footprint_exit(grid_, U_, z); }

double FlowReconstructor::exit_time(const Point3& p) const {
    if (!(p[2] >= 0.0)) throw Error("exit_time: point below the plate plane");
    if (p[2] == 0.0 && in_closure(grid_, p[0], p[1])) return tstar_;
    return point_exit(grid_, U_, p);
}

namespace {

// H = v + U u_x at every snapshot.
struct Bound {
    double t0 = 0.0, dt = 0.0;
    std::vector<Field> h;
};

Bound bind(const DelayHistory& hist, double U, const PlateGrid& g) {
    Bound b;
    b.t0 = hist.front_time();
    b.dt = hist.dt();
    for (const auto& s : hist.snapshots()) {
        check_shape(g, s.u, "flow reconstruction (history u)");
        check_shape(g, s.v, "flow reconstruction (history v)");
        b.h.push_back(s.v + U * apply_operator(OperatorKind::dx, s.u, g));
    }
    return b;
}

// Bilinear read of the zero-extended nodal field at (X, Y).
double bilinear(const PlateGrid& g, const Field& f, double X, double Y) {
    const double fx = X / g.h1 - 1.0, fy = Y / g.h2 - 1.0;
    const double ffx = std::floor(fx), ffy = std::floor(fy);
    if (ffx < -2.0 || ffy < -2.0 || ffx > g.n1 || ffy > g.n2) return 0.0;
    const int i = static_cast<int>(ffx), j = static_cast<int>(ffy);
    const double a = fx - i, b = fy - j;
    auto at = [&](int ii, int jj) {
        return (ii < 0 || jj < 0 || ii >= g.n1 || jj >= g.n2) ? 0.0 : f[g.index(ii, jj)];
    };
    return (1 - a) * (1 - b) * at(i, j) + a * (1 - b) * at(i + 1, j) + (1 - a) * b * at(i, j + 1) +
           a * b * at(i + 1, j + 1);
}

// Gradient of the bilinear interpolant at (X, Y).
std::array<double, 2> bilinear_grad(const PlateGrid& g, const Field& f, double X, double Y) {
    const double fx = X / g.h1 - 1.0, fy = Y / g.h2 - 1.0;
    const double ffx = std::floor(fx), ffy = std::floor(fy);
    if (ffx < -2.0 || ffy < -2.0 || ffx > g.n1 || ffy > g.n2) return {0.0, 0.0};
    const int i = static_cast<int>(ffx), j = static_cast<int>(ffy);
    const double a = fx - i, b = fy - j;
    auto at = [&](int ii, int jj) {
        return (ii < 0 || jj < 0 || ii >= g.n1 || jj >= g.n2) ? 0.0 : f[g.index(ii, jj)];
    };
    const double f00 = at(i, j), f10 = at(i + 1, j), f01 = at(i, j + 1), f11 = at(i + 1, j + 1);
    return {((1 - b) * (f10 - f00) + b * (f11 - f01)) / g.h1,
            ((1 - a) * (f01 - f00) + a * (f11 - f10)) / g.h2};
}

std::array<double, 2> read_grad(const PlateGrid& g, const Bound& b, double X, double Y,
                                double tau) {
    if (X <= -g.h1 || Y <= -g.h2 || X >= g.L1 + g.h1 || Y >= g.L2 + g.h2) return {0.0, 0.0};
    const double last = static_cast<double>(b.h.size() - 1);
    const double pos = std::clamp((tau - b.t0) / b.dt, 0.0, last);
    std::size_t j = static_cast<std::size_t>(std::floor(pos));
    double w = pos - static_cast<double>(j);
    if (j + 1 >= b.h.size()) j = b.h.size() - 1, w = 0.0;
    auto out = bilinear_grad(g, b.h[j], X, Y);
    if (w > 0.0) {
        const auto nx = bilinear_grad(g, b.h[j + 1], X, Y);
        out[0] = (1.0 - w) * out[0] + w * nx[0];
        out[1] = (1.0 - w) * out[1] + w * nx[1];
    }
    return out;
}

// Read H at (X, Y) and time tau, linear in time between snapshots.
double read(const PlateGrid& g, const Bound& b, double X, double Y, double tau) {
    const std::vector<Field>& f = b.h;
    if (X <= -g.h1 || Y <= -g.h2 || X >= g.L1 + g.h1 || Y >= g.L2 + g.h2) return 0.0;
    const double last = static_cast<double>(f.size() - 1);
    const double pos = std::clamp((tau - b.t0) / b.dt, 0.0, last);
    std::size_t j = static_cast<std::size_t>(std::floor(pos));
    double w = pos - static_cast<double>(j);
    if (j + 1 >= f.size()) j = f.size() - 1, w = 0.0;
    double out = (1.0 - w) * bilinear(g, f[j], X, Y);
    if (w > 0.0) out += w * bilinear(g, f[j + 1], X, Y);
    return out;
}

struct SNode {
    double s, r, w_ds, w_sr;  // position, radius, weight for ds, weight for (s/r) ds
};

// Trapezoid nodes in sigma with s = z cosh(sigma) on [z, S], z > 0.
std::vector<SNode> sigma_nodes(double z, double S, int n) {
    std::vector<SNode> out;
    if (S <= z) return out;
    const double smax = std::acosh(S / z), h = smax / n;
    for (int m = 0; m <= n; ++m) {
        const double sg = m * h, w = (m == 0 || m == n) ? 0.5 * h : h;
        const double s = z * std::cosh(sg), r = z * std::sinh(sg);
        out.push_back({s, r, w * r, w * s});
    }
    return out;
}

// Parameters in (a, b) where x0 - d s crosses a line x = (i + 1) h.
void line_crossings(double x0, double d, double h, double a, double b, std::vector<double>& out) {
    if (d == 0.0) return;
    const double xa = x0 - d * a, xb = x0 - d * b;
    const double lo = std::min(xa, xb), hi = std::max(xa, xb);
    for (double k = std::ceil(lo / h); k * h <= hi; k += 1.0) {
        const double s = (x0 - k * h) / d;
        if (s > a && s < b) out.push_back(s);
    }
}

// z = 0: the footprint is the ray (x, y) - s (U + sin th, cos th).  Pieces
// between grid-line crossings and snapshot times carry a bilinear-in-space,
// linear-in-time integrand, so two-point Gauss per piece is exact for H and
// its interpolant gradient.
void ray_nodes(const PlateGrid& g, const Bound& b, double x, double y, double U, double th,
               double t, double S, std::vector<double>& br, std::vector<SNode>& out) {
    out.clear();
    br.assign({0.0, S});
    line_crossings(x, U + std::sin(th), g.h1, 0.0, S, br);
    line_crossings(y, std::cos(th), g.h2, 0.0, S, br);
    // Snapshot times t - s = t0 + k dt.
    for (double k = std::ceil((t - S - b.t0) / b.dt); b.t0 + k * b.dt < t; k += 1.0) {
        const double s = t - b.t0 - k * b.dt;
        if (s > 0.0 && s < S) br.push_back(s);
    }
    std::sort(br.begin(), br.end());
    const double gp = 0.5 / std::sqrt(3.0);
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double piece = br[i + 1] - br[i];
        if (piece <= 1e-14 * S) continue;
        for (double xi : {-gp, gp}) {
            const double s = 0.5 * (br[i] + br[i + 1]) + xi * piece;
            out.push_back({s, s, 0.5 * piece, 0.5 * piece});
        }
    }
}

}  // namespace

void FlowReconstructor::check(const DelayHistory& hist, const Point3& p, double t,
                              const char* who) const {
    if (!(p[2] >= 0.0)) {
        std::ostringstream os;
        os << who << ": point below the plate plane (z = " << p[2] << ")";
        throw Error(os.str());
    }
    if (hist.empty()) throw Error(std::string(who) + ": empty history");
    (void)t;
}

namespace {

double exit_for(const FlowReconstructor& rec, const Point3& p) { return rec.exit_time(p); }

void require_span(const DelayHistory& hist, double t, double S, const char* who) {
    const double tol = 1e-9 * hist.dt();
    if (hist.front_time() > t - S + tol || hist.back_time() < t - tol) {
        std::ostringstream os;
        os << who << ": history holds [" << hist.front_time() << ", " << hist.back_time()
           << "], needs [" << t - S << ", " << t << "]";
        throw Error(os.str());
    }
}

double phi_bound(const FlowReconstructor& rec, const Bound& b, const DelayHistory& hist,
                 const Point3& p, double t, double S) {
    const auto [x, y, z] = p;
    if (t - z < 0.0 || S <= z) return 0.0;
    require_span(hist, t, S, "eval_phi");
    const PlateGrid& g = rec.grid();
    const double U = rec.U();
    const int nt = rec.quad().n_theta;
    std::vector<SNode> nodes = z > 0.0 ? sigma_nodes(z, S, rec.quad().n_s) : std::vector<SNode>{};
    std::vector<double> br;
    double sum = 0.0;
    for (int k = 0; k < nt; ++k) {
        const double th = two_pi * k / nt, sn = std::sin(th), cs = std::cos(th);
        if (z == 0.0) ray_nodes(g, b, x, y, U, th, t, S, br, nodes);
        for (const SNode& n : nodes)
            sum += n.w_ds * read(g, b, x - U * n.s - n.r * sn, y - n.r * cs, t - n.s);
    }
    return -sum / nt;
}

double phi_t_bound(const FlowReconstructor& rec, const Bound& b, const DelayHistory& hist,
                   const Point3& p, double t, double S) {
    const auto [x, y, z] = p;
    if (t - z < 0.0 || S <= z) return 0.0;
    require_span(hist, t, S, "eval_phi_t");
    const PlateGrid& g = rec.grid();
    const double U = rec.U();
    const int nt = rec.quad().n_theta;
    std::vector<SNode> nodes = z > 0.0 ? sigma_nodes(z, S, rec.quad().n_s) : std::vector<SNode>{};
    std::vector<double> br;
    // Endpoint terms at s = S and s = z (where the footprint is one point),
    // then the drift integrals U int H_x and int (s/r) M_theta H.
    const double rS = radius(S, z);
    double end = 0.0, drift = 0.0;
    for (int k = 0; k < nt; ++k) {
        const double th = two_pi * k / nt, sn = std::sin(th), cs = std::cos(th);
        end += read(g, b, x - U * S - rS * sn, y - rS * cs, t - S);
        if (z == 0.0) ray_nodes(g, b, x, y, U, th, t, S, br, nodes);
        for (const SNode& n : nodes) {
            const auto gr = read_grad(g, b, x - U * n.s - n.r * sn, y - n.r * cs, t - n.s);
            drift += U * n.w_ds * gr[0] + n.w_sr * (sn * gr[0] + cs * gr[1]);
        }
    }
    return (end + drift) / nt - read(g, b, x - U * z, y, t - z);
}

}  // namespace

double FlowReconstructor::phi(const DelayHistory& hist, const Point3& p, double t) const {
    check(hist, p, t, "eval_phi");
    const Bound b = bind(hist, U_, grid_);
    return phi_bound(*this, b, hist, p, t, exit_for(*this, p));
}

double FlowReconstructor::phi_t(const DelayHistory& hist, const Point3& p, double t) const {
    check(hist, p, t, "eval_phi_t");
    const Bound b = bind(hist, U_, grid_);
    return phi_t_bound(*this, b, hist, p, t, exit_for(*this, p));
}

double eval_phi(const DelayHistory& hist, const Point3& p, double t, double U,
                const QuadratureSpec& quad, const PlateGrid& grid) {
    return FlowReconstructor(grid, U, quad).phi(hist, p, t);
}

double eval_phi_t(const DelayHistory& hist, const Point3& p, double t, double U,
                  const QuadratureSpec& quad, const PlateGrid& grid) {
    return FlowReconstructor(grid, U, quad).phi_t(hist, p, t);
}

TraceCheck trace_identity_check(const DelayHistory& hist, double t, double U,
                                const QuadratureSpec& quad, const PlateGrid& grid) {
    const FlowReconstructor rec(grid, U, quad);
    const Bound b = bind(hist, U, grid);
    const double ts = rec.tstar();
    TraceCheck r;
    r.lhs = grid.zeros();
    for (int j = 0; j < grid.n2; ++j)
        for (int i = 0; i < grid.n1; ++i) {
            const double x = grid.x(i), y = grid.y(j);
            double v = phi_t_bound(rec, b, hist, {x, y, 0.0}, t, ts);
            if (U != 0.0) {
                const double fp = phi_bound(rec, b, hist, {x + grid.h1, y, 0.0}, t, ts);
                const double fm = phi_bound(rec, b, hist, {x - grid.h1, y, 0.0}, t, ts);
                v += U * (fp - fm) / (2.0 * grid.h1);
            }
            r.lhs[grid.index(i, j)] = v;
        }
    const Field u = hist.u_at(t), ut = hist.v_at(t);
    const Field q = DelayOperator(grid, U, quad).eval_q(hist, t);
    r.rhs = -(ut + U * apply_operator(OperatorKind::dx, u, grid)) - q;
    r.residual = r.lhs - r.rhs;
    const double rn = norm_l2(grid, r.rhs), en = norm_l2(grid, r.residual);
    if (rn == 0.0 && en == 0.0)
        r.degenerate = true;
    else
        r.relative = en / (rn + std::numeric_limits<double>::epsilon());
    return r;
}

void LocalEnergyBall::validate() const {
    if (!(rho > 0.0)) throw Error("local energy ball: rho must be positive");
    if (n < 5 || n % 2 == 0) throw Error("local energy ball: n must be odd and >= 5");
}

Point3 LocalEnergyBall::point(int i, int j, int k) const {
    const double h = spacing();
    return {-rho + i * h, -rho + j * h, k * h};
}

FlowSampleSet sample_flow(const FlowReconstructor& rec, const DelayHistory& hist, double t,
                          const std::vector<Point3>& points) {
    const Bound b = bind(hist, rec.U(), rec.grid());
    FlowSampleSet s;
    s.t = t;
    s.points = points;
    for (const Point3& p : points) {
        if (!(p[2] >= 0.0)) throw Error("sample_flow: point below the plate plane");
        const double S = exit_for(rec, p);
        s.values.push_back(phi_bound(rec, b, hist, p, t, S));
        s.dvalues.push_back(phi_t_bound(rec, b, hist, p, t, S));
    }
    return s;
}

FlowSampleSet sample_ball(const FlowReconstructor& rec, const DelayHistory& hist, double t,
                          const LocalEnergyBall& ball) {
    ball.validate();
    std::vector<Point3> pts;
    for (int k = 0; k < ball.nz(); ++k)
        for (int j = 0; j < ball.n; ++j)
            for (int i = 0; i < ball.n; ++i) pts.push_back(ball.point(i, j, k));
    return sample_flow(rec, hist, t, pts);
}

double local_flow_energy(const FlowSampleSet& s, const LocalEnergyBall& ball) {
    ball.validate();
    const int n = ball.n, nz = ball.nz();
    const std::size_t count = std::size_t(n) * n * nz;
    if (s.values.size() != count || s.dvalues.size() != count)
        throw Error("local_flow_energy: samples do not cover the ball grid");
    const double h = ball.spacing();
    auto idx = [&](int i, int j, int k) { return (std::size_t(k) * n + j) * n + i; };
    auto diff = [&](int i, int j, int k, int axis) {
        int lo[3] = {i, j, k}, hi[3] = {i, j, k};
        const int top = axis == 2 ? nz - 1 : n - 1;
        lo[axis] = std::max(0, lo[axis] - 1);
        hi[axis] = std::min(top, hi[axis] + 1);
        return (s.values[idx(hi[0], hi[1], hi[2])] - s.values[idx(lo[0], lo[1], lo[2])]) /
               ((hi[axis] - lo[axis]) * h);
    };
    // Each node owns its dual cell clipped to z >= 0; the fraction inside the
    // ball comes from 4^3 sub-samples.
    constexpr int sub = 4;
    double total = 0.0;
    for (int k = 0; k < nz; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Point3 c = ball.point(i, j, k);
                const double zlo = k == 0 ? 0.0 : c[2] - 0.5 * h;
                const double zhi = c[2] + 0.5 * h;
                int in = 0;
                for (int a = 0; a < sub; ++a)
                    for (int bb = 0; bb < sub; ++bb)
                        for (int cc = 0; cc < sub; ++cc) {
                            const double X = c[0] + ((a + 0.5) / sub - 0.5) * h;
                            const double Y = c[1] + ((bb + 0.5) / sub - 0.5) * h;
                            const double Z = zlo + (cc + 0.5) / sub * (zhi - zlo);
                            if (X * X + Y * Y + Z * Z <= ball.rho * ball.rho) ++in;
                        }
                if (in == 0) continue;
                const double vol = h * h * (zhi - zlo) * in / (sub * sub * sub);
                const double gx = diff(i, j, k, 0), gy = diff(i, j, k, 1), gz = diff(i, j, k, 2);
                const double pt = s.dvalues[idx(i, j, k)];
                total += vol * (gx * gx + gy * gy + gz * gz + pt * pt);
            }
    return total;
}

double interaction_energy(const Field& u, const Field& phi_trace, double U,
                          const PlateGrid& grid) {
    check_shape(grid, u, "interaction_energy(u)");
    check_shape(grid, phi_trace, "interaction_energy(phi)");
    if (U == 0.0) return 0.0;
    return 2.0 * U * inner(grid, phi_trace, apply_operator(OperatorKind::dx, u, grid));
}

void write_flow_dump(const std::string& path, const FlowSampleSet& s, double U,
                     const QuadratureSpec& quad, const std::string& comment) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) os << "# " << line << '\n';
    os << std::setprecision(17);
    os << "# t " << s.t << " U " << U << " n_theta " << quad.n_theta << " n_s " << quad.n_s
       << " s_rule " << to_string(quad.s_rule) << '\n';
    os << "# x y z phi phi_t\n";
    for (std::size_t k = 0; k < s.points.size(); ++k)
        os << s.points[k][0] << ' ' << s.points[k][1] << ' ' << s.points[k][2] << ' '
           << s.values[k] << ' ' << s.dvalues[k] << '\n';
}

std::vector<Point3> read_points(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open points file '" + path + "'");
    std::vector<Point3> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        Point3 p;
        if (!(ls >> p[0])) continue;
        if (!(ls >> p[1] >> p[2])) {
            std::ostringstream os;
            os << path << ":" << lineno << ": expected three coordinates";
            throw Error(os.str());
        }
        if (p[2] < 0.0) {
            std::ostringstream os;
            os << path << ":" << lineno << ": z must be >= 0";
            throw Error(os.str());
        }
        pts.push_back(p);
    }
    return pts;
}

}  // namespace flutterlab
