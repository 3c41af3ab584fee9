#include "flutterlab/delay.hpp"

#include "flutterlab/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace flutterlab {

std::string to_string(SRule rule) { return rule == SRule::segment ? "segment" : "trapezoid"; }

SRule parse_s_rule(const std::string& name) {
    if (name == "trapezoid") return SRule::trapezoid;
    if (name == "segment") return SRule::segment;
    throw Error("unknown s-rule '" + name + "' (expected trapezoid or segment)");
}

void QuadratureSpec::validate() const {
    if (n_theta < 16 || n_theta % 2 != 0) {
        std::ostringstream os;
        os << "quadrature: n_theta must be even and >= 16 (got " << n_theta << ")";
        throw Error(os.str());
    }
    if (n_s < 8) {
        std::ostringstream os;
        os << "quadrature: n_s must be >= 8 (got " << n_s << ")";
        throw Error(os.str());
    }
}

namespace {

using Tap = DelayOperator::Tap;

// Dense accumulator over every offset that can reach the grid.
class TapGrid {
public:
    explicit TapGrid(const PlateGrid& g)
        : n1_(g.n1), n2_(g.n2), w_(3 * std::size_t(2 * g.n1 - 1) * (2 * g.n2 - 1), 0.0) {}

    void add(int ox, int oy, double w, const double* trig) {
        if (w == 0.0 || std::abs(ox) >= n1_ || std::abs(oy) >= n2_) return;
        double* p = &w_[3 * (std::size_t(oy + n2_ - 1) * (2 * n1_ - 1) + (ox + n1_ - 1))];
        p[0] += w * trig[0];
        p[1] += w * trig[1];
        p[2] += w * trig[2];
    }

    // Nonzero taps; resets the accumulator.
    std::vector<Tap> take() {
        std::vector<Tap> out;
        const int w1 = 2 * n1_ - 1;
        for (int oy = -(n2_ - 1); oy < n2_; ++oy)
            for (int ox = -(n1_ - 1); ox < n1_; ++ox) {
                double* p = &w_[3 * (std::size_t(oy + n2_ - 1) * w1 + (ox + n1_ - 1))];
                if (p[0] != 0.0 || p[1] != 0.0 || p[2] != 0.0)
                    out.push_back({ox, oy, p[0], p[1], p[2]});
                p[0] = p[1] = p[2] = 0.0;
            }
        return out;
    }

private:
    int n1_, n2_;
    std::vector<double> w_;
};

struct Direction {
    double trig[3];  // sin^2, 2 sin cos, cos^2
    double dx, dy;   // drift vector
};

Direction direction(double theta, double U) {
    const double sn = std::sin(theta), cs = std::cos(theta);
    return {{sn * sn, 2.0 * sn * cs, cs * cs}, U + sn, cs};
}

// Bilinear interpolant of the zero-extended field read at node - s d.
// Offsets are in index space.
void value_taps(const PlateGrid& g, const Direction& d, double s, double w, TapGrid& out) {
    const double ax = -s * d.dx / g.h1, ay = -s * d.dy / g.h2;
    const int o = static_cast<int>(std::floor(ax)), p = static_cast<int>(std::floor(ay));
    const double f = ax - o, q = ay - p;
    out.add(o, p, (1.0 - f) * (1.0 - q) * w, d.trig);
    out.add(o + 1, p, f * (1.0 - q) * w, d.trig);
    out.add(o, p + 1, (1.0 - f) * q * w, d.trig);
    out.add(o + 1, p + 1, f * q * w, d.trig);
}

void gradient_cell(const PlateGrid& g, const Direction& d, int o, int p, double f, double q,
                   double w, TapGrid& out) {
    const double cx = d.dx / g.h1, cy = d.dy / g.h2;
    out.add(o, p, (-cx * (1.0 - q) - cy * (1.0 - f)) * w, d.trig);
    out.add(o + 1, p, (cx * (1.0 - q) - cy * f) * w, d.trig);
    out.add(o, p + 1, (-cx * q + cy * (1.0 - f)) * w, d.trig);
    out.add(o + 1, p + 1, (cx * q + cy * f) * w, d.trig);
}

// d . grad of the same interpolant.  On a cell edge the two one-sided cells
// are averaged.
void gradient_taps(const PlateGrid& g, const Direction& d, double s, double w, TapGrid& out) {
    const double ax = -s * d.dx / g.h1, ay = -s * d.dy / g.h2;
    int o = static_cast<int>(std::floor(ax)), p = static_cast<int>(std::floor(ay));
    double f = ax - o, q = ay - p;
    if (f > 1.0 - 1e-12) ++o, f = 0.0;
    if (q > 1.0 - 1e-12) ++p, q = 0.0;
    const bool ex = f < 1e-12, ey = q < 1e-12;
    const int nx = ex ? 2 : 1, ny = ey ? 2 : 1;
    const double share = w / (nx * ny);
    for (int a = 0; a < nx; ++a)
        for (int b = 0; b < ny; ++b)
            gradient_cell(g, d, a ? o - 1 : o, b ? p - 1 : p, a ? 1.0 : (ex ? 0.0 : f),
                          b ? 1.0 : (ey ? 0.0 : q), share, out);
}

// Grid-line crossings of the drift ray strictly inside (a, b).
void crossings(double speed, double h, double a, double b, std::vector<double>& out) {
    const double v = std::abs(speed);
    if (v < 1e-14) return;
    const double step = h / v;
    for (double c = std::floor(a / step) + 1.0; c * step < b; c += 1.0)
        if (c * step > a) out.push_back(c * step);
}

}  // namespace

void apply_tap(const DelayOperator::Tap& tap, const Hessian& h, const PlateGrid& g, double* out) {
    const int n1 = g.n1, n2 = g.n2;
    const int i0 = std::max(0, -tap.ox), i1 = std::min(n1, n1 - tap.ox);
    const int j0 = std::max(0, -tap.oy), j1 = std::min(n2, n2 - tap.oy);
    if (i0 >= i1 || j0 >= j1) return;
    const double* xx = h.xx.data();
    const double* xy = h.xy.data();
    const double* yy = h.yy.data();
    const int shift = tap.oy * n1 + tap.ox;
    for (int j = j0; j < j1; ++j) {
        const int row = j * n1;
        double* o = out + row;
        const double* a = xx + row + shift;
        const double* b = xy + row + shift;
        const double* c = yy + row + shift;
        for (int i = i0; i < i1; ++i) o[i] += tap.wxx * a[i] + tap.wxy * b[i] + tap.wyy * c[i];
    }
}

DelayOperator::DelayOperator(const PlateGrid& grid, double U, QuadratureSpec quad)
    : grid_(grid), U_(U), tstar_(compute_tstar(grid, U)), quad_(quad) {
    quad_.validate();
    std::vector<double> sigma;
    for (int m = 0; m <= quad_.n_s; ++m) sigma.push_back(tstar_ * m / quad_.n_s);
    TapGrid sum(grid_);
    const double one[3] = {1.0, 1.0, 1.0};
    for (const Group& grp : build_kernel(Kind::value, sigma))
        for (const Tap& t : grp.taps) {
            const double w[3] = {t.wxx, t.wxy, t.wyy};
            for (int c = 0; c < 3; ++c) {
                double unit[3] = {0, 0, 0};
                unit[c] = one[c];
                sum.add(t.ox, t.oy, w[c], unit);
            }
        }
    frozen_ = sum.take();
}

std::vector<double> DelayOperator::time_nodes(const DelayHistory& hist, double t) const {
    std::vector<double> sigma;
    if (quad_.s_rule == SRule::trapezoid) {
        for (int m = 0; m <= quad_.n_s; ++m) sigma.push_back(tstar_ * m / quad_.n_s);
        return sigma;
    }
    const double tol = 1e-9 * hist.dt();
    sigma.push_back(0.0);
    const double base = t - hist.back_time();
    for (std::size_t l = 0; l < hist.size(); ++l) {
        const double s = base + static_cast<double>(l) * hist.dt();
        if (s > tol && s < tstar_ - tol) sigma.push_back(s);
    }
    sigma.push_back(tstar_);
    return sigma;
}

DelayOperator::Kernel DelayOperator::build_kernel(Kind kind,
                                                  const std::vector<double>& sigma) const {
    // The history is linear in s between consecutive time nodes and the
    // bilinear interpolant is quadratic between grid-line crossings, so
    // two-point Gauss on the pieces integrates each hat function exactly.
    const int nt = quad_.n_theta;
    const double wt = 1.0 / nt;  // (1/2pi) * (2pi/n_theta)
    std::vector<Direction> dirs;
    for (int k = 0; k < nt; ++k) dirs.push_back(direction(2.0 * std::numbers::pi * k / nt, U_));

    const std::size_t nodes = sigma.size();
    Kernel out(nodes);
    for (std::size_t m = 0; m < nodes; ++m) out[m].sigma = sigma[m];
    if (tstar_ <= 0.0 || nodes < 2) return out;

    TapGrid cur(grid_), next(grid_);
    if (kind == Kind::derivative)
        for (const Direction& d : dirs) value_taps(grid_, d, 0.0, wt, cur);

    const double gp = 0.5 / std::sqrt(3.0);
    std::vector<double> br;
    for (std::size_t k = 0; k + 1 < nodes; ++k) {
        const double a = sigma[k], b = sigma[k + 1], len = b - a;
        for (const Direction& d : dirs) {
            br.assign({a, b});
            crossings(d.dx, grid_.h1, a, b, br);
            crossings(d.dy, grid_.h2, a, b, br);
            std::sort(br.begin(), br.end());
            for (std::size_t i = 0; i + 1 < br.size(); ++i) {
                const double p = br[i], q = br[i + 1], piece = q - p;
                if (piece <= 1e-14 * len) continue;
                for (double x : {-gp, gp}) {
                    const double s = 0.5 * (p + q) + x * piece;
                    const double lam = (s - a) / len;
                    const double w = 0.5 * piece * wt;
                    if (kind == Kind::value) {
                        value_taps(grid_, d, s, (1.0 - lam) * w, cur);
                        value_taps(grid_, d, s, lam * w, next);
                    } else {
                        gradient_taps(grid_, d, s, -(1.0 - lam) * w, cur);
                        gradient_taps(grid_, d, s, -lam * w, next);
                    }
                }
            }
        }
        out[k].taps = cur.take();
        std::swap(cur, next);
    }
    if (kind == Kind::derivative)
        for (const Direction& d : dirs) value_taps(grid_, d, tstar_, -wt, cur);
    out[nodes - 1].taps = cur.take();
    return out;
}

std::shared_ptr<const DelayOperator::Kernel> DelayOperator::kernel(Kind kind,
                                                                   const DelayHistory& hist,
                                                                   double t) const {
    long long phase = 0;
    double dt = 0.0;
    if (quad_.s_rule == SRule::segment) {
        phase = std::llround((hist.back_time() - t) / hist.dt() * 1e9);
        dt = hist.dt();
    }
    const auto key = std::make_tuple(static_cast<int>(kind), phase, dt);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (cache_.size() >= 32) cache_.clear();
    auto k = std::make_shared<const Kernel>(build_kernel(kind, time_nodes(hist, t)));
    cache_.emplace(key, k);
    return k;
}

Field DelayOperator::apply_kernel(const Kernel& k, const DelayHistory& hist, double t,
                                  Part part) const {
    Field out = grid_.zeros();
    const auto& snaps = hist.snapshots();
    const int last = static_cast<int>(snaps.size()) - 1;
    const double t0 = hist.front_time(), dt = hist.dt();
    Field field(grid_.size());
    for (const Group& grp : k) {
        if (grp.taps.empty()) continue;
        // Linear interpolation of the history at t - sigma.
        double pos = std::clamp((t - grp.sigma - t0) / dt, 0.0, static_cast<double>(last));
        int j = static_cast<int>(std::floor(pos));
        double w = pos - j;
        if (w > 1.0 - 1e-9) ++j, w = 0.0;
        if (w < 1e-9 || j >= last) w = 0.0;
        const std::pair<int, double> terms[2] = {{std::min(j, last), 1.0 - w}, {j + 1, w}};
        field.setZero();
        bool any = false;
        for (const auto& [idx, c] : terms) {
            if (c == 0.0) continue;
            if (part == Part::newest && idx != last) continue;
            if (part == Part::older && idx == last) continue;
            const Field& u = snaps[idx].u;
            if (u.size() != grid_.size()) throw Error("history field does not match the grid");
            field += c * u;
            any = true;
        }
        if (!any || field.isZero(0.0)) continue;
        const Hessian h = hessian(field, grid_);
        for (const Tap& tap : grp.taps) apply_tap(tap, h, grid_, out.data());
    }
    return out;
}

namespace {

void require_window(const DelayHistory& hist, double t, double tstar, const char* who) {
    hist.require_mature(t, who);
    if (hist.front_time() > t - tstar + 1e-9 * hist.dt()) {
        std::ostringstream os;
        os << who << ": history starts at " << hist.front_time() << ", needs " << t - tstar;
        throw Error(os.str());
    }
}

}  // namespace

Field DelayOperator::eval_q(const DelayHistory& hist, double t, Part part) const {
    require_window(hist, t, tstar_, "eval_q");
    return apply_kernel(*kernel(Kind::value, hist, t), hist, t, part);
}

Field DelayOperator::eval_q_dt(const DelayHistory& hist, double t) const {
    require_window(hist, t, tstar_, "eval_q_dt");
    return apply_kernel(*kernel(Kind::derivative, hist, t), hist, t, Part::all);
}

Field DelayOperator::apply_frozen(const Field& u) const {
    check_shape(grid_, u, "apply_frozen");
    Field out = grid_.zeros();
    const Hessian h = hessian(u, grid_);
    for (const Tap& tap : frozen_) apply_tap(tap, h, grid_, out.data());
    return out;
}

Eigen::MatrixXd DelayOperator::assemble_frozen() const {
    // Q = Sxx Dxx + Sxy Dxy + Syy Dyy with S the dense shift sums of the taps.
    const int n = grid_.size();
    Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd sxy = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd syy = Eigen::MatrixXd::Zero(n, n);
    for (const Tap& tap : frozen_) {
        const int i0 = std::max(0, -tap.ox), i1 = std::min(grid_.n1, grid_.n1 - tap.ox);
        const int j0 = std::max(0, -tap.oy), j1 = std::min(grid_.n2, grid_.n2 - tap.oy);
        for (int j = j0; j < j1; ++j)
            for (int i = i0; i < i1; ++i) {
                const int r = grid_.index(i, j), c = grid_.index(i + tap.ox, j + tap.oy);
                sxx(r, c) += tap.wxx;
                sxy(r, c) += tap.wxy;
                syy(r, c) += tap.wyy;
            }
    }
    Eigen::MatrixXd q = sxx * assemble_operator(OperatorKind::dxx, grid_);
    q += sxy * assemble_operator(OperatorKind::dxy, grid_);
    q += syy * assemble_operator(OperatorKind::dyy, grid_);
    return q;
}

Field eval_q(const DelayHistory& hist, double t, double U, const QuadratureSpec& quad,
             const PlateGrid& grid) {
    return DelayOperator(grid, U, quad).eval_q(hist, t);
}

Field eval_q_dt(const DelayHistory& hist, double t, double U, const QuadratureSpec& quad,
                const PlateGrid& grid) {
    return DelayOperator(grid, U, quad).eval_q_dt(hist, t);
}

namespace {

BoundRatio make_ratio(double lhs, double rhs) {
    BoundRatio r{lhs, rhs, 0.0, false};
    if (lhs == 0.0 && rhs == 0.0)
        r.degenerate = true;
    else
        r.ratio = rhs > 0.0 ? lhs / rhs : std::numeric_limits<double>::infinity();
    return r;
}

}  // namespace

DelayBoundReport delay_bound_ratios(const DelayHistory& hist, double t, double U,
                                    const PlateGrid& grid, const QuadratureSpec& quad) {
    const DelayOperator op(grid, U, quad);
    hist.require_mature(t, "delay_bound_ratios");
    const double ts = op.tstar();
    auto lap = [&](double, const Field& u) { return lap_norm(u, grid); };
    auto h3 = [&](double, const Field& u) { return grad_lap_norm(u, grid); };
    DelayBoundReport r;
    r.q = make_ratio(norm_l2(grid, op.eval_q(hist, t)),
                     ts * integrate_window(hist, t - ts, t, lap));
    const double rhs = ts * (lap_norm(hist.u_at(t), grid) + lap_norm(hist.u_at(t - ts), grid) +
                             integrate_window(hist, t - ts, t, h3));
    r.q_dt = make_ratio(norm_l2(grid, op.eval_q_dt(hist, t)), rhs);
    return r;
}

}  // namespace flutterlab
