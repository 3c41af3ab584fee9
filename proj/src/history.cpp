#include "flutterlab/history.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace flutterlab {

double drift_exit_time(const PlateGrid& g, double U, double theta) {
    const double dx = std::abs(drift_x(U, theta));
    const double dy = std::abs(drift_y(theta));
    const double inf = std::numeric_limits<double>::infinity();
    const double sx = dx > 0.0 ? g.L1 / dx : inf;
    const double sy = dy > 0.0 ? g.L2 / dy : inf;
    return std::min(sx, sy);
}

double compute_tstar(const PlateGrid& g, double U) {
    if (!(U >= 0.0) || U >= 1.0) {
        std::ostringstream os;
        os << "compute_tstar: Mach number must satisfy 0 <= U < 1 (got " << U << ")";
        throw Error(os.str());
    }
    constexpr int n = 4096;
    const double step = 2.0 * std::numbers::pi / n;
    std::vector<double> vals(n);
    for (int k = 0; k < n; ++k) vals[k] = drift_exit_time(g, U, k * step);

    // Golden-section refinement around every local maximum of the scan.
    double best = *std::max_element(vals.begin(), vals.end());
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int k = 0; k < n; ++k) {
        const double prev = vals[(k + n - 1) % n], next = vals[(k + 1) % n];
        if (vals[k] < prev || vals[k] < next) continue;
        double a = (k - 1) * step, b = (k + 1) * step;
        double c = b - gr * (b - a), d = a + gr * (b - a);
        double fc = drift_exit_time(g, U, c), fd = drift_exit_time(g, U, d);
        for (int it = 0; it < 80; ++it) {
            if (fc > fd) {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = drift_exit_time(g, U, c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = drift_exit_time(g, U, d);
            }
        }
        best = std::max({best, fc, fd});
    }
    return best;
}

DelayHistory::DelayHistory(double tstar, double dt) : tstar_(tstar), dt_(dt) {
    if (!(dt > 0.0)) throw Error("DelayHistory: dt must be positive");
    if (!(tstar >= 0.0)) throw Error("DelayHistory: t* must be nonnegative");
}

double DelayHistory::front_time() const {
    if (empty()) throw Error("DelayHistory: empty");
    return snaps_.front().t;
}

double DelayHistory::back_time() const {
    if (empty()) throw Error("DelayHistory: empty");
    return snaps_.back().t;
}

void DelayHistory::push(const PlateState& s) {
    if (s.u.size() != s.v.size()) throw Error("push_snapshot: u and v shapes differ");
    if (!empty()) {
        if (s.u.size() != snaps_.back().u.size())
            throw Error("push_snapshot: field size changed");
        const double expect = back_time() + dt_;
        if (std::abs(s.t - expect) > 1e-12 * dt_ + 4.0 * std::numeric_limits<double>::epsilon() *
                                                        std::abs(expect)) {
            std::ostringstream os;
            os << std::setprecision(17) << "push_snapshot: non-uniform time step (expected t = "
               << expect << ", got " << s.t << ")";
            throw Error(os.str());
        }
    }
    snaps_.push_back({s.t, s.u, s.v});
    const double cutoff = s.t - std::max(tstar_, retain_) - 2.0 * dt_;
    while (snaps_.size() > 1 && snaps_.front().t < cutoff - 1e-9 * dt_) snaps_.pop_front();
}

void DelayHistory::set_retention(double span) {
    if (!(span >= 0.0) || !std::isfinite(span)) throw Error("DelayHistory: retention must be >= 0");
    retain_ = span;
}

void DelayHistory::pop_back() {
    if (empty()) throw Error("DelayHistory::pop_back on empty history");
    snaps_.pop_back();
}

bool DelayHistory::mature_at(double t) const {
    if (empty()) return false;
    const double tol = 1e-9 * dt_;
    return front_time() <= t - tstar_ + tol && back_time() >= t - tol;
}

void DelayHistory::require_mature(double t, const char* who) const {
    if (!mature_at(t)) {
        std::ostringstream os;
        os << who << ": history immature at t = " << t << " (needs [" << t - tstar_ << ", " << t
           << "]";
        if (!empty()) os << ", holds [" << front_time() << ", " << back_time() << "]";
        os << ")";
        throw Error(os.str());
    }
}

Field DelayHistory::interp(double tau, bool velocity) const {
    if (empty()) throw Error("DelayHistory: query on empty history");
    const double tol = 1e-9 * dt_;
    const double t0 = front_time();
    if (tau < t0 - tol || tau > back_time() + tol) {
        std::ostringstream os;
        os << "DelayHistory: time " << tau << " outside stored window [" << t0 << ", "
           << back_time() << "]";
        throw Error(os.str());
    }
    const double pos = std::clamp((tau - t0) / dt_, 0.0, static_cast<double>(snaps_.size() - 1));
    std::size_t k = static_cast<std::size_t>(std::floor(pos));
    if (k + 1 >= snaps_.size()) k = snaps_.size() - 1;
    const double w = pos - static_cast<double>(k);
    const Field& a = velocity ? snaps_[k].v : snaps_[k].u;
    if (w <= 1e-12 || k + 1 >= snaps_.size()) return a;
    const Field& b = velocity ? snaps_[k + 1].v : snaps_[k + 1].u;
    if (w >= 1.0 - 1e-12) return b;
    return (1.0 - w) * a + w * b;
}

Field DelayHistory::u_at(double tau) const { return interp(tau, false); }
Field DelayHistory::v_at(double tau) const { return interp(tau, true); }

DelayHistory DelayHistory::frozen(const Field& u, double t0, double tstar, double dt) {
    DelayHistory h(tstar, dt);
    const int count = static_cast<int>(std::ceil(tstar / dt)) + 1;
    const Field zero = Field::Zero(u.size());
    for (int k = count; k >= 0; --k) h.push({u, zero, t0 - k * dt});
    return h;
}

void DelayHistory::dump(const std::string& dir, const PlateGrid& grid) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::ofstream index(fs::path(dir) / "index.txt");
    if (!index) throw Error("cannot write history index in '" + dir + "'");
    index << std::setprecision(17) << tstar_ << ' ' << dt_ << ' ' << snaps_.size() << '\n';
    for (std::size_t k = 0; k < snaps_.size(); ++k) {
        const std::string ub = "u_" + std::to_string(k) + ".txt";
        const std::string vb = "v_" + std::to_string(k) + ".txt";
        write_field((fs::path(dir) / ub).string(), grid, snaps_[k].u, snaps_[k].t);
        write_field((fs::path(dir) / vb).string(), grid, snaps_[k].v, snaps_[k].t);
        index << snaps_[k].t << ' ' << ub << ' ' << vb << '\n';
    }
}

DelayHistory DelayHistory::restore(const std::string& dir, double tstar, double dt) {
    namespace fs = std::filesystem;
    std::ifstream index(fs::path(dir) / "index.txt");
    if (!index) throw Error("cannot read history index in '" + dir + "'");
    double ts = 0, d = 0;
    std::size_t n = 0;
    index >> ts >> d >> n;
    DelayHistory h(tstar, dt);
    for (std::size_t k = 0; k < n; ++k) {
        double t;
        std::string ub, vb;
        if (!(index >> t >> ub >> vb)) throw Error("history index truncated");
        auto u = read_field((fs::path(dir) / ub).string());
        auto v = read_field((fs::path(dir) / vb).string());
        h.snaps_.push_back({t, std::move(u.values), std::move(v.values)});
    }
    return h;
}

std::vector<double> window_times(const DelayHistory& hist, double a, double b) {
    std::vector<double> ts{a};
    const double tol = 1e-9 * hist.dt();
    for (const auto& s : hist.snapshots())
        if (s.t > a + tol && s.t < b - tol) ts.push_back(s.t);
    ts.push_back(b);
    return ts;
}

DelayHistory push_snapshot(DelayHistory hist, const PlateState& state) {
    hist.push(state);
    return hist;
}

}  // namespace flutterlab
