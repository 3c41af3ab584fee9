#pragma once

#include "flutterlab/plate.hpp"

#include <deque>
#include <string>
#include <vector>

namespace flutterlab {

/// Drift direction d(U, theta) = (U + sin theta, cos theta) of the retarded footprint.
inline double drift_x(double U, double theta) { return U + std::sin(theta); }
inline double drift_y(double theta) { return std::cos(theta); }

/// Largest s for which (x, y) - s d(U, theta) stays in the rectangle for some (x, y).
double drift_exit_time(const PlateGrid& grid, double U, double theta);

/// Memory horizon t*: the time after which every drifted footprint has left Omega.
double compute_tstar(const PlateGrid& grid, double U);

/// Ring buffer of past plate states at uniform spacing dt.
class DelayHistory {
public:
    struct Snapshot {
        double t;
        Field u;
        Field v;
    };

    DelayHistory(double tstar, double dt);

    double tstar() const { return tstar_; }
    double dt() const { return dt_; }
    bool empty() const { return snaps_.empty(); }
    std::size_t size() const { return snaps_.size(); }
    double front_time() const;
    double back_time() const;
    double span() const { return empty() ? 0.0 : back_time() - front_time(); }
    const std::deque<Snapshot>& snapshots() const { return snaps_; }

    /// Append a state; its time must be back_time() + dt.  Evicts everything
    /// older than t - max(t*, retention) - 2 dt.
    void push(const PlateState& state);
    /// Keep at least `span` of history (flow reconstruction above the plate
    /// needs more than t*).
    void set_retention(double span);
    double retention() const { return retain_; }
    /// Remove the newest snapshot (used for provisional predictor heads).
    void pop_back();

    /// True when the snapshots cover [t - t*, t].
    bool mature_at(double t) const;
    void require_mature(double t, const char* who) const;

    /// Linear interpolation in time; throws outside the stored window.
    Field u_at(double tau) const;
    Field v_at(double tau) const;

    /// History filled with a constant field over [t0 - t* - dt, t0].
    static DelayHistory frozen(const Field& u, double t0, double tstar, double dt);

    /// Dump as one snapshot file per entry plus "index.txt" listing the times.
    void dump(const std::string& dir, const PlateGrid& grid) const;
    static DelayHistory restore(const std::string& dir, double tstar, double dt);

private:
    Field interp(double tau, bool velocity) const;

    double tstar_;
    double dt_;
    double retain_ = 0.0;
    std::deque<Snapshot> snaps_;
};

/// Quadrature nodes for [a, b]: the endpoints plus every snapshot time inside.
std::vector<double> window_times(const DelayHistory& hist, double a, double b);

/// Trapezoid rule over window_times for f(tau, u(tau)).
template <typename F>
double integrate_window(const DelayHistory& hist, double a, double b, F&& f) {
    const std::vector<double> ts = window_times(hist, a, b);
    double sum = 0.0, prev = f(ts[0], hist.u_at(ts[0]));
    for (std::size_t k = 1; k < ts.size(); ++k) {
        const double cur = f(ts[k], hist.u_at(ts[k]));
        sum += 0.5 * (ts[k] - ts[k - 1]) * (prev + cur);
        prev = cur;
    }
    return sum;
}

/// Functional form of push_snapshot.
DelayHistory push_snapshot(DelayHistory hist, const PlateState& state);

}  // namespace flutterlab
