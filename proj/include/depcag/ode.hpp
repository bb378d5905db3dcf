#pragma once

#include "depcag/types.hpp"

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace depcag {

struct OdeOptions {
    double abs_tol = 1e-13;
    double rel_tol = 1e-13;
    double initial_step = 1e-2;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 200000;
};

/// Accepted step: time, state and right-hand side at that state.
struct OdeSample {
    double t;
    Vector y;
    Vector dy;
};

/// Integrates y' = rhs(t, y) from t0 to t1 (either direction) with the
/// Runge-Kutta-Fehlberg 7(8) controlled stepper, hitting t1 exactly.
/// `observer`, if set, sees every accepted step including both ends.
template <class Rhs>
Vector integrate_to(Rhs&& rhs, double t0, const Vector& y0, double t1,
                    const OdeOptions& opts = {},
                    const std::function<void(const OdeSample&)>& observer = {}) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const auto n = y0.size();

    auto sys = [&](const State& x, State& dxdt, double t) {
        Eigen::Map<const Vector> xv(x.data(), n);
        Vector d = rhs(t, Vector(xv));
        if (d.size() != n) throw Error(ErrorCode::DimensionMismatch, "ode right-hand side has wrong size");
        Eigen::Map<Vector>(dxdt.data(), n) = d;
    };
    auto notify = [&](double t, const State& x) {
        if (!observer) return;
        Vector yv = Eigen::Map<const Vector>(x.data(), n);
        observer({t, yv, rhs(t, yv)});
    };

    State x(y0.data(), y0.data() + n);
    notify(t0, x);
    if (t0 == t1) return y0;

    auto stepper = odeint::make_controlled(opts.abs_tol, opts.rel_tol,
                                           odeint::runge_kutta_fehlberg78<State>());
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    double t = t0;
    double dt = dir * std::min(opts.initial_step, span);
    std::size_t steps = 0;
    while (dir * (t1 - t) > 0.0) {
        if (++steps > opts.max_steps) {
            throw Error(ErrorCode::IntegrationFailure, "ode integrator exceeded the step budget");
        }
        if (std::abs(dt) > opts.max_step) dt = dir * opts.max_step;
        if (dir * (t + dt - t1) > 0.0) dt = t1 - t;
        const double before = t;
        const auto result = stepper.try_step(sys, x, t, dt);
        if (result == odeint::success) {
            // Snap to the endpoint to avoid a sliver step from rounding.
            if (std::abs(t1 - t) <= 1e-15 * std::max(1.0, std::abs(t1))) t = t1;
            notify(t, x);
        } else if (std::abs(dt) < 1e-14 * std::max(1.0, std::abs(before))) {
            throw Error(ErrorCode::IntegrationFailure, "ode step size underflow");
        }
    }
    Vector out = Eigen::Map<const Vector>(x.data(), n);
    if (!out.allFinite()) throw Error(ErrorCode::IntegrationFailure, "ode solution is not finite");
    return out;
}

/// Matrix ODE convenience: integrates X' = rhs(t, X) with X stored column-major.
template <class Rhs>
Matrix integrate_matrix_to(Rhs&& rhs, double t0, const Matrix& x0, double t1,
                           const OdeOptions& opts = {}) {
    const auto rows = x0.rows();
    const auto cols = x0.cols();
    auto flat = [&](double t, const Vector& y) -> Vector {
        Eigen::Map<const Matrix> xm(y.data(), rows, cols);
        Matrix d = rhs(t, Matrix(xm));
        return Eigen::Map<const Vector>(d.data(), d.size());
    };
    Vector y0 = Eigen::Map<const Vector>(x0.data(), x0.size());
    Vector y1 = integrate_to(flat, t0, y0, t1, opts);
    return Eigen::Map<const Matrix>(y1.data(), rows, cols);
}

}  // namespace depcag
