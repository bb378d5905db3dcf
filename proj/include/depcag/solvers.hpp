#pragma once

#include "depcag/cauchy.hpp"
#include "depcag/green.hpp"
#include "depcag/ode.hpp"
#include "depcag/system.hpp"
#include "depcag/trajectory.hpp"
#include "depcag/types.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace depcag {

struct LinearOptions {
    int interior = 8;        // sample points strictly inside each interval
    double flow_tol = 1e-12;
};

/// Variation of parameters for x' = A x + B x(gamma) + g with x(tau) = xi,
/// valid on the intervals between tau and t_end in either orientation:
///
///   y(t) = Z(t, tau)(xi + P(tau)) + sum_k Z(t, t_k) q_k^+ + sum_k Z(t, t_{k+1}) q_k^- + h_j(t)
///
/// with oriented sums. The knot sums are evaluated by Horner's scheme over
/// the cached factors, so each evaluation costs O(1) matrix products plus
/// the quadrature for h_j.
class VariationOfParameters {
public:
    VariationOfParameters(std::shared_ptr<const CauchyOperator> op, VectorFunction g, double tau, Vector xi,
                          double t_end)
        : op_(std::move(op)), g_(std::move(g)), tau_(tau) {
        const Mesh& mesh = op_->mesh();
        if (xi.size() != op_->dim()) throw Error(ErrorCode::DimensionMismatch, "initial vector has wrong size");
        if (g_.dim() != op_->dim()) throw Error(ErrorCode::DimensionMismatch, "forcing has wrong size");
        i_ = mesh.locate(tau);
        j_end_ = mesh.locate(t_end);
        lo_ = std::min(i_, j_end_);
        hi_ = std::max(i_, j_end_);
        const auto& flow = op_->flow();
        for (int k = lo_; k <= hi_; ++k) {
            const double tk = mesh.knot(k), zk = mesh.anchor(k), tk1 = mesh.knot(k + 1);
            q_plus_.push_back(flow.forced_integral(tk, tk, zk, g_));
            q_minus_.push_back(flow.forced_integral(tk1, zk, tk1, g_));
        }
        start_ = xi + flow.forced_integral(tau, tau, mesh.anchor(i_), g_);

        const auto p = op_->dim();
        if (j_end_ > i_) {
            // R_m = sum_{l=i+1}^{m} Z(t_m, t_l) c_l, c_l = q_l^+ + q_{l-1}^-.
            Vector r = Vector::Zero(p);
            acc_.push_back(r);
            for (int m = i_ + 1; m <= j_end_; ++m) {
                r = op_->factor(m - 1) * r + q_plus(m) + q_minus(m - 1);
                acc_.push_back(r);
            }
        } else if (j_end_ < i_) {
            // L_m = sum_{l=m}^{i} Z(t_m, t_l) c_l, c_l = -(q_l^+ + q_{l-1}^-).
            acc_.assign(static_cast<std::size_t>(i_ - j_end_), Vector::Zero(p));
            Vector l = Vector::Zero(p);
            for (int m = i_; m >= j_end_ + 1; --m) {
                const Vector c = -(q_plus(m) + q_minus(m - 1));
                l = m == i_ ? c : Vector(c + op_->factor_inverse(m) * l);
                acc_[static_cast<std::size_t>(m - j_end_ - 1)] = l;
            }
        }
    }

    [[nodiscard]] Vector operator()(double t) const {
        const Mesh& mesh = op_->mesh();
        const int j = interval_of(t);
        if (j == i_) return op_->w(i_, t, tau_) * start_ + h(j, t);
        const Vector homogeneous = op_->z(t, tau_) * start_;
        if (j > i_) {
            return homogeneous + op_->w(j, t, mesh.knot(j)) * acc_[static_cast<std::size_t>(j - i_)] + h(j, t);
        }
        return homogeneous + op_->w(j, t, mesh.knot(j + 1)) * acc_[static_cast<std::size_t>(j - j_end_)] + h(j, t);
    }

    /// h_j(t) = int_{zeta_j}^t Phi(t, s) g(s) ds.
    [[nodiscard]] Vector h(int j, double t) const {
        return op_->flow().forced_integral(t, op_->mesh().anchor(j), t, g_);
    }

    [[nodiscard]] const Vector& q_plus(int k) const { return q_plus_.at(static_cast<std::size_t>(k - lo_)); }
    [[nodiscard]] const Vector& q_minus(int k) const { return q_minus_.at(static_cast<std::size_t>(k - lo_)); }
    /// xi + int_tau^{zeta_i} Phi(tau, r) g(r) dr.
    [[nodiscard]] const Vector& start() const noexcept { return start_; }
    [[nodiscard]] int start_interval() const noexcept { return i_; }
    [[nodiscard]] int first_interval() const noexcept { return lo_; }
    [[nodiscard]] int last_interval() const noexcept { return hi_; }
    [[nodiscard]] const CauchyOperator& cauchy() const noexcept { return *op_; }
    [[nodiscard]] const VectorFunction& forcing() const noexcept { return g_; }
    [[nodiscard]] double tau() const noexcept { return tau_; }

    /// Interval used for t; the closed covered range is accepted.
    [[nodiscard]] int interval_of(double t) const {
        const Mesh& mesh = op_->mesh();
        int j = mesh.locate(t);
        // The right end of the covered range belongs to the last interval.
        if (j == hi_ + 1 && t == mesh.knot(j)) j = hi_;
        if (j < lo_ || j > hi_) {
            throw Error(ErrorCode::OutOfWindow, "t = " + std::to_string(t) + " is outside the solved range");
        }
        return j;
    }

private:
    std::shared_ptr<const CauchyOperator> op_;
    VectorFunction g_;
    double tau_;
    int i_ = 0, j_end_ = 0, lo_ = 0, hi_ = 0;
    std::vector<Vector> q_plus_, q_minus_;
    Vector start_;
    std::vector<Vector> acc_;
};

namespace detail {

inline void check_in_window(const Mesh& mesh, double t, const char* what) {
    if (!mesh.in_closed_window(t)) {
        throw Error(ErrorCode::OutOfWindow, std::string(what) + " = " + std::to_string(t) + " is outside the mesh window [" +
                                                std::to_string(mesh.window_begin()) + ", " +
                                                std::to_string(mesh.window_end()) + "]");
    }
}

template <class Eval>
Trajectory sample(const Mesh& mesh, double a, double b, int interior, Eval eval) {
    std::vector<double> times = mesh.sample_grid(a, b, interior);
    std::vector<Vector> states;
    states.reserve(times.size());
    for (double t : times) states.push_back(eval(t));
    return Trajectory(std::move(times), std::move(states), std::move(eval), mesh);
}

inline double sup_forcing(const VectorFunction& g, const Mesh& mesh) {
    if (g.is_zero()) return 0.0;
    double m = 0.0;
    for (double t : mesh.sample_grid(mesh.window_begin(), mesh.window_end(), 8)) m = std::max(m, g(t).norm());
    return m;
}

inline double max_interval_length(const Mesh& mesh) {
    double m = 0.0;
    for (int i = mesh.i_min(); i <= mesh.i_max(); ++i) m = std::max(m, mesh.knot(i + 1) - mesh.knot(i));
    return m;
}

/// Sup norm of a difference over a fixed grid.
template <class F, class G>
double grid_distance(const std::vector<double>& grid, const F& f, const G& g) {
    double m = 0.0;
    for (double t : grid) m = std::max(m, (f(t) - g(t)).norm());
    return m;
}

}  // namespace detail

/// Solution of x' = A x + B x(gamma) + g, x(tau) = xi, from the variation of
/// parameters formula. t_end < tau runs the backward formulas.
inline Trajectory solve_linear(const DepcagSystem& sys, double tau, const Vector& xi, double t_end,
                               const LinearOptions& opts = {}) {
    if (!sys.f.is_zero()) {
        throw Error(ErrorCode::InvalidArgument, "solve_linear needs f = 0, use solve_quasilinear");
    }
    detail::check_in_window(sys.mesh, tau, "tau");
    detail::check_in_window(sys.mesh, t_end, "t_end");
    auto op = std::make_shared<const CauchyOperator>(sys.cauchy(opts.flow_tol));
    auto vop = std::make_shared<const VariationOfParameters>(op, sys.g, tau, xi, t_end);
    Trajectory out = detail::sample(sys.mesh, tau, t_end, opts.interior, [vop](double t) { return (*vop)(t); });
    out.set_info("tau", tau);
    out.set_info("intervals", vop->last_interval() - vop->first_interval() + 1);
    return out;
}

/// Same solution assembled from the Wiener-type sum: one integral over each
/// [zeta_k, zeta_{k+1}] referenced at t_{k+1}, and Z(t, t_{k+1}) recomputed
/// from the product formula for every term.
inline Trajectory solve_linear_wiener(const DepcagSystem& sys, double tau, const Vector& xi, double t_end,
                                      const LinearOptions& opts = {}) {
    if (!sys.f.is_zero()) {
        throw Error(ErrorCode::InvalidArgument, "solve_linear_wiener needs f = 0");
    }
    detail::check_in_window(sys.mesh, tau, "tau");
    detail::check_in_window(sys.mesh, t_end, "t_end");
    auto op = std::make_shared<const CauchyOperator>(sys.cauchy(opts.flow_tol));
    const Mesh& mesh = op->mesh();
    const auto& flow = op->flow();
    const int i = mesh.locate(tau);
    const int j_end = mesh.locate(t_end);
    const int lo = std::min(i, j_end);
    const int hi = std::max(i, j_end);
    auto blocks = std::make_shared<std::vector<Vector>>();
    for (int k = lo; k < hi; ++k) {
        const double a = mesh.anchor(k), b = mesh.anchor(k + 1), ref = mesh.knot(k + 1);
        Vector block;
        try {
            block = flow.forced_integral(ref, a, b, sys.g);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::IntegrationFailure) throw;
            // A forcing with a jump at the knot: integrate the two sides separately.
            block = flow.forced_integral(ref, a, ref, sys.g) + flow.forced_integral(ref, ref, b, sys.g);
        }
        blocks->push_back(std::move(block));
    }
    const Vector start = xi + flow.forced_integral(tau, tau, mesh.anchor(i), sys.g);
    VectorFunction g = sys.g;
    auto eval = [op, blocks, start, g, tau, i, lo, hi](double t) -> Vector {
        const Mesh& m = op->mesh();
        int j = m.locate(t);
        if (j == hi + 1 && t == m.knot(j)) j = hi;
        if (j < lo || j > hi) throw Error(ErrorCode::OutOfWindow, "t outside the solved range");
        Vector y = op->z(t, tau) * start + op->flow().forced_integral(t, m.anchor(j), t, g);
        if (j > i) {
            for (int k = i; k <= j - 1; ++k) y += op->z(t, m.knot(k + 1)) * (*blocks)[static_cast<std::size_t>(k - lo)];
        } else if (j < i) {
            for (int k = j; k <= i - 1; ++k) y -= op->z(t, m.knot(k + 1)) * (*blocks)[static_cast<std::size_t>(k - lo)];
        }
        return y;
    };
    return detail::sample(mesh, tau, t_end, opts.interior, eval);
}

/// Pure piecewise constant argument (A = 0): y(t) = E(t, zeta_j) y(zeta_j) + int_{zeta_j}^t g
/// with E(t, zeta) = I + int_zeta^t B, chaining the anchor values interval by
/// interval. Independent of the exponential machinery.
inline Trajectory solve_b_only(const DepcagSystem& sys, double tau, const Vector& xi, double t_end,
                               const LinearOptions& opts = {}) {
    if (!sys.a.is_zero()) throw Error(ErrorCode::InvalidArgument, "solve_b_only needs A = 0");
    if (!sys.f.is_zero()) throw Error(ErrorCode::InvalidArgument, "solve_b_only needs f = 0");
    detail::check_in_window(sys.mesh, tau, "tau");
    detail::check_in_window(sys.mesh, t_end, "t_end");
    const Mesh& mesh = sys.mesh;
    const auto p = sys.dim();
    const QuadratureOptions q{1e-14, 1e-13, 400};
    auto b = sys.b;
    auto g = sys.g;
    auto e = [b, p, q](double t, double z) -> Matrix {
        if (b.is_constant()) return Matrix::Identity(p, p) + (t - z) * b.constant_value();
        return Matrix::Identity(p, p) + integrate([&](double s) -> Matrix { return b(s); }, z, t, q);
    };
    auto gint = [g, p, q](double a, double c) -> Vector {
        if (g.is_zero()) return Vector::Zero(p);
        return integrate([&](double s) -> Vector { return g(s); }, a, c, q);
    };
    const int i = mesh.locate(tau);
    const int j_end = mesh.locate(t_end);
    const int dir = j_end >= i ? 1 : -1;
    auto anchors = std::make_shared<std::map<int, Vector>>();
    double s0 = tau;
    Vector y0 = xi;
    for (int k = i;; k += dir) {
        const double z = mesh.anchor(k);
        const Vector yz = checked_inverse(e(s0, z), 1e13, "I + int B") * (y0 - gint(z, s0));
        (*anchors)[k] = yz;
        if (k == j_end) break;
        s0 = dir > 0 ? mesh.knot(k + 1) : mesh.knot(k);
        y0 = e(s0, z) * yz + gint(z, s0);
    }
    const int lo = std::min(i, j_end), hi = std::max(i, j_end);
    auto eval = [anchors, e, gint, mesh, lo, hi](double t) -> Vector {
        int j = mesh.locate(t);
        if (j == hi + 1 && t == mesh.knot(j)) j = hi;
        if (j < lo || j > hi) throw Error(ErrorCode::OutOfWindow, "t outside the solved range");
        const double z = mesh.anchor(j);
        return e(t, z) * anchors->at(j) + gint(z, t);
    };
    return detail::sample(mesh, tau, t_end, opts.interior, eval);
}

struct OracleOptions {
    double tol = 1e-12;
    int interior = 8;
    double max_step = 0.05;
    int newton_max_iter = 30;
};

/// Independent reference solver. On each interval the anchor value
/// c = x(zeta_i) solves c = Y(zeta_i; c), with Y the Runge-Kutta solution of
/// y' = A y + B c + g + f(t, y, c) from the interval's entry point; the solve
/// is Newton with a finite difference Jacobian. No Z or G matrices are used.
inline Trajectory oracle_integrate(const DepcagSystem& sys, double tau, const Vector& xi, double t_end,
                                   const OracleOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    detail::check_in_window(mesh, tau, "tau");
    detail::check_in_window(mesh, t_end, "t_end");
    if (xi.size() != sys.dim()) throw Error(ErrorCode::DimensionMismatch, "initial vector has wrong size");
    const auto p = sys.dim();
    OdeOptions ode;
    ode.abs_tol = opts.tol;
    ode.rel_tol = opts.tol;
    ode.max_step = opts.max_step;

    auto rhs_for = [&sys](const Vector& c) {
        return [&sys, c](double t, const Vector& y) -> Vector {
            Vector d = sys.a(t) * y + sys.b(t) * c + sys.g(t);
            if (!sys.f.is_zero()) d += sys.f(t, y, c);
            return d;
        };
    };

    const std::vector<double> grid = mesh.sample_grid(tau, t_end, opts.interior);
    std::map<double, Vector> states;
    auto dense = std::make_shared<HermiteDense>();
    const int dir = t_end >= tau ? 1 : -1;
    int k = mesh.locate(tau);
    if (dir < 0 && tau == mesh.knot(k) && tau != t_end) --k;
    double s0 = tau;
    Vector x0 = xi;
    states[s0] = x0;
    int newton_total = 0;
    while (true) {
        const double seg_end = dir > 0 ? std::min(mesh.knot(k + 1), t_end) : std::max(mesh.knot(k), t_end);
        const double z = mesh.anchor(k);
        Vector c = x0;
        if (s0 != z) {
            auto residual = [&](const Vector& cc) -> Vector { return integrate_to(rhs_for(cc), s0, x0, z, ode) - cc; };
            bool converged = false;
            for (int it = 0; it < opts.newton_max_iter && !converged; ++it) {
                const Vector r = residual(c);
                Matrix jac(p, p);
                const double h = 1e-6 * std::max(1.0, c.norm());
                for (Eigen::Index m = 0; m < p; ++m) {
                    Vector cp = c;
                    cp(m) += h;
                    jac.col(m) = (residual(cp) - r) / h;
                }
                Eigen::FullPivLU<Matrix> lu(jac);
                if (!lu.isInvertible()) {
                    throw Error(ErrorCode::AnchorSolveFailure,
                                "anchor equation is singular on interval " + std::to_string(k));
                }
                const Vector dc = lu.solve(-r);
                c += dc;
                ++newton_total;
                converged = dc.norm() <= 1e-13 * (1.0 + c.norm());
            }
            if (!converged || !c.allFinite()) {
                throw Error(ErrorCode::AnchorSolveFailure,
                            "anchor solve did not converge on interval " + std::to_string(k));
            }
        }
        // Integrate to the interval end through every sample time.
        std::vector<double> stops;
        for (double t : grid) {
            if ((dir > 0 && t > s0 && t < seg_end) || (dir < 0 && t < s0 && t > seg_end)) stops.push_back(t);
        }
        if (dir < 0) std::reverse(stops.begin(), stops.end());
        stops.push_back(seg_end);
        std::vector<OdeSample> segment;
        auto observer = [&segment](const OdeSample& smp) {
            if (!segment.empty() && segment.back().t == smp.t) return;
            segment.push_back(smp);
        };
        double from = s0;
        Vector x = x0;
        for (double to : stops) {
            if (to == from) continue;
            x = integrate_to(rhs_for(c), from, x, to, ode, observer);
            states[to] = x;
            from = to;
        }
        dense->append(std::move(segment));
        if (seg_end == t_end) break;
        s0 = seg_end;
        x0 = x;
        k += dir;
    }
    std::vector<double> times;
    std::vector<Vector> values;
    for (double t : grid) {
        auto it = states.find(t);
        if (it == states.end()) throw Error(ErrorCode::IntegrationFailure, "oracle missed a sample time");
        times.push_back(t);
        values.push_back(it->second);
    }
    Trajectory out(std::move(times), std::move(values), [dense, xi, tau, t_end](double t) -> Vector {
        if (tau == t_end) return xi;
        return (*dense)(t);
    }, mesh);
    out.set_info("newton_iterations", newton_total);
    return out;
}

struct PicardOptions {
    double tol = 1e-10;
    int max_iter = 200;
    int order = 20;        // Chebyshev-Lobatto nodes per piece minus one
    int interior = 8;
    double flow_tol = 1e-12;
    bool strict = false;   // throw NoContraction instead of flagging it
};

/// Empirical alpha = max |W_k(t, s)| over sampled t, s in each interval of [lo, hi].
inline double interval_alpha(const CauchyOperator& op, int lo, int hi, int interior = 4) {
    const Mesh& mesh = op.mesh();
    double alpha = 1.0;
    for (int k = lo; k <= hi; ++k) {
        const auto pts = mesh.sample_grid(mesh.knot(k), mesh.knot(k + 1), interior);
        for (double t : pts) {
            for (double s : pts) {
                if (mesh.locate(t) != k && t != mesh.knot(k + 1)) continue;
                if (mesh.locate(s) != k && s != mesh.knot(k + 1)) continue;
                try {
                    alpha = std::max(alpha, opnorm(op.w(k, t, s)));
                } catch (const Error&) {
                    alpha = std::numeric_limits<double>::infinity();
                }
            }
        }
    }
    return alpha;
}

/// Solution of the quasilinear system by Picard iteration on the variation
/// of parameters formula with forcing g + f(s, w_n(s), w_n(gamma(s))). The
/// iterates are Chebyshev interpolants on whole intervals, split at knots.
inline Trajectory solve_quasilinear(const DepcagSystem& sys, double tau, const Vector& xi, double t_end,
                                    const PicardOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    detail::check_in_window(mesh, tau, "tau");
    detail::check_in_window(mesh, t_end, "t_end");
    auto op = std::make_shared<const CauchyOperator>(sys.cauchy(opts.flow_tol));
    VariationOfParameters base(op, sys.g, tau, xi, t_end);
    const int lo = base.first_interval(), hi = base.last_interval();
    const double a = mesh.knot(lo), b = mesh.knot(hi + 1);

    // Contraction constant alpha rho(A) theta with theta = 2 max_k int_{I_k} eta.
    const double alpha = interval_alpha(*op, lo, hi);
    double theta = 0.0, rho = 1.0;
    for (int k = lo; k <= hi; ++k) {
        rho = std::max(rho, rho_interval(sys.a, mesh, k));
        const double eta_int = sys.eta.is_constant()
                                   ? sys.eta.sup() * (mesh.knot(k + 1) - mesh.knot(k))
                                   : integrate([&](double s) { return sys.eta(s); }, mesh.knot(k), mesh.knot(k + 1));
        theta = std::max(theta, 2.0 * eta_int);
    }
    const double contraction = alpha * rho * theta;
    if (!sys.f.is_zero() && contraction >= 1.0 && opts.strict) {
        throw Error(ErrorCode::NoContraction, "alpha rho(A) theta = " + std::to_string(contraction) + " is not below 1");
    }

    auto w = std::make_shared<PiecewiseChebyshev>(mesh, a, b, opts.order);
    w->fill([&](double t) { return base(t); });
    const std::vector<double> grid = mesh.sample_grid(a, b, opts.interior);
    int iterations = 0;
    double change = 0.0;
    if (!sys.f.is_zero()) {
        bool converged = false;
        while (!converged) {
            if (iterations >= opts.max_iter) {
                throw Error(ErrorCode::MaxIterExceeded, "Picard iteration stopped after " +
                                                            std::to_string(iterations) + " iterations, last change " +
                                                            std::to_string(change));
            }
            std::shared_ptr<const PiecewiseChebyshev> current = w;
            VectorFunction forcing(sys.dim(), [&sys, current](double s) -> Vector {
                const int i = sys.mesh.locate(s);
                return sys.g(s) + sys.f(s, (*current)(s), (*current)(sys.mesh.anchor(i)));
            }, "picard_forcing");
            VariationOfParameters step(op, forcing, tau, xi, t_end);
            auto next = std::make_shared<PiecewiseChebyshev>(mesh, a, b, opts.order);
            next->fill([&](double t) { return step(t); });
            change = detail::grid_distance(grid, *next, *current);
            w = next;
            ++iterations;
            converged = change <= opts.tol;
        }
    }
    Trajectory out = detail::sample(mesh, tau, t_end, opts.interior,
                                    [w = std::shared_ptr<const PiecewiseChebyshev>(w)](double t) { return (*w)(t); });
    out.set_info("iterations", iterations);
    out.set_info("last_change", change);
    out.set_info("alpha", alpha);
    out.set_info("theta", theta);
    out.set_info("contraction_constant", contraction);
    out.set_info("no_contraction", !sys.f.is_zero() && contraction >= 1.0 ? 1.0 : 0.0);
    return out;
}

/// Sum of Z_P(t, t_k) q_k^+ + Z_P(t, t_{k+1}) q_k^- over intervals
/// k in [k_from, k_to] plus h_j(t): the integral of G-tilde against a forcing
/// over [t_{k_from}, t_{k_to + 1}]. Uses prefix sums of Z(base, t_m) c_m.
class DichotomySum {
public:
    DichotomySum(std::shared_ptr<const GreenKernel> kernel, VectorFunction g, int k_from, int k_to)
        : kernel_(std::move(kernel)), g_(std::move(g)), k_from_(k_from), k_to_(k_to) {
        const Mesh& mesh = kernel_->mesh();
        const auto& flow = kernel_->flow();
        const auto p = kernel_->cauchy().dim();
        // Knot m collects q_m^+ (if m <= k_to) and q_{m-1}^- (if m - 1 >= k_from).
        std::vector<Vector> c(static_cast<std::size_t>(k_to - k_from + 2), Vector::Zero(p));
        for (int k = k_from; k <= k_to; ++k) {
            const double tk = mesh.knot(k), zk = mesh.anchor(k), tk1 = mesh.knot(k + 1);
            c[static_cast<std::size_t>(k - k_from)] += flow.forced_integral(tk, tk, zk, g_);
            c[static_cast<std::size_t>(k - k_from + 1)] += flow.forced_integral(tk1, zk, tk1, g_);
        }
        // Separate suffix sums: total minus prefix would cancel the large
        // unstable-side terms.
        std::vector<Vector> v;
        for (std::size_t m = 0; m < c.size(); ++m) v.push_back(kernel_->base_to_knot(k_from + static_cast<int>(m)) * c[m]);
        prefix_.assign(v.size() + 1, Vector::Zero(p));
        suffix_.assign(v.size() + 1, Vector::Zero(p));
        for (std::size_t m = 0; m < v.size(); ++m) prefix_[m + 1] = prefix_[m] + v[m];
        for (std::size_t m = v.size(); m-- > 0;) suffix_[m] = suffix_[m + 1] + v[m];
    }

    /// Value at t read on interval j (knots up to t_j take the P branch).
    [[nodiscard]] Vector at(double t, int j) const {
        const Mesh& mesh = kernel_->mesh();
        const Matrix& p = kernel_->projection();
        const auto n = static_cast<int>(prefix_.size()) - 1;
        const int upto = std::clamp(j - k_from_ + 1, 0, n);  // number of knots m <= j
        const Vector& before = prefix_[static_cast<std::size_t>(upto)];
        const Vector& after = suffix_[static_cast<std::size_t>(upto)];
        const Vector s = p * before - (after - p * after);
        Vector y = kernel_->cauchy().w(j, t, mesh.knot(j)) * (kernel_->knot_to_base(j) * s);
        if (j >= k_from_ && j <= k_to_) y += kernel_->flow().forced_integral(t, mesh.anchor(j), t, g_);
        return y;
    }

    [[nodiscard]] Vector operator()(double t) const {
        const Mesh& mesh = kernel_->mesh();
        int j = mesh.locate(t);
        if (j == mesh.i_max() + 1) j = mesh.i_max();
        return at(t, j);
    }

private:
    std::shared_ptr<const GreenKernel> kernel_;
    VectorFunction g_;
    int k_from_, k_to_;
    std::vector<Vector> prefix_, suffix_;
};

struct BoundedOptions {
    std::optional<double> t_from;
    std::optional<double> t_to;
    double tol = 1e-8;   // truncation tail bound
    int interior = 8;
    double flow_tol = 1e-12;
    std::optional<DecayEstimate> decay;
    std::optional<DichotomyEstimate> dichotomy;
};

namespace detail {

/// Geometric bound for the knot sum beyond a window edge at distance `dist`.
inline double knot_tail(double c, double sigma, double rho, double gsup, const Mesh& mesh, double dist) {
    const double dmax = max_interval_length(mesh);
    const double dmin = mesh.min_gap();
    return 2.0 * c * rho * gsup * dmax * std::exp(-sigma * dist) / (1.0 - std::exp(-sigma * dmin));
}

/// Distance from the window edge beyond which knot_tail <= tol.
inline double tail_distance(double c, double sigma, double rho, double gsup, const Mesh& mesh, double tol) {
    const double at_zero = knot_tail(c, sigma, rho, gsup, mesh, 0.0);
    if (at_zero <= tol) return 0.0;
    return std::log(at_zero / tol) / sigma;
}

inline void report_bounded(Trajectory& out, double c, double sigma, double rho, double gsup, const Mesh& mesh,
                           double tail) {
    const double c_hat = c * rho * std::exp(sigma * mesh.tbar());
    out.set_info("c", c);
    out.set_info("sigma", sigma);
    out.set_info("rho_a", rho);
    out.set_info("tbar", mesh.tbar());
    out.set_info("c_hat", c_hat);
    out.set_info("g_sup", gsup);
    out.set_info("norm_bound", c_hat * gsup);
    out.set_info("tail_bound", tail);
}

}  // namespace detail

/// Bounded solution y(t) = int_{-inf}^t G(t, s) g(s) ds under forward
/// exponential decay. The sum over knots before the window is dropped and
/// the output starts where its geometric bound falls below opts.tol.
inline Trajectory bounded_solution_forward(const DepcagSystem& sys, const BoundedOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    auto op = std::make_shared<const CauchyOperator>(sys.cauchy(opts.flow_tol));
    const DecayEstimate d = opts.decay ? *opts.decay
                                       : estimate_decay(*op, mesh.window_begin(), mesh.window_end() - mesh.window_begin());
    if (!(d.sigma > 0.0)) throw Error(ErrorCode::NoDecayCertificate, "fitted decay rate is not positive");
    const double c = std::max(d.c, d.envelope_c);
    const double rho = rho_window(sys.a, mesh);
    const double gsup = detail::sup_forcing(sys.g, mesh);
    const double dist = gsup == 0.0 ? 0.0 : detail::tail_distance(c, d.sigma, rho, gsup, mesh, opts.tol);
    const double t_from = std::max(opts.t_from.value_or(-std::numeric_limits<double>::infinity()),
                                   mesh.window_begin() + dist);
    const double t_to = opts.t_to.value_or(mesh.window_end());
    if (t_from >= t_to) {
        throw Error(ErrorCode::TailNotConvergent, "truncation needs t >= " + std::to_string(mesh.window_begin() + dist) +
                                                      ", beyond the requested range");
    }
    auto vop = std::make_shared<const VariationOfParameters>(op, sys.g, mesh.window_begin(),
                                                             Vector::Zero(sys.dim()), mesh.window_end());
    Trajectory out = detail::sample(mesh, t_from, t_to, opts.interior, [vop](double t) { return (*vop)(t); });
    detail::report_bounded(out, c, d.sigma, rho, gsup, mesh,
                           gsup == 0.0 ? 0.0 : detail::knot_tail(c, d.sigma, rho, gsup, mesh, t_from - mesh.window_begin()));
    out.set_info("truncation_index", mesh.i_min());
    return out;
}

/// Bounded solution y(t) = -int_t^inf G(t, s) g(s) ds under backward decay
/// |Z(t, s)| <= c e^{-sigma (s - t)} for t <= s.
inline Trajectory bounded_solution_backward(const DepcagSystem& sys, const BoundedOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    auto op = std::make_shared<const CauchyOperator>(sys.cauchy(opts.flow_tol));
    const DecayEstimate d =
        opts.decay ? *opts.decay
                   : estimate_decay(*op, mesh.window_end(), mesh.window_end() - mesh.window_begin(), true);
    if (!(d.sigma > 0.0)) throw Error(ErrorCode::NoDecayCertificate, "fitted backward decay rate is not positive");
    const double c = std::max(d.c, d.envelope_c);
    const double rho = rho_window(sys.a, mesh);
    const double gsup = detail::sup_forcing(sys.g, mesh);
    const double dist = gsup == 0.0 ? 0.0 : detail::tail_distance(c, d.sigma, rho, gsup, mesh, opts.tol);
    const double t_from = opts.t_from.value_or(mesh.window_begin());
    const double t_to = std::min(opts.t_to.value_or(std::numeric_limits<double>::infinity()), mesh.window_end() - dist);
    if (t_from >= t_to) {
        throw Error(ErrorCode::TailNotConvergent, "truncation needs t <= " + std::to_string(mesh.window_end() - dist) +
                                                      ", beyond the requested range");
    }
    auto vop = std::make_shared<const VariationOfParameters>(op, sys.g, mesh.window_end(), Vector::Zero(sys.dim()),
                                                             mesh.window_begin());
    Trajectory out = detail::sample(mesh, t_from, t_to, opts.interior, [vop](double t) { return (*vop)(t); });
    detail::report_bounded(out, c, d.sigma, rho, gsup, mesh,
                           gsup == 0.0 ? 0.0 : detail::knot_tail(c, d.sigma, rho, gsup, mesh, mesh.window_end() - t_to));
    out.set_info("truncation_index", mesh.i_max() + 1);
    return out;
}

/// Bounded solution y(t) = int G-tilde(t, s) g(s) ds over the line for a
/// kernel with an exponential dichotomy; both window edges are truncated.
inline Trajectory bounded_solution_dichotomy(const DepcagSystem& sys, const GreenKernel& kernel,
                                             const BoundedOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    auto k = std::make_shared<const GreenKernel>(kernel);
    const DichotomyEstimate d =
        opts.dichotomy ? *opts.dichotomy : estimate_dichotomy(*k, mesh.window_begin(), mesh.window_end());
    if (!(d.sigma > 0.0)) throw Error(ErrorCode::NoDichotomy, "fitted dichotomy rate is not positive");
    const double rho = rho_window(sys.a, mesh);
    const double gsup = detail::sup_forcing(sys.g, mesh);
    const double dist = gsup == 0.0 ? 0.0 : detail::tail_distance(d.c, d.sigma, rho, gsup, mesh, opts.tol);
    const double t_from = std::max(opts.t_from.value_or(-std::numeric_limits<double>::infinity()),
                                   mesh.window_begin() + dist);
    const double t_to = std::min(opts.t_to.value_or(std::numeric_limits<double>::infinity()), mesh.window_end() - dist);
    if (t_from >= t_to) {
        throw Error(ErrorCode::TailNotConvergent, "window too short for the requested truncation tolerance");
    }
    auto sum = std::make_shared<const DichotomySum>(k, sys.g, mesh.i_min(), mesh.i_max());
    Trajectory out = detail::sample(mesh, t_from, t_to, opts.interior, [sum](double t) { return (*sum)(t); });
    const double tail = gsup == 0.0 ? 0.0
                                    : detail::knot_tail(d.c, d.sigma, rho, gsup, mesh,
                                                        std::min(t_from - mesh.window_begin(), mesh.window_end() - t_to));
    detail::report_bounded(out, d.c, d.sigma, rho, gsup, mesh, tail);
    return out;
}

struct EquivalenceOptions {
    double t0 = 0.0;
    double tol = 1e-10;
    int max_iter = 200;
    int order = 20;
    int interior = 8;
    std::optional<double> horizon;       // overrides the tail rule
    std::optional<double> dichotomy_c;   // sup |Z_P|; estimated if absent
};

namespace detail {

inline int snap_to_knot(const Mesh& mesh, double t0) {
    int k = mesh.locate(t0);
    if (k <= mesh.i_max() && mesh.knot(k + 1) - t0 < t0 - mesh.knot(k)) ++k;
    return k;
}

inline VectorFunction perturbation_forcing(const DepcagSystem& sys, std::shared_ptr<const PiecewiseChebyshev> v) {
    return VectorFunction(sys.dim(), [sys, v](double s) -> Vector {
        const int i = sys.mesh.locate(s);
        return sys.f(s, (*v)(s), (*v)(sys.mesh.anchor(i)));
    }, "perturbation_forcing");
}

}  // namespace detail

/// Result of the equivalence construction: v solves the perturbed system and
/// corresponds to y; `y_back` is the inverse map applied to v.
struct EquivalenceResult {
    Trajectory v;
    Trajectory y_back;
    double beta = 0.0;
    double c_tilde = 0.0;
    double horizon = 0.0;
    int iterations = 0;
};

/// v = y + int_{t0}^inf G-tilde(t, s) f(s, v(s), v(gamma(s))) ds by Picard
/// iteration, and the inverse y' = v - int G-tilde f(v). t0 is snapped to the
/// nearest knot; the integral is truncated at a knot T where the bound
/// 2 c-tilde |v| int_T^inf eta drops below tol / 10.
inline EquivalenceResult equivalence_map(const DepcagSystem& sys, const GreenKernel& kernel, const Trajectory& y,
                                         const EquivalenceOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    const int k0 = detail::snap_to_knot(mesh, opts.t0);
    const double t0 = mesh.knot(k0);
    auto k = std::make_shared<const GreenKernel>(kernel);
    const double c = opts.dichotomy_c ? *opts.dichotomy_c
                                      : estimate_dichotomy(*k, t0, mesh.window_end()).sup_norm;
    const double rho = rho_window(sys.a, mesh);
    const double c_tilde = c * rho;

    auto eta_tail = [&](double t) -> double {
        if (auto tl = sys.eta.tail_integral(t)) return *tl;
        return std::numeric_limits<double>::infinity();
    };
    const double beta = 2.0 * c_tilde * eta_tail(t0);
    if (!(beta < 1.0)) {
        throw Error(ErrorCode::NoContraction, "beta = 2 c~ int eta = " + std::to_string(beta) + " is not below 1");
    }
    const double v_bound = y.sup_norm() / (1.0 - beta);
    int kt = -1;
    if (opts.horizon) {
        kt = mesh.locate(std::min(*opts.horizon, mesh.window_end()));
        if (kt <= k0) throw Error(ErrorCode::InvalidArgument, "horizon must lie past t0");
    } else {
        for (int m = k0 + 1; m <= mesh.i_max() + 1; ++m) {
            if (mesh.knot(m) > y.t_max() + 1e-12) break;
            if (2.0 * c_tilde * v_bound * eta_tail(mesh.knot(m)) < opts.tol / 10.0) {
                kt = m;
                break;
            }
        }
        if (kt < 0) throw Error(ErrorCode::TailNotConvergent, "no knot in the window meets the eta tail tolerance");
    }
    const double horizon = mesh.knot(kt);
    if (y.t_min() > t0 + 1e-12 || y.t_max() < horizon - 1e-12) {
        throw Error(ErrorCode::OutOfWindow, "y must cover [t0, T] = [" + std::to_string(t0) + ", " +
                                                std::to_string(horizon) + "]");
    }

    const std::vector<double> grid = mesh.sample_grid(t0, horizon, opts.interior);
    auto v = std::make_shared<PiecewiseChebyshev>(mesh, t0, horizon, opts.order);
    v->fill([&](double t) { return y(t); });
    int iterations = 0;
    double change = 0.0;
    if (!sys.f.is_zero()) {
        bool converged = false;
        while (!converged) {
            if (iterations >= opts.max_iter) {
                throw Error(ErrorCode::MaxIterExceeded, "equivalence iteration did not settle");
            }
            std::shared_ptr<const PiecewiseChebyshev> current = v;
            DichotomySum integral(k, detail::perturbation_forcing(sys, current), k0, kt - 1);
            auto next = std::make_shared<PiecewiseChebyshev>(mesh, t0, horizon, opts.order);
            next->fill([&](double t) { return Vector(y(t) + integral.at(t, std::min(mesh.locate(t), kt - 1))); });
            change = detail::grid_distance(grid, *next, *current);
            v = next;
            ++iterations;
            converged = change <= opts.tol;
        }
    }
    std::shared_ptr<const PiecewiseChebyshev> vf = v;
    EquivalenceResult out;
    out.v = detail::sample(mesh, t0, horizon, opts.interior, [vf](double t) { return (*vf)(t); });
    auto back = std::make_shared<const DichotomySum>(k, detail::perturbation_forcing(sys, vf), k0, kt - 1);
    out.y_back = detail::sample(mesh, t0, horizon, opts.interior, [vf, back, kt, mesh](double t) -> Vector {
        return (*vf)(t) - back->at(t, std::min(mesh.locate(t), kt - 1));
    });
    out.beta = beta;
    out.c_tilde = c_tilde;
    out.horizon = horizon;
    out.iterations = iterations;
    for (auto* tr : {&out.v, &out.y_back}) {
        tr->set_info("t0", t0);
        tr->set_info("horizon", horizon);
        tr->set_info("beta", beta);
        tr->set_info("c_tilde", c_tilde);
        tr->set_info("lipschitz_forward", 1.0 / (1.0 - beta));
        tr->set_info("lipschitz_inverse", 1.0 + beta);
        tr->set_info("iterations", iterations);
        tr->set_info("last_change", change);
    }
    return out;
}

struct NonlinearBoundedOptions {
    double t0 = 0.0;
    double tol = 1e-10;
    int max_iter = 200;
    int order = 20;
    int interior = 8;
    double range_tol = 1e-8;
    std::optional<double> horizon;
    std::optional<DichotomyEstimate> dichotomy;
};

/// Decaying solution w = Z(t, t0) xi + int_{t0}^inf G-tilde f(w) with xi in
/// the range of Z(t0, base) P Z(base, t0). Reports the constants of the decay
/// envelope (1 - beta)^{-1} c |xi| e^{-sigma0 (t - t0)} and its worst ratio.
inline Trajectory nonlinear_bounded(const DepcagSystem& sys, const GreenKernel& kernel, const Vector& xi,
                                    const NonlinearBoundedOptions& opts = {}) {
    const Mesh& mesh = sys.mesh;
    if (xi.size() != sys.dim()) throw Error(ErrorCode::DimensionMismatch, "xi has wrong size");
    const int k0 = detail::snap_to_knot(mesh, opts.t0);
    const double t0 = mesh.knot(k0);
    auto k = std::make_shared<const GreenKernel>(kernel);
    const Matrix p_t0 = k->knot_to_base(k0) * k->projection() * k->base_to_knot(k0);
    if ((p_t0 * xi - xi).norm() > opts.range_tol * std::max(1.0, xi.norm())) {
        throw Error(ErrorCode::XiNotInRange, "xi is not in the range of the projection at t0");
    }
    const DichotomyEstimate d = opts.dichotomy ? *opts.dichotomy : estimate_dichotomy(*k, mesh.window_begin(), mesh.window_end());
    if (!(d.sigma > 0.0)) throw Error(ErrorCode::NoDichotomy, "fitted dichotomy rate is not positive");
    const double c = d.c, sigma = d.sigma;
    const double rho = rho_window(sys.a, mesh);
    const double tbar = mesh.tbar();
    const double eta0 = sys.eta.sup();
    const double c_hat = c * rho * std::exp(sigma * tbar);
    const double beta = 2.0 * c_hat * eta0 / sigma;
    const double theta = 2.0 * c * tbar * eta0 * rho * std::exp(2.0 * sigma * tbar);
    if (!(theta < 1.0)) throw Error(ErrorCode::ThetaNotLessThanOne, "theta = " + std::to_string(theta));
    if (!(beta < 1.0)) throw Error(ErrorCode::NoContraction, "beta = 2 c^ eta0 / sigma = " + std::to_string(beta));
    const double mu = (2.0 - theta) / (1.0 - theta);
    const double sigma0 = sigma - mu / (1.0 - beta) * c_hat * eta0 * std::exp(sigma * tbar);
    const double env_c = c * xi.norm() / (1.0 - beta);

    int kt = -1;
    if (opts.horizon) {
        kt = mesh.locate(std::min(*opts.horizon, mesh.window_end()));
        if (mesh.knot(kt) < *opts.horizon && kt <= mesh.i_max()) ++kt;
    } else if (sys.f.is_zero() || xi.norm() == 0.0) {
        kt = mesh.i_max() + 1;
    } else {
        if (!(sigma0 > 0.0)) throw Error(ErrorCode::TailNotConvergent, "sigma0 is not positive, no horizon rule");
        for (int m = k0 + 1; m <= mesh.i_max() + 1; ++m) {
            const double tail = 2.0 * c_hat * eta0 * env_c * std::exp(-sigma0 * (mesh.knot(m) - t0)) / sigma;
            if (tail < opts.tol / 10.0) {
                kt = m;
                break;
            }
        }
        if (kt < 0) throw Error(ErrorCode::TailNotConvergent, "window ends before the envelope tail drops below tol / 10");
    }
    if (kt <= k0) throw Error(ErrorCode::InvalidArgument, "horizon must lie past t0");
    const double horizon = mesh.knot(kt);

    const CauchyOperator& op = k->cauchy();
    auto linear = [&op, xi, t0](double t) -> Vector { return op.z(t, t0) * xi; };
    const std::vector<double> grid = mesh.sample_grid(t0, horizon, opts.interior);
    auto w = std::make_shared<PiecewiseChebyshev>(mesh, t0, horizon, opts.order);
    w->fill(linear);
    int iterations = 0;
    double change = 0.0;
    if (!sys.f.is_zero()) {
        bool converged = false;
        while (!converged) {
            if (iterations >= opts.max_iter) throw Error(ErrorCode::MaxIterExceeded, "nonlinear_bounded did not settle");
            std::shared_ptr<const PiecewiseChebyshev> current = w;
            DichotomySum integral(k, detail::perturbation_forcing(sys, current), k0, kt - 1);
            auto next = std::make_shared<PiecewiseChebyshev>(mesh, t0, horizon, opts.order);
            next->fill([&](double t) { return Vector(linear(t) + integral.at(t, std::min(mesh.locate(t), kt - 1))); });
            change = detail::grid_distance(grid, *next, *current);
            w = next;
            ++iterations;
            converged = change <= opts.tol;
        }
    }
    std::shared_ptr<const PiecewiseChebyshev> wf = w;
    Trajectory out = detail::sample(mesh, t0, horizon, opts.interior, [wf](double t) { return (*wf)(t); });
    double worst = 0.0;
    for (std::size_t m = 0; m < out.size(); ++m) {
        const double bound = env_c * std::exp(-sigma0 * (out.times()[m] - t0));
        if (bound > 0.0) worst = std::max(worst, out.states()[m].norm() / bound);
        else if (out.states()[m].norm() > 0.0) worst = std::numeric_limits<double>::infinity();
    }
    out.set_info("t0", t0);
    out.set_info("horizon", horizon);
    out.set_info("c", c);
    out.set_info("sigma", sigma);
    out.set_info("rho_a", rho);
    out.set_info("tbar", tbar);
    out.set_info("eta0", eta0);
    out.set_info("c_hat", c_hat);
    out.set_info("beta", beta);
    out.set_info("theta", theta);
    out.set_info("mu", mu);
    out.set_info("sigma0", sigma0);
    out.set_info("envelope_c", env_c);
    out.set_info("envelope_ratio", worst);
    out.set_info("envelope_violated", worst > 1.0 ? 1.0 : 0.0);
    out.set_info("iterations", iterations);
    out.set_info("last_change", change);
    return out;
}

/// Integral form residual of the equation at `points` times spread over the
/// trajectory range: |y(t) - y(zeta_i) - int_{zeta_i}^t (A y + B y(zeta_i) + g + f) ds|.
/// Points whose anchor lies outside the range are skipped.
inline double equation_residual(const DepcagSystem& sys, const Trajectory& y, int points = 100) {
    const Mesh& mesh = sys.mesh;
    double worst = 0.0;
    for (int n = 0; n < points; ++n) {
        const double t = y.t_min() + (y.t_max() - y.t_min()) * (n + 0.5) / points;
        int i = mesh.locate(t);
        if (i > mesh.i_max()) i = mesh.i_max();
        const double z = mesh.anchor(i);
        if (z < y.t_min() || z > y.t_max()) continue;
        const Vector yz = y(z);
        auto rhs = [&](double s) -> Vector {
            const Vector ys = y(s);
            return sys.a(s) * ys + sys.b(s) * yz + sys.g(s) + sys.f(s, ys, yz);
        };
        const Matrix integral = integrate(rhs, z, t, QuadratureOptions{1e-12, 1e-10, 200});
        worst = std::max(worst, (y(t) - yz - Vector(integral.col(0))).norm());
    }
    return worst;
}

}  // namespace depcag
