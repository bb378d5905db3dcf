#pragma once

#include "depcag/certificate.hpp"
#include "depcag/coefficients.hpp"
#include "depcag/mesh.hpp"
#include "depcag/ode.hpp"
#include "depcag/quadrature.hpp"
#include "depcag/types.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <functional>
#include <limits>
#include <string>

namespace depcag {

enum class FlowMethod { exact_exponential, adaptive_integration };

/// Exponential of the block matrix h [[top_left, top_right], [0, 0]].
/// Returns the top row blocks (e^{h M}, int_0^h e^{u M} du N).
inline std::pair<Matrix, Matrix> block_exponential(const Matrix& top_left, const Matrix& top_right, double h) {
    const auto p = top_left.rows();
    const auto m = top_right.cols();
    Matrix big = Matrix::Zero(p + m, p + m);
    big.topLeftCorner(p, p) = h * top_left;
    big.topRightCorner(p, m) = h * top_right;
    Matrix e = big.exp();
    return {e.topLeftCorner(p, p), e.topRightCorner(p, m)};
}

/// Evaluator of the transition matrix Phi(t, s) of x' = A(t) x, the matrix
/// J(t, tau) = I + int_tau^t Phi(tau, s) B(s) ds and E(t, tau) = Phi(t, tau) J(t, tau).
class FlowEvaluator {
public:
    explicit FlowEvaluator(MatrixFunction a, double tol = 1e-12)
        : FlowEvaluator(a, a.is_constant() ? FlowMethod::exact_exponential : FlowMethod::adaptive_integration,
                        tol) {}

    FlowEvaluator(MatrixFunction a, FlowMethod method, double tol)
        : a_(std::move(a)), method_(method), tol_(tol) {
        if (a_.rows() != a_.cols()) throw Error(ErrorCode::DimensionMismatch, "A must be square");
        if (method_ == FlowMethod::exact_exponential && !a_.is_constant()) {
            throw Error(ErrorCode::InvalidArgument, "exact_exponential requires a constant A");
        }
        if (!(tol_ > 0.0)) throw Error(ErrorCode::InvalidArgument, "flow tolerance must be positive");
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return a_.rows(); }
    [[nodiscard]] FlowMethod method() const noexcept { return method_; }
    [[nodiscard]] double tolerance() const noexcept { return tol_; }
    [[nodiscard]] const MatrixFunction& a() const noexcept { return a_; }

    [[nodiscard]] Matrix phi(double t, double s) const {
        const auto p = dim();
        if (t == s || a_.is_zero()) return Matrix::Identity(p, p);
        if (method_ == FlowMethod::exact_exponential) return Matrix((t - s) * a_.constant_value()).exp();
        return integrate_matrix_to([this](double r, const Matrix& x) -> Matrix { return a_(r) * x; }, s,
                                   Matrix::Identity(p, p), t, ode_options());
    }

    /// int_a^b Phi(a, s) h(s) ds for a p x m integrand h.
    [[nodiscard]] Matrix weighted_integral(double a, double b, const MatrixFunction& h) const {
        const auto p = dim();
        if (h.rows() != p) throw Error(ErrorCode::DimensionMismatch, "weighted integrand has wrong row count");
        if (a == b || h.is_zero()) return Matrix::Zero(p, h.cols());
        if (method_ == FlowMethod::exact_exponential) {
            const Matrix& A = a_.constant_value();
            if (h.is_constant()) {
                auto [unused, integral] = block_exponential(-A, Matrix::Identity(p, p), b - a);
                return integral * h.constant_value();
            }
            return integrate([&](double s) -> Matrix { return Matrix((a - s) * A).exp() * h(s); }, a, b,
                             quad_options());
        }
        // Phi(a, s) solves d/ds Y = -Y A(s); the integral rides along.
        const auto m = h.cols();
        auto rhs = [&](double s, const Matrix& x) -> Matrix {
            Matrix d(p, p + m);
            const Matrix y = x.leftCols(p);
            d.leftCols(p) = -y * a_(s);
            d.rightCols(m) = y * h(s);
            return d;
        };
        Matrix x0 = Matrix::Zero(p, p + m);
        x0.leftCols(p) = Matrix::Identity(p, p);
        return integrate_matrix_to(rhs, a, x0, b, ode_options()).rightCols(m);
    }

    /// int_a^b Phi(a, s) g(s) ds for a vector forcing.
    [[nodiscard]] Vector weighted_integral(double a, double b, const VectorFunction& g) const {
        if (g.is_constant()) return weighted_integral(a, b, MatrixFunction(Matrix(g(a)), g.name())).col(0);
        MatrixFunction h(g.dim(), 1, [&g](double s) -> Matrix { return g(s); }, g.name());
        return weighted_integral(a, b, h).col(0);
    }

    /// int_a^b Phi(t_ref, s) g(s) ds.
    [[nodiscard]] Vector forced_integral(double t_ref, double a, double b, const VectorFunction& g) const {
        if (a == b || g.is_zero()) return Vector::Zero(dim());
        return phi(t_ref, a) * weighted_integral(a, b, g);
    }

    [[nodiscard]] Matrix jmatrix(const MatrixFunction& b, double t, double tau) const {
        check_b(b);
        const auto p = dim();
        if (t == tau || b.is_zero()) return Matrix::Identity(p, p);
        if (method_ == FlowMethod::exact_exponential && b.is_constant()) {
            auto [unused, integral] = block_exponential(-a_.constant_value(), Matrix::Identity(p, p), t - tau);
            return Matrix::Identity(p, p) + integral * b.constant_value();
        }
        return Matrix::Identity(p, p) + weighted_integral(tau, t, b);
    }

    [[nodiscard]] Matrix ematrix(const MatrixFunction& b, double t, double tau) const {
        check_b(b);
        const auto p = dim();
        if (t == tau) return Matrix::Identity(p, p);
        if (method_ == FlowMethod::exact_exponential && b.is_constant()) {
            auto [e, integral] = block_exponential(a_.constant_value(), b.constant_value(), t - tau);
            return e + integral;
        }
        return phi(t, tau) * jmatrix(b, t, tau);
    }

    [[nodiscard]] OdeOptions ode_options() const {
        OdeOptions o;
        o.abs_tol = tol_;
        o.rel_tol = tol_;
        return o;
    }
    [[nodiscard]] QuadratureOptions quad_options() const {
        QuadratureOptions q;
        q.abs_tol = tol_ * 0.1;
        q.rel_tol = tol_;
        return q;
    }

private:
    void check_b(const MatrixFunction& b) const {
        if (b.rows() != dim() || b.cols() != dim()) throw Error(ErrorCode::DimensionMismatch, "B must match A");
    }

    MatrixFunction a_;
    FlowMethod method_;
    double tol_;
};

struct H4Options {
    int grid = 33;                  // samples per interval, endpoints included
    double relative_threshold = 1e-10;
};

/// Samples J(t, zeta_i) over each closed interval and checks it stays
/// non-singular. A sign change of det J between neighbouring samples counts
/// as a crossing of a singular point and fails the check.
inline Certificate check_h4(const FlowEvaluator& flow, const MatrixFunction& b, const Mesh& mesh,
                            const H4Options& opts = {}) {
    Certificate cert;
    cert.name = "H4";
    cert.input("mesh", mesh.family().name()).input("grid", static_cast<double>(opts.grid));
    cert.input("relative_threshold", opts.relative_threshold);
    if (opts.grid < 2) throw Error(ErrorCode::InvalidArgument, "H4 grid needs at least two points");

    double weakest = std::numeric_limits<double>::infinity();
    double weakest_abs = std::numeric_limits<double>::infinity();
    double weakest_t = mesh.window_begin();
    int weakest_i = mesh.i_min();
    bool crossing = false;
    double crossing_t = 0.0;

    for (int i = mesh.i_min(); i <= mesh.i_max(); ++i) {
        const double lo = mesh.knot(i);
        const double hi = mesh.knot(i + 1);
        const double z = mesh.anchor(i);
        double prev_det = 0.0;
        for (int k = 0; k < opts.grid; ++k) {
            const double t = lo + (hi - lo) * k / (opts.grid - 1);
            const Matrix j = flow.jmatrix(b, t, z);
            const double smin = min_singular_value(j);
            const double norm = opnorm(j);
            const double ratio = norm > 0.0 ? smin / norm : 0.0;
            if (ratio < weakest) {
                weakest = ratio;
                weakest_abs = smin;
                weakest_t = t;
                weakest_i = i;
            }
            const double det = j.determinant();
            if (k > 0 && !crossing && ((det > 0.0 && prev_det < 0.0) || (det < 0.0 && prev_det > 0.0))) {
                crossing = true;
                crossing_t = t;
            }
            prev_det = det;
        }
    }
    cert.set("min_singular_value", weakest_abs);
    cert.set("min_relative_singular_value", weakest);
    cert.set("weakest_t", weakest_t);
    cert.set("weakest_interval", weakest_i);
    cert.set("window_begin", mesh.window_begin());
    cert.set("window_end", mesh.window_end());
    cert.truncated = mesh.has_family_rule();

    const bool ok = weakest > opts.relative_threshold && !crossing;
    cert.verdict = ok ? Verdict::pass : Verdict::fail;
    if (crossing) {
        cert.set("det_sign_change_t", crossing_t);
        cert.note("det J(t, zeta_i) changes sign between grid samples, so J is singular inside the interval");
    }
    cert.note("grid sampling is a heuristic, not a proof of non-singularity");
    return cert;
}

}  // namespace depcag
