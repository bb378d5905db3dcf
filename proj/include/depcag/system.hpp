#pragma once

#include "depcag/cauchy.hpp"
#include "depcag/coefficients.hpp"
#include "depcag/linear_flow.hpp"
#include "depcag/mesh.hpp"
#include "depcag/quadrature.hpp"
#include "depcag/types.hpp"

#include <optional>
#include <random>
#include <string>

namespace depcag {

/// x' = A(t) x + B(t) x(gamma(t)) + g(t) + f(t, x, x(gamma(t))) on a mesh.
struct DepcagSystem {
    MatrixFunction a;
    MatrixFunction b;
    VectorFunction g;
    Perturbation f;
    ScalarFunction eta;
    Mesh mesh;

    DepcagSystem(MatrixFunction a_, MatrixFunction b_, Mesh mesh_)
        : a(std::move(a_)), b(std::move(b_)), g(a.rows()), mesh(std::move(mesh_)) {
        validate();
    }
    DepcagSystem(MatrixFunction a_, MatrixFunction b_, VectorFunction g_, Perturbation f_, ScalarFunction eta_,
                 Mesh mesh_)
        : a(std::move(a_)), b(std::move(b_)), g(std::move(g_)), f(std::move(f_)), eta(std::move(eta_)),
          mesh(std::move(mesh_)) {
        validate();
    }

    [[nodiscard]] Eigen::Index dim() const noexcept { return a.rows(); }

    [[nodiscard]] FlowEvaluator flow(double tol = 1e-12) const { return FlowEvaluator(a, tol); }
    [[nodiscard]] CauchyOperator cauchy(double tol = 1e-12, CauchyOptions opts = {}) const {
        return CauchyOperator(flow(tol), b, mesh, opts);
    }

    /// Copy with the forcing replaced.
    [[nodiscard]] DepcagSystem with_forcing(VectorFunction g_new) const {
        DepcagSystem s = *this;
        s.g = std::move(g_new);
        s.validate();
        return s;
    }
    /// Copy without the perturbation.
    [[nodiscard]] DepcagSystem linear_part() const {
        DepcagSystem s = *this;
        s.f = Perturbation();
        return s;
    }

    void validate() const {
        const auto p = a.rows();
        if (a.cols() != p) throw Error(ErrorCode::DimensionMismatch, "A must be square");
        if (b.rows() != p || b.cols() != p) throw Error(ErrorCode::DimensionMismatch, "B must match A (" + std::to_string(p) + "x" + std::to_string(p) + ")");
        if (g.dim() != p) throw Error(ErrorCode::DimensionMismatch, "g must have dimension " + std::to_string(p));
    }
};

/// int_a^b |M(s)| ds with the induced 2-norm.
inline double integral_norm(const MatrixFunction& m, double a, double b) {
    if (a == b || m.is_zero()) return 0.0;
    if (m.is_constant()) return opnorm(m.constant_value()) * std::abs(b - a);
    return std::abs(integrate([&](double s) { return opnorm(m(s)); }, a, b, QuadratureOptions{1e-12, 1e-10, 400}));
}

enum class Side { full, advanced, delayed };

/// rho_i(M) = exp(int over I_i, I_i^+ or I_i^- of |M|).
inline double rho_interval(const MatrixFunction& m, const Mesh& mesh, int i, Side side = Side::full) {
    const double lo = side == Side::delayed ? mesh.anchor(i) : mesh.knot(i);
    const double hi = side == Side::advanced ? mesh.anchor(i) : mesh.knot(i + 1);
    return std::exp(integral_norm(m, lo, hi));
}

/// rho(A) over the stored window.
inline double rho_window(const MatrixFunction& m, const Mesh& mesh) {
    double r = 1.0;
    for (int i = mesh.i_min(); i <= mesh.i_max(); ++i) r = std::max(r, rho_interval(m, mesh, i));
    return r;
}

/// Random probe of |f(t,x1,y1) - f(t,x2,y2)| <= eta(t)(|x1-x2| + |y1-y2|) and,
/// optionally, f(t,0,0) = 0. Returns the worst ratio observed (<= 1 is consistent).
struct LipschitzProbe {
    double worst_ratio = 0.0;
    double worst_origin_value = 0.0;
    int probes = 0;
};

inline LipschitzProbe probe_lipschitz(const DepcagSystem& sys, int probes = 200, unsigned seed = 7,
                                      double radius = 2.0) {
    LipschitzProbe out;
    if (sys.f.is_zero()) return out;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-radius, radius);
    std::uniform_real_distribution<double> ut(sys.mesh.window_begin(), sys.mesh.window_end());
    const auto p = sys.dim();
    auto rnd = [&] {
        Vector v(p);
        for (Eigen::Index k = 0; k < p; ++k) v(k) = u(rng);
        return v;
    };
    for (int n = 0; n < probes; ++n) {
        const double t = ut(rng);
        const Vector x1 = rnd(), y1 = rnd(), x2 = rnd(), y2 = rnd();
        const double lhs = (sys.f(t, x1, y1) - sys.f(t, x2, y2)).norm();
        const double rhs = sys.eta(t) * ((x1 - x2).norm() + (y1 - y2).norm());
        if (rhs > 0.0) out.worst_ratio = std::max(out.worst_ratio, lhs / rhs);
        else if (lhs > 0.0) out.worst_ratio = std::numeric_limits<double>::infinity();
        out.worst_origin_value = std::max(out.worst_origin_value, sys.f(t, Vector::Zero(p), Vector::Zero(p)).norm());
        ++out.probes;
    }
    return out;
}

}  // namespace depcag
