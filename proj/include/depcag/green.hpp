#pragma once

#include "depcag/cauchy.hpp"
#include "depcag/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>
#include <optional>
#include <vector>

namespace depcag {

/// Matrix sign function by the scaled Newton iteration X <- (X + X^{-1}) / 2.
inline Matrix matrix_sign(const Matrix& m, int max_iter = 100) {
    Matrix x = m;
    for (int it = 0; it < max_iter; ++it) {
        const Matrix inv = checked_inverse(x, 1e14, "sign iterate");
        const double mu = std::sqrt(opnorm(inv) / opnorm(x));
        const Matrix next = 0.5 * (mu * x + inv / mu);
        const double change = opnorm(next - x);
        x = next;
        if (change <= 1e-14 * opnorm(x)) return x;
    }
    throw Error(ErrorCode::NoDichotomy, "matrix sign iteration did not converge");
}

/// Projection onto the generalized eigenspace of F inside the unit disk,
/// computed as (I - sign(C)) / 2 with the Cayley transform C = (F - I)(F + I)^{-1}.
inline Matrix stable_projection(const Matrix& f) {
    const auto p = f.rows();
    const Eigen::VectorXcd ev = f.eigenvalues();
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
        if (std::abs(std::abs(ev(k)) - 1.0) < 1e-10) {
            throw Error(ErrorCode::NoDichotomy, "monodromy factor has an eigenvalue on the unit circle");
        }
    }
    const Matrix id = Matrix::Identity(p, p);
    const Matrix cayley = (f - id) * checked_inverse(f + id, 1e14, "F + I");
    return 0.5 * (id - matrix_sign(cayley));
}

/// Green matrices G_k, G, the dichotomy kernel Z_P and G-tilde. The base
/// point `base` plays the role of the origin in Z_P(t, s) = Z(t, base) P Z(base, s).
class GreenKernel {
public:
    GreenKernel(CauchyOperator cauchy, std::optional<Matrix> projection = std::nullopt,
                std::optional<double> base = std::nullopt, double tol = 1e-9)
        : cauchy_(std::move(cauchy)), projection_(std::move(projection)) {
        const Mesh& mesh = cauchy_.mesh();
        base_ = base ? *base : (mesh.in_closed_window(0.0) ? 0.0 : mesh.window_begin());
        if (!mesh.in_closed_window(base_)) throw Error(ErrorCode::OutOfWindow, "base point outside mesh window");
        if (projection_) {
            const Matrix& p = *projection_;
            if (p.rows() != cauchy_.dim() || p.cols() != cauchy_.dim()) {
                throw Error(ErrorCode::DimensionMismatch, "projection has wrong size");
            }
            if (opnorm(p * p - p) > tol * std::max(1.0, opnorm(p))) {
                throw Error(ErrorCode::NotAProjection, "P * P differs from P");
            }
            for (int k = mesh.i_min(); k <= mesh.i_max() + 1; ++k) {
                z_to_base_.push_back(cauchy_.z(mesh.knot(k), base_));
                z_from_base_.push_back(cauchy_.z(base_, mesh.knot(k)));
            }
        }
    }

    [[nodiscard]] const CauchyOperator& cauchy() const noexcept { return cauchy_; }
    [[nodiscard]] const Mesh& mesh() const noexcept { return cauchy_.mesh(); }
    [[nodiscard]] const FlowEvaluator& flow() const noexcept { return cauchy_.flow(); }
    [[nodiscard]] bool has_projection() const noexcept { return projection_.has_value(); }
    [[nodiscard]] double base() const noexcept { return base_; }
    [[nodiscard]] const Matrix& projection() const {
        if (!projection_) throw Error(ErrorCode::MissingProjection, "kernel was built without a projection P");
        return *projection_;
    }

    /// Knot at which an integrand point s is transported: t_{i(s)} on the
    /// advanced part, t_{i(s)+1} on the delayed part.
    [[nodiscard]] double transport_knot(double s) const {
        const int i = mesh().locate(s);
        return s <= mesh().anchor(i) ? mesh().knot(i) : mesh().knot(i + 1);
    }

    /// Local Green matrix G_k(t, s) on [t_k, t_{k+1}]^2 from the case tables.
    /// On the delayed part the branch t < s uses Z(t, t_{k+1}) Phi(t_{k+1}, s)
    /// and s <= t uses Phi(t, s).
    [[nodiscard]] Matrix green_local(int k, double t, double s) const {
        const double lo = mesh().knot(k);
        const double hi = mesh().knot(k + 1);
        if (t < lo || t > hi || s < lo || s > hi) {
            throw Error(ErrorCode::OutOfWindow, "green_local arguments outside [t_k, t_{k+1}]");
        }
        return local_formula(k, t, s);
    }

    /// Global Green matrix. Same interval: green_local. Otherwise the kernel
    /// of the variation of parameters formula, Z(t, a) Phi(a, s) with a the
    /// transport knot of s.
    [[nodiscard]] Matrix green_global(double t, double s) const {
        const int it = mesh().locate(t);
        const int is = mesh().locate(s);
        if (it == is) return local_formula(it, t, s);
        const double a = transport_knot(s);
        return cauchy_.z(t, a) * flow().phi(a, s);
    }

    /// The printed assembly of G for i(s) != i(t), with the local case
    /// formulas evaluated outside their home square where the print demands.
    /// Kept for the discrepancy report against green_global.
    [[nodiscard]] Matrix green_global_printed(double t, double s) const {
        const int it = mesh().locate(t);
        const int is = mesh().locate(s);
        if (it == is) return local_formula(it, t, s);
        if (s > t) {
            if (is == it + 1) return local_formula(it, mesh().knot(it + 1), s) + local_formula(it, t, mesh().knot(it + 1));
            Matrix sum = local_formula(it, mesh().knot(it + 1), t);
            for (int k = it + 1; k <= is - 1; ++k) sum += local_formula(k, mesh().knot(k + 1), mesh().knot(k));
            return sum + local_formula(is, s, mesh().knot(is - 1));
        }
        if (is == it - 1) return local_formula(is, mesh().knot(is + 1), s) + local_formula(is, t, mesh().knot(is + 1));
        Matrix sum = local_formula(is, mesh().knot(is + 1), s);
        for (int k = is + 1; k <= it - 1; ++k) sum += local_formula(k, mesh().knot(k + 1), mesh().knot(k));
        return sum + local_formula(it, t, mesh().knot(it - 1));
    }

    /// Z(t_k, base) and Z(base, t_k) from the cache.
    [[nodiscard]] const Matrix& knot_to_base(int k) const {
        (void)projection();  // throws MissingProjection
        return z_to_base_.at(idx(k));
    }
    [[nodiscard]] const Matrix& base_to_knot(int k) const {
        (void)projection();  // throws MissingProjection
        return z_from_base_.at(idx(k));
    }

    /// Z(t, base).
    [[nodiscard]] Matrix z_to_base(double t) const {
        const int j = mesh().locate(t);
        return cauchy_.w(j, t, mesh().knot(j)) * z_to_base_[idx(j)];
    }
    /// Z(base, s).
    [[nodiscard]] Matrix z_from_base(double s) const {
        const int i = mesh().locate(s);
        return z_from_base_[idx(i)] * cauchy_.w(i, mesh().knot(i), s);
    }

    [[nodiscard]] Matrix zp(double t, double s) const {
        const Matrix& p = projection();
        const Matrix left = z_to_base(t);
        const Matrix right = z_from_base(s);
        if (t >= s) return left * p * right;
        return -left * (Matrix::Identity(p.rows(), p.cols()) - p) * right;
    }

    /// G-tilde(t, s) = Z_P(t, a) Phi(a, s) plus the tail Phi(t, s) on the
    /// oriented segment between zeta_{i(t)} and t.
    [[nodiscard]] Matrix green_dichotomy(double t, double s) const {
        const double a = transport_knot(s);
        Matrix g = zp(t, a) * flow().phi(a, s);
        const double z = mesh().anchor(mesh().locate(t));
        if (z < s && s <= t) g += flow().phi(t, s);
        if (t < s && s <= z) g -= flow().phi(t, s);
        return g;
    }

private:
    [[nodiscard]] std::size_t idx(int k) const { return static_cast<std::size_t>(k - mesh().i_min()); }

    [[nodiscard]] Matrix local_formula(int k, double t, double s) const {
        const bool home = s >= mesh().knot(k) && s <= mesh().knot(k + 1);
        const bool advanced = s <= mesh().anchor(home ? k : mesh().locate(s));
        if (advanced) {
            if (s < t) return cauchy_.z(t, mesh().knot(k)) * flow().phi(mesh().knot(k), s);
            return flow().phi(t, s);
        }
        if (t < s) return cauchy_.z(t, mesh().knot(k + 1)) * flow().phi(mesh().knot(k + 1), s);
        return flow().phi(t, s);
    }

    CauchyOperator cauchy_;
    std::optional<Matrix> projection_;
    double base_ = 0.0;
    std::vector<Matrix> z_to_base_;
    std::vector<Matrix> z_from_base_;
};

/// Fitted constants of |Z_P(t, s)| <= c e^{-sigma |t - s|} over sampled pairs
/// in [a, b]. The two orientations are fitted separately and sigma is the
/// smaller rate; c is the envelope max |Z_P| e^{sigma |t - s|}.
struct DichotomyEstimate {
    double c = 0.0;
    double sigma = 0.0;
    double sigma_forward = 0.0;   // fitted on t >= s
    double sigma_backward = 0.0;  // fitted on t < s
    double sup_norm = 0.0;        // max |Z_P| (ordinary dichotomy constant)
    double residual = 0.0;
    double a = 0.0;
    double b = 0.0;
    int pairs = 0;
};

inline DichotomyEstimate estimate_dichotomy(const GreenKernel& kernel, double a, double b, bool discrete = false) {
    const Mesh& mesh = kernel.mesh();
    if (a > b) std::swap(a, b);
    std::vector<double> pts;
    if (discrete) {
        for (double k : mesh.knots()) {
            if (k >= a && k <= b) pts.push_back(k);
        }
    } else {
        pts = mesh.sample_grid(a, b, 3);
    }
    if (pts.size() < 4) throw Error(ErrorCode::InsufficientData, "dichotomy fit needs at least 4 sample points");
    const Matrix& p = kernel.projection();
    const Matrix q = Matrix::Identity(p.rows(), p.cols()) - p;
    std::vector<Matrix> left, right;
    for (double t : pts) {
        left.push_back(kernel.z_to_base(t));
        right.push_back(kernel.z_from_base(t));
    }
    std::vector<double> xf, yf, xb, yb;
    std::vector<std::tuple<double, double>> all;  // (|t - s|, |Z_P|)
    DichotomyEstimate d;
    for (std::size_t m = 0; m < pts.size(); ++m) {
        for (std::size_t n = 0; n < pts.size(); ++n) {
            const bool fwd = pts[m] >= pts[n];
            const double nrm = opnorm(fwd ? Matrix(left[m] * p * right[n]) : Matrix(left[m] * q * right[n]));
            const double dist = std::abs(pts[m] - pts[n]);
            all.emplace_back(dist, nrm);
            d.sup_norm = std::max(d.sup_norm, nrm);
            if (dist == 0.0 || nrm < 1e-300) continue;
            (fwd ? xf : xb).push_back(dist);
            (fwd ? yf : yb).push_back(std::log(nrm));
        }
    }
    const double inf = std::numeric_limits<double>::infinity();
    d.sigma_forward = inf;
    d.sigma_backward = inf;
    if (xf.size() >= 2) {
        const LineFit f = fit_line(xf, yf);
        d.sigma_forward = -f.slope;
        d.residual = f.residual;
    }
    if (xb.size() >= 2) {
        const LineFit f = fit_line(xb, yb);
        d.sigma_backward = -f.slope;
        d.residual = std::max(d.residual, f.residual);
    }
    d.sigma = std::min(d.sigma_forward, d.sigma_backward);
    if (!std::isfinite(d.sigma)) d.sigma = 0.0;  // P = 0 with Z_P vanishing identically on both sides
    for (const auto& [dist, nrm] : all) d.c = std::max(d.c, nrm * std::exp(d.sigma * dist));
    d.a = a;
    d.b = b;
    d.pairs = static_cast<int>(all.size());
    return d;
}

}  // namespace depcag
