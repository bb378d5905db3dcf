#pragma once

#include "depcag/coefficients.hpp"
#include "depcag/linear_flow.hpp"
#include "depcag/mesh.hpp"
#include "depcag/types.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace depcag {

struct CauchyOptions {
    double max_condition = 1e13;  // SingularFactor above this 2-norm condition number
};

/// Fundamental matrix Z(t, s) of x' = A(t) x + B(t) x(gamma(t)) on a mesh window.
/// Per interval the factors E(t_k, zeta_k), E(t_{k+1}, zeta_k), their inverses
/// and F_k = Z(t_{k+1}, t_k) are cached at construction.
class CauchyOperator {
public:
    CauchyOperator(FlowEvaluator flow, MatrixFunction b, Mesh mesh, CauchyOptions opts = {})
        : flow_(std::move(flow)), b_(std::move(b)), mesh_(std::move(mesh)), opts_(opts) {
        if (b_.rows() != flow_.dim() || b_.cols() != flow_.dim()) {
            throw Error(ErrorCode::DimensionMismatch, "B must have the dimension of A");
        }
        const auto n = static_cast<std::size_t>(mesh_.intervals());
        e_left_inv_.reserve(n);
        e_right_.reserve(n);
        e_right_inv_.reserve(n);
        factors_.reserve(n);
        factor_invs_.reserve(n);
        for (int k = mesh_.i_min(); k <= mesh_.i_max(); ++k) {
            const double z = mesh_.anchor(k);
            const Matrix el = flow_.ematrix(b_, mesh_.knot(k), z);
            const Matrix er = flow_.ematrix(b_, mesh_.knot(k + 1), z);
            e_left_inv_.push_back(checked_inverse(el, opts_.max_condition, "E(t_k, zeta_k)"));
            e_right_.push_back(er);
            std::optional<Matrix> er_inv;
            try {
                er_inv = checked_inverse(er, opts_.max_condition, "E(t_{k+1}, zeta_k)");
            } catch (const Error&) {
                // Only needed for backward propagation; reported on use.
            }
            factors_.push_back(er * e_left_inv_.back());
            factor_invs_.push_back(er_inv ? std::optional<Matrix>(el * *er_inv) : std::nullopt);
            e_right_inv_.push_back(std::move(er_inv));
        }
    }

    [[nodiscard]] const FlowEvaluator& flow() const noexcept { return flow_; }
    [[nodiscard]] const MatrixFunction& b() const noexcept { return b_; }
    [[nodiscard]] const Mesh& mesh() const noexcept { return mesh_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return flow_.dim(); }

    /// E(t, zeta_i).
    [[nodiscard]] Matrix e(double t, int i) const { return flow_.ematrix(b_, t, mesh_.anchor(i)); }

    /// W_i(t, s) = E(t, zeta_i) E(s, zeta_i)^{-1}, i.e. Z(t, s) for t, s in the closure of I_i.
    [[nodiscard]] Matrix w(int i, double t, double s) const {
        if (t == s) return Matrix::Identity(dim(), dim());
        return e(t, i) * e_inverse(i, s);
    }

    [[nodiscard]] Matrix z(double t, double tau) const {
        const int i = mesh_.locate(tau);
        const int j = mesh_.locate(t);
        if (i == j) return w(i, t, tau);
        if (t > tau) {
            Matrix out = w(i, mesh_.knot(i + 1), tau);
            for (int k = i + 1; k < j; ++k) out = factor(k) * out;
            return w(j, t, mesh_.knot(j)) * out;
        }
        Matrix out = w(i, mesh_.knot(i), tau);
        for (int k = i - 1; k > j; --k) out = factor_inverse(k) * out;
        return w(j, t, mesh_.knot(j + 1)) * out;
    }

    [[nodiscard]] Vector propagate(double tau, const Vector& xi, double t) const {
        if (xi.size() != dim()) throw Error(ErrorCode::DimensionMismatch, "initial vector has wrong size");
        return z(t, tau) * xi;
    }

    /// F_k = Z(t_{k+1}, t_k).
    [[nodiscard]] const Matrix& factor(int k) const { return factors_.at(offset(k)); }

    [[nodiscard]] const Matrix& factor_inverse(int k) const {
        const auto& f = factor_invs_.at(offset(k));
        if (!f) {
            throw Error(ErrorCode::SingularFactor,
                        "E(t_{k+1}, zeta_k) is singular for k = " + std::to_string(k) +
                            ", backward propagation across this interval is undefined");
        }
        return *f;
    }

    [[nodiscard]] const std::vector<Matrix>& monodromy_factors() const noexcept { return factors_; }

    /// Z(t_j, t_i) from the cached factors, either orientation.
    [[nodiscard]] Matrix knot_transition(int j, int i) const {
        Matrix out = Matrix::Identity(dim(), dim());
        if (j >= i) {
            for (int k = i; k < j; ++k) out = factor(k) * out;
        } else {
            for (int k = i - 1; k >= j; --k) out = factor_inverse(k) * out;
        }
        return out;
    }

private:
    [[nodiscard]] std::size_t offset(int k) const {
        if (k < mesh_.i_min() || k > mesh_.i_max()) {
            throw Error(ErrorCode::OutOfWindow, "interval index " + std::to_string(k) + " outside window");
        }
        return static_cast<std::size_t>(k - mesh_.i_min());
    }

    [[nodiscard]] Matrix e_inverse(int i, double s) const {
        if (s == mesh_.knot(i)) return e_left_inv_[offset(i)];
        if (s == mesh_.knot(i + 1)) {
            const auto& inv = e_right_inv_[offset(i)];
            if (!inv) throw Error(ErrorCode::SingularFactor, "E(t_{i+1}, zeta_i) is singular for i = " + std::to_string(i));
            return *inv;
        }
        if (s == mesh_.anchor(i)) return Matrix::Identity(dim(), dim());
        return checked_inverse(e(s, i), opts_.max_condition, "E(s, zeta_i)");
    }

    FlowEvaluator flow_;
    MatrixFunction b_;
    Mesh mesh_;
    CauchyOptions opts_;
    std::vector<Matrix> e_left_inv_;
    std::vector<Matrix> e_right_;
    std::vector<std::optional<Matrix>> e_right_inv_;
    std::vector<Matrix> factors_;
    std::vector<std::optional<Matrix>> factor_invs_;
};

/// Least-squares line y = intercept + slope x with its RMS residual.
struct LineFit {
    double intercept = 0.0;
    double slope = 0.0;
    double residual = 0.0;
};

inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw Error(ErrorCode::InsufficientData, "line fit needs two points");
    const auto n = static_cast<double>(x.size());
    double sx = 0, sy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::InsufficientData, "line fit needs distinct abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double r = y[k] - (f.intercept + f.slope * x[k]);
        ss += r * r;
    }
    f.residual = std::sqrt(ss / n);
    return f;
}

/// Numerical evidence for |Z(t, s)| <= c e^{-sigma (t - s)}.
struct DecayEstimate {
    double c = 0.0;           // exp(intercept) of the knot fit
    double sigma = 0.0;       // minus the slope of the knot fit
    double fit_residual = 0.0;
    double power_c = 0.0;     // |Z| ~ power_c (t - t0)^power_kappa
    double power_kappa = 0.0;
    double power_residual = 0.0;
    double envelope_c = 0.0;  // max |Z(t, s)| e^{sigma (t - s)} over sampled t >= s
    double t0 = 0.0;
    double t_end = 0.0;
    int knots_used = 0;
};

/// With `backward` the fit is of |Z(t_k, t0)| against t0 - t_k for knots before t0.
inline DecayEstimate estimate_decay(const CauchyOperator& op, double t0, double horizon, bool backward = false) {
    const Mesh& mesh = op.mesh();
    const double t_end = backward ? std::max(t0 - horizon, mesh.window_begin()) : std::min(t0 + horizon, mesh.window_end());
    std::vector<int> ks;
    for (int k = mesh.i_min(); k <= mesh.i_max() + 1; ++k) {
        const double dist = backward ? t0 - mesh.knot(k) : mesh.knot(k) - t0;
        if (dist > 0.0 && dist <= std::abs(t_end - t0)) ks.push_back(k);
    }
    if (ks.size() < 10) {
        throw Error(ErrorCode::InsufficientData,
                    "decay fit needs at least 10 knots after t0 inside the horizon (found " +
                        std::to_string(ks.size()) + ")");
    }
    std::vector<double> x, y, lx;
    for (int k : ks) {
        const double tk = mesh.knot(k);
        const double nrm = opnorm(op.z(tk, t0));
        if (!(nrm > 0.0)) throw Error(ErrorCode::InsufficientData, "Z(t_k, t0) vanished, log fit undefined");
        x.push_back(std::abs(tk - t0));
        lx.push_back(std::log(std::abs(tk - t0)));
        y.push_back(std::log(nrm));
    }
    DecayEstimate d;
    const LineFit f = fit_line(x, y);
    d.c = std::exp(f.intercept);
    d.sigma = -f.slope;
    d.fit_residual = f.residual;
    const LineFit pw = fit_line(lx, y);
    d.power_c = std::exp(pw.intercept);
    d.power_kappa = pw.slope;
    d.power_residual = pw.residual;
    d.t0 = t0;
    d.t_end = t_end;
    d.knots_used = static_cast<int>(ks.size());

    // Envelope constant from s on knots, anchors and midpoints, t on a finer grid.
    const auto ts = mesh.sample_grid(std::min(t0, t_end), std::max(t0, t_end), 3);
    std::vector<double> ss;
    for (std::size_t m = 0; m < ts.size(); m += 2) ss.push_back(ts[m]);
    double env = 0.0;
    for (double s : ss) {
        for (double t : ts) {
            if (backward ? t > s : t < s) continue;
            env = std::max(env, opnorm(op.z(t, s)) * std::exp(d.sigma * std::abs(t - s)));
        }
    }
    d.envelope_c = env;
    return d;
}

}  // namespace depcag
