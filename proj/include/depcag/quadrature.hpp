#pragma once

#include "depcag/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <type_traits>
#include <vector>

namespace depcag {

struct QuadratureOptions {
    double abs_tol = 1e-13;
    double rel_tol = 1e-12;
    int max_subdivisions = 400;
};

namespace detail {

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss rule.
inline constexpr std::array<double, 8> kronrod_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> kronrod_w = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gauss_w = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

template <class R>
struct Segment {
    double a, b;
    R value;
    double error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

template <class R>
double max_abs(const R& m) {
    if constexpr (std::is_arithmetic_v<R>) {
        return std::abs(m);
    } else {
        return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
    }
}

template <class R, class F>
Segment<R> gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const R fc = f(c);
    R kron = fc * kronrod_w[7];
    R gauss = fc * gauss_w[3];
    for (int k = 0; k < 7; ++k) {
        const double dx = h * kronrod_x[static_cast<std::size_t>(k)];
        const R f1 = f(c - dx);
        const R f2 = f(c + dx);
        kron = kron + (f1 + f2) * kronrod_w[static_cast<std::size_t>(k)];
        if (k % 2 == 1) gauss = gauss + (f1 + f2) * gauss_w[static_cast<std::size_t>(k / 2)];
    }
    R value = kron * h;
    R diff = (kron - gauss) * h;
    return {a, b, value, max_abs(diff)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod (G7/K15) quadrature of a scalar, vector or
/// matrix valued integrand. Orientation is respected (b < a flips the sign)
/// and an empty interval integrates to zero of the integrand's shape.
template <class F>
auto integrate(F&& f, double a, double b, const QuadratureOptions& opts = {}) {
    using R = std::decay_t<decltype(f(a))>;
    using Value = std::conditional_t<std::is_arithmetic_v<R>, double, Matrix>;
    auto fv = [&](double s) -> Value { return Value(f(s)); };
    if (a == b) {
        Value z = fv(a);
        if constexpr (std::is_arithmetic_v<Value>) {
            return 0.0;
        } else {
            z.setZero();
            return z;
        }
    }
    const double sign = b < a ? -1.0 : 1.0;
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);

    std::priority_queue<detail::Segment<Value>> heap;
    auto first = detail::gk15<Value>(fv, lo, hi);
    Value total = first.value;
    double err = first.error;
    heap.push(std::move(first));

    int splits = 0;
    while (err > std::max(opts.abs_tol, opts.rel_tol * detail::max_abs(total))) {
        if (splits >= opts.max_subdivisions) {
            throw Error(ErrorCode::IntegrationFailure,
                        "adaptive quadrature did not reach tolerance (error estimate " +
                            std::to_string(err) + ")");
        }
        auto worst = heap.top();
        heap.pop();
        const double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            // Interval cannot be split further in double precision.
            heap.push(std::move(worst));
            break;
        }
        auto left = detail::gk15<Value>(fv, worst.a, mid);
        auto right = detail::gk15<Value>(fv, mid, worst.b);
        total = total - worst.value + left.value + right.value;
        err = err - worst.error + left.error + right.error;
        heap.push(std::move(left));
        heap.push(std::move(right));
        ++splits;
    }
    if constexpr (std::is_arithmetic_v<Value>) {
        if (!std::isfinite(total)) {
            throw Error(ErrorCode::IntegrationFailure, "quadrature produced a non-finite value");
        }
        return sign * total;
    } else {
        if (!total.allFinite()) {
            throw Error(ErrorCode::IntegrationFailure, "quadrature produced a non-finite value");
        }
        return Value(sign * total);
    }
}

/// Same as integrate, but splits [a, b] at the given interior breakpoints so
/// each piece has a smooth integrand.
template <class F>
auto integrate_pieces(F&& f, double a, double b, const std::vector<double>& breaks,
                      const QuadratureOptions& opts = {}) {
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    std::vector<double> pts{lo};
    for (double x : breaks) {
        if (x > lo && x < hi) pts.push_back(x);
    }
    pts.push_back(hi);
    std::sort(pts.begin(), pts.end());
    auto total = integrate(f, pts[0], pts[1], opts);
    for (std::size_t k = 1; k + 1 < pts.size(); ++k) total = total + integrate(f, pts[k], pts[k + 1], opts);
    if (b < a) total = -total;
    return total;
}

}  // namespace depcag
