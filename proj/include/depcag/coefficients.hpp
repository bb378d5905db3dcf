#pragma once

#include "depcag/types.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <numbers>
#include <string>
#include <utility>

namespace depcag {

/// Matrix valued coefficient t -> M(t): either a constant matrix or a callable.
class MatrixFunction {
public:
    using Fn = std::function<Matrix(double)>;

    MatrixFunction() : MatrixFunction(Matrix::Zero(1, 1)) {}

    explicit MatrixFunction(Matrix value, std::string name = "constant")
        : rows_(value.rows()), cols_(value.cols()), constant_(std::move(value)),
          name_(std::move(name)) {
        if (!constant_.allFinite()) throw Error(ErrorCode::DomainError, "coefficient " + name_ + " is not finite");
    }

    MatrixFunction(Eigen::Index rows, Eigen::Index cols, Fn fn, std::string name)
        : rows_(rows), cols_(cols), fn_(std::move(fn)), name_(std::move(name)) {}

    static MatrixFunction zero(Eigen::Index rows, Eigen::Index cols) {
        return MatrixFunction(Matrix::Zero(rows, cols), "zero");
    }

    [[nodiscard]] Matrix operator()(double t) const {
        if (!fn_) return constant_;
        Matrix m = fn_(t);
        if (m.rows() != rows_ || m.cols() != cols_) {
            throw Error(ErrorCode::DimensionMismatch, "coefficient " + name_ + " returned a wrongly sized matrix");
        }
        if (!m.allFinite()) {
            throw Error(ErrorCode::DomainError, "coefficient " + name_ + " is not finite at t = " + std::to_string(t));
        }
        return m;
    }

    [[nodiscard]] bool is_constant() const noexcept { return !fn_; }
    [[nodiscard]] bool is_zero() const noexcept { return !fn_ && constant_.isZero(0.0); }
    [[nodiscard]] const Matrix& constant_value() const {
        if (fn_) throw Error(ErrorCode::InvalidArgument, "coefficient " + name_ + " is not constant");
        return constant_;
    }
    [[nodiscard]] Eigen::Index rows() const noexcept { return rows_; }
    [[nodiscard]] Eigen::Index cols() const noexcept { return cols_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    Eigen::Index rows_;
    Eigen::Index cols_;
    Matrix constant_;
    Fn fn_;
    std::string name_;
};

using CoefficientFunction = MatrixFunction;

/// Forcing term t -> g(t).
class VectorFunction {
public:
    using Fn = std::function<Vector(double)>;

    explicit VectorFunction(Eigen::Index dim = 1) : VectorFunction(Vector::Zero(dim), "zero") {}
    VectorFunction(Vector value, std::string name)
        : dim_(value.size()), constant_(std::move(value)), name_(std::move(name)) {}
    VectorFunction(Eigen::Index dim, Fn fn, std::string name)
        : dim_(dim), fn_(std::move(fn)), name_(std::move(name)) {}

    [[nodiscard]] Vector operator()(double t) const {
        if (!fn_) return constant_;
        Vector v = fn_(t);
        if (v.size() != dim_) throw Error(ErrorCode::DimensionMismatch, "forcing " + name_ + " has wrong size");
        if (!v.allFinite()) throw Error(ErrorCode::DomainError, "forcing " + name_ + " is not finite");
        return v;
    }

    [[nodiscard]] bool is_zero() const noexcept { return !fn_ && constant_.isZero(0.0); }
    [[nodiscard]] bool is_constant() const noexcept { return !fn_; }
    [[nodiscard]] Eigen::Index dim() const noexcept { return dim_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    Eigen::Index dim_;
    Vector constant_;
    Fn fn_;
    std::string name_;
};

/// Nonnegative weight t -> eta(t). `sup` is a known upper bound (eta_0) if any.
class ScalarFunction {
public:
    using Fn = std::function<double(double)>;

    explicit ScalarFunction(double value = 0.0)
        : fn_([value](double) { return value; }), name_("constant"), sup_(value),
          tail_([value](double) { return value == 0.0 ? 0.0 : std::numeric_limits<double>::infinity(); }),
          constant_(true) {}
    /// `tail`, if given, returns int_t^infinity eta(s) ds in closed form.
    ScalarFunction(Fn fn, std::string name, double sup, Fn tail = {})
        : fn_(std::move(fn)), name_(std::move(name)), sup_(sup), tail_(std::move(tail)) {}

    [[nodiscard]] double operator()(double t) const { return fn_(t); }
    [[nodiscard]] double sup() const noexcept { return sup_; }
    [[nodiscard]] std::optional<double> tail_integral(double t) const {
        if (!tail_) return std::nullopt;
        return tail_(t);
    }
    [[nodiscard]] bool is_constant() const noexcept { return constant_; }
    [[nodiscard]] bool is_zero() const noexcept { return constant_ && sup_ == 0.0; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    Fn fn_;
    std::string name_;
    double sup_;
    Fn tail_;
    bool constant_ = false;
};

/// Perturbation (t, x, y) -> f(t, x, y), y standing for x(gamma(t)).
class Perturbation {
public:
    using Fn = std::function<Vector(double, const Vector&, const Vector&)>;

    Perturbation() = default;
    Perturbation(Fn fn, std::string name, bool vanishes_at_origin)
        : fn_(std::move(fn)), name_(std::move(name)), vanishes_at_origin_(vanishes_at_origin) {}

    [[nodiscard]] Vector operator()(double t, const Vector& x, const Vector& y) const {
        if (!fn_) return Vector::Zero(x.size());
        Vector v = fn_(t, x, y);
        if (v.size() != x.size()) throw Error(ErrorCode::DimensionMismatch, "perturbation " + name_ + " has wrong size");
        return v;
    }

    [[nodiscard]] bool is_zero() const noexcept { return !fn_; }
    [[nodiscard]] bool vanishes_at_origin() const noexcept { return !fn_ || vanishes_at_origin_; }
    [[nodiscard]] const std::string& name() const noexcept { return name_; }

private:
    Fn fn_;
    std::string name_ = "zero";
    bool vanishes_at_origin_ = true;
};

namespace presets {

/// B(t) = diag(l(t), -l(t)) with l(t) = -2/pi + sin(2 pi t).
inline MatrixFunction diag_sin() {
    return MatrixFunction(2, 2, [](double t) {
        const double l = -2.0 / std::numbers::pi + std::sin(2.0 * std::numbers::pi * t);
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = l;
        m(1, 1) = -l;
        return m;
    }, "diag_sin");
}

/// M(t) = M0 + sin(omega t) M1.
inline MatrixFunction sin_modulated(const Matrix& m0, const Matrix& m1, double omega) {
    if (m0.rows() != m1.rows() || m0.cols() != m1.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "sin_modulated needs equally sized matrices");
    }
    return MatrixFunction(m0.rows(), m0.cols(),
                          [m0, m1, omega](double t) -> Matrix { return m0 + std::sin(omega * t) * m1; },
                          "sin_modulated");
}

/// g_k(t) = amplitude * sin(omega t + k), one phase shift per component.
inline VectorFunction sin_vector(Eigen::Index dim, double amplitude = 1.0, double omega = 1.0) {
    return VectorFunction(dim, [dim, amplitude, omega](double t) {
        Vector v(dim);
        for (Eigen::Index k = 0; k < dim; ++k) v(k) = amplitude * std::sin(omega * t + static_cast<double>(k));
        return v;
    }, "sin_vector");
}

/// g(t) = v exp(-rate t).
inline VectorFunction exp_decay(const Vector& v, double rate) {
    return VectorFunction(v.size(), [v, rate](double t) -> Vector { return v * std::exp(-rate * t); },
                          "exp_decay");
}

inline ScalarFunction eta_constant(double eta0) { return ScalarFunction(eta0); }

/// eta(t) = eta0 exp(-rate t); its sup is reported over t >= 0.
inline ScalarFunction eta_exp_decay(double eta0, double rate) {
    if (!(rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "exp_decay rate must be positive");
    return ScalarFunction([eta0, rate](double t) { return eta0 * std::exp(-rate * t); }, "exp_decay", eta0,
                          [eta0, rate](double t) { return eta0 / rate * std::exp(-rate * t); });
}

/// f(t, x, y) = eta(t) tanh(x), componentwise.
inline Perturbation tanh_x(ScalarFunction eta) {
    return Perturbation([eta](double t, const Vector& x, const Vector&) -> Vector {
        return eta(t) * x.array().tanh().matrix();
    }, "tanh_x", true);
}

/// f(t, x, y) = eta(t) sin(x), componentwise.
inline Perturbation sin_x(ScalarFunction eta) {
    return Perturbation([eta](double t, const Vector& x, const Vector&) -> Vector {
        return eta(t) * x.array().sin().matrix();
    }, "sin_x", true);
}

/// f(t, x, y) = eta(t) (sin(x) + sin(y)) / 2, componentwise.
inline Perturbation sin_xy(ScalarFunction eta) {
    return Perturbation([eta](double t, const Vector& x, const Vector& y) -> Vector {
        return 0.5 * eta(t) * (x.array().sin() + y.array().sin()).matrix();
    }, "sin_xy", true);
}

/// f(t, x, y) = eta(t) x.
inline Perturbation linear_x(ScalarFunction eta) {
    return Perturbation([eta](double t, const Vector& x, const Vector&) -> Vector { return eta(t) * x; },
                        "linear_x", true);
}

/// f(t, x, y) = eta(t) (x + y) / 2.
inline Perturbation linear_xy(ScalarFunction eta) {
    return Perturbation([eta](double t, const Vector& x, const Vector& y) -> Vector {
        return 0.5 * eta(t) * (x + y);
    }, "linear_xy", true);
}

}  // namespace presets

}  // namespace depcag
