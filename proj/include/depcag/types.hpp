#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace depcag {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
    OutOfWindow,
    InvalidMesh,
    InvalidArgument,
    DimensionMismatch,
    SingularFactor,
    IntegrationFailure,
    InsufficientData,
    MissingProjection,
    NotAProjection,
    NoDecayCertificate,
    TailNotConvergent,
    NoDichotomy,
    NoContraction,
    MaxIterExceeded,
    XiNotInRange,
    AnchorSolveFailure,
    ThetaNotLessThanOne,
    DomainError,
    ConfigError,
};

inline constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::OutOfWindow: return "OutOfWindow";
        case ErrorCode::InvalidMesh: return "InvalidMesh";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::SingularFactor: return "SingularFactor";
        case ErrorCode::IntegrationFailure: return "IntegrationFailure";
        case ErrorCode::InsufficientData: return "InsufficientData";
        case ErrorCode::MissingProjection: return "MissingProjection";
        case ErrorCode::NotAProjection: return "NotAProjection";
        case ErrorCode::NoDecayCertificate: return "NoDecayCertificate";
        case ErrorCode::TailNotConvergent: return "TailNotConvergent";
        case ErrorCode::NoDichotomy: return "NoDichotomy";
        case ErrorCode::NoContraction: return "NoContraction";
        case ErrorCode::MaxIterExceeded: return "MaxIterExceeded";
        case ErrorCode::XiNotInRange: return "XiNotInRange";
        case ErrorCode::AnchorSolveFailure: return "AnchorSolveFailure";
        case ErrorCode::ThetaNotLessThanOne: return "ThetaNotLessThanOne";
        case ErrorCode::DomainError: return "DomainError";
        case ErrorCode::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Library exception. `code()` is stable and machine-greppable; `what()` is
/// a human sentence.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Induced 2-norm (largest singular value). Used for every matrix bound.
inline double opnorm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

inline double min_singular_value(const Matrix& m) {
    if (m.rows() == 1 && m.cols() == 1) return std::abs(m(0, 0));
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Inverse through partial-pivot LU, refusing factors whose 2-norm
/// condition number exceeds `max_condition`.
inline Matrix checked_inverse(const Matrix& m, double max_condition = 1e13,
                              std::string_view what = "factor") {
    const double smax = opnorm(m);
    const double smin = min_singular_value(m);
    if (!(smin > 0.0) || smax / smin > max_condition) {
        throw Error(ErrorCode::SingularFactor,
                    std::string(what) + " is singular or too ill-conditioned (cond = " +
                        (smin > 0.0 ? std::to_string(smax / smin) : std::string("inf")) + ")");
    }
    return m.partialPivLu().inverse();
}

}  // namespace depcag
