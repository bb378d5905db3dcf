#pragma once

#include "depcag/mesh.hpp"
#include "depcag/ode.hpp"
#include "depcag/types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace depcag {

enum SampleFlag : int { flag_none = 0, knot_flag = 1, anchor_flag = 2 };

/// Sampled solution with a dense evaluator. Sample times always include the
/// knots and anchors inside the covered range.
class Trajectory {
public:
    using Evaluator = std::function<Vector(double)>;

    Trajectory() = default;
    Trajectory(std::vector<double> times, std::vector<Vector> states, Evaluator dense, const Mesh& mesh)
        : times_(std::move(times)), states_(std::move(states)), dense_(std::move(dense)) {
        if (times_.size() != states_.size() || times_.empty()) {
            throw Error(ErrorCode::InvalidArgument, "trajectory needs matching nonempty times and states");
        }
        flags_.reserve(times_.size());
        for (double t : times_) {
            flags_.push_back((mesh.is_knot(t) ? knot_flag : flag_none) | (mesh.is_anchor(t) ? anchor_flag : flag_none));
        }
    }

    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] const std::vector<Vector>& states() const noexcept { return states_; }
    [[nodiscard]] const std::vector<int>& flags() const noexcept { return flags_; }
    [[nodiscard]] std::size_t size() const noexcept { return times_.size(); }
    [[nodiscard]] Eigen::Index dim() const { return states_.empty() ? 0 : states_.front().size(); }
    [[nodiscard]] double t_min() const { return std::min(times_.front(), times_.back()); }
    [[nodiscard]] double t_max() const { return std::max(times_.front(), times_.back()); }

    [[nodiscard]] Vector operator()(double t) const {
        const double slack = 1e-12 * std::max(1.0, std::abs(t));
        if (t < t_min() - slack || t > t_max() + slack) {
            throw Error(ErrorCode::OutOfWindow, "trajectory queried outside its range at t = " + std::to_string(t));
        }
        return dense_(std::clamp(t, t_min(), t_max()));
    }

    [[nodiscard]] double sup_norm() const {
        double m = 0.0;
        for (const auto& y : states_) m = std::max(m, y.norm());
        return m;
    }

    /// Diagnostics attached by the producing solver (iterations, bounds, ...).
    std::vector<std::pair<std::string, double>> info;

    void set_info(const std::string& key, double value) {
        for (auto& [k, v] : info) {
            if (k == key) {
                v = value;
                return;
            }
        }
        info.emplace_back(key, value);
    }
    [[nodiscard]] std::optional<double> find_info(const std::string& key) const {
        for (const auto& [k, v] : info) {
            if (k == key) return v;
        }
        return std::nullopt;
    }

private:
    std::vector<double> times_;
    std::vector<Vector> states_;
    std::vector<int> flags_;
    Evaluator dense_;
};

/// Per-interval polynomial interpolant on Chebyshev-Lobatto nodes, evaluated
/// with the barycentric formula. Pieces cover [a, b] split at the mesh knots.
class PiecewiseChebyshev {
public:
    struct Piece {
        double lo, hi;
        std::vector<double> nodes;
        std::vector<Vector> values;
    };

    PiecewiseChebyshev(const Mesh& mesh, double a, double b, int order) : order_(order) {
        if (order < 2) throw Error(ErrorCode::InvalidArgument, "interpolation order must be at least 2");
        if (a > b) std::swap(a, b);
        std::vector<double> cuts{a};
        for (double k : mesh.knots()) {
            if (k > a && k < b) cuts.push_back(k);
        }
        cuts.push_back(b);
        for (std::size_t m = 0; m + 1 < cuts.size(); ++m) {
            Piece p;
            p.lo = cuts[m];
            p.hi = cuts[m + 1];
            for (int j = order; j >= 0; --j) {
                const double x = std::cos(std::numbers::pi * j / order);
                p.nodes.push_back(0.5 * (p.lo + p.hi) + 0.5 * (p.hi - p.lo) * x);
            }
            p.nodes.front() = p.lo;
            p.nodes.back() = p.hi;
            pieces_.push_back(std::move(p));
        }
    }

    [[nodiscard]] std::vector<Piece>& pieces() noexcept { return pieces_; }
    [[nodiscard]] const std::vector<Piece>& pieces() const noexcept { return pieces_; }

    /// Fills every node value from a function of time.
    template <class F>
    void fill(F&& f) {
        for (auto& p : pieces_) {
            p.values.clear();
            for (double t : p.nodes) p.values.push_back(f(t));
        }
    }

    [[nodiscard]] Vector operator()(double t) const {
        const Piece& p = piece_for(t);
        const auto n = p.nodes.size();
        Vector num = Vector::Zero(p.values.front().size());
        double den = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = t - p.nodes[j];
            if (diff == 0.0) return p.values[j];
            double w = (j % 2 == 0) ? 1.0 : -1.0;
            if (j == 0 || j + 1 == n) w *= 0.5;
            const double c = w / diff;
            num += c * p.values[j];
            den += c;
        }
        return num / den;
    }

    [[nodiscard]] double max_difference(const PiecewiseChebyshev& other) const {
        double m = 0.0;
        for (std::size_t k = 0; k < pieces_.size(); ++k) {
            for (std::size_t j = 0; j < pieces_[k].values.size(); ++j) {
                m = std::max(m, (pieces_[k].values[j] - other.pieces_[k].values[j]).norm());
            }
        }
        return m;
    }

private:
    [[nodiscard]] const Piece& piece_for(double t) const {
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                                   [](double x, const Piece& p) { return x < p.lo; });
        if (it == pieces_.begin()) return pieces_.front();
        return *(it - 1);
    }

    int order_;
    std::vector<Piece> pieces_;
};

/// Piecewise cubic Hermite interpolation through accepted integrator steps.
class HermiteDense {
public:
    void append(std::vector<OdeSample> segment) {
        if (segment.size() < 2) return;
        if (segment.front().t > segment.back().t) std::reverse(segment.begin(), segment.end());
        segments_.push_back(std::move(segment));
        std::sort(segments_.begin(), segments_.end(),
                  [](const auto& a, const auto& b) { return a.front().t < b.front().t; });
    }

    [[nodiscard]] Vector operator()(double t) const {
        if (segments_.empty()) throw Error(ErrorCode::InvalidArgument, "dense output is empty");
        const auto* seg = &segments_.front();
        for (const auto& s : segments_) {
            if (t >= s.front().t) seg = &s;
        }
        const auto& v = *seg;
        auto it = std::upper_bound(v.begin(), v.end(), t, [](double x, const OdeSample& s) { return x < s.t; });
        std::size_t hi = static_cast<std::size_t>(it - v.begin());
        hi = std::clamp<std::size_t>(hi, 1, v.size() - 1);
        const auto& a = v[hi - 1];
        const auto& b = v[hi];
        const double h = b.t - a.t;
        if (h == 0.0) return a.y;
        const double x = (t - a.t) / h;
        const double h00 = (1 + 2 * x) * (1 - x) * (1 - x);
        const double h10 = x * (1 - x) * (1 - x);
        const double h01 = x * x * (3 - 2 * x);
        const double h11 = x * x * (x - 1);
        return h00 * a.y + h10 * h * a.dy + h01 * b.y + h11 * h * b.dy;
    }

private:
    std::vector<std::vector<OdeSample>> segments_;
};

}  // namespace depcag
