#pragma once

#include "depcag/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace depcag {

/// Generator rule behind a mesh window. `explicit_list` means the knots were
/// given directly and nothing is known outside the stored window.
struct MeshFamily {
    enum class Kind { uniform, greatest_integer, cooke_wiener, affine, explicit_list };

    Kind kind = Kind::explicit_list;
    double nu_plus = 0.0;   // advanced length  zeta_i - t_i
    double nu_minus = 0.0;  // delayed length   t_{i+1} - zeta_i
    double origin = 0.0;    // t_0 for uniform meshes
    double c = 0.0;         // affine gamma(t) = c [(t + d) / c]
    double d = 0.0;

    [[nodiscard]] std::string name() const {
        switch (kind) {
            case Kind::uniform: return "uniform";
            case Kind::greatest_integer: return "greatest_integer";
            case Kind::cooke_wiener: return "cooke_wiener";
            case Kind::affine: return "affine";
            case Kind::explicit_list: return "explicit";
        }
        return "explicit";
    }
};

/// Advanced part [t_i, zeta_i] and delayed part (zeta_i, t_{i+1}) of I_i.
struct IntervalSplit {
    double advanced_begin, advanced_end;
    double delayed_begin, delayed_end;

    [[nodiscard]] double advanced_length() const { return advanced_end - advanced_begin; }
    [[nodiscard]] double delayed_length() const { return delayed_end - delayed_begin; }
};

/// Finite window of the step function gamma: knots t_{i_min} < ... < t_{i_max+1}
/// and one anchor zeta_i in [t_i, t_{i+1}] per interval I_i = [t_i, t_{i+1}).
class Mesh {
public:
    Mesh(std::vector<double> knots, std::vector<double> anchors, int i_min = 0,
         MeshFamily family = {})
        : knots_(std::move(knots)), anchors_(std::move(anchors)), i_min_(i_min),
          family_(family) {
        validate();
    }

    static Mesh uniform(double nu_plus, double nu_minus, int i_min, int i_max,
                        double origin = 0.0) {
        if (nu_plus < 0.0 || nu_minus < 0.0 || nu_plus + nu_minus <= 0.0) {
            throw Error(ErrorCode::InvalidMesh,
                        "uniform mesh needs nu_plus, nu_minus >= 0 with positive sum");
        }
        MeshFamily fam;
        fam.kind = MeshFamily::Kind::uniform;
        fam.nu_plus = nu_plus;
        fam.nu_minus = nu_minus;
        fam.origin = origin;
        return generate(fam, i_min, i_max);
    }

    /// gamma(t) = [t]: knots at the integers, anchors equal to the knots.
    static Mesh greatest_integer(int i_min, int i_max) {
        MeshFamily fam;
        fam.kind = MeshFamily::Kind::greatest_integer;
        fam.nu_plus = 0.0;
        fam.nu_minus = 1.0;
        return generate(fam, i_min, i_max);
    }

    /// gamma(t) = 2[(t+1)/2]: t_i = 2i - 1, zeta_i = 2i.
    static Mesh cooke_wiener(int i_min, int i_max) {
        MeshFamily fam;
        fam.kind = MeshFamily::Kind::cooke_wiener;
        fam.c = 2.0;
        fam.d = 1.0;
        fam.nu_plus = 1.0;
        fam.nu_minus = 1.0;
        return generate(fam, i_min, i_max);
    }

    /// gamma(t) = c[(t+d)/c] with c > 0, 0 <= d < c: t_i = ci - d, zeta_i = ci.
    static Mesh affine(double c, double d, int i_min, int i_max) {
        if (!(c > 0.0) || d < 0.0 || !(c > d)) {
            throw Error(ErrorCode::InvalidMesh, "affine mesh needs c > 0 and 0 <= d < c");
        }
        MeshFamily fam;
        fam.kind = MeshFamily::Kind::affine;
        fam.c = c;
        fam.d = d;
        fam.nu_plus = d;
        fam.nu_minus = c - d;
        return generate(fam, i_min, i_max);
    }

    static Mesh generate(const MeshFamily& fam, int i_min, int i_max) {
        if (i_max < i_min) throw Error(ErrorCode::InvalidMesh, "empty mesh window");
        std::vector<double> knots;
        std::vector<double> anchors;
        knots.reserve(static_cast<std::size_t>(i_max - i_min + 2));
        for (int i = i_min; i <= i_max + 1; ++i) {
            double t = 0.0;
            switch (fam.kind) {
                case MeshFamily::Kind::uniform:
                    t = fam.origin + i * (fam.nu_plus + fam.nu_minus);
                    break;
                case MeshFamily::Kind::greatest_integer: t = i; break;
                case MeshFamily::Kind::cooke_wiener:
                case MeshFamily::Kind::affine: t = fam.c * i - fam.d; break;
                case MeshFamily::Kind::explicit_list:
                    throw Error(ErrorCode::InvalidMesh, "explicit meshes are not generated");
            }
            knots.push_back(t);
            if (i <= i_max) anchors.push_back(t + fam.nu_plus);
        }
        // Keep anchors exactly on the knot when the advanced part is empty
        // and exactly on the next knot when the delayed part is empty.
        for (std::size_t k = 0; k < anchors.size(); ++k) {
            if (fam.nu_minus == 0.0) anchors[k] = knots[k + 1];
        }
        return Mesh(std::move(knots), std::move(anchors), i_min, fam);
    }

    [[nodiscard]] int i_min() const noexcept { return i_min_; }
    [[nodiscard]] int i_max() const noexcept {
        return i_min_ + static_cast<int>(anchors_.size()) - 1;
    }
    [[nodiscard]] int intervals() const noexcept { return static_cast<int>(anchors_.size()); }
    [[nodiscard]] const MeshFamily& family() const noexcept { return family_; }
    [[nodiscard]] bool has_family_rule() const noexcept {
        return family_.kind != MeshFamily::Kind::explicit_list;
    }

    /// t_i for i in [i_min, i_max + 1].
    [[nodiscard]] double knot(int i) const {
        check_knot_index(i);
        return knots_[static_cast<std::size_t>(i - i_min_)];
    }
    /// zeta_i for i in [i_min, i_max].
    [[nodiscard]] double anchor(int i) const {
        check_interval_index(i);
        return anchors_[static_cast<std::size_t>(i - i_min_)];
    }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
    [[nodiscard]] const std::vector<double>& anchors() const noexcept { return anchors_; }

    [[nodiscard]] double window_begin() const noexcept { return knots_.front(); }
    [[nodiscard]] double window_end() const noexcept { return knots_.back(); }
    [[nodiscard]] bool in_window(double t) const noexcept {
        return t >= window_begin() && t < window_end();
    }
    /// Closed window: also admits the right end t_{i_max+1}.
    [[nodiscard]] bool in_closed_window(double t) const noexcept {
        return t >= window_begin() && t <= window_end();
    }

    /// i(t): the unique i with t_i <= t < t_{i+1}.
    [[nodiscard]] int interval_index(double t) const {
        if (!in_window(t)) throw out_of_window(t);
        return locate_unchecked(t);
    }

    /// Like interval_index, but t = t_{i_max+1} resolves to i_max so that
    /// closed-interval quantities at the right edge can be evaluated.
    [[nodiscard]] int locate(double t) const {
        if (!in_closed_window(t)) throw out_of_window(t);
        if (t == window_end()) return i_max();
        return locate_unchecked(t);
    }

    [[nodiscard]] double gamma(double t) const { return anchor(interval_index(t)); }

    [[nodiscard]] IntervalSplit split(int i) const {
        check_interval_index(i);
        return {knot(i), anchor(i), anchor(i), knot(i + 1)};
    }

    /// sup over the window of max(zeta_i - t_i, t_{i+1} - zeta_i).
    [[nodiscard]] double tbar() const {
        double best = 0.0;
        for (int i = i_min(); i <= i_max(); ++i) {
            best = std::max({best, anchor(i) - knot(i), knot(i + 1) - anchor(i)});
        }
        return best;
    }

    /// inf over the window of t_{i+1} - t_i.
    [[nodiscard]] double min_gap() const {
        double best = std::numeric_limits<double>::infinity();
        for (int i = i_min(); i <= i_max(); ++i) best = std::min(best, knot(i + 1) - knot(i));
        return best;
    }

    /// Sample times in [a, b]: every knot and anchor inside plus `interior`
    /// equally spaced points strictly inside each interval, sorted and unique.
    [[nodiscard]] std::vector<double> sample_grid(double a, double b, int interior = 8) const {
        if (a > b) std::swap(a, b);
        std::vector<double> out;
        for (int i = i_min(); i <= i_max(); ++i) {
            const double lo = knot(i);
            const double hi = knot(i + 1);
            if (hi < a || lo > b) continue;
            out.push_back(lo);
            out.push_back(anchor(i));
            for (int m = 1; m <= interior; ++m) out.push_back(lo + (hi - lo) * m / (interior + 1));
            out.push_back(hi);
        }
        out.push_back(a);
        out.push_back(b);
        std::erase_if(out, [&](double t) { return t < a || t > b; });
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    [[nodiscard]] bool is_knot(double t) const {
        return std::binary_search(knots_.begin(), knots_.end(), t);
    }
    [[nodiscard]] bool is_anchor(double t) const {
        return std::find(anchors_.begin(), anchors_.end(), t) != anchors_.end();
    }

private:
    void validate() const {
        if (anchors_.empty()) throw Error(ErrorCode::InvalidMesh, "mesh needs at least one interval");
        if (knots_.size() != anchors_.size() + 1) {
            throw Error(ErrorCode::InvalidMesh,
                        "mesh needs exactly one more knot than anchors (got " +
                            std::to_string(knots_.size()) + " knots, " +
                            std::to_string(anchors_.size()) + " anchors)");
        }
        for (std::size_t k = 0; k + 1 < knots_.size(); ++k) {
            if (!(knots_[k] < knots_[k + 1])) {
                throw Error(ErrorCode::InvalidMesh,
                            "knots must be strictly increasing: t[" +
                                std::to_string(i_min_ + static_cast<int>(k) + 1) +
                                "] <= t[" + std::to_string(i_min_ + static_cast<int>(k)) + "]");
            }
            if (anchors_[k] < knots_[k] || anchors_[k] > knots_[k + 1]) {
                throw Error(ErrorCode::InvalidMesh,
                            "anchor zeta[" + std::to_string(i_min_ + static_cast<int>(k)) +
                                "] lies outside [t_i, t_{i+1}]");
            }
        }
    }

    [[nodiscard]] int locate_unchecked(double t) const {
        const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
        return i_min_ + static_cast<int>(it - knots_.begin()) - 1;
    }

    void check_knot_index(int i) const {
        if (i < i_min_ || i > i_max() + 1) {
            throw Error(ErrorCode::OutOfWindow, "knot index " + std::to_string(i) + " outside window");
        }
    }
    void check_interval_index(int i) const {
        if (i < i_min_ || i > i_max()) {
            throw Error(ErrorCode::OutOfWindow,
                        "interval index " + std::to_string(i) + " outside window");
        }
    }

    [[nodiscard]] Error out_of_window(double t) const {
        std::ostringstream os;
        os.precision(17);
        os << "t = " << t << " outside mesh window [" << window_begin() << ", " << window_end()
           << ")";
        return Error(ErrorCode::OutOfWindow, os.str());
    }

    std::vector<double> knots_;
    std::vector<double> anchors_;
    int i_min_;
    MeshFamily family_;
};

}  // namespace depcag
