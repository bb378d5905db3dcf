#include "depcag/config.hpp"
#include "depcag/depcag.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace depcag;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("gamma follows the family rules", "[mesh]") {
    const Mesh gi = Mesh::greatest_integer(-5, 5);
    CHECK(gi.gamma(2.7) == 2.0);
    CHECK(gi.gamma(-0.5) == -1.0);

    // brute force 2[(t+1)/2]
    const Mesh cw = Mesh::cooke_wiener(-5, 5);
    for (double t : {0.9, 1.1, -2.3, 4.99, 3.0}) {
        CHECK(cw.gamma(t) == 2.0 * std::floor((t + 1.0) / 2.0));
    }
    CHECK(cw.gamma(0.9) == 0.0);
    CHECK(cw.gamma(1.1) == 2.0);

    const Mesh u = Mesh::uniform(1.0, 1.0, -3, 3);
    CHECK(u.gamma(0.5) == 1.0);
}

TEST_CASE("interval index uses half-open intervals", "[mesh]") {
    const Mesh u = Mesh::uniform(0.3, 0.7, -4, 4);
    for (int k = -4; k <= 4; ++k) {
        CHECK(u.interval_index(u.knot(k)) == k);
        CHECK(u.interval_index(std::nextafter(u.knot(k + 1), -1e9)) == k);
    }
    CHECK(Mesh::greatest_integer(-3, 3).interval_index(-0.5) == -1);
    CHECK(code_of([&] { (void)u.interval_index(100.0); }) == ErrorCode::OutOfWindow);
}

TEST_CASE("split into advanced and delayed parts", "[mesh]") {
    const auto s = Mesh::uniform(1.0, 1.0, 0, 3).split(0);
    CHECK(s.advanced_begin == 0.0);
    CHECK(s.advanced_end == 1.0);
    CHECK(s.delayed_begin == 1.0);
    CHECK(s.delayed_end == 2.0);

    const auto delay = Mesh::greatest_integer(0, 3).split(1);
    CHECK(delay.advanced_length() == 0.0);
    const auto advance = Mesh::uniform(1.0, 0.0, 0, 3).split(1);
    CHECK(advance.delayed_length() == 0.0);
}

TEST_CASE("tbar and min gap", "[mesh]") {
    CHECK(Mesh::uniform(1.0, 1.0, 0, 5).tbar() == 1.0);
    CHECK(Mesh::cooke_wiener(-3, 3).tbar() == 1.0);
    CHECK(Mesh({0.0, 1.0, 3.0}, {0.5, 1.5}).tbar() == 1.5);
    CHECK(Mesh({0.0, 1.0, 1.5, 1.75}, {0.5, 1.2, 1.6}).min_gap() == 0.25);
}

TEST_CASE("invalid meshes name the offending index", "[mesh]") {
    try {
        Mesh({0.0, 1.0, 0.5, 2.0}, {0.5, 0.75, 1.5});
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidMesh);
        CHECK(std::string(e.what()).find("t[2]") != std::string::npos);
    }
    CHECK(code_of([] { Mesh({0.0, 1.0}, {1.5}); }) == ErrorCode::InvalidMesh);
    CHECK(code_of([] { (void)Mesh::affine(1.0, 1.0, 0, 3); }) == ErrorCode::InvalidMesh);
}

TEST_CASE("sample grid contains knots and anchors", "[mesh]") {
    const Mesh m = Mesh::uniform(0.25, 0.75, 0, 4);
    const auto g = m.sample_grid(0.0, 5.0, 3);
    for (int k = 0; k <= 4; ++k) {
        CHECK(std::binary_search(g.begin(), g.end(), m.knot(k)));
        CHECK(std::binary_search(g.begin(), g.end(), m.anchor(k)));
    }
    CHECK(std::is_sorted(g.begin(), g.end()));
    CHECK(g.front() == 0.0);
    CHECK(g.back() == 5.0);
}

TEST_CASE("quadrature of smooth and matrix integrands", "[quadrature]") {
    CHECK_THAT(integrate([](double s) { return std::exp(s); }, 0.0, 1.0), WithinRel(std::numbers::e - 1.0, 1e-13));
    CHECK_THAT(integrate([](double s) { return std::sin(s); }, 1.0, 0.0), WithinRel(std::cos(1.0) - 1.0, 1e-13));
    const Matrix m = integrate([](double s) -> Matrix { return Matrix::Constant(2, 2, s); }, 0.0, 2.0);
    CHECK_THAT(m(1, 0), WithinRel(2.0, 1e-14));
}

TEST_CASE("phi of constant and time-varying A", "[flow]") {
    const FlowEvaluator f(MatrixFunction(scalar(1.0)));
    CHECK_THAT(f.phi(0.5, 0.0)(0, 0), WithinRel(std::exp(0.5), 1e-14));
    CHECK(f.phi(0.3, 0.3).isIdentity(0.0));
    CHECK(FlowEvaluator(MatrixFunction::zero(2, 2)).phi(5.0, -3.0).isIdentity(0.0));

    // a(t) = cos t: phi(t, s) = exp(sin t - sin s)
    const MatrixFunction a(1, 1, [](double t) { return scalar(std::cos(t)); }, "cos");
    const FlowEvaluator g(a);
    CHECK(g.method() == FlowMethod::adaptive_integration);
    CHECK_THAT(g.phi(2.0, -1.0)(0, 0), WithinRel(std::exp(std::sin(2.0) - std::sin(-1.0)), 1e-10));
    CHECK_THAT(g.phi(-1.0, 2.0)(0, 0), WithinRel(std::exp(std::sin(-1.0) - std::sin(2.0)), 1e-10));
}

TEST_CASE("phi satisfies the group property", "[flow][property]") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 0.5);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 10; ++rep) {
        Matrix a(3, 3);
        for (int i = 0; i < 9; ++i) a(i / 3, i % 3) = n(rng);
        const FlowEvaluator f(MatrixFunction{a});
        const double t = u(rng), s = u(rng), r = u(rng);
        CHECK((f.phi(t, s) * f.phi(s, r) - f.phi(t, r)).norm() < 1e-11);
    }
}

TEST_CASE("J and E in closed form", "[flow]") {
    SECTION("A = 0") {
        const FlowEvaluator f(MatrixFunction::zero(1, 1));
        const MatrixFunction b(scalar(-0.7));
        CHECK(f.jmatrix(b, 1.0, 1.0).isIdentity(0.0));
        CHECK_THAT(f.jmatrix(b, 2.5, 1.0)(0, 0), WithinAbs(1.0 - 0.7 * 1.5, 1e-15));
        CHECK_THAT(f.ematrix(b, 2.5, 1.0)(0, 0), WithinAbs(1.0 - 0.7 * 1.5, 1e-15));
    }
    SECTION("scalar a, b") {
        const double a = 0.8, b = -1.3;
        const FlowEvaluator f(MatrixFunction(scalar(a)));
        const MatrixFunction bm(scalar(b));
        for (double s : {-1.0, -0.25, 0.4, 1.7}) {
            // J = 1 + int_0^s e^{-a r} b dr and E = Lambda(s)
            CHECK_THAT(f.jmatrix(bm, s, 0.0)(0, 0), WithinRel(1.0 + b / a * (1.0 - std::exp(-a * s)), 1e-13));
            const double lambda = std::exp(s * a) + (std::exp(s * a) - 1.0) * b / a;
            CHECK_THAT(f.ematrix(bm, s, 0.0)(0, 0), WithinRel(lambda, 1e-13));
            CHECK_THAT(scalar_lambda(a, b, s), WithinRel(lambda, 1e-14));
        }
    }
    SECTION("time-varying route agrees with the exact route") {
        Matrix a(2, 2), b(2, 2);
        a << -0.4, 0.3, 0.1, 0.2;
        b << 0.5, -0.2, 0.3, 0.1;
        const FlowEvaluator exact{MatrixFunction(a)};
        const FlowEvaluator generic(MatrixFunction(a), FlowMethod::adaptive_integration, 1e-12);
        const MatrixFunction bm(b);
        CHECK((exact.ematrix(bm, 0.9, -0.3) - generic.ematrix(bm, 0.9, -0.3)).norm() < 1e-10);
        CHECK((exact.jmatrix(bm, -0.6, 0.2) - generic.jmatrix(bm, -0.6, 0.2)).norm() < 1e-10);
    }
}

TEST_CASE("E is Lambda for matrices", "[flow]") {
    Matrix a(2, 2), b(2, 2);
    a << 0.5, -0.3, 0.2, -0.1;
    b << -0.4, 0.1, 0.0, 0.6;
    const FlowEvaluator f{MatrixFunction(a)};
    const double s = 0.75;
    const Matrix es = Matrix(s * a).exp();
    const Matrix lambda = es + a.inverse() * (es - Matrix::Identity(2, 2)) * b;
    CHECK((f.ematrix(MatrixFunction(b), 1.0 + s, 1.0) - lambda).norm() < 1e-13);
}

TEST_CASE("H4 detects singular J", "[flow][certificate]") {
    const Mesh m = Mesh::uniform(0.5, 0.5, 0, 5);
    const auto ok = check_h4(FlowEvaluator(MatrixFunction::zero(1, 1)), MatrixFunction::zero(1, 1), m);
    CHECK(ok.passed());
    CHECK_THAT(ok.get("min_singular_value"), WithinAbs(1.0, 1e-15));

    // 1 - nu+ b = 0 at the left knot
    const auto bad = check_h4(FlowEvaluator(MatrixFunction::zero(1, 1)), MatrixFunction(scalar(2.0)), m);
    CHECK(bad.verdict == Verdict::fail);

    // a = 1, b = -2 on the Cooke-Wiener mesh: J(t_i, zeta_i) = Lambda(-1) / e^{-1} is fine,
    // but J(t, zeta_i) = 2 e^{-(t - zeta_i)} - 1 vanishes at t = zeta_i + ln 2.
    const Mesh cw = Mesh::cooke_wiener(0, 4);
    const FlowEvaluator f(MatrixFunction(scalar(1.0)));
    const MatrixFunction b(scalar(-2.0));
    CHECK_THAT(f.ematrix(b, cw.knot(1), cw.anchor(1))(0, 0), WithinRel(scalar_lambda(1.0, -2.0, -1.0), 1e-13));
    CHECK_THAT(scalar_lambda(1.0, -2.0, -1.0), WithinAbs(1.632, 1e-3));
    CHECK_THAT(f.jmatrix(b, cw.anchor(1) + std::log(2.0), cw.anchor(1))(0, 0), WithinAbs(0.0, 1e-13));
    CHECK(check_h4(f, b, cw).verdict == Verdict::fail);
}

TEST_CASE("presets", "[coefficients]") {
    const auto ds = presets::diag_sin();
    const double t = 0.3;
    const double l = -2.0 / std::numbers::pi + std::sin(2.0 * std::numbers::pi * t);
    CHECK(ds(t)(0, 0) == l);
    CHECK(ds(t)(1, 1) == -l);
    const auto eta = presets::eta_exp_decay(0.1, 1.0);
    CHECK_THAT(*eta.tail_integral(2.0), WithinRel(0.1 * std::exp(-2.0), 1e-15));
    CHECK_THAT(integrate([&](double s) { return eta(s); }, 2.0, 60.0), WithinRel(*eta.tail_integral(2.0), 1e-10));
    CHECK(*ScalarFunction(0.0).tail_integral(5.0) == 0.0);
    CHECK(std::isinf(*ScalarFunction(0.2).tail_integral(5.0)));
    CHECK(code_of([] { (void)presets::eta_exp_decay(0.1, 0.0); }) == ErrorCode::InvalidArgument);
    const auto f = presets::sin_xy(ScalarFunction(0.5));
    Vector x(2), y(2);
    x << 0.3, -1.0;
    y << 2.0, 0.1;
    CHECK((f(0.0, x, y) - 0.25 * (x.array().sin() + y.array().sin()).matrix()).norm() < 1e-16);
}

TEST_CASE("Lipschitz probe agrees with the presets", "[system][property]") {
    const DepcagSystem sys(MatrixFunction::zero(2, 2), MatrixFunction::zero(2, 2), VectorFunction(2),
                           presets::sin_xy(ScalarFunction(0.3)), ScalarFunction(0.3), Mesh::uniform(0.5, 0.5, 0, 3));
    const auto probe = probe_lipschitz(sys);
    CHECK(probe.worst_ratio <= 1.0);
    CHECK(probe.worst_origin_value == 0.0);
}

TEST_CASE("system rejects mismatched dimensions", "[system]") {
    CHECK(code_of([] {
              DepcagSystem(MatrixFunction::zero(2, 2), MatrixFunction::zero(1, 1), Mesh::uniform(0.5, 0.5, 0, 2));
          }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("config parses arrays, presets and mesh families", "[config]") {
    std::istringstream in(R"([system]
dimension = 2
A = [[-1, 0], [0, 1]]
B = 0.5
g = {"preset": "sin_vector", "amplitude": 2.0}
f = tanh_x
eta = {"preset": "exp_decay", "eta0": 0.2, "rate": 0.5}

[mesh]
family = cooke_wiener
i_min = -2
i_max = 3

[solver]
tol = 1e-9

[task]
xi = [1, 2]
P = [[1, 0], [0, 0]]
)");
    const RunConfig cfg = parse_config(in);
    CHECK(cfg.dim == 2);
    CHECK(cfg.a.constant_value()(1, 1) == 1.0);
    CHECK(cfg.b.constant_value()(0, 0) == 0.5);
    CHECK(cfg.b.constant_value()(0, 1) == 0.0);
    CHECK_THAT(cfg.g(0.0)(1), WithinRel(2.0 * std::sin(1.0), 1e-15));
    CHECK_THAT(cfg.eta(2.0), WithinRel(0.2 * std::exp(-1.0), 1e-15));
    CHECK(cfg.mesh->knot(0) == -1.0);
    CHECK(cfg.mesh->anchor(0) == 0.0);
    CHECK(cfg.tol == 1e-9);
    CHECK((*cfg.xi)(1) == 2.0);
    CHECK(cfg.projection->isApprox(Matrix(Eigen::Vector2d(1, 0).asDiagonal())));
    CHECK(cfg.system().dim() == 2);
}

TEST_CASE("config rejects unknown keys and bad dimensions", "[config]") {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in);
    };
    auto message = [&](const std::string& text) -> std::string {
        try {
            parse(text);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ConfigError);
            return e.what();
        }
        FAIL("no error for: " << text);
        return {};
    };
    CHECK(message("[system]\nBx = 1\n").find("Bx") != std::string::npos);
    CHECK(message("[extra]\nk = 1\n").find("extra") != std::string::npos);
    CHECK(message("[system]\ndimension = 2\nA = [[1, 0]]\n").find("'A'") != std::string::npos);
    CHECK(message("[system]\ndimension = 2\n[task]\nxi = [1]\n").find("xi") != std::string::npos);
    CHECK(message("[mesh]\nfamily = cooke_wiener\nnu_plus = 1\n").find("nu_plus") != std::string::npos);
    CHECK(message("[mesh]\nfamily = explicit\nknots = [0, 1, 0.5]\nanchors = [0.5, 0.7]\n").find("t[2]") !=
          std::string::npos);
    CHECK(message("[system]\nf = tanh_x\n").find("eta") != std::string::npos);
    CHECK(message("[system]\nB = {\"preset\": \"diag_sin\"}\n").find("dimension 2") != std::string::npos);
    CHECK(message("[system]\nA = [[1, \n").find("JSON") != std::string::npos);
}
