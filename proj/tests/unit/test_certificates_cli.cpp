#include "depcag/app.hpp"
#include "depcag/depcag.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace depcag;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Matrix scalar(double x) { return Matrix::Constant(1, 1, x); }
Matrix diag2(double a, double b) { return Eigen::Vector2d(a, b).asDiagonal(); }

DepcagSystem scalar_system(double a, double b, const Mesh& m, ScalarFunction eta = ScalarFunction(0.0)) {
    Perturbation f = eta.is_zero() ? Perturbation() : presets::tanh_x(eta);
    return DepcagSystem(MatrixFunction(scalar(a)), MatrixFunction(scalar(b)), VectorFunction(1), f, eta, m);
}

}  // namespace

TEST_CASE("H2 constants", "[certificate]") {
    const auto zero = check_h2(DepcagSystem(MatrixFunction::zero(1, 1), MatrixFunction::zero(1, 1),
                                            Mesh::uniform(0.5, 0.5, 0, 3)));
    CHECK(zero.passed());
    CHECK(zero.get("rho_a") == 1.0);
    CHECK(zero.get("nu_plus") == 0.0);
    const auto one = check_h2(scalar_system(1.0, 0.1, Mesh::uniform(1.0, 1.0, 0, 3)));
    CHECK_THAT(one.get("rho_a_plus"), WithinRel(std::numbers::e, 1e-12));
    CHECK_THAT(one.get("rho_a"), WithinRel(std::exp(2.0), 1e-12));
    CHECK_THAT(one.get("nu_plus"), WithinRel(0.1 * std::numbers::e, 1e-12));
}

TEST_CASE("S conditions", "[certificate]") {
    const auto sys = scalar_system(0.3, 0.0, Mesh::uniform(0.25, 0.75, 0, 4));
    const auto c = check_s_conditions(sys, sys.cauchy());
    CHECK(c.get("s2_min_gap") == 1.0);
    CHECK(c.get("s3_tbar") == 0.75);
    // B = 0: |Z(t, t_i)| = |Phi| <= rho(A)
    CHECK(c.get("s1_sup_z") <= c.get("rho_a") * (1.0 + 1e-12));
    const DepcagSystem shrink(MatrixFunction::zero(1, 1), MatrixFunction::zero(1, 1),
                              Mesh({0.0, 1.0, 1.5, 1.75}, {0.5, 1.2, 1.6}));
    CHECK(check_s_conditions(shrink, shrink.cauchy()).get("s2_min_gap") == 0.25);
}

TEST_CASE("Gronwall constants", "[certificate]") {
    const Mesh m = Mesh::uniform(0.5, 0.5, 0, 10);
    const auto none = gronwall_bound(ScalarFunction(0.0), m, 0.0, 5.0, 3.0);
    CHECK(none.theta == 0.0);
    CHECK(none.theta_tilde == 2.0);
    CHECK(none.bound == 3.0);
    const auto small = gronwall_bound(ScalarFunction(0.1), m, 0.0, 5.0, 1.0);
    CHECK_THAT(small.theta, WithinAbs(0.2, 1e-15));
    CHECK_THAT(small.theta_tilde, WithinAbs(2.25, 1e-14));
    CHECK_THAT(small.bound, WithinRel(std::exp(2.25 * 0.5), 1e-14));
    const auto fwd = gronwall_bound(ScalarFunction(0.1), m, 0.0, 5.0, 1.0, GronwallSide::forward);
    CHECK_THAT(fwd.theta, WithinAbs(0.1, 1e-15));
    try {
        (void)gronwall_bound(ScalarFunction(0.6), m, 0.0, 5.0, 1.0);
        FAIL("no error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ThetaNotLessThanOne);
    }
}

TEST_CASE("discrete stability", "[certificate]") {
    const auto half = scalar_system(std::log(0.5), 0.0, Mesh::uniform(0.5, 0.5, 0, 5));
    const auto c = check_exponential_stability_discrete(half.cauchy());
    CHECK_THAT(c.get("rho"), WithinRel(0.5, 1e-14));
    CHECK(c.passed());

    const auto cw = scalar_system(1.0, -2.0, Mesh::cooke_wiener(0, 10));
    const double lambda1 = std::abs((std::numbers::e - 2.0 * (std::numbers::e - 1.0)) /
                                    (std::exp(-1.0) - 2.0 * (std::exp(-1.0) - 1.0)));
    const auto s = check_exponential_stability_discrete(cw.cauchy());
    CHECK_THAT(s.get("rho"), WithinRel(lambda1, 1e-12));
    CHECK_THAT(s.get("rho"), WithinAbs(0.44, 5e-3));
    CHECK(s.passed());
    CHECK(check_exponential_stability_discrete(scalar_system(1.0, -0.5, Mesh::cooke_wiener(0, 10)).cauchy()).verdict ==
          Verdict::fail);
}

TEST_CASE("perturbed decay rate", "[certificate]") {
    Certificate lin;
    lin.name = "given";
    lin.set("c", 1.0).set("sigma", 0.8).set("rho_a", std::exp(2.0));
    const Mesh m = Mesh::uniform(1.0, 1.0, 0, 10);
    SECTION("eta = 0") {
        const auto c = sigma0_perturbed(lin, ScalarFunction(0.0), m);
        CHECK(c.get("theta") == 0.0);
        CHECK(c.get("mu") == 2.0);
        CHECK(c.get("sigma0") == 0.8);
        CHECK(c.passed());
    }
    SECTION("constant eta0 = 0.001") {
        const auto c = sigma0_perturbed(lin, ScalarFunction(1e-3), m, std::nullopt, Sigma0Route::corollary);
        const double theta = 2.0 * 1e-3 * std::exp(2.0) * std::exp(1.6);
        const double mu = (2.0 - theta) / (1.0 - theta);
        CHECK_THAT(c.get("theta"), WithinRel(theta, 1e-12));
        CHECK_THAT(c.get("theta"), WithinAbs(0.073, 1e-3));
        CHECK_THAT(c.get("mu"), WithinAbs(2.08, 5e-3));
        CHECK_THAT(c.get("sigma0"), WithinRel(0.8 - 1e-3 * mu * std::exp(2.0) * std::exp(1.6), 1e-12));
        CHECK_THAT(c.get("sigma0"), WithinAbs(0.72, 5e-3));
        CHECK(c.passed());
        // the general route only integrates eta over the advanced parts
        const auto g = sigma0_perturbed(lin, ScalarFunction(1e-3), m);
        CHECK_THAT(g.get("theta"), WithinRel(2.0 * std::exp(0.8) * std::exp(2.0) * 1e-3, 1e-10));
        CHECK_THAT(g.get("beta"), WithinRel(1e-3, 1e-10));
    }
}

TEST_CASE("scalar stability inequality", "[certificate]") {
    const auto a = scalar_example_certificate(1.0, -2.0, 1.0, 1.0);
    CHECK_THAT(a.get("inequality_lhs"), WithinAbs(-(std::numbers::e + std::exp(-1.0)), 1e-14));
    CHECK(a.get("inequality_rhs") == -4.0);
    CHECK(a.passed());
    CHECK_THAT(a.get("abs_lambda1"), WithinAbs(0.44, 5e-3));

    const auto b = scalar_example_certificate(-1.0, 0.5, 1.0, 1.0);
    CHECK(b.inputs.back().second == "b");
    CHECK(b.find("inequality_holds").has_value());

    const auto d = scalar_example_certificate(1.0, -2.0, 0.0, 1.0);
    CHECK_THAT(d.get("specialized_lhs"), WithinRel(std::numbers::e, 1e-15));
    CHECK_THAT(d.get("specialized_rhs"), WithinAbs(3.0, 1e-15));
    CHECK(d.get("specialized_printed_holds") == 1.0);
    CHECK(d.passed());

    // a < 0 and nu+ = 0: the printed specialization keeps the direction of
    // case (a), the inequality itself flips it
    const auto flip = scalar_example_certificate(-0.5, -1.0, 0.0, 1.0);
    CHECK(flip.get("specialized_printed_holds") != flip.get("specialized_implied_holds"));
    CHECK(flip.get("specialized_implied_holds") == flip.get("inequality_holds"));

    CHECK_THROWS_AS(scalar_example_certificate(1.0, 0.5, 1.0, 1.0), Error);
}

TEST_CASE("scalar inequality is sufficient on a grid", "[certificate][property]") {
    int checked = 0;
    for (int i = 0; i < 61; ++i) {
        for (int j = 0; j < 61; ++j) {
            const double a = (-3.0 * (60 - i) + 3.0 * i) / 60.0, b = (-3.0 * (60 - j) + 3.0 * j) / 60.0;
            if (a == 0.0 || !(-b > a)) continue;
            for (auto [np, nm] : {std::pair{1.0, 1.0}, std::pair{0.3, 0.8}, std::pair{0.0, 1.0}}) {
                const auto c = scalar_example_certificate(a, b, np, nm);
                if (c.passed()) CHECK(c.get("abs_lambda1") < 1.0);
                ++checked;
            }
        }
    }
    CHECK(checked > 1000);
}

TEST_CASE("dichotomy certificates", "[certificate][dichotomy]") {
    const Mesh m = Mesh::uniform(0.5, 0.5, -15, 15);
    const auto hyp = CauchyOperator(FlowEvaluator(MatrixFunction(diag2(-1.0, 1.0))), MatrixFunction::zero(2, 2), m);
    SECTION("hyperbolic") {
        const GreenKernel k(hyp, diag2(1.0, 0.0));
        const auto o = check_ordinary_dichotomy(k);
        CHECK(o.passed());
        CHECK_THAT(o.get("c"), WithinAbs(1.0, 1e-9));
        const auto e = check_exponential_dichotomy(k);
        CHECK(e.passed());
        CHECK_THAT(e.get("sigma"), WithinAbs(1.0, 1e-6));
        CHECK((default_projection(hyp, 0.0) - diag2(1.0, 0.0)).norm() < 1e-12);
        CHECK(check_series(hyp, SeriesKind::p_minus, Matrix(diag2(1.0, 0.0))).passed());
    }
    SECTION("wrong projections fail") {
        const auto up = CauchyOperator(FlowEvaluator(MatrixFunction(scalar(1.0))), MatrixFunction::zero(1, 1), m);
        CHECK(check_ordinary_dichotomy(GreenKernel(up, Matrix(Matrix::Identity(1, 1)))).verdict == Verdict::fail);
        const auto down = CauchyOperator(FlowEvaluator(MatrixFunction(scalar(-1.0))), MatrixFunction::zero(1, 1), m);
        CHECK(check_ordinary_dichotomy(GreenKernel(down, Matrix(Matrix::Zero(1, 1)))).verdict == Verdict::fail);
    }
    SECTION("piecewise constant B = diag(-3/2, 1/2)") {
        const Mesh gi = Mesh::greatest_integer(-12, 12);
        const CauchyOperator op(FlowEvaluator(MatrixFunction::zero(2, 2)), MatrixFunction(diag2(-1.5, 0.5)), gi);
        DichotomyOptions disc;
        disc.discrete = true;
        CHECK(check_exponential_dichotomy(GreenKernel(op, diag2(1.0, 0.0)), disc).passed());
        // the ODE part x' = 0 has no exponential dichotomy for any P
        const CauchyOperator ode(FlowEvaluator(MatrixFunction::zero(2, 2)), MatrixFunction::zero(2, 2), gi);
        for (const Matrix& p : projection_scan(2, 4, 9)) {
            CHECK(check_exponential_dichotomy(GreenKernel(ode, p)).verdict == Verdict::fail);
        }
    }
}

TEST_CASE("series certificates", "[certificate]") {
    const Mesh m = Mesh::uniform(0.5, 0.5, -15, 15);
    const CauchyOperator stable(FlowEvaluator(MatrixFunction(scalar(-1.0))), MatrixFunction::zero(1, 1), m);
    const auto minus = check_series(stable, SeriesKind::minus);
    CHECK(minus.passed());
    CHECK_THAT(minus.get("ratio"), WithinRel(std::exp(-1.0), 1e-6));
    const CauchyOperator flat(FlowEvaluator(MatrixFunction::zero(1, 1)), MatrixFunction::zero(1, 1), m);
    CHECK_FALSE(check_series(flat, SeriesKind::plus).passed());
    CHECK_THROWS_AS(check_series(flat, SeriesKind::p_plus), Error);
}

TEST_CASE("projection scan", "[certificate]") {
    const auto ps = projection_scan(2, 10, 42);
    REQUIRE(ps.size() == 12);
    CHECK(ps[0] == diag2(1.0, 0.0));
    CHECK(ps[1] == diag2(0.0, 1.0));
    for (const auto& p : ps) {
        CHECK((p * p - p).norm() < 1e-10);
        CHECK_THAT(p.trace(), WithinAbs(1.0, 1e-10));
    }
    CHECK(projection_scan(2, 10, 42).back() == ps.back());
}

TEST_CASE("certificate serialization", "[certificate]") {
    Certificate c;
    c.name = "demo";
    c.input("x", 1.5).set("value", 2.0).set("big", std::numeric_limits<double>::infinity()).note("n");
    c.verdict = Verdict::pass;
    const std::string r = c.report();
    CHECK(r.find("verdict: pass") != std::string::npos);
    CHECK(r.find("value: 2") != std::string::npos);
    const auto j = c.to_json();
    CHECK(j["computed"]["big"] == "inf");
    CHECK(j["inputs"]["x"] == "1.5");
}

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun run_cli(const std::string& command, const std::string& ini, const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("depcag_unit_" + tag);
    std::filesystem::create_directories(dir);
    const auto path = dir / "run.ini";
    std::ofstream(path) << ini;
    app::GlobalOptions g;
    g.config = path.string();
    g.out_dir = dir.string();
    std::ostringstream out, err;
    const int code = app::run(command, g, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("cli exit codes", "[cli]") {
    const std::string base = "[system]\ndimension = 1\nA = 1\nB = -2\n[mesh]\nfamily = cooke_wiener\ni_min = 0\ni_max = 6\n";
    SECTION("simulate writes a CSV matching propagation") {
        const auto r = run_cli("simulate", base + "[task]\nxi = [1]\nt_end = 9\n", "sim");
        REQUIRE(r.code == 0);
        const auto csv = slurp(std::filesystem::temp_directory_path() / "depcag_unit_sim" / "trajectory.csv");
        CHECK(csv.rfind("t,x_1,flag\n", 0) == 0);
        const Mesh m = Mesh::cooke_wiener(0, 6);
        const auto op = DepcagSystem(MatrixFunction(scalar(1.0)), MatrixFunction(scalar(-2.0)), m).cauchy();
        std::istringstream lines(csv);
        std::string line;
        std::getline(lines, line);
        int rows = 0;
        while (std::getline(lines, line)) {
            double t = 0.0, x = 0.0;
            char comma = 0;
            std::istringstream(line) >> t >> comma >> x;
            CHECK_THAT(x, WithinAbs(op.propagate(0.0, Vector::Ones(1), t)(0), 1e-12));
            ++rows;
        }
        CHECK(rows > 10);
    }
    SECTION("same config gives the same bytes") {
        const std::string ini = base + "[task]\nxi = [1]\nt_end = 9\n";
        run_cli("simulate", ini, "rep1");
        run_cli("simulate", ini, "rep2");
        const auto tmp = std::filesystem::temp_directory_path();
        CHECK(slurp(tmp / "depcag_unit_rep1" / "trajectory.csv") == slurp(tmp / "depcag_unit_rep2" / "trajectory.csv"));
    }
    SECTION("config errors exit 2 with a code line") {
        const auto r = run_cli("simulate", "[system]\nAx = 1\n", "bad");
        CHECK(r.code == 2);
        CHECK(r.err.rfind("error[ConfigError]: ", 0) == 0);
        const auto mesh = run_cli("simulate", "[mesh]\nfamily = explicit\nknots = [0, 2, 1]\nanchors = [1, 1.5]\n", "mesh");
        CHECK(mesh.code == 2);
        CHECK(mesh.err.find("t[2]") != std::string::npos);
    }
    SECTION("solver errors exit 1") {
        const auto r = run_cli("simulate", base + "[task]\nxi = [1]\nt_end = 99\n", "oow");
        CHECK(r.code == 1);
        CHECK(r.err.rfind("error[OutOfWindow]: ", 0) == 0);
    }
    SECTION("certify") {
        const std::string longer = "[system]\ndimension = 1\nA = 1\nB = -2\n[mesh]\nfamily = cooke_wiener\ni_min = -2\ni_max = 20\n";
        CHECK(run_cli("certify", longer + "[task]\ncertificates = stability,scalar\n", "cert").code == 0);
        const auto g = run_cli("certify",
                               "[system]\ndimension = 1\nA = 1\nB = -2\nf = tanh_x\neta = 0.6\n[mesh]\nfamily = cooke_wiener\n"
                               "[task]\ncertificates = gronwall\ngronwall_tau = 0\ngronwall_t = 3\ngronwall_u = 1\n",
                               "gron");
        CHECK(g.code == 3);
        CHECK(g.out.find("verdict: fail") != std::string::npos);
        CHECK(run_cli("certify", base + "[task]\ncertificates = h4\n", "h4").code == 3);
    }
    SECTION("dichotomy needs P for time-varying systems") {
        const auto r = run_cli("dichotomy", "[system]\ndimension = 2\nB = diag_sin\n[mesh]\nfamily = greatest_integer\n", "nop");
        CHECK(r.code == 2);
        CHECK(r.err.find("task.P") != std::string::npos);
        const auto h = run_cli("dichotomy",
                               "[system]\ndimension = 2\nA = [[-1, 0], [0, 1]]\n[mesh]\nfamily = uniform\ni_min = -12\ni_max = 12\n",
                               "hyp");
        CHECK(h.code == 0);
        CHECK(h.out.find("sigma: 1\n") != std::string::npos);
    }
    SECTION("equivalence with f = 0 has zero gap") {
        const auto r = run_cli("equivalence",
                               "[system]\ndimension = 2\nA = [[-1, 0], [0, 1]]\n[mesh]\nfamily = uniform\ni_min = -5\ni_max = 12\n"
                               "[task]\nxi = [1, 0]\nP = [[1, 0], [0, 0]]\n[solver]\nhorizon = 10\n",
                               "eq0");
        CHECK(r.code == 0);
        const auto at = r.out.find("gap_max: ");
        REQUIRE(at != std::string::npos);
        CHECK(std::stod(r.out.substr(at + 9)) < 1e-14);
    }
}
