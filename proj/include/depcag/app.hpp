#pragma once

#include "depcag/certificates.hpp"
#include "depcag/config.hpp"
#include "depcag/green.hpp"
#include "depcag/linear_flow.hpp"
#include "depcag/solvers.hpp"

#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace depcag::app {

enum ExitCode : int { exit_ok = 0, exit_solver = 1, exit_config = 2, exit_fail = 3, exit_inconclusive = 4 };

struct GlobalOptions {
    std::string config;
    std::string out_dir = ".";
    std::optional<double> tol;
    std::uint64_t seed = 42;
};

/// stderr logger whose level comes from DEPCAG_LOG (trace, debug, info,
/// warn, error, off; default warn).
inline std::shared_ptr<spdlog::logger> logger() {
    static std::shared_ptr<spdlog::logger> log = [] {
        auto l = spdlog::stderr_color_st("depcag");
        l->set_pattern("[%l] %v");
        const char* env = std::getenv("DEPCAG_LOG");
        l->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
        return l;
    }();
    return log;
}

namespace detail {

inline std::string num(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

/// One CSV file; every numeric cell printed with 17 significant digits.
class CsvFile {
public:
    CsvFile(const std::filesystem::path& path, const std::vector<std::string>& header) : path_(path), out_(path) {
        if (!out_) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path.string() + "'");
        row(header);
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
        out_ << '\n';
    }
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::filesystem::path output_path(const GlobalOptions& g, const std::string& configured,
                                         const std::string& fallback) {
    std::filesystem::path p(configured.empty() ? fallback : configured);
    if (p.is_relative()) p = std::filesystem::path(g.out_dir) / p;
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    return p;
}

inline std::filesystem::path sibling(const std::filesystem::path& p, const std::string& suffix) {
    return p.parent_path() / (p.stem().string() + "_" + suffix + p.extension().string());
}

inline void write_trajectory(const std::filesystem::path& path, const Trajectory& y) {
    std::vector<std::string> header{"t"};
    for (Eigen::Index k = 0; k < y.dim(); ++k) header.push_back("x_" + std::to_string(k + 1));
    header.emplace_back("flag");
    CsvFile csv(path, header);
    for (std::size_t m = 0; m < y.size(); ++m) {
        std::vector<std::string> cells{num(y.times()[m])};
        for (Eigen::Index k = 0; k < y.dim(); ++k) cells.push_back(num(y.states()[m](k)));
        cells.push_back(std::to_string(y.flags()[m]));
        csv.row(cells);
    }
}

inline void print_info(std::ostream& out, const Trajectory& y) {
    for (const auto& [k, v] : y.info) out << k << ": " << num(v) << '\n';
}

inline void print_matrix(std::ostream& out, const std::string& name, const Matrix& m) {
    out << name << ": [";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << (r ? ", [" : "[");
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? ", " : "") << num(m(r, c));
        out << ']';
    }
    out << "]\n";
}

inline double default_tau(const Mesh& mesh) { return mesh.in_closed_window(0.0) ? 0.0 : mesh.window_begin(); }

inline const Vector& require_xi(const RunConfig& cfg) {
    if (!cfg.xi) throw Error(ErrorCode::ConfigError, "task.xi is required for this command");
    return *cfg.xi;
}

inline bool constant_periodic(const DepcagSystem& sys) {
    return sys.a.is_constant() && sys.b.is_constant() && sys.mesh.has_family_rule() &&
           sys.mesh.family().kind != MeshFamily::Kind::affine;
}

/// Explicit P, or the spectral default for constant coefficients on a
/// periodic mesh; otherwise MissingProjection.
inline Matrix resolve_projection(const RunConfig& cfg, const DepcagSystem& sys, const CauchyOperator& op,
                                 double base) {
    if (cfg.projection) return *cfg.projection;
    if (!constant_periodic(sys)) {
        throw Error(ErrorCode::MissingProjection,
                    "time-varying system: set task.P to an explicit projection matrix");
    }
    return default_projection(op, base);
}

inline Trajectory run_method(const std::string& method, const RunConfig& cfg, const DepcagSystem& sys, double tau,
                             const Vector& xi, double t_end) {
    const LinearOptions lin{cfg.interior, cfg.flow_tol};
    auto linear_only = [&] {
        if (!sys.f.is_zero()) {
            throw Error(ErrorCode::ConfigError, "method " + method + " solves the linear system; set f = none or use quasilinear");
        }
    };
    if (method == "vop") {
        linear_only();
        return solve_linear(sys, tau, xi, t_end, lin);
    }
    if (method == "wiener") {
        linear_only();
        return solve_linear_wiener(sys, tau, xi, t_end, lin);
    }
    if (method == "b_only") {
        linear_only();
        return solve_b_only(sys, tau, xi, t_end, lin);
    }
    if (method == "oracle") {
        OracleOptions o;
        o.tol = std::min(o.tol, cfg.tol * 1e-2);
        o.interior = cfg.interior;
        o.newton_max_iter = std::max(o.newton_max_iter, cfg.max_iter / 4);
        return oracle_integrate(sys, tau, xi, t_end, o);
    }
    if (method == "quasilinear") {
        PicardOptions o;
        o.tol = cfg.tol;
        o.max_iter = cfg.max_iter;
        o.order = cfg.order;
        o.interior = cfg.interior;
        o.flow_tol = cfg.flow_tol;
        return solve_quasilinear(sys, tau, xi, t_end, o);
    }
    throw Error(ErrorCode::ConfigError, "unknown solver.method '" + method + "' (vop, wiener, b_only, oracle, quasilinear)");
}

/// Exit code of a bundle: 3 if any fail, 4 if none fail but some are inconclusive.
inline int bundle_exit(const std::vector<Certificate>& certs) {
    bool inconclusive = false;
    for (const auto& c : certs) {
        if (c.verdict == Verdict::fail) return exit_fail;
        if (c.verdict == Verdict::inconclusive) inconclusive = true;
    }
    return inconclusive ? exit_inconclusive : exit_ok;
}

inline void print_bundle(std::ostream& out, const std::vector<Certificate>& certs, const std::filesystem::path& json_path) {
    nlohmann::json bundle = nlohmann::json::array();
    for (const auto& c : certs) {
        out << c.report() << '\n';
        bundle.push_back(c.to_json());
    }
    out << "structured:\n" << bundle.dump(2) << '\n';
    std::ofstream(json_path) << bundle.dump(2) << '\n';
}

inline Certificate gronwall_certificate(const RunConfig& cfg, const DepcagSystem& sys) {
    const Mesh& mesh = sys.mesh;
    const double tau = cfg.gronwall_tau.value_or(mesh.window_begin());
    const double t = cfg.gronwall_t.value_or(mesh.window_end());
    const double u = cfg.gronwall_u.value_or(1.0);
    GronwallSide side = GronwallSide::full;
    if (cfg.gronwall_side == "forward") side = GronwallSide::forward;
    else if (cfg.gronwall_side == "backward") side = GronwallSide::backward;
    else if (cfg.gronwall_side != "full") throw Error(ErrorCode::ConfigError, "gronwall_side must be full, forward or backward");
    Certificate c;
    c.name = "gronwall";
    c.input("eta", sys.eta.name()).input("tau", tau).input("t", t).input("u_tau", u).input("side", cfg.gronwall_side);
    try {
        const GronwallBound g = gronwall_bound(sys.eta, mesh, tau, t, u, side);
        c.set("theta", g.theta).set("theta_tilde", g.theta_tilde).set("bound", g.bound);
        c.verdict = Verdict::pass;
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ThetaNotLessThanOne) throw;
        c.verdict = Verdict::fail;
        c.note(e.what());
    }
    return c;
}

inline Certificate scalar_certificate(const DepcagSystem& sys) {
    const MeshFamily& fam = sys.mesh.family();
    if (sys.dim() != 1 || !constant_periodic(sys) || fam.kind == MeshFamily::Kind::explicit_list) {
        throw Error(ErrorCode::ConfigError, "certificate 'scalar' needs a constant scalar system on a uniform mesh family");
    }
    const double a = sys.a.constant_value()(0, 0), b = sys.b.constant_value()(0, 0);
    try {
        return scalar_example_certificate(a, b, fam.nu_plus, fam.nu_minus);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::DomainError) throw;
        Certificate c;
        c.name = "scalar_example";
        c.input("a", a).input("b", b);
        c.verdict = Verdict::inconclusive;
        c.note(e.what());
        return c;
    }
}

/// Node k of n on [lo, hi]. The symmetric form keeps nodes such as 0 and
/// -x = -(x) exact, so boundary cells like -b = a are not pushed across by rounding.
inline double grid_point(double lo, double hi, int k, int n) {
    return (lo * (n - 1 - k) + hi * k) / (n - 1);
}

/// (a, b) grid of the scalar inequality against the direct |Lambda_1|.
/// Returns the number of cells where the inequality holds but |Lambda_1| >= 1.
inline int scalar_sweep(const RunConfig& cfg, const DepcagSystem& sys, const std::filesystem::path& path,
                        std::ostream& out) {
    const MeshFamily& fam = sys.mesh.family();
    if (fam.kind == MeshFamily::Kind::explicit_list || fam.kind == MeshFamily::Kind::affine) {
        throw Error(ErrorCode::ConfigError, "sweep needs a uniform mesh family for nu+ and nu-");
    }
    if (cfg.grid < 2) throw Error(ErrorCode::ConfigError, "task.grid must be at least 2");
    CsvFile csv(path, {"a", "b", "condition", "inequality_holds", "abs_lambda1", "direct_stable"});
    int checked = 0, counter = 0;
    for (int i = 0; i < cfg.grid; ++i) {
        const double a = detail::grid_point(cfg.a_min, cfg.a_max, i, cfg.grid);
        for (int j = 0; j < cfg.grid; ++j) {
            const double b = detail::grid_point(cfg.b_min, cfg.b_max, j, cfg.grid);
            const double l1 = std::abs(scalar_lambda(a, b, fam.nu_minus) / scalar_lambda(a, b, -fam.nu_plus));
            std::string cond = "none", holds = "";
            if (a != 0.0 && -b > a) {
                const Certificate c = scalar_example_certificate(a, b, fam.nu_plus, fam.nu_minus);
                cond = a > 0.0 ? "a" : "b";
                holds = c.get("inequality_holds") > 0.5 ? "1" : "0";
                ++checked;
                if (holds == "1" && !(l1 < 1.0)) ++counter;
            }
            csv.row({num(a), num(b), cond, holds, num(l1), l1 < 1.0 ? "1" : "0"});
        }
    }
    out << "sweep_cells: " << cfg.grid * cfg.grid << '\n';
    out << "sweep_checked: " << checked << '\n';
    out << "sweep_counterexamples: " << counter << '\n';
    out << "sweep_csv: " << path.string() << '\n';
    return counter;
}

}  // namespace detail

inline int cmd_simulate(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
    const DepcagSystem sys = cfg.system();
    const double tau = cfg.tau.value_or(detail::default_tau(sys.mesh));
    const double t_end = cfg.t_end.value_or(sys.mesh.window_end());
    const Vector& xi = detail::require_xi(cfg);
    const std::string method = cfg.method == "auto" ? (sys.f.is_zero() ? "vop" : "quasilinear") : cfg.method;
    logger()->info("simulate with {} on [{}, {}]", method, tau, t_end);
    const Trajectory y = detail::run_method(method, cfg, sys, tau, xi, t_end);
    const auto path = detail::output_path(g, cfg.output, "trajectory.csv");
    detail::write_trajectory(path, y);
    out << "method: " << method << '\n';
    out << "samples: " << y.size() << '\n';
    out << "sup_norm: " << detail::num(y.sup_norm()) << '\n';
    out << "residual: " << detail::num(equation_residual(sys, y)) << '\n';
    detail::print_info(out, y);
    out << "csv: " << path.string() << '\n';
    if (!cfg.compare.empty()) {
        const Trajectory z = detail::run_method(cfg.compare, cfg, sys, tau, xi, t_end);
        const auto zpath = detail::sibling(path, cfg.compare);
        detail::write_trajectory(zpath, z);
        double dev = 0.0;
        for (std::size_t m = 0; m < y.size(); ++m) dev = std::max(dev, (y.states()[m] - z(y.times()[m])).norm());
        out << "compare_method: " << cfg.compare << '\n';
        out << "compare_csv: " << zpath.string() << '\n';
        out << "max_deviation: " << detail::num(dev) << '\n';
        out << "max_relative_deviation: " << detail::num(dev / std::max(1.0, y.sup_norm())) << '\n';
    }
    return exit_ok;
}

inline int cmd_sweep(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
    const DepcagSystem sys = cfg.system();
    const auto path = detail::output_path(g, cfg.output, "sweep.csv");
    return detail::scalar_sweep(cfg, sys, path, out) > 0 ? exit_fail : exit_ok;
}

inline int cmd_certify(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
    const DepcagSystem sys = cfg.system();
    std::vector<std::string> names = cfg.certificates;
    if (names.empty()) {
        names = {"h2", "h4", "s", "stability"};
        if (!sys.eta.is_zero()) names.emplace_back("sigma0");
        if (cfg.gronwall_tau || cfg.gronwall_t) names.emplace_back("gronwall");
        if (sys.dim() == 1 && detail::constant_periodic(sys)) names.emplace_back("scalar");
    }
    const auto op = sys.cauchy(cfg.flow_tol);
    std::optional<Certificate> stability;
    auto linear = [&]() -> const Certificate& {
        if (!stability) stability = linear_stability_certificate(sys, op, cfg.t0);
        return *stability;
    };
    std::vector<Certificate> certs;
    int sweep_counter = 0;
    for (const auto& n : names) {
        logger()->info("certificate {}", n);
        if (n == "h2") certs.push_back(check_h2(sys));
        else if (n == "h4") certs.push_back(check_h4(sys.flow(cfg.flow_tol), sys.b, sys.mesh));
        else if (n == "s") certs.push_back(check_s_conditions(sys, op, cfg.interior));
        else if (n == "stability_discrete") certs.push_back(check_exponential_stability_discrete(op));
        else if (n == "stability") certs.push_back(linear());
        else if (n == "sigma0") certs.push_back(sigma0_perturbed(linear(), sys.eta, sys.mesh));
        else if (n == "sigma0_corollary") {
            certs.push_back(sigma0_perturbed(linear(), sys.eta, sys.mesh, std::nullopt, Sigma0Route::corollary));
        } else if (n == "gronwall") certs.push_back(detail::gronwall_certificate(cfg, sys));
        else if (n == "scalar") certs.push_back(detail::scalar_certificate(sys));
        else if (n == "sweep") {
            sweep_counter = detail::scalar_sweep(cfg, sys, detail::output_path(g, "", "sweep.csv"), out);
        } else {
            throw Error(ErrorCode::ConfigError, "unknown certificate '" + n +
                                                    "' (h2, h4, s, stability, stability_discrete, sigma0, "
                                                    "sigma0_corollary, gronwall, scalar, sweep)");
        }
    }
    detail::print_bundle(out, certs, detail::output_path(g, "", "certificates.json"));
    const int code = detail::bundle_exit(certs);
    return sweep_counter > 0 ? exit_fail : code;
}

inline int cmd_dichotomy(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out) {
    const DepcagSystem sys = cfg.system();
    const auto op = sys.cauchy(cfg.flow_tol);
    const double base = cfg.base.value_or(detail::default_tau(sys.mesh));
    const Matrix p = detail::resolve_projection(cfg, sys, op, base);
    const GreenKernel kernel(op, p, base);
    DichotomyOptions opts;
    opts.sigma_min = cfg.sigma_min;
    DichotomyOptions disc = opts;
    disc.discrete = true;

    std::vector<Certificate> certs;
    certs.push_back(check_ordinary_dichotomy(kernel, opts));
    certs.push_back(check_exponential_dichotomy(kernel, opts));
    certs.push_back(check_exponential_dichotomy(kernel, disc));
    certs.push_back(check_series(op, SeriesKind::p_minus, p));
    certs.push_back(check_series(op, SeriesKind::p_plus, p));
    Certificate& cont = certs[1];
    const Certificate& dis = certs[2];
    if (!cfg.projection) cont.note("P is the spectral default: stable projection of the one period map at the base point");
    if (dis.passed() && !cont.passed()) {
        cont.note("the knot sequence has an exponential dichotomy but Z_P between knots does not decay; "
                  "a discrete dichotomy does not carry over to the continuous time kernel");
    }
    if (cfg.scan) {
        Certificate scan;
        scan.name = "projection_scan";
        scan.input("seed", static_cast<double>(g.seed)).input("random_projections", cfg.random_projections);
        int passes = 0, tried = 0;
        for (const Matrix& q : projection_scan(sys.dim(), cfg.random_projections, g.seed)) {
            const GreenKernel kq(op, q, base);
            const Certificate c = check_exponential_dichotomy(kq, opts);
            scan.set("sigma_" + std::to_string(tried), c.get("sigma"));
            if (c.passed()) ++passes;
            ++tried;
        }
        scan.set("tried", tried).set("passes", passes);
        scan.verdict = passes > 0 ? Verdict::pass : Verdict::fail;
        scan.truncated = true;
        if (passes == 0) scan.note("no scanned projection gives a continuous exponential dichotomy");
        certs.push_back(scan);
    }

    detail::print_matrix(out, "P", p);
    out << "base: " << detail::num(base) << '\n';
    out << "c: " << detail::num(cont.get("c")) << '\n';
    out << "sigma: " << detail::num(cont.get("sigma")) << '\n';
    out << "sigma_discrete: " << detail::num(dis.get("sigma")) << '\n';

    const auto path = detail::output_path(g, cfg.output, "zp_samples.csv");
    {
        detail::CsvFile csv(path, {"t", "s", "zp_norm", "green_norm"});
        const auto grid = sys.mesh.sample_grid(sys.mesh.window_begin(), sys.mesh.window_end(), 1);
        for (double t : grid) {
            for (double s : grid) {
                csv.row({detail::num(t), detail::num(s), detail::num(opnorm(kernel.zp(t, s))),
                         detail::num(opnorm(kernel.green_dichotomy(t, s)))});
            }
        }
    }
    out << "csv: " << path.string() << '\n';
    detail::print_bundle(out, certs, detail::output_path(g, "", "dichotomy.json"));
    return detail::bundle_exit(certs);
}

inline int cmd_equivalence(const RunConfig& cfg, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
    const DepcagSystem sys = cfg.system();
    const auto op = sys.cauchy(cfg.flow_tol);
    const double base = cfg.base.value_or(detail::default_tau(sys.mesh));
    const auto path = detail::output_path(g, cfg.output, cfg.mode + ".csv");
    BoundedOptions bopts;
    bopts.tol = cfg.tol;
    bopts.interior = cfg.interior;
    bopts.flow_tol = cfg.flow_tol;
    out << "mode: " << cfg.mode << '\n';

    if (cfg.mode == "bounded_forward" || cfg.mode == "bounded_backward" || cfg.mode == "bounded_dichotomy") {
        Trajectory y;
        if (cfg.mode == "bounded_forward") y = bounded_solution_forward(sys, bopts);
        else if (cfg.mode == "bounded_backward") y = bounded_solution_backward(sys, bopts);
        else y = bounded_solution_dichotomy(sys, GreenKernel(op, detail::resolve_projection(cfg, sys, op, base), base), bopts);
        detail::write_trajectory(path, y);
        out << "sup_norm: " << detail::num(y.sup_norm()) << '\n';
        detail::print_info(out, y);
        out << "csv: " << path.string() << '\n';
        const auto bound = y.find_info("norm_bound");
        return bound && y.sup_norm() > *bound ? exit_fail : exit_ok;
    }

    const GreenKernel kernel(op, detail::resolve_projection(cfg, sys, op, base), base);
    const Vector& xi = detail::require_xi(cfg);
    if (cfg.mode == "nonlinear_bounded") {
        NonlinearBoundedOptions o;
        o.t0 = cfg.t0.value_or(0.0);
        o.tol = cfg.tol;
        o.max_iter = cfg.max_iter;
        o.order = cfg.order;
        o.interior = cfg.interior;
        o.horizon = cfg.horizon;
        const Trajectory w = nonlinear_bounded(sys, kernel, xi, o);
        detail::write_trajectory(path, w);
        out << "sup_norm: " << detail::num(w.sup_norm()) << '\n';
        detail::print_info(out, w);
        out << "csv: " << path.string() << '\n';
        const bool violated = w.find_info("envelope_violated").value_or(0.0) > 0.5;
        out << "envelope: " << (violated ? "violated" : "holds") << '\n';
        return violated ? exit_fail : exit_ok;
    }
    if (cfg.mode != "equivalence") {
        throw Error(ErrorCode::ConfigError, "unknown task.mode '" + cfg.mode +
                                                "' (equivalence, nonlinear_bounded, bounded_forward, bounded_backward, "
                                                "bounded_dichotomy)");
    }
    EquivalenceOptions o;
    o.t0 = cfg.t0.value_or(0.0);
    o.tol = cfg.tol;
    o.max_iter = cfg.max_iter;
    o.order = cfg.order;
    o.interior = cfg.interior;
    o.horizon = cfg.horizon;
    const int k0 = depcag::detail::snap_to_knot(sys.mesh, o.t0);
    const Trajectory y = solve_linear(sys.linear_part(), sys.mesh.knot(k0), xi, sys.mesh.window_end(),
                                      LinearOptions{cfg.interior, cfg.flow_tol});
    EquivalenceResult r;
    try {
        r = equivalence_map(sys, kernel, y, o);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::NoContraction) throw;
        err << "error[" << to_string(e.code()) << "]: " << e.what() << '\n';
        out << "contraction: failed\n";
        return exit_fail;
    }
    const auto p = sys.dim();
    std::vector<std::string> header{"t"};
    for (Eigen::Index k = 0; k < p; ++k) header.push_back("y_" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < p; ++k) header.push_back("v_" + std::to_string(k + 1));
    header.emplace_back("gap");
    header.emplace_back("flag");
    double gap_max = 0.0, gap_end = 0.0, round_trip = 0.0;
    {
        detail::CsvFile csv(path, header);
        for (std::size_t m = 0; m < r.v.size(); ++m) {
            const double t = r.v.times()[m];
            const Vector yt = y(t);
            const Vector& vt = r.v.states()[m];
            const double gap = (yt - vt).norm();
            gap_max = std::max(gap_max, gap);
            gap_end = gap;
            round_trip = std::max(round_trip, (r.y_back.states()[m] - yt).norm());
            std::vector<std::string> cells{detail::num(t)};
            for (Eigen::Index k = 0; k < p; ++k) cells.push_back(detail::num(yt(k)));
            for (Eigen::Index k = 0; k < p; ++k) cells.push_back(detail::num(vt(k)));
            cells.push_back(detail::num(gap));
            cells.push_back(std::to_string(r.v.flags()[m]));
            csv.row(cells);
        }
    }
    detail::print_info(out, r.v);
    out << "gap_max: " << detail::num(gap_max) << '\n';
    out << "gap_at_horizon: " << detail::num(gap_end) << '\n';
    out << "round_trip: " << detail::num(round_trip) << '\n';
    out << "gap_trend: " << (gap_end <= gap_max ? (gap_end < 0.5 * gap_max || gap_max == 0.0 ? "decaying" : "flat") : "growing")
        << '\n';
    out << "csv: " << path.string() << '\n';
    return exit_ok;
}

/// Loads the config, runs a subcommand and maps errors to exit codes, each
/// reported as one `error[Code]: sentence` line on `err`.
inline int run(const std::string& command, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = load_config(g.config);
        if (g.tol) cfg.tol = *g.tol;
        std::filesystem::create_directories(g.out_dir);
        logger()->debug("config {} loaded, dimension {}", g.config, cfg.dim);
        if (command == "simulate") return cmd_simulate(cfg, g, out);
        if (command == "certify") return cmd_certify(cfg, g, out);
        if (command == "dichotomy") return cmd_dichotomy(cfg, g, out);
        if (command == "equivalence") return cmd_equivalence(cfg, g, out, err);
        if (command == "sweep") return cmd_sweep(cfg, g, out);
        err << "error[ConfigError]: unknown subcommand '" << command << "'\n";
        return exit_config;
    } catch (const Error& e) {
        err << "error[" << to_string(e.code()) << "]: " << e.what() << '\n';
        switch (e.code()) {
            case ErrorCode::ConfigError:
            case ErrorCode::InvalidMesh:
            case ErrorCode::MissingProjection:
            case ErrorCode::NotAProjection:
            case ErrorCode::DimensionMismatch:
                return exit_config;
            default:
                return exit_solver;
        }
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error[IoError]: " << e.what() << '\n';
        return exit_solver;
    }
}

}  // namespace depcag::app
