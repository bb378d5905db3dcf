#pragma once

#include "depcag/coefficients.hpp"
#include "depcag/mesh.hpp"
#include "depcag/system.hpp"
#include "depcag/types.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace depcag {

/// Parsed run configuration. INI sections [system], [mesh], [solver], [task];
/// values are numbers, bare words, or JSON arrays / objects.
struct RunConfig {
    Eigen::Index dim = 1;
    MatrixFunction a;
    MatrixFunction b;
    VectorFunction g;
    Perturbation f;
    ScalarFunction eta;
    std::optional<Mesh> mesh;

    double tol = 1e-10;
    double flow_tol = 1e-12;
    int max_iter = 200;
    int interior = 8;
    int order = 20;
    std::optional<double> horizon;
    std::string method = "auto";

    std::optional<double> tau;
    std::optional<double> t_end;
    std::optional<double> t0;
    std::optional<double> base;
    std::optional<Vector> xi;
    std::optional<Matrix> projection;
    bool default_projection = false;
    std::string output;
    std::vector<std::string> certificates;
    std::string compare;
    std::string mode = "equivalence";
    bool discrete = false;
    double sigma_min = 0.05;
    double a_min = -3, a_max = 3, b_min = -3, b_max = 3;
    int grid = 41;
    std::optional<double> gronwall_tau, gronwall_t, gronwall_u;
    std::string gronwall_side = "full";
    int random_projections = 10;
    bool scan = false;

    nlohmann::json snapshot = nlohmann::json::object();

    [[nodiscard]] DepcagSystem system() const {
        if (!mesh) throw Error(ErrorCode::ConfigError, "config has no [mesh] section");
        return DepcagSystem(a, b, g, f, eta, *mesh);
    }
};

namespace detail {

inline Error config_error(const std::string& what) { return Error(ErrorCode::ConfigError, what); }

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

/// A raw INI value as JSON: arrays and objects parsed, numbers and
/// booleans recognized, everything else a string.
inline nlohmann::json parse_value(const std::string& key, const std::string& raw) {
    const std::string v = trim(raw);
    if (!v.empty() && (v.front() == '[' || v.front() == '{')) {
        try {
            return nlohmann::json::parse(v);
        } catch (const nlohmann::json::exception& e) {
            throw config_error("key '" + key + "': malformed JSON value (" + e.what() + ")");
        }
    }
    if (v == "true") return true;
    if (v == "false") return false;
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size()) return d;
    } catch (const std::exception&) {
    }
    return v;
}

inline double as_number(const std::string& key, const nlohmann::json& j) {
    if (!j.is_number()) throw config_error("key '" + key + "' must be a number");
    return j.get<double>();
}

inline int as_int(const std::string& key, const nlohmann::json& j) {
    const double d = as_number(key, j);
    if (d != std::floor(d)) throw config_error("key '" + key + "' must be an integer");
    return static_cast<int>(d);
}

inline std::string as_string(const std::string& key, const nlohmann::json& j) {
    if (!j.is_string()) throw config_error("key '" + key + "' must be a word");
    return j.get<std::string>();
}

inline std::vector<double> as_list(const std::string& key, const nlohmann::json& j) {
    if (j.is_number()) return {j.get<double>()};
    if (!j.is_array()) throw config_error("key '" + key + "' must be a JSON array of numbers");
    std::vector<double> out;
    for (const auto& x : j) {
        if (!x.is_number()) throw config_error("key '" + key + "' must contain only numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline Vector as_vector(const std::string& key, const nlohmann::json& j, Eigen::Index dim) {
    const auto list = as_list(key, j);
    if (static_cast<Eigen::Index>(list.size()) != dim) {
        throw config_error("key '" + key + "' needs " + std::to_string(dim) + " entries, got " +
                           std::to_string(list.size()));
    }
    return Eigen::Map<const Vector>(list.data(), dim);
}

/// Number (times identity), flat list (dimension 1) or array of rows.
inline Matrix as_matrix(const std::string& key, const nlohmann::json& j, Eigen::Index dim) {
    if (j.is_number()) return j.get<double>() * Matrix::Identity(dim, dim);
    if (!j.is_array()) throw config_error("key '" + key + "' must be a number or a JSON matrix");
    if (dim == 1 && j.size() == 1 && j[0].is_number()) return Matrix::Constant(1, 1, j[0].get<double>());
    if (static_cast<Eigen::Index>(j.size()) != dim) {
        throw config_error("key '" + key + "' needs " + std::to_string(dim) + " rows");
    }
    Matrix m(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const auto row = as_list(key, j[static_cast<std::size_t>(r)]);
        if (static_cast<Eigen::Index>(row.size()) != dim) {
            throw config_error("key '" + key + "' row " + std::to_string(r) + " needs " + std::to_string(dim) +
                               " entries");
        }
        for (Eigen::Index c = 0; c < dim; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
    }
    return m;
}

/// Preset name and parameter object from either "name" or {"preset": "name", ...}.
inline std::pair<std::string, nlohmann::json> preset_of(const std::string& key, const nlohmann::json& j) {
    if (j.is_string()) return {j.get<std::string>(), nlohmann::json::object()};
    if (j.is_object()) {
        if (!j.contains("preset") || !j["preset"].is_string()) {
            throw config_error("key '" + key + "': object values need a \"preset\" name");
        }
        return {j["preset"].get<std::string>(), j};
    }
    return {"", nlohmann::json()};
}

inline void check_params(const std::string& key, const nlohmann::json& params, std::set<std::string> allowed) {
    allowed.insert("preset");
    for (auto it = params.begin(); it != params.end(); ++it) {
        if (!allowed.count(it.key())) throw config_error("key '" + key + "': unknown preset parameter '" + it.key() + "'");
    }
}

inline double param(const std::string& key, const nlohmann::json& params, const std::string& name, double fallback) {
    if (!params.contains(name)) return fallback;
    return as_number(key + "." + name, params[name]);
}

inline MatrixFunction matrix_value(const std::string& key, const nlohmann::json& j, Eigen::Index dim) {
    auto [name, params] = preset_of(key, j);
    if (name.empty()) return MatrixFunction(as_matrix(key, j, dim), key);
    if (name == "zero") return MatrixFunction::zero(dim, dim);
    if (name == "diag_sin") {
        if (dim != 2) throw config_error("preset diag_sin needs dimension 2");
        check_params(key, params, {});
        return presets::diag_sin();
    }
    if (name == "sin_modulated") {
        check_params(key, params, {"M0", "M1", "omega"});
        if (!params.contains("M0") || !params.contains("M1")) throw config_error("sin_modulated needs M0 and M1");
        return presets::sin_modulated(as_matrix(key + ".M0", params["M0"], dim), as_matrix(key + ".M1", params["M1"], dim),
                                      param(key, params, "omega", 1.0));
    }
    throw config_error("key '" + key + "': unknown matrix preset '" + name + "'");
}

inline VectorFunction vector_value(const std::string& key, const nlohmann::json& j, Eigen::Index dim) {
    auto [name, params] = preset_of(key, j);
    if (name.empty()) return VectorFunction(as_vector(key, j, dim), key);
    if (name == "zero") return VectorFunction(dim);
    if (name == "sin_vector") {
        check_params(key, params, {"amplitude", "omega"});
        return presets::sin_vector(dim, param(key, params, "amplitude", 1.0), param(key, params, "omega", 1.0));
    }
    if (name == "exp_decay") {
        check_params(key, params, {"v", "rate"});
        if (!params.contains("v")) throw config_error("exp_decay forcing needs v");
        return presets::exp_decay(as_vector(key + ".v", params["v"], dim), param(key, params, "rate", 1.0));
    }
    throw config_error("key '" + key + "': unknown forcing preset '" + name + "'");
}

inline ScalarFunction scalar_value(const std::string& key, const nlohmann::json& j) {
    if (j.is_number()) return ScalarFunction(j.get<double>());
    auto [name, params] = preset_of(key, j);
    if (name == "constant") {
        check_params(key, params, {"eta0"});
        return ScalarFunction(param(key, params, "eta0", 0.0));
    }
    if (name == "exp_decay") {
        check_params(key, params, {"eta0", "rate"});
        return presets::eta_exp_decay(param(key, params, "eta0", 0.1), param(key, params, "rate", 1.0));
    }
    throw config_error("key '" + key + "': unknown eta preset '" + name + "'");
}

inline Perturbation perturbation_value(const std::string& key, const nlohmann::json& j, const ScalarFunction& eta) {
    const std::string name = as_string(key, j);
    if (name == "none" || name == "zero") return Perturbation();
    if (name == "tanh_x") return presets::tanh_x(eta);
    if (name == "sin_x") return presets::sin_x(eta);
    if (name == "sin_xy") return presets::sin_xy(eta);
    if (name == "linear_x") return presets::linear_x(eta);
    if (name == "linear_xy") return presets::linear_xy(eta);
    throw config_error("key '" + key + "': unknown perturbation preset '" + name + "'");
}

inline MeshFamily::Kind mesh_kind(const std::string& name) {
    if (name == "uniform") return MeshFamily::Kind::uniform;
    if (name == "greatest_integer") return MeshFamily::Kind::greatest_integer;
    if (name == "cooke_wiener") return MeshFamily::Kind::cooke_wiener;
    if (name == "affine") return MeshFamily::Kind::affine;
    if (name == "explicit") return MeshFamily::Kind::explicit_list;
    throw config_error("unknown mesh family '" + name + "'");
}

}  // namespace detail

/// Reads a configuration; every error is ConfigError naming the key.
inline RunConfig parse_config(std::istream& in) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw detail::config_error(std::string("malformed INI: ") + e.what());
    }
    const std::map<std::string, std::set<std::string>> allowed = {
        {"system", {"dimension", "A", "B", "g", "f", "eta"}},
        {"mesh", {"family", "nu_plus", "nu_minus", "origin", "c", "d", "i_min", "i_max", "knots", "anchors"}},
        {"solver", {"tol", "flow_tol", "max_iter", "interior", "order", "horizon", "method"}},
        {"task", {"tau", "xi", "t_end", "t0", "base", "P", "output", "certificates", "compare", "mode", "discrete",
                  "sigma_min", "a_min", "a_max", "b_min", "b_max", "grid", "gronwall_tau", "gronwall_t", "gronwall_u",
                  "gronwall_side", "random_projections", "scan"}},
    };
    std::map<std::string, std::map<std::string, nlohmann::json>> values;
    for (const auto& [section, body] : tree) {
        auto it = allowed.find(section);
        if (it == allowed.end()) {
            if (body.empty()) throw detail::config_error("key '" + section + "' outside any section");
            throw detail::config_error("unknown section [" + section + "]");
        }
        for (const auto& [key, node] : body) {
            if (!it->second.count(key)) throw detail::config_error("unknown key '" + key + "' in [" + section + "]");
            values[section][key] = detail::parse_value(section + "." + key, node.data());
        }
    }
    auto get = [&](const std::string& s, const std::string& k) -> const nlohmann::json* {
        auto sec = values.find(s);
        if (sec == values.end()) return nullptr;
        auto it = sec->second.find(k);
        return it == sec->second.end() ? nullptr : &it->second;
    };
    auto num = [&](const std::string& s, const std::string& k, double fallback) {
        const auto* v = get(s, k);
        return v ? detail::as_number(k, *v) : fallback;
    };
    auto opt_num = [&](const std::string& s, const std::string& k) -> std::optional<double> {
        const auto* v = get(s, k);
        if (!v) return std::nullopt;
        return detail::as_number(k, *v);
    };
    auto integer = [&](const std::string& s, const std::string& k, int fallback) {
        const auto* v = get(s, k);
        return v ? detail::as_int(k, *v) : fallback;
    };
    auto word = [&](const std::string& s, const std::string& k, const std::string& fallback) {
        const auto* v = get(s, k);
        return v ? detail::as_string(k, *v) : fallback;
    };

    RunConfig cfg;
    for (const auto& [s, kv] : values) {
        for (const auto& [k, v] : kv) cfg.snapshot[s][k] = v;
    }
    cfg.dim = integer("system", "dimension", 1);
    if (cfg.dim < 1) throw detail::config_error("key 'dimension' must be at least 1");
    const auto p = cfg.dim;
    cfg.a = get("system", "A") ? detail::matrix_value("A", *get("system", "A"), p) : MatrixFunction::zero(p, p);
    cfg.b = get("system", "B") ? detail::matrix_value("B", *get("system", "B"), p) : MatrixFunction::zero(p, p);
    cfg.g = get("system", "g") ? detail::vector_value("g", *get("system", "g"), p) : VectorFunction(p);
    cfg.eta = get("system", "eta") ? detail::scalar_value("eta", *get("system", "eta")) : ScalarFunction(0.0);
    if (get("system", "f")) cfg.f = detail::perturbation_value("f", *get("system", "f"), cfg.eta);
    if (!cfg.f.is_zero() && !get("system", "eta")) throw detail::config_error("a perturbation f needs its weight eta");

    if (values.count("mesh")) {
        const std::string family = word("mesh", "family", "uniform");
        const auto kind = detail::mesh_kind(family);
        const std::map<MeshFamily::Kind, std::set<std::string>> family_keys = {
            {MeshFamily::Kind::uniform, {"nu_plus", "nu_minus", "origin"}},
            {MeshFamily::Kind::greatest_integer, {}},
            {MeshFamily::Kind::cooke_wiener, {}},
            {MeshFamily::Kind::affine, {"c", "d"}},
            {MeshFamily::Kind::explicit_list, {"knots", "anchors"}},
        };
        for (const auto& [key, value] : values["mesh"]) {
            if (key == "family" || key == "i_min" || key == "i_max") continue;
            if (!family_keys.at(kind).count(key)) {
                throw detail::config_error("key '" + key + "' does not apply to mesh family " + family);
            }
        }
        try {
            if (kind == MeshFamily::Kind::explicit_list) {
                if (!get("mesh", "knots") || !get("mesh", "anchors")) {
                    throw detail::config_error("explicit mesh needs knots and anchors");
                }
                cfg.mesh = Mesh(detail::as_list("knots", *get("mesh", "knots")),
                                detail::as_list("anchors", *get("mesh", "anchors")), integer("mesh", "i_min", 0));
            } else {
                const int lo = integer("mesh", "i_min", -10), hi = integer("mesh", "i_max", 10);
                switch (kind) {
                    case MeshFamily::Kind::uniform:
                        cfg.mesh = Mesh::uniform(num("mesh", "nu_plus", 0.5), num("mesh", "nu_minus", 0.5), lo, hi,
                                                 num("mesh", "origin", 0.0));
                        break;
                    case MeshFamily::Kind::greatest_integer: cfg.mesh = Mesh::greatest_integer(lo, hi); break;
                    case MeshFamily::Kind::cooke_wiener: cfg.mesh = Mesh::cooke_wiener(lo, hi); break;
                    default: cfg.mesh = Mesh::affine(num("mesh", "c", 1.0), num("mesh", "d", 0.0), lo, hi); break;
                }
            }
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ConfigError) throw;
            throw detail::config_error(std::string("invalid mesh: ") + e.what());
        }
    }

    cfg.tol = num("solver", "tol", cfg.tol);
    cfg.flow_tol = num("solver", "flow_tol", cfg.flow_tol);
    cfg.max_iter = integer("solver", "max_iter", cfg.max_iter);
    cfg.interior = integer("solver", "interior", cfg.interior);
    cfg.order = integer("solver", "order", cfg.order);
    cfg.horizon = opt_num("solver", "horizon");
    cfg.method = word("solver", "method", cfg.method);

    cfg.tau = opt_num("task", "tau");
    cfg.t_end = opt_num("task", "t_end");
    cfg.t0 = opt_num("task", "t0");
    cfg.base = opt_num("task", "base");
    if (const auto* v = get("task", "xi")) cfg.xi = detail::as_vector("xi", *v, p);
    if (const auto* v = get("task", "P")) {
        if (v->is_string() && v->get<std::string>() == "default") {
            cfg.default_projection = true;
        } else {
            cfg.projection = detail::as_matrix("P", *v, p);
        }
    }
    cfg.output = word("task", "output", "");
    if (const auto* v = get("task", "certificates")) {
        std::stringstream ss(detail::as_string("certificates", *v));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!detail::trim(item).empty()) cfg.certificates.push_back(detail::trim(item));
        }
    }
    cfg.compare = word("task", "compare", "");
    cfg.mode = word("task", "mode", cfg.mode);
    if (const auto* v = get("task", "discrete")) {
        if (!v->is_boolean()) throw detail::config_error("key 'discrete' must be true or false");
        cfg.discrete = v->get<bool>();
    }
    if (const auto* v = get("task", "scan")) {
        if (!v->is_boolean()) throw detail::config_error("key 'scan' must be true or false");
        cfg.scan = v->get<bool>();
    }
    cfg.sigma_min = num("task", "sigma_min", cfg.sigma_min);
    cfg.a_min = num("task", "a_min", cfg.a_min);
    cfg.a_max = num("task", "a_max", cfg.a_max);
    cfg.b_min = num("task", "b_min", cfg.b_min);
    cfg.b_max = num("task", "b_max", cfg.b_max);
    cfg.grid = integer("task", "grid", cfg.grid);
    cfg.gronwall_tau = opt_num("task", "gronwall_tau");
    cfg.gronwall_t = opt_num("task", "gronwall_t");
    cfg.gronwall_u = opt_num("task", "gronwall_u");
    cfg.gronwall_side = word("task", "gronwall_side", cfg.gronwall_side);
    cfg.random_projections = integer("task", "random_projections", cfg.random_projections);
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw detail::config_error("cannot open config file '" + path + "'");
    return parse_config(in);
}

}  // namespace depcag
