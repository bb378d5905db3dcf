#pragma once

#include "depcag/types.hpp"

#include <json.hpp>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace depcag {

enum class Verdict { pass, fail, inconclusive };

inline std::string_view to_string(Verdict v) noexcept {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "inconclusive";
}

/// Named, checkable record: inputs, computed constants, verdict and notes.
/// `truncated` marks verdicts that rest on a finite window standing in for a
/// sup or limit over all of Z or t -> infinity.
struct Certificate {
    std::string name;
    std::vector<std::pair<std::string, std::string>> inputs;
    std::vector<std::pair<std::string, double>> computed;
    Verdict verdict = Verdict::inconclusive;
    bool truncated = false;
    std::vector<std::string> notes;

    Certificate& input(std::string key, std::string value) {
        inputs.emplace_back(std::move(key), std::move(value));
        return *this;
    }
    Certificate& input(std::string key, double value) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        return input(std::move(key), os.str());
    }
    Certificate& set(const std::string& key, double value) {
        for (auto& [k, v] : computed) {
            if (k == key) {
                v = value;
                return *this;
            }
        }
        computed.emplace_back(key, value);
        return *this;
    }
    Certificate& note(std::string text) {
        notes.push_back(std::move(text));
        return *this;
    }

    [[nodiscard]] std::optional<double> find(const std::string& key) const {
        for (const auto& [k, v] : computed) {
            if (k == key) return v;
        }
        return std::nullopt;
    }
    [[nodiscard]] double get(const std::string& key) const {
        if (auto v = find(key)) return *v;
        throw Error(ErrorCode::InvalidArgument, "certificate " + name + " has no constant " + key);
    }

    [[nodiscard]] bool passed() const noexcept { return verdict == Verdict::pass; }

    /// Human readable report: one `key: value` line per entry.
    [[nodiscard]] std::string report() const {
        std::ostringstream os;
        os.precision(10);
        os << "certificate: " << name << '\n';
        os << "verdict: " << to_string(verdict) << (truncated ? " (window-truncated)" : "") << '\n';
        for (const auto& [k, v] : inputs) os << "input." << k << ": " << v << '\n';
        for (const auto& [k, v] : computed) os << k << ": " << v << '\n';
        for (const auto& n : notes) os << "note: " << n << '\n';
        return os.str();
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["name"] = name;
        j["verdict"] = std::string(to_string(verdict));
        j["truncated"] = truncated;
        j["inputs"] = nlohmann::json::object();
        for (const auto& [k, v] : inputs) j["inputs"][k] = v;
        j["computed"] = nlohmann::json::object();
        for (const auto& [k, v] : computed) {
            if (std::isfinite(v)) {
                j["computed"][k] = v;
            } else {
                j["computed"][k] = std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
            }
        }
        j["notes"] = notes;
        return j;
    }
};

}  // namespace depcag
