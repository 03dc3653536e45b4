#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mfdg/dynamics.hpp"
#include "mfdg/errors.hpp"

namespace mfdg {

// Key-value scenario config. One `key = value` per line, `#` starts a comment.
// Atom lists: atoms separated by `;`, coordinates by whitespace; a single
// group whose token count is a multiple of `dim` is split into consecutive
// atoms. Measure literals use `coords : weight` atoms separated by `;`.
//
//   dim = 1
//   horizon = 0.4
//   grid_u = -1 0 1
//   grid_v = -0.5 0 0.5
//   dynamics = split_linear
//   drift = 0
//   payoff = w2_to_target
//   target = 0.5 : 1
//   constants_c0 = 1.5
//   constants_l = 0
//   omega_f = zero
//   omega_g = linear 1

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::istringstream is(s);
    std::vector<double> out;
    double x;
    while (is >> x) out.push_back(x);
    if (!is.eof()) throw ConfigError("bad numeric list: '" + s + "'");
    return out;
}

inline std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) parts.push_back(trim(cur));
    return parts;
}

}  // namespace detail

using ConfigMap = std::map<std::string, std::string>;

inline ConfigMap parse_config(const std::string& text) {
    ConfigMap kv;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

inline std::vector<std::vector<double>> parse_atoms(const std::string& s, std::size_t dim) {
    std::vector<std::vector<double>> atoms;
    auto groups = detail::split_on(s, ';');
    if (groups.size() == 1) {
        auto vals = detail::parse_doubles(groups[0]);
        if (vals.size() % dim != 0)
            throw ConfigError("atom list length not a multiple of dim: '" + s + "'");
        for (std::size_t i = 0; i < vals.size(); i += dim)
            atoms.emplace_back(vals.begin() + static_cast<long>(i),
                               vals.begin() + static_cast<long>(i + dim));
        return atoms;
    }
    for (const auto& g : groups) {
        if (g.empty()) continue;
        auto vals = detail::parse_doubles(g);
        if (vals.size() != dim) throw ConfigError("atom has wrong dimension: '" + g + "'");
        atoms.push_back(std::move(vals));
    }
    return atoms;
}

inline EmpiricalMeasure parse_measure_literal(const std::string& s, std::size_t dim) {
    EmpiricalMeasure m;
    for (const auto& g : detail::split_on(s, ';')) {
        if (g.empty()) continue;
        auto colon = g.find(':');
        if (colon == std::string::npos)
            throw ConfigError("measure atom needs 'coords : weight': '" + g + "'");
        auto coords = detail::parse_doubles(g.substr(0, colon));
        auto ws = detail::parse_doubles(g.substr(colon + 1));
        if (coords.size() != dim || ws.size() != 1)
            throw ConfigError("bad measure atom: '" + g + "'");
        m.points.push_back(wrap(coords));
        m.weights.push_back(ws[0]);
    }
    m.validate();
    return m;
}

inline Modulus parse_modulus(const std::string& s) {
    auto parts = detail::split_on(s, ' ');
    std::vector<std::string> toks;
    for (auto& p : parts)
        if (!p.empty()) toks.push_back(p);
    if (toks.empty()) throw ConfigError("empty modulus");
    if (toks[0] == "zero") return Modulus::zero();
    if (toks[0] == "linear" && toks.size() == 2) return Modulus::linear(std::stod(toks[1]));
    if (toks[0] == "power" && toks.size() == 3)
        return Modulus::power(std::stod(toks[1]), std::stod(toks[2]));
    throw ConfigError("unknown modulus family: '" + s + "'");
}

inline Scenario build_scenario(const ConfigMap& kv, std::string source_text = "") {
    auto need = [&](const std::string& key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError("missing config key '" + key + "'");
        return it->second;
    };
    auto get = [&](const std::string& key, const std::string& def) {
        auto it = kv.find(key);
        return it == kv.end() ? def : it->second;
    };

    Scenario sc;
    sc.source_text = std::move(source_text);
    sc.dim = static_cast<std::size_t>(std::stoul(need("dim")));
    if (sc.dim == 0) throw ConfigError("dim must be >= 1");
    sc.horizon = std::stod(need("horizon"));
    if (!(sc.horizon >= 0.0)) throw ConfigError("horizon must be nonnegative");
    sc.grid_u = {parse_atoms(need("grid_u"), sc.dim), "U"};
    sc.grid_v = {parse_atoms(need("grid_v"), sc.dim), "V"};
    if (sc.grid_u.size() == 0 || sc.grid_v.size() == 0) throw ConfigError("empty control grid");

    sc.dynamics_name = need("dynamics");
    if (sc.dynamics_name == "split_linear") {
        auto drift = kv.count("drift") ? detail::parse_doubles(kv.at("drift"))
                                       : std::vector<double>(sc.dim, 0.0);
        sc.velocity = split_linear_velocity(drift);
    } else if (sc.dynamics_name == "barycenter_attraction") {
        double kappa = std::stod(get("kappa", "1.0"));
        sc.velocity = barycenter_attraction_velocity(kappa);
    } else if (sc.dynamics_name == "pursuit_circle") {
        double strength = std::stod(get("anchor_strength", "0.5"));
        auto anchor = kv.count("anchor") ? detail::parse_doubles(kv.at("anchor"))
                                         : std::vector<double>(sc.dim, 0.5);
        double interaction = std::stod(get("interaction", "0.5"));
        sc.velocity = pursuit_circle_velocity(strength, anchor, interaction);
    } else {
        throw ConfigError("unknown dynamics '" + sc.dynamics_name + "'");
    }

    sc.payoff_name = need("payoff");
    if (sc.payoff_name == "w2_to_target") {
        sc.terminal_payoff = w2_to_target_payoff(parse_measure_literal(need("target"), sc.dim));
    } else if (sc.payoff_name == "spread") {
        sc.terminal_payoff = spread_payoff();
    } else {
        throw ConfigError("unknown payoff '" + sc.payoff_name + "'");
    }

    if (kv.count("constants_c0") || kv.count("constants_l")) {
        ScenarioConstants c;
        c.C0 = std::stod(need("constants_c0"));
        c.L = std::stod(need("constants_l"));
        c.omega_f = parse_modulus(get("omega_f", "zero"));
        c.omega_g = parse_modulus(get("omega_g", "zero"));
        c.provenance = ScenarioConstants::Provenance::Declared;
        sc.declared_constants = c;
    }
    return sc;
}

inline Scenario scenario_from_text(const std::string& text) {
    return build_scenario(parse_config(text), text);
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return scenario_from_text(ss.str());
}

// ---- programmatic presets (exact declared constants) --------------------------

inline ControlGrid grid_1d(std::vector<double> values, std::string label) {
    ControlGrid g;
    g.label = std::move(label);
    for (double v : values) g.atoms.push_back({v});
    return g;
}

inline Scenario make_split_linear(std::vector<double> u_atoms, std::vector<double> v_atoms,
                                  double horizon, double drift,
                                  EmpiricalMeasure payoff_target) {
    Scenario sc;
    sc.dim = 1;
    sc.horizon = horizon;
    sc.grid_u = grid_1d(u_atoms, "U");
    sc.grid_v = grid_1d(v_atoms, "V");
    sc.velocity = split_linear_velocity({drift});
    sc.dynamics_name = "split_linear";
    sc.payoff_name = "w2_to_target";
    sc.terminal_payoff = w2_to_target_payoff(payoff_target);
    double c0 = 0.0;
    for (double u : u_atoms)
        for (double v : v_atoms) c0 = std::max(c0, std::abs(drift + u + v));
    ScenarioConstants c;
    c.C0 = c0;
    c.L = 0.0;
    c.omega_f = Modulus::zero();
    c.omega_g = Modulus::linear(1.0);  // |W2^2(m,t) - W2^2(m',t)| <= sqrt(d) W2(m,m'), d = 1
    sc.declared_constants = c;
    return sc;
}

inline Scenario make_pursuit_circle(std::vector<double> u_atoms, std::vector<double> v_atoms,
                                    double horizon, double anchor_strength, double anchor,
                                    double interaction, EmpiricalMeasure payoff_target) {
    Scenario sc;
    sc.dim = 1;
    sc.horizon = horizon;
    sc.grid_u = grid_1d(u_atoms, "U");
    sc.grid_v = grid_1d(v_atoms, "V");
    sc.velocity = pursuit_circle_velocity(anchor_strength, {anchor}, interaction);
    sc.dynamics_name = "pursuit_circle";
    sc.payoff_name = "w2_to_target";
    sc.terminal_payoff = w2_to_target_payoff(payoff_target);
    double umax = 0.0, vmax = 0.0;
    for (double u : u_atoms) umax = std::max(umax, std::abs(u));
    for (double v : v_atoms) vmax = std::max(vmax, std::abs(v));
    constexpr double two_pi = 6.283185307179586476925286766559;
    ScenarioConstants c;
    c.C0 = (std::abs(anchor_strength) + std::abs(interaction)) / two_pi + umax + vmax;
    c.L = std::abs(anchor_strength) + 2.0 * std::abs(interaction);
    c.omega_f = Modulus::zero();
    c.omega_g = Modulus::linear(1.0);
    sc.declared_constants = c;
    return sc;
}

inline Scenario make_barycenter_attraction(std::vector<double> u_atoms,
                                           std::vector<double> v_atoms, double horizon,
                                           double kappa, EmpiricalMeasure payoff_target) {
    Scenario sc;
    sc.dim = 1;
    sc.horizon = horizon;
    sc.grid_u = grid_1d(u_atoms, "U");
    sc.grid_v = grid_1d(v_atoms, "V");
    sc.velocity = barycenter_attraction_velocity(kappa);
    sc.dynamics_name = "barycenter_attraction";
    sc.payoff_name = "w2_to_target";
    sc.terminal_payoff = w2_to_target_payoff(payoff_target);
    double umax = 0.0, vmax = 0.0;
    for (double u : u_atoms) umax = std::max(umax, std::abs(u));
    for (double v : v_atoms) vmax = std::max(vmax, std::abs(v));
    constexpr double two_pi = 6.283185307179586476925286766559;
    ScenarioConstants c;
    c.C0 = std::abs(kappa) / two_pi + umax + vmax;
    c.L = 2.0 * std::abs(kappa);
    c.omega_f = Modulus::zero();
    c.omega_g = Modulus::linear(1.0);
    sc.declared_constants = c;
    return sc;
}

}  // namespace mfdg
