#ifndef ADVSWAP_CONFIG_HPP
#define ADVSWAP_CONFIG_HPP

#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "advswap/attack.hpp"
#include "advswap/data.hpp"

namespace advswap {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

}  // namespace detail

/// Flat TOML reader covering what the attack config needs: `key = value`
/// lines, # comments, quoted strings, integers, floats, booleans.
/// Tables and arrays are rejected. See docs/config.md.
inline std::map<std::string, std::string> parse_flat_toml(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        // strip comments outside of quotes
        bool in_str = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_str = !in_str;
            else if (line[i] == '#' && !in_str) { line = line.substr(0, i); break; }
        }
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t.front() == '[')
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": tables are not supported (flat config only)");
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string val = detail::trim(t.substr(eq + 1));
        if (key.empty() || val.empty())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key or value");
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"')
            val = val.substr(1, val.size() - 2);
        kv[key] = val;
    }
    return kv;
}

/// Applies a flat TOML file on top of existing config values; unknown
/// keys are an error so typos do not pass silently.
inline void apply_config_toml(AttackConfig& c, const std::string& path) {
    const auto kv = parse_flat_toml(path);
    for (const auto& [k, v] : kv) {
        try {
            if (k == "lambda_adv") c.lambda_adv = std::stod(v);
            else if (k == "lambda_rho") c.lambda_rho = std::stod(v);
            else if (k == "lambda_eta_phi_varphi") c.lambda_eta_phi_varphi = std::stod(v);
            else if (k == "lambda_perp") c.lambda_perp = std::stod(v);
            else if (k == "epsilon") c.epsilon = std::stod(v);
            else if (k == "lr_init") c.lr_init = std::stod(v);
            else if (k == "lr_decay") c.lr_decay = std::stod(v);
            else if (k == "lr_decay_every") c.lr_decay_every = std::stoi(v);
            else if (k == "lr_floor") c.lr_floor = std::stod(v);
            else if (k == "max_iters") c.max_iters = std::stoi(v);
            else if (k == "tgs_step") c.tgs_step = std::stod(v);
            else if (k == "tgs_conf_threshold") c.tgs_conf_threshold = std::stod(v);
            else if (k == "tgs_max_iters") c.tgs_max_iters = std::stoi(v);
            else if (k == "num_blocks") c.num_blocks = std::stoi(v);
            else if (k == "beta_scale") c.beta_scale = std::stod(v);
            else if (k == "growth") c.growth = std::stoi(v);
            else if (k == "seed") c.seed = std::stoull(v);
            else if (k == "target_policy") c.target_policy = v;
            else if (k == "tgs_direction") c.tgs_direction = v;
            else if (k == "success_streak") c.success_streak = std::stoi(v);
            else throw std::runtime_error("unknown config key '" + k + "'");
        } catch (const std::invalid_argument&) {
            throw std::runtime_error(path + ": bad value for '" + k + "': " + v);
        }
    }
    c.validate();
}

/// Loads the config echoed into a run manifest, for exact re-runs.
inline AttackConfig config_from_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("cannot open manifest: " + manifest_path);
    const auto j = nlohmann::json::parse(f);
    return attack_config_from_json(j.at("config"));
}

}  // namespace advswap

#endif  // ADVSWAP_CONFIG_HPP
