#ifndef KASNER_CONFIG_HPP
#define KASNER_CONFIG_HPP

#include <cstdint>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kasner/background.hpp"
#include "kasner/errors.hpp"

namespace kasner {

/// Flat sectioned text configuration. Every key must be consumed by the
/// command that runs; leftovers are reported as errors so tolerance typos
/// cannot silently fall back to defaults.
class Config {
  public:
    static Config parse(std::istream& is) {
        Config cfg;
        std::string line, section = "run";
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                if (b == std::string::npos) return std::string();
                const auto e = s.find_last_not_of(" \t\r");
                return s.substr(b, e - b + 1);
            };
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
            cfg.values_[section + "." + key] = val;
        }
        return cfg;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) != 0;
    }

    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& def) const {
        return fetch(section, key, def);
    }
    double get_double(const std::string& section, const std::string& key, double def) const {
        const std::string v = fetch(section, key, "");
        if (v.empty()) return def;
        return parse_double(section, key, v);
    }
    long get_int(const std::string& section, const std::string& key, long def) const {
        const std::string v = fetch(section, key, "");
        if (v.empty()) return def;
        try {
            std::size_t pos = 0;
            const long out = std::stol(v, &pos);
            if (pos != v.size()) throw ConfigError("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config " + section + "." + key + ": bad integer '" + v + "'");
        }
    }
    bool get_bool(const std::string& section, const std::string& key, bool def) const {
        const std::string v = fetch(section, key, "");
        if (v.empty()) return def;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config " + section + "." + key + ": bad boolean");
    }
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const {
        const std::string v = fetch(section, key, "");
        std::vector<double> out;
        std::istringstream is(v);
        std::string tok;
        while (is >> tok) out.push_back(parse_double(section, key, tok));
        return out;
    }

    /// Throws if any key was never consumed.
    void reject_unknown() const {
        std::string bad;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) bad += (bad.empty() ? "" : ", ") + k;
        if (!bad.empty()) throw ConfigError("unknown config keys: " + bad);
    }

    /// Background from the [background] section: explicit exponents, the
    /// isotropic family, or a seeded draw from the subcritical variety.
    KasnerBackground background() const {
        if (has("background", "p")) {
            const auto p = get_doubles("background", "p");
            const double p_phi = get_double("background", "p_phi", 0.0);
            return make_background(p, p_phi);
        }
        if (get_bool("background", "isotropic", false))
            return isotropic_background(int(get_int("background", "D", 3)));
        if (has("background", "random_seed")) {
            const auto seed = std::uint64_t(get_int("background", "random_seed", 1));
            const int D = int(get_int("background", "D", 3));
            const double margin = get_double("background", "margin_min", 0.05);
            return random_subcritical_background(seed, D, margin);
        }
        throw ConfigError("[background] needs p=..., isotropic=true, or random_seed=...");
    }

  private:
    std::string fetch(const std::string& section, const std::string& key,
                      const std::string& def) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end()) return def;
        consumed_.insert(it->first);
        return it->second;
    }
    static double parse_double(const std::string& section, const std::string& key,
                               const std::string& v) {
        try {
            std::size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw ConfigError("");
            return out;
        } catch (const std::exception&) {
            throw ConfigError("config " + section + "." + key + ": bad number '" + v + "'");
        }
    }

    std::map<std::string, std::string> values_;
    mutable std::set<std::string> consumed_;
};

} // namespace kasner

#endif
