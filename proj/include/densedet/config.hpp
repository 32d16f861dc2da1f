#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "densedet/common.hpp"

namespace densedet {

// Flat key = value config, nested keys via dots ("cfpl.enabled").
// Lines starting with '#' are comments. Serialization is sorted by key
// so identical configs produce identical files.
class KvConfig {
public:
    KvConfig() = default;

    static KvConfig parse_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    static KvConfig parse(const std::string& text) {
        KvConfig cfg;
        std::istringstream ss(text);
        std::string line;
        int lineno = 0;
        while (std::getline(ss, line)) {
            ++lineno;
            std::string t = trim(line);
            if (t.empty() || t[0] == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + " has no '='");
            cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    // "key=value" as passed on the command line
    void set_override(const std::string& assignment) {
        auto eq = assignment.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must be key=value: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool has(const std::string& key) const { return kv_.count(key) > 0; }

    std::string get_str(const std::string& key, const std::string& def) const {
        auto it = kv_.find(key);
        return it == kv_.end() ? def : it->second;
    }

    int get_int(const std::string& key, int def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
        }
    }

    int64_t get_i64(const std::string& key, int64_t def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        try {
            return std::stoll(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not an integer: " + it->second);
        }
    }

    double get_double(const std::string& key, double def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "' is not a number: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "on") return true;
        if (v == "false" || v == "0" || v == "off") return false;
        throw ConfigError("config key '" + key + "' is not a boolean: " + v);
    }

    std::vector<double> get_doubles(const std::string& key, std::vector<double> def) const {
        auto it = kv_.find(key);
        if (it == kv_.end()) return def;
        std::vector<double> out;
        std::istringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            tok = trim(tok);
            if (!tok.empty()) out.push_back(std::stod(tok));
        }
        return out;
    }

    std::string serialize() const {
        std::ostringstream ss;
        for (const auto& [k, v] : kv_) ss << k << " = " << v << '\n';
        return ss.str();
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw RuntimeError("cannot write config: " + path);
        f << serialize();
    }

    const std::map<std::string, std::string>& entries() const { return kv_; }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> kv_;
};

}  // namespace densedet
