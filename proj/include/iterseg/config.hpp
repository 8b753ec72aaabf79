#pragma once

// Plain-text experiment configuration: one `key = value` per line, dotted
// section prefixes (e.g. traversal.v_min), '#' comments. Every key must be
// consumed by the reader; leftovers are reported as hard errors so config
// typos cannot silently fall back to defaults.

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterseg/volume.hpp"

namespace iterseg {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_string(const std::string& text, const std::string& source = "<string>") {
        KeyValueConfig cfg;
        cfg.source_ = source;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string stripped = trim(line);
            if (stripped.empty()) continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            if (key.empty())
                throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str(), path);
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string text(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        return it->second;
    }

    long integer(const std::string& key, long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        return parse_long(key, it->second);
    }

    double real(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        return parse_double(key, it->second);
    }

    bool boolean(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        const std::string& v = it->second;
        if (v == "true" || v == "yes" || v == "1") return true;
        if (v == "false" || v == "no" || v == "0") return false;
        throw ConfigError(source_ + ": key '" + key + "': expected a boolean, got '" + v + "'");
    }

    Vec3i vec3i(const std::string& key, Vec3i fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        std::istringstream in(it->second);
        Vec3i out;
        long a = 0, b = 0, c = 0;
        std::string extra;
        if (!(in >> a >> b >> c) || (in >> extra))
            throw ConfigError(source_ + ": key '" + key + "': expected three integers, got '" +
                              it->second + "'");
        out = {static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
        return out;
    }

    Vec3d vec3d(const std::string& key, Vec3d fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        used_.insert(key);
        std::istringstream in(it->second);
        Vec3d out;
        std::string extra;
        if (!(in >> out.x >> out.y >> out.z) || (in >> extra))
            throw ConfigError(source_ + ": key '" + key + "': expected three numbers, got '" +
                              it->second + "'");
        return out;
    }

    /// Throws if any key was never read by the command, naming each stray key.
    void reject_unused() const {
        std::vector<std::string> stray;
        for (const auto& [key, value] : values_)
            if (!used_.count(key)) stray.push_back(key);
        if (stray.empty()) return;
        std::string msg = source_ + ": unknown config key";
        if (stray.size() > 1) msg += "s";
        for (const auto& k : stray) msg += " '" + k + "'";
        throw ConfigError(msg);
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = 0, e = s.size();
        while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
        return s.substr(b, e - b);
    }

    long parse_long(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const long out = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': expected an integer, got '" + v + "'");
        }
    }

    double parse_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("trailing");
            return out;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': expected a number, got '" + v + "'");
        }
    }

    std::string source_ = "<empty>";
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

}  // namespace iterseg
