#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace korteweg {
namespace config {

/// Value of one key in the TOML-compatible config dialect: strings, numbers,
/// booleans and flat number arrays.
struct Value {
    enum class Type { String, Number, Boolean, NumberList };
    Type type = Type::Number;
    std::string str;
    double num = 0.0;
    bool boolean = false;
    std::vector<double> list;

    static Value string(std::string s) {
        Value v;
        v.type = Type::String;
        v.str = std::move(s);
        return v;
    }
    static Value number(double d) {
        Value v;
        v.type = Type::Number;
        v.num = d;
        return v;
    }
    static Value flag(bool b) {
        Value v;
        v.type = Type::Boolean;
        v.boolean = b;
        return v;
    }
    static Value numbers(std::vector<double> l) {
        Value v;
        v.type = Type::NumberList;
        v.list = std::move(l);
        return v;
    }
};

/// Flat table keyed by "section.key".
using Table = std::map<std::string, Value>;

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline Value parse_value(const std::string& raw, const std::string& where) {
    const std::string v = trim(raw);
    if (v.empty()) throw ParseError(where + ": missing value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw ParseError(where + ": unterminated string");
        return Value::string(v.substr(1, v.size() - 2));
    }
    if (v == "true") return Value::flag(true);
    if (v == "false") return Value::flag(false);
    if (v.front() == '[') {
        if (v.back() != ']') throw ParseError(where + ": unterminated array");
        std::vector<double> nums;
        std::string inner = v.substr(1, v.size() - 2);
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            std::size_t used = 0;
            double d;
            try {
                d = std::stod(item, &used);
            } catch (const std::exception&) {
                throw ParseError(where + ": bad number '" + item + "' in array");
            }
            if (used != item.size())
                throw ParseError(where + ": bad number '" + item + "' in array");
            nums.push_back(d);
        }
        return Value::numbers(std::move(nums));
    }
    std::size_t used = 0;
    double d;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ParseError(where + ": bad value '" + v + "'");
    }
    if (used != v.size()) throw ParseError(where + ": bad value '" + v + "'");
    return Value::number(d);
}

}  // namespace detail

inline Table parse_string(const std::string& text, const std::string& name = "<config>") {
    Table table;
    std::string section;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = name + ":" + std::to_string(lineno);
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            // keep '#' inside quoted strings
            auto quote = line.find('"');
            if (quote == std::string::npos || hash < quote) line = line.substr(0, hash);
        }
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(where + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.empty()) throw ParseError(where + ": empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        if (key.empty()) throw ParseError(where + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (table.count(full)) throw ParseError(where + ": duplicate key '" + full + "'");
        table[full] = detail::parse_value(line.substr(eq + 1), where);
    }
    return table;
}

inline Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

/// key=value overrides in "section.key=value" form, applied after file parse.
inline void apply_overrides(Table& table, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ParseError("override '" + ov + "': expected section.key=value");
        const std::string key = detail::trim(ov.substr(0, eq));
        if (key.empty()) throw ParseError("override '" + ov + "': empty key");
        table[key] = detail::parse_value(ov.substr(eq + 1), "override '" + ov + "'");
    }
}

inline std::string serialize_value(const Value& v) {
    char buf[40];
    switch (v.type) {
        case Value::Type::String: return "\"" + v.str + "\"";
        case Value::Type::Boolean: return v.boolean ? "true" : "false";
        case Value::Type::Number:
            std::snprintf(buf, sizeof(buf), "%.17g", v.num);
            return buf;
        case Value::Type::NumberList: {
            std::string out = "[";
            for (std::size_t i = 0; i < v.list.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g", v.list[i]);
                out += buf;
                if (i + 1 < v.list.size()) out += ", ";
            }
            return out + "]";
        }
    }
    return "";
}

/// Grouped-by-section serialization; stable key order for reproducible echos.
inline std::string serialize(const Table& table) {
    std::map<std::string, std::vector<std::pair<std::string, const Value*>>> sections;
    for (const auto& [full, value] : table) {
        auto dot = full.find('.');
        const std::string sec = dot == std::string::npos ? "" : full.substr(0, dot);
        const std::string key = dot == std::string::npos ? full : full.substr(dot + 1);
        sections[sec].emplace_back(key, &value);
    }
    std::string out;
    for (const auto& [sec, entries] : sections) {
        if (!sec.empty()) out += "[" + sec + "]\n";
        for (const auto& [key, value] : entries)
            out += key + " = " + serialize_value(*value) + "\n";
        out += "\n";
    }
    return out;
}

}  // namespace config
}  // namespace korteweg
