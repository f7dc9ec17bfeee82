#include "fracsynth/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"

namespace fracsynth {

namespace {

class LineParser {
  public:
    LineParser(const std::string& text, std::string where) : s_(text), where_(std::move(where)) {}

    [[noreturn]] void fail(const std::string& why) const { throw ValidationError(where_ + ": " + why); }

    void skip_ws() {
        while (i_ < s_.size() && (s_[i_] == ' ' || s_[i_] == '\t')) ++i_;
    }
    bool at_end() {
        skip_ws();
        return i_ >= s_.size() || s_[i_] == '#';
    }
    bool eat(char c) {
        skip_ws();
        if (i_ < s_.size() && s_[i_] == c) {
            ++i_;
            return true;
        }
        return false;
    }

    std::string key() {
        skip_ws();
        std::size_t b = i_;
        while (i_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[i_])) || s_[i_] == '_' ||
                                  s_[i_] == '-' || s_[i_] == '.'))
            ++i_;
        if (b == i_) fail("expected a key");
        std::string k = s_.substr(b, i_ - b);
        if (k.front() == '.' || k.back() == '.' || k.find("..") != std::string::npos) fail("malformed key '" + k + "'");
        return k;
    }

    Config::Scalar scalar() {
        skip_ws();
        if (i_ >= s_.size()) fail("missing value");
        if (s_[i_] == '"') return quoted();
        std::size_t b = i_;
        while (i_ < s_.size() && s_[i_] != ',' && s_[i_] != ']' && s_[i_] != '#' && s_[i_] != ' ' && s_[i_] != '\t')
            ++i_;
        std::string tok = s_.substr(b, i_ - b);
        if (tok == "true") return true;
        if (tok == "false") return false;
        std::string digits;
        for (char c : tok)
            if (c != '_') digits.push_back(c);
        if (digits.empty()) fail("missing value");
        char* end = nullptr;
        double v = std::strtod(digits.c_str(), &end);
        if (end != digits.c_str() + digits.size() || !std::isfinite(v)) fail("invalid value '" + tok + "'");
        return v;
    }

    Config::Value value() {
        if (!eat('[')) return scalar();
        std::vector<Config::Scalar> items;
        if (eat(']')) return items;
        while (true) {
            items.push_back(scalar());
            if (eat(']')) break;
            if (!eat(',')) fail("expected ',' or ']' in array");
            if (eat(']')) break;  // trailing comma
        }
        return items;
    }

  private:
    const std::string& s_;
    std::string where_;
    std::size_t i_ = 0;

    std::string quoted() {
        ++i_;
        std::string out;
        while (i_ < s_.size() && s_[i_] != '"') {
            char c = s_[i_++];
            if (c == '\\') {
                if (i_ >= s_.size()) break;
                char e = s_[i_++];
                switch (e) {
                    case 'n': out.push_back('\n'); break;
                    case 't': out.push_back('\t'); break;
                    case '"': out.push_back('"'); break;
                    case '\\': out.push_back('\\'); break;
                    default: fail(std::string("unsupported escape \\") + e);
                }
            } else {
                out.push_back(c);
            }
        }
        if (i_ >= s_.size()) fail("unterminated string");
        ++i_;
        return out;
    }
};

std::string scalar_text(const Config::Scalar& s) {
    if (auto b = std::get_if<bool>(&s)) return *b ? "true" : "false";
    if (auto d = std::get_if<double>(&s)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", *d);
        return buf;
    }
    std::string out = "\"";
    for (char c : std::get<std::string>(s)) {
        if (c == '"' || c == '\\') out.push_back('\\');
        if (c == '\n') {
            out += "\\n";
            continue;
        }
        out.push_back(c);
    }
    return out + "\"";
}

const char* type_name(const Config::Scalar& s) {
    if (std::holds_alternative<bool>(s)) return "boolean";
    if (std::holds_alternative<double>(s)) return "number";
    return "string";
}

}  // namespace

Config Config::parse(std::istream& is, const std::string& origin) {
    Config cfg;
    std::string section, line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        LineParser p(line, origin + ":" + std::to_string(lineno));
        if (p.at_end()) continue;
        if (p.eat('[')) {
            section = p.key();
            if (!p.eat(']')) p.fail("expected ']'");
            if (!p.at_end()) p.fail("trailing characters after section header");
            continue;
        }
        std::string key = p.key();
        if (!p.eat('=')) p.fail("expected '=' after key '" + key + "'");
        Value v = p.value();
        if (!p.at_end()) p.fail("trailing characters after value");
        std::string full = section.empty() ? key : section + "." + key;
        if (!cfg.values_.emplace(full, std::move(v)).second) p.fail("duplicate key '" + full + "'");
    }
    return cfg;
}

Config Config::load(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config file " + path);
    return parse(is, path);
}

const Config::Value* Config::find(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    used_.insert(key);
    return &it->second;
}

namespace {

const Config::Scalar& as_scalar(const Config::Value& v, const std::string& key) {
    auto s = std::get_if<Config::Scalar>(&v);
    require(s != nullptr, "config key '" + key + "' must be a scalar, not an array");
    return *s;
}

double as_number(const Config::Scalar& s, const std::string& key) {
    auto d = std::get_if<double>(&s);
    require(d != nullptr, std::string("config key '") + key + "' must be a number, got a " + type_name(s));
    return *d;
}

}  // namespace

double Config::number(const std::string& key, double fallback) const {
    auto v = find(key);
    return v ? as_number(as_scalar(*v, key), key) : fallback;
}

std::int64_t Config::integer(const std::string& key, std::int64_t fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    double d = as_number(as_scalar(*v, key), key);
    require(d == std::floor(d) && std::abs(d) < 9.0e15, "config key '" + key + "' must be an integer");
    return static_cast<std::int64_t>(d);
}

bool Config::boolean(const std::string& key, bool fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    const auto& s = as_scalar(*v, key);
    auto b = std::get_if<bool>(&s);
    require(b != nullptr, std::string("config key '") + key + "' must be a boolean, got a " + type_name(s));
    return *b;
}

std::string Config::string(const std::string& key, const std::string& fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    const auto& s = as_scalar(*v, key);
    auto str = std::get_if<std::string>(&s);
    require(str != nullptr, std::string("config key '") + key + "' must be a string, got a " + type_name(s));
    return *str;
}

std::vector<double> Config::numbers(const std::string& key, const std::vector<double>& fallback) const {
    auto v = find(key);
    if (!v) return fallback;
    auto arr = std::get_if<std::vector<Scalar>>(v);
    require(arr != nullptr, "config key '" + key + "' must be an array");
    std::vector<double> out;
    for (const auto& s : *arr) out.push_back(as_number(s, key));
    return out;
}

std::vector<std::string> Config::unused_in(const std::string& section) const {
    std::vector<std::string> out;
    std::string prefix = section + ".";
    for (const auto& [k, v] : values_)
        if (k.starts_with(prefix) && !used_.count(k)) out.push_back(k);
    return out;
}

void Config::require_all_used(const std::vector<std::string>& sections) const {
    std::string bad;
    for (const auto& s : sections)
        for (const auto& k : unused_in(s)) bad += (bad.empty() ? "" : ", ") + k;
    require(bad.empty(), "unknown config keys: " + bad);
}

std::string Config::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k + " = ";
        if (auto s = std::get_if<Scalar>(&v)) {
            out += scalar_text(*s);
        } else {
            out += "[";
            const auto& arr = std::get<std::vector<Scalar>>(v);
            for (std::size_t i = 0; i < arr.size(); ++i) out += (i ? ", " : "") + scalar_text(arr[i]);
            out += "]";
        }
        out += "\n";
    }
    return out;
}

std::string Config::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical())));
    return buf;
}

}  // namespace fracsynth
