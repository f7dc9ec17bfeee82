#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace fracsynth {

//---------------------------------------------------------------------------//
/*!
 * Declarative key/value configuration in a TOML subset.
 *
 * Supported: `[section]` and `[a.b]` headers, bare keys, `#` comments,
 * double-quoted strings, integers, floats, `true`/`false`, and single-line
 * arrays of those. Keys are addressed as "section.key".
 */
//---------------------------------------------------------------------------//

class Config {
  public:
    using Scalar = std::variant<bool, double, std::string>;
    using Value = std::variant<Scalar, std::vector<Scalar>>;

    Config() = default;
    //! Throws ValidationError with "origin:line: reason" on malformed input.
    static Config parse(std::istream& is, const std::string& origin = "<config>");
    static Config load(const std::string& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    // Typed lookups return `fallback` when the key is absent and throw
    // ValidationError on a type mismatch. Every lookup marks the key as used.
    double number(const std::string& key, double fallback) const;
    std::int64_t integer(const std::string& key, std::int64_t fallback) const;
    bool boolean(const std::string& key, bool fallback) const;
    std::string string(const std::string& key, const std::string& fallback) const;
    std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) const;

    //! Keys under `section.` never looked up; catches misspellings.
    std::vector<std::string> unused_in(const std::string& section) const;
    //! Throws ValidationError naming every unused key of the sections.
    void require_all_used(const std::vector<std::string>& sections) const;

    //! Sorted `key = value` lines; equal for semantically equal files.
    std::string canonical() const;
    std::string hash() const;

  private:
    std::map<std::string, Value> values_;
    mutable std::set<std::string> used_;

    const Value* find(const std::string& key) const;
};

}  // namespace fracsynth
