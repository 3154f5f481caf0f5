#pragma once

#include "dispel/error.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace dispel {

/// Config text error carrying a 1-based position.
class ConfigParseError : public ParseError {
public:
    ConfigParseError(std::size_t line, std::size_t column, const std::string& what)
        : ParseError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
          line_(line), column_(column) {}
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_, column_;
};

/// Flat `section.key = value` configuration. Every key has a default; unknown
/// keys and malformed values are rejected. `parse` requires `seed` in the text.
class RunConfig {
public:
    RunConfig();

    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::filesystem::path& path);

    /// Applies one `key=value` override (reported as line 0).
    void set(const std::string& assignment);

    bool has_seed() const noexcept { return seed_set_; }
    std::uint64_t seed() const;

    const std::string& get(const std::string& key) const;
    bool is_set(const std::string& key) const;

    std::string get_string(const std::string& key) const { return get(key); }
    double get_double(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    /// Comma-separated list; empty text gives an empty list.
    std::vector<std::size_t> get_uint_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    /// Every key in sorted order, one `key = value` line each.
    std::string snapshot() const;

    static const std::vector<std::string>& known_keys();

private:
    void assign(const std::string& key, const std::string& value, std::size_t line, std::size_t key_col,
                std::size_t value_col);

    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
    bool seed_set_ = false;
};

}  // namespace dispel
