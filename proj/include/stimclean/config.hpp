#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stimclean {

/// Flat key/value configuration in a small TOML subset: `key = value` lines,
/// `#` comments, optional `[section]` headers (keys become `section.key`),
/// strings optionally double-quoted.
class KeyValues {
public:
    static KeyValues parse(const std::string& text);
    static KeyValues load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long long get_int(const std::string& key, long long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    /// Required variants throw ValidationError when the key is missing or malformed.
    std::string require_string(const std::string& key) const;
    double require_double(const std::string& key) const;
    long long require_int(const std::string& key) const;

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Serialize back; keys are written in sorted order, no sections.
    std::string to_string() const;

private:
    std::map<std::string, std::string> values_;
};

/// Shortest decimal text that reads back as the same double.
std::string format_double(double v);

}  // namespace stimclean
