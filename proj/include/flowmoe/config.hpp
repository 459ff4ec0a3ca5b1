#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace flowmoe {

/// Flat key=value settings. Text format:
///
///   # comment
///   seed = 7
///   [train]            # following keys get the "train." prefix
///   learning_rate = 1e-3
///   data.feature_cols = bytes_in, bytes_out   # dotted keys work anywhere
///
/// Whitespace around keys and values is trimmed. Repeating a key is an error.
class Config {
public:
    static Config parse(std::string_view text, const std::string& origin = "<config>");
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.contains(key); }
    std::optional<std::string> raw(const std::string& key) const;
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    // Comma separated; empty items are dropped.
    std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;
    std::vector<std::size_t> get_size_list(const std::string& key, const std::vector<std::size_t>& fallback) const;

    // Throws ConfigError naming the first key not in `known`.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& entries() const { return values_; }
    // Canonical text: sorted "key = value" lines.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

}  // namespace flowmoe
